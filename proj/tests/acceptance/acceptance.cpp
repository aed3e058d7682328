// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/generators.hpp"
#include "../support/oracles.hpp"
#include "apcap/apcap.hpp"

namespace fs = std::filesystem;
namespace dz = apcap::diffusion;
using namespace apcap;
using namespace apcap::testing;

namespace {

// Pinned tolerances and budgets.
constexpr int kPerturbTrials = 10000;
constexpr double kCapSlack = 1e-9;
constexpr double kRigidDrift = 1e-6;
constexpr double kPerturbBudgetMs = 10000;

constexpr int kFilterCases = 100;
constexpr double kFilterTol = 1e-12;

constexpr std::size_t kScheduleSteps = 1000;
constexpr double kAlphaBarEnd = 1e-4;
constexpr std::size_t kMcDraws = 100000;
constexpr double kMeanRelTol = 0.01;
constexpr double kVarRelTol = 0.02;
constexpr std::size_t kRoundTripSteps = 50;
constexpr double kRoundTripRms = 1e-3;
constexpr double kDiffusionBudgetMs = 30000;

constexpr int kEvalCases = 200;
constexpr double kEvalTol = 1e-9;

constexpr std::size_t kE2eReals = 50;
constexpr std::size_t kE2eSynthetic = 300;
constexpr double kE2eAcceptance = 0.99;
constexpr double kE2eBudgetMs = 60000;

constexpr int kBirdsSource = 158;
constexpr int kBirdsTarget = 31;
constexpr std::size_t kBirdsTrainImages = 6821;
constexpr std::size_t kBirdsTestImages = 1703;
constexpr std::size_t kCocoSamples = 1000;

struct Check {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
  void require(bool cond, const std::string& why) {
    if (!cond) fail(why);
  }
};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

/// Largest relative change of pairwise distances among labeled members.
double group_drift(const Pose& p, const Pose& q, const std::vector<int>& group) {
  double worst = 0.0;
  for (int a : group) {
    for (int b : group) {
      const auto& pa = p.points[static_cast<std::size_t>(a)];
      const auto& pb = p.points[static_cast<std::size_t>(b)];
      if (a >= b || !pa.labeled() || !pb.labeled()) continue;
      const double d0 = distance(pa, pb);
      if (d0 > 0) {
        worst = std::max(worst, std::abs(distance(q.points[static_cast<std::size_t>(a)], q.points[static_cast<std::size_t>(b)]) - d0) / d0);
      }
    }
  }
  return worst;
}

double bone_drift(const Pose& p, const Pose& q) {
  const auto a = bone_lengths(p), b = bone_lengths(q);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].length > 0) worst = std::max(worst, std::abs(b[i].length - a[i].length) / a[i].length);
  }
  return worst;
}

// ---- criteria -------------------------------------------------------------------------

Check perturbation_bounds() {
  Check c;
  Rng rng(101);
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_drift = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < kPerturbTrials && c.ok; ++trial) {
    const auto schema = random_any_schema(rng);
    const auto p = random_pose(schema, rng);
    PerturbConfig cfg;
    if (coin(rng)) cfg.face_move_max = uniform(rng, 0.0, 20.0);
    cfg.joint_flex_max_deg = uniform(rng, 0.0, 90.0);
    cfg.back_rotate_max_deg = uniform(rng, 0.0, 45.0);
    cfg.close_limb_threshold = uniform(rng, 0.01, 0.5);
    const std::string at = " (trial " + std::to_string(trial) + ")";

    std::vector<double> caps(p.points.size(), 0.0);
    for (std::size_t k = 0; k < caps.size(); ++k) {
      if (const auto nn = nearest_neighbor_distance(p, k)) caps[k] = 0.5 * *nn;
    }
    auto check_caps = [&](const Pose& q, const char* op) {
      for (std::size_t k = 0; k < p.points.size(); ++k) {
        const double excess = distance(q.points[k], p.points[k]) - caps[k];
        worst_excess = std::max(worst_excess, excess);
        c.require(excess <= kCapSlack, std::string(op) + " exceeds half nearest-neighbour distance" + at);
      }
    };

    if (!schema->face_group().empty()) {
      const auto q = face_move(p, cfg, rng);
      const double limit = cfg.face_move_limit(p);
      for (std::size_t k = 0; k < p.points.size(); ++k) {
        const double d = distance(q.points[k], p.points[k]);
        if (schema->in_face(k)) {
          worst_excess = std::max(worst_excess, d - limit);
          c.require(d <= limit + kCapSlack, "face_move exceeds face_move_max" + at);
        } else {
          c.require(d == 0.0, "face_move moved a non-face keypoint" + at);
        }
      }
      const double drift = group_drift(p, q, schema->face_group());
      worst_drift = std::max(worst_drift, drift);
      c.require(drift <= kRigidDrift, "face group not rigid" + at);
    }

    check_caps(limb_shift(p, cfg, rng), "limb_shift");

    const auto flexed = joint_flex(p, cfg, rng);
    check_caps(flexed, "joint_flex");
    const double bd = bone_drift(p, flexed);
    worst_drift = std::max(worst_drift, bd);
    c.require(bd <= kRigidDrift, "joint_flex changed a bone length" + at);

    if (!schema->spine_group().empty()) {
      const auto q = back_rotate(p, cfg, rng);
      const double drift = group_drift(p, q, schema->spine_group());
      worst_drift = std::max(worst_drift, drift);
      c.require(drift <= kRigidDrift, "spine not rigid" + at);
    }
  }
  const double ms = ms_since(t0);
  c.require(ms < kPerturbBudgetMs, "runtime over budget");
  if (c.ok) {
    c.detail = std::to_string(kPerturbTrials) + " trials, worst cap excess " + fmt("%.2e", worst_excess) + " px, worst drift " +
               fmt("%.2e", worst_drift) + ", " + fmt("%.0f", ms) + " ms";
  }
  return c;
}

Check filter_loss_suite() {
  Check c;
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < kFilterCases; ++trial) {
    const auto schema = random_any_schema(rng);
    const auto gt = random_pose(schema, rng);
    const auto pred = random_pose(schema, rng);
    const double diag2 = gt.bbox.w * gt.bbox.w + gt.bbox.h * gt.bbox.h;
    std::vector<double> losses;
    std::vector<bool> labeled;
    double plain = 0.0;
    for (std::size_t k = 0; k < gt.points.size(); ++k) {
      const double dx = pred.points[k].x - gt.points[k].x;
      const double dy = pred.points[k].y - gt.points[k].y;
      losses.push_back((dx * dx + dy * dy) / diag2);
      labeled.push_back(gt.points[k].v != 0);
      if (labeled.back()) plain = plain + losses.back();
    }
    const double eps = uniform(rng, 0.0, 0.3);
    const auto want = oracle::filter_loss(losses, labeled, eps);
    const auto got = filter_loss(pred, gt, eps);
    worst = std::max(worst, std::abs(got.total - want.total));
    c.require(std::abs(got.total - want.total) <= kFilterTol && got.mask == want.mask, "oracle mismatch at case " + std::to_string(trial));

    const auto inf = filter_loss(pred, gt, std::numeric_limits<double>::infinity());
    c.require(inf.total == plain, "eps=inf differs from plain sum at case " + std::to_string(trial));
    const auto zero = filter_loss(pred, gt, 0.0);
    c.require(zero.total == 0.0, "eps=0 not zero at case " + std::to_string(trial));
  }
  if (c.ok) c.detail = std::to_string(kFilterCases) + " cases, worst |diff| " + fmt("%.2e", worst);
  return c;
}

Check diffusion_suite() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto sched = dz::linear_schedule(kScheduleSteps, 1e-4, 0.02);
  for (std::size_t t = 2; t <= kScheduleSteps; ++t) {
    c.require(sched.alpha_bar_at(t) < sched.alpha_bar_at(t - 1), "alpha_bar not strictly decreasing at t=" + std::to_string(t));
  }
  c.require(sched.alpha_bar_at(kScheduleSteps) < kAlphaBarEnd, "alpha_bar_T too large");

  // x0 = 1 early; x0 = 500 late so the mean stays resolvable at 1e5 draws.
  struct Point {
    std::size_t t;
    double x0;
  };
  const std::vector<Point> points{{1, 1.0}, {100, 1.0}, {200, 1.0}, {500, 500.0}, {1000, 500.0}};
  Rng rng(303);
  double worst_mean = 0.0, worst_var = 0.0;
  for (const auto& [t, x0] : points) {
    const dz::Latent z0{std::vector<double>(kMcDraws, x0), {kMcDraws}};
    const auto noise = dz::Latent::gaussian({kMcDraws}, rng);
    const auto zt = dz::forward_diffuse(z0, t, sched, noise);
    double sum = 0.0;
    for (double v : zt.values) sum += v;
    const double mean = sum / static_cast<double>(kMcDraws);
    double ss = 0.0;
    for (double v : zt.values) ss += (v - mean) * (v - mean);
    const double var = ss / static_cast<double>(kMcDraws - 1);
    const double ab = sched.alpha_bar_at(t);
    const double em = rel(mean, x0 * std::sqrt(ab));
    const double ev = rel(var, 1.0 - ab);
    worst_mean = std::max(worst_mean, em);
    worst_var = std::max(worst_var, ev);
    c.require(em <= kMeanRelTol, "mean off at t=" + std::to_string(t) + ": rel " + fmt("%.4f", em));
    c.require(ev <= kVarRelTol, "variance off at t=" + std::to_string(t) + ": rel " + fmt("%.4f", ev));
  }

  const auto short_sched = dz::linear_schedule(kRoundTripSteps, 1e-4, 0.02);
  const auto z0 = dz::Latent::gaussian({4, 8, 8}, rng);
  const auto eps = dz::Latent::gaussian({4, 8, 8}, rng);
  const auto zT = dz::forward_diffuse(z0, kRoundTripSteps, short_sched, eps);
  const auto back = dz::toy_denoise(zT, short_sched, dz::target_denoiser(z0, short_sched), rng);
  double se = 0.0;
  for (std::size_t i = 0; i < z0.size(); ++i) se += (back.values[i] - z0.values[i]) * (back.values[i] - z0.values[i]);
  const double rms = std::sqrt(se / static_cast<double>(z0.size()));
  c.require(rms <= kRoundTripRms, "round trip RMS " + fmt("%.2e", rms));

  const double ms = ms_since(t0);
  c.require(ms < kDiffusionBudgetMs, "runtime over budget");
  if (c.ok) {
    c.detail = "alpha_bar_T " + fmt("%.2e", sched.alpha_bar_at(kScheduleSteps)) + ", worst mean rel " + fmt("%.4f", worst_mean) +
               ", worst var rel " + fmt("%.4f", worst_var) + ", round trip RMS " + fmt("%.2e", rms) + ", " + fmt("%.0f", ms) + " ms";
  }
  return c;
}

Check eval_suite() {
  Check c;
  Rng rng(404);
  double worst = 0.0;
  for (int trial = 0; trial < kEvalCases; ++trial) {
    const auto sc = random_eval_scene(rng);
    const auto got = map_oks(sc.dets, sc.gts);
    const auto want = oracle::map_oks(sc.dets, sc.gts);
    worst = std::max(worst, std::abs(got.overall - want.overall));
    c.require(std::abs(got.overall - want.overall) <= kEvalTol, "mAP differs from oracle at case " + std::to_string(trial));
    const auto thr = oks_thresholds();
    for (std::size_t i = 0; i < thr.size(); ++i) {
      const double g = got.per_threshold.at(threshold_key(thr[i]));
      worst = std::max(worst, std::abs(g - want.per_threshold[i]));
      c.require(std::abs(g - want.per_threshold[i]) <= kEvalTol, "AP@" + threshold_key(thr[i]) + " differs at case " + std::to_string(trial));
    }
  }

  std::vector<AnnotatedSample> gts;
  std::vector<Detection> perfect;
  std::vector<Pose> poses;
  const auto schema = builtin_schema(SchemaFamily::AP10K17);
  for (int i = 0; i < 20; ++i) {
    AnnotatedSample s;
    s.image_ref = "p" + std::to_string(i / 2);
    s.category = i % 3 ? "dog" : "cat";
    s.pose = random_pose(schema, rng);
    gts.push_back(s);
    perfect.push_back({s.image_ref, s.category, s.pose, 0.5 + 0.01 * i});
    poses.push_back(s.pose);
  }
  c.require(map_oks(perfect, gts).overall == 1.0, "perfect predictions give mAP != 1");
  c.require(pck05(poses, gts).overall == 1.0, "perfect predictions give PCK != 1");

  AnnotatedSample box;
  box.image_ref = "b";
  box.category = "dog";
  std::vector<Keypoint> pts(schema->size());
  pts[0] = {50, 40, 2};
  box.pose = Pose::make(schema, pts, {0, 0, 100, 80});
  auto shifted = [&](double dx) {
    auto p = box.pose;
    p.points[0].x += dx;
    return std::vector<Pose>{p};
  };
  const std::vector<AnnotatedSample> one{box};
  c.require(pck05(shifted(4.9), one).overall == 1.0, "4.9 px not counted correct");
  c.require(pck05(shifted(5.1), one).overall == 0.0, "5.1 px counted correct");

  if (c.ok) c.detail = std::to_string(kEvalCases) + " micro cases, worst |diff| " + fmt("%.2e", worst) + ", PCK 4.9/5.1 px ok";
  return c;
}

std::vector<AnnotatedSample> e2e_reals(Rng& rng) {
  const auto schema = builtin_schema(SchemaFamily::AP10K17);
  const std::vector<std::string> cats{"dog", "cat", "horse", "sheep", "zebra"};
  std::vector<AnnotatedSample> out;
  for (std::size_t i = 0; i < kE2eReals; ++i) {
    AnnotatedSample s;
    s.image_ref = "seed/" + std::to_string(i) + ".jpg";
    s.category = cats[i % cats.size()];
    s.pose = random_spread_pose(schema, rng, 16.0, {{640, 480}, 0.1});
    s.image_size = {640, 480};
    out.push_back(s);
  }
  return out;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel_path = fs::relative(e.path(), dir).generic_string();
    if (rel_path == "summary.json") continue;  // carries wall time
    files[rel_path] = read_text_file(e.path());
  }
  return files;
}

Check end_to_end() {
  Check c;
  const fs::path root = fs::temp_directory_path() / "apcap_acceptance_e2e";
  fs::remove_all(root);
  fs::create_directories(root);
  Rng rng(505);
  const auto schema = builtin_schema(SchemaFamily::AP10K17);
  write_coco(e2e_reals(rng), schema, root / "real.json");

  std::vector<std::map<std::string, std::string>> runs;
  double worst_ms = 0.0;
  for (int run = 0; run < 2; ++run) {
    PipelineConfig cfg;
    cfg.seed = 7;
    cfg.input = root / "real.json";
    cfg.output_dir = root / ("run" + std::to_string(run));
    cfg.backend.kind = gen::BackendDescriptor::Kind::Mock;
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = synthesize(cfg, Logger::null());
    const double ms = ms_since(t0);
    worst_ms = std::max(worst_ms, ms);
    if (out.exit_code != 0) {
      c.fail("run failed at " + out.failed_stage + ": " + out.message);
      return c;
    }
    c.require(out.n_real == kE2eReals, "expected 50 real samples, got " + std::to_string(out.n_real));
    c.require(out.n_synthetic == kE2eSynthetic, "expected 300 synthetic samples, got " + std::to_string(out.n_synthetic));
    c.require(out.screened, "mock run was not screened");
    c.require(out.acceptance_rate() >= kE2eAcceptance, "acceptance " + fmt("%.4f", out.acceptance_rate()));
    c.require(ms < kE2eBudgetMs, "runtime over budget");
    runs.push_back(snapshot(cfg.output_dir));
    if (run == 0 && c.ok) {
      c.detail = "300 synthetic from 50 real, acceptance " + fmt("%.4f", out.acceptance_rate()) + ", mean OKS " + fmt("%.4f", out.mean_oks);
    }
  }
  c.require(runs[0] == runs[1], "runs differ byte-wise");
  if (c.ok) c.detail += ", " + std::to_string(runs[0].size()) + " files identical, slowest run " + fmt("%.0f", worst_ms) + " ms";
  fs::remove_all(root);
  return c;
}

Check dataset_suite() {
  Check c;
  Rng rng(606);
  const auto birds = builtin_schema(SchemaFamily::Birds23);
  CrossDomainSpec spec;
  spec.source_num = 1;
  spec.source_den = 3;
  std::vector<std::string> src, tgt;
  for (int i = 0; i < kBirdsSource; ++i) src.push_back("bird_s" + std::to_string(i));
  for (int i = 0; i < kBirdsTarget; ++i) tgt.push_back("bird_t" + std::to_string(i));
  spec.source_categories = {src.begin(), src.end()};
  spec.target_categories = {tgt.begin(), tgt.end()};

  // Real source and target images, then a synthetic target extension that
  // doubles the real count.
  std::vector<AnnotatedSample> corpus;
  for (std::size_t i = 0; i < kBirdsTrainImages; ++i) {
    corpus.push_back(random_sample(birds, rng, "src/" + std::to_string(i) + ".jpg", src[i % src.size()]));
  }
  for (std::size_t i = 0; i < kBirdsTestImages; ++i) {
    corpus.push_back(random_sample(birds, rng, "tgt/" + std::to_string(i) + ".jpg", tgt[i % tgt.size()]));
  }
  const std::size_t n_real = corpus.size();
  for (std::size_t i = 0; i < n_real; ++i) {
    const auto p = coin(rng) ? Provenance::MF : Provenance::CE;
    corpus.push_back(random_sample(birds, rng, "syn/" + std::to_string(i) + ".png", tgt[uniform_index(rng, tgt.size())], p));
  }

  const auto split = split_cross_domain(corpus, spec, 11);
  std::size_t train_real = 0;
  std::set<std::string> train_refs, train_cats_real;
  for (const auto& s : split.train.samples()) {
    train_refs.insert(s.image_ref);
    if (s.provenance == Provenance::Real) {
      ++train_real;
      train_cats_real.insert(s.category);
    }
  }
  std::set<std::string> test_cats;
  for (const auto& s : split.test.samples()) {
    c.require(s.provenance == Provenance::Real && spec.is_target(s.category), "test holds a non-target or synthetic sample");
    c.require(!train_refs.count(s.image_ref), "test image also in train: " + s.image_ref);
    test_cats.insert(s.category);
  }
  for (const auto& cat : train_cats_real) c.require(!spec.is_target(cat), "real target category in train: " + cat);
  c.require(train_real == kBirdsTrainImages, "train real count " + std::to_string(train_real));
  c.require(split.test.size() == kBirdsTestImages, "test count " + std::to_string(split.test.size()));
  c.require(train_cats_real.size() == static_cast<std::size_t>(kBirdsSource), "source category count");
  c.require(test_cats.size() == static_cast<std::size_t>(kBirdsTarget), "target category count");

  BalancedBatchSampler sampler(split.train, spec, 12, 5);
  const auto& train = split.train.samples();
  std::size_t batches = 0;
  for (std::size_t e = 0; e < 2; ++e) {
    for (const auto& batch : sampler.epoch(e)) {
      std::size_t n_src = 0, n_tgt = 0;
      for (auto i : batch) (spec.is_source(train[i].category) ? n_src : n_tgt)++;
      c.require(n_src * 2 == n_tgt && n_src + n_tgt == 12, "batch not 1:2");
      ++batches;
    }
  }
  c.require(batches > 0, "sampler produced no batches");

  const auto ap10k = builtin_schema(SchemaFamily::AP10K17);
  std::vector<AnnotatedSample> samples;
  const std::vector<std::string> cats{"dog", "cat", "horse", "zebra"};
  for (std::size_t i = 0; i < kCocoSamples; ++i) {
    const auto p = static_cast<Provenance>(uniform_index(rng, 4));
    samples.push_back(random_sample(ap10k, rng, "img/" + std::to_string(i) + ".png", cats[uniform_index(rng, cats.size())], p));
  }
  const auto back = parse_coco(coco_json(samples, ap10k).dump(1), ap10k).samples;
  c.require(back == samples, "COCO round trip is not identity");

  if (c.ok) {
    c.detail = "train " + std::to_string(split.train.size()) + " (" + std::to_string(train_real) + " real), test " +
               std::to_string(split.test.size()) + ", " + std::to_string(batches) + " batches 4:8, 1000-sample COCO identity";
  }
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria{
      {"perturbation-bounds", perturbation_bounds}, {"filter-loss", filter_loss_suite}, {"diffusion", diffusion_suite},
      {"evaluation-oracle", eval_suite},            {"end-to-end-mock", end_to_end},    {"dataset", dataset_suite},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.fail(std::string("exception: ") + e.what());
    }
    if (!c.ok) ++failed;
    std::printf("%s %s: %s\n", c.ok ? "PASS" : "FAIL", name, c.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
