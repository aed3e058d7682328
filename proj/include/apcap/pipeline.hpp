#pragma once

// End-to-end synthesis and the file-level commands behind the CLI.
//
// synthesize, per real sample and for every (group, strategy):
//   normalise pose to the generation frame -> seed = derive_seed(global,
//   image_ref, strategy, group) -> prompt -> [PA: perturb] [CE: caption]
//   -> pose map -> request
// then one bounded batch through the backend, re-detection + screening, and
// assembly. Output directory layout:
//   images/NNNNN_<ref>_<S>_g<G>.png   generated images
//   manifest_full.json                real + every synthetic sample
//   manifest.json                     real + accepted synthetic samples
//   rejected.json                     rejected synthetic samples
//   audit.jsonl                       one record per synthetic sample
//   summary.json                      counts, acceptance rate, wall time

#include <array>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "apcap/config.hpp"
#include "apcap/dataset/coco.hpp"
#include "apcap/dataset/manifest.hpp"
#include "apcap/genbackend/batch.hpp"
#include "apcap/log.hpp"
#include "apcap/perturb.hpp"
#include "apcap/pose_map.hpp"
#include "apcap/prompt.hpp"
#include "apcap/screening.hpp"
#include "apcap/viz.hpp"

namespace apcap {

/// A failure attributed to one pipeline stage ("input", "genbackend", ...).
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& msg) : std::runtime_error(stage + ": " + msg), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

inline constexpr std::array<gen::Strategy, 3> kStrategies{gen::Strategy::MF, gen::Strategy::PA, gen::Strategy::CE};

inline Provenance provenance_of(gen::Strategy s) {
  switch (s) {
    case gen::Strategy::MF: return Provenance::MF;
    case gen::Strategy::PA: return Provenance::PA;
    case gen::Strategy::CE: return Provenance::CE;
  }
  return Provenance::Real;
}

/// File-name-safe rendition of an image reference.
inline std::string safe_stem(std::string_view ref) {
  std::string out;
  for (const char c : std::filesystem::path(ref).stem().string()) {
    out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  }
  return out.empty() ? "sample" : out;
}

/// Key used for seed derivation: the image_ref itself, with "#n" appended for
/// the n-th (n >= 1) further instance on the same image.
inline std::vector<std::string> instance_keys(const std::vector<AnnotatedSample>& samples) {
  std::map<std::string, int> seen;
  std::vector<std::string> keys;
  keys.reserve(samples.size());
  for (const auto& s : samples) {
    const int n = seen[s.image_ref]++;
    keys.push_back(n == 0 ? s.image_ref : s.image_ref + "#" + std::to_string(n));
  }
  return keys;
}

inline std::uint64_t sample_seed(std::uint64_t global_seed, const std::string& key, gen::Strategy s, int group) {
  return derive_seed(global_seed, key, to_string(s), std::to_string(group));
}

struct SynthesisOutcome {
  int exit_code = 0;
  std::string failed_stage;
  std::string message;
  DatasetManifest full;
  DatasetManifest accepted;
  std::vector<AnnotatedSample> rejected;
  std::size_t n_real = 0;
  std::size_t n_synthetic = 0;
  bool screened = false;
  double mean_oks = 0.0;
  double wall_ms = 0.0;

  double acceptance_rate() const {
    return n_synthetic ? static_cast<double>(n_synthetic - rejected.size()) / static_cast<double>(n_synthetic) : 1.0;
  }
};

namespace pipeline_detail {

struct Planned {
  std::size_t real_index;
  gen::Strategy strategy;
  int group;
  AnnotatedSample sample;  // provenance, prompt, seed, group, conditioning pose
  Json audit;
};

inline std::vector<std::uint8_t> caption_source(const PipelineConfig& cfg, const AnnotatedSample& real, const PoseMap& fallback) {
  for (const auto& candidate : {cfg.image_root.empty() ? fs::path() : cfg.image_root / real.image_ref, fs::path(real.image_ref)}) {
    if (!candidate.empty() && fs::is_regular_file(candidate)) return read_file_bytes(candidate);
  }
  return encode_png(fallback.image);
}

inline Json summary_json(const SynthesisOutcome& o) {
  Json counts = Json::object();
  for (const auto& [p, n] : o.full.provenance_counts()) counts[std::string(to_string(p))] = n;
  Json accepted = Json::object();
  for (const auto& [p, n] : o.accepted.provenance_counts()) accepted[std::string(to_string(p))] = n;
  return Json{{"real", o.n_real},
              {"synthetic", o.n_synthetic},
              {"provenance_counts", counts},
              {"accepted_counts", accepted},
              {"rejected", o.rejected.size()},
              {"screened", o.screened},
              {"acceptance_rate", o.acceptance_rate()},
              {"mean_oks", o.mean_oks},
              {"wall_time_ms", o.wall_ms}};
}

}  // namespace pipeline_detail

/// Runs the whole pipeline over `real`, writing artifacts under
/// cfg.output_dir. Stage failures are reported in the outcome, never thrown.
inline SynthesisOutcome synthesize(const PipelineConfig& cfg, const SchemaPtr& schema, std::vector<AnnotatedSample> real,
                                   gen::Backend& backend, Logger& log) {
  using namespace pipeline_detail;
  const auto start = std::chrono::steady_clock::now();
  SynthesisOutcome out;
  std::string stage = "plan";
  try {
    const fs::path out_dir = cfg.output_dir;
    const int groups = cfg.ratio.groups_per_strategy();

    std::vector<AnnotatedSample> usable;
    for (auto& s : real) {
      if (s.pose.labeled_count() == 0) {
        log.warn("plan", "skipping sample without labeled keypoints", {{"image_ref", s.image_ref}});
        continue;
      }
      s.provenance = Provenance::Real;
      s.prompt_used.reset();
      s.seed.reset();
      s.group.reset();
      usable.push_back(std::move(s));
    }
    if (usable.empty()) log.warn("plan", "no real samples; writing an empty dataset");
    out.n_real = usable.size();
    const auto keys = instance_keys(usable);

    // Plan every request in a fixed order: sample, group, strategy.
    std::vector<Planned> plan;
    std::vector<gen::GenRequest> reqs;
    plan.reserve(usable.size() * 3 * static_cast<std::size_t>(groups));
    for (std::size_t i = 0; i < usable.size(); ++i) {
      const auto& src = usable[i];
      const Pose frame_pose = normalize_to_frame(src.pose, cfg.resolution).first;
      for (int g = 0; g < groups; ++g) {
        for (const auto strategy : kStrategies) {
          const std::uint64_t seed = sample_seed(cfg.seed, keys[i], strategy, g);
          Rng rng(seed);
          PromptSpec spec = cfg.prompt;
          spec.category = src.category;
          gen::GenRequest req;
          req.strategy = strategy;
          req.prompt = make_prompt(spec, PromptMode::Infer, rng);
          req.seed = seed;
          req.resolution = cfg.resolution;
          req.category = src.category;

          Json audit{{"source", src.image_ref}, {"strategy", std::string(to_string(strategy))}, {"group", g}, {"seed", seed},
                     {"prompt", req.prompt}};
          Pose cond = frame_pose;
          if (strategy == gen::Strategy::PA) {
            stage = "perturb";
            auto result = perturb(frame_pose, cfg.perturb, cfg.perturb_ops, rng, cfg.resolution);
            cond = std::move(result.pose);
            Json applied = Json::array(), skipped = Json::array();
            for (const auto op : result.audit.applied()) applied.push_back(std::string(to_string(op)));
            for (const auto op : result.audit.skipped()) skipped.push_back(std::string(to_string(op)));
            audit["perturb"] = Json{{"applied", applied}, {"skipped", skipped}};
          }
          stage = "render";
          PoseMap map = render_pose_map(cond, cfg.resolution, cfg.pose_map_style, cfg.pose_map);
          if (strategy == gen::Strategy::CE) {
            stage = "genbackend";
            const std::string instruction = make_caption_request(src.image_ref, cfg.prompt.question_variants, rng);
            req.caption = backend.caption(caption_source(cfg, src, map), instruction);
            audit["instruction"] = instruction;
            audit["caption"] = *req.caption;
            if (cfg.ce_pose_map) req.pose_map = std::move(map);
          } else {
            req.pose_map = std::move(map);
          }
          stage = "plan";
          req.pose = cond;

          char name[32];
          std::snprintf(name, sizeof name, "%05zu_", i);
          const std::string ref = "images/" + std::string(name) + safe_stem(src.image_ref) + "_" +
                                  std::string(to_string(strategy)) + "_g" + std::to_string(g) + ".png";
          AnnotatedSample synth{ref, cond, src.category, provenance_of(strategy), req.prompt, seed, g, cfg.resolution};
          Json record{{"image_ref", ref}};
          record.update(audit);
          plan.push_back({i, strategy, g, std::move(synth), std::move(record)});
          reqs.push_back(std::move(req));
        }
      }
    }
    out.n_synthetic = plan.size();

    stage = "genbackend";
    log.info(stage, "generating", {{"requests", reqs.size()}, {"backend", backend.id()}, {"max_in_flight", cfg.backend.max_in_flight}});
    const auto results = gen::generate_batch(reqs, backend, cfg.backend.max_in_flight, cfg.backend.retries, cfg.backend.backoff_base_ms);
    std::size_t failures = 0;
    std::string first_error;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (const auto* err = std::get_if<gen::GenError>(&results[i])) {
        if (!failures++) first_error = gen::describe(*err);
        log.error(stage, "generation failed", {{"image_ref", plan[i].sample.image_ref}, {"error", gen::describe(*err)}});
      }
    }
    if (failures) throw StageError(stage, std::to_string(failures) + " of " + std::to_string(results.size()) + " requests failed; first: " + first_error);

    stage = "screen";
    const bool use_mock = cfg.redetector == "mock" || (cfg.redetector == "auto" && cfg.backend.kind == gen::BackendDescriptor::Kind::Mock);
    out.screened = use_mock;
    SynthGroups synth_groups;
    for (const auto strategy : kStrategies) synth_groups[provenance_of(strategy)].assign(static_cast<std::size_t>(groups), {});
    std::vector<AnnotatedSample> accepted = usable;
    double oks_sum = 0.0;
    std::string audit_text;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      auto& item = plan[i];
      const auto& resp = std::get<gen::GenResponse>(results[i]);
      write_file_bytes(out_dir / item.sample.image_ref, resp.image_png);
      item.audit["backend_id"] = resp.backend_id;
      bool ok = true;
      if (use_mock) {
        ScreenDecision d;
        try {
          d = screen_sample(item.sample, gen::mock_redetect(decode_png(resp.image_png), schema), cfg.filter);
        } catch (const Error& e) {
          d = {false, 0.0, e.what()};
        }
        ok = d.accepted;
        oks_sum += d.oks;
        item.audit["oks"] = d.oks;
        if (!ok) item.audit["reason"] = d.reason;
      }
      item.audit["accepted"] = ok;
      audit_text += item.audit.dump() + "\n";
      synth_groups[item.sample.provenance][static_cast<std::size_t>(item.group)].push_back(item.sample);
      (ok ? accepted : out.rejected).push_back(item.sample);
    }
    out.mean_oks = use_mock && !plan.empty() ? oks_sum / static_cast<double>(plan.size()) : 0.0;

    stage = "assemble";
    out.full = assemble_in_domain(usable, synth_groups, cfg.ratio, "synthesized_full", cfg.seed);
    out.accepted = DatasetManifest("synthesized", std::move(accepted), Split::Train, cfg.seed);

    stage = "write";
    write_coco(out.full, schema, out_dir / "manifest_full.json");
    write_coco(out.accepted, schema, out_dir / "manifest.json");
    write_coco(out.rejected, schema, out_dir / "rejected.json");
    write_text_file(out_dir / "audit.jsonl", audit_text);
    out.wall_ms = gen::elapsed_ms(start);
    write_text_file(out_dir / "summary.json", summary_json(out).dump(1) + "\n");
    log.info("done", "synthesis finished",
             {{"real", out.n_real}, {"synthetic", out.n_synthetic}, {"acceptance_rate", out.acceptance_rate()}, {"wall_time_ms", out.wall_ms}});
  } catch (const StageError& e) {
    out.exit_code = 1;
    out.failed_stage = e.stage();
    out.message = e.what();
  } catch (const gen::GenerationFailure& e) {
    out.exit_code = 1;
    out.failed_stage = "genbackend";
    out.message = std::string("genbackend: ") + e.what();
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.failed_stage = stage;
    out.message = stage + ": " + e.what();
  }
  if (out.exit_code) log.error(out.failed_stage, out.message);
  out.wall_ms = gen::elapsed_ms(start);
  return out;
}

inline SynthesisOutcome synthesize(const PipelineConfig& cfg, Logger& log) {
  SynthesisOutcome out;
  SchemaPtr schema;
  std::vector<AnnotatedSample> real;
  try {
    schema = resolve_schema(cfg.schema);
    if (cfg.input.empty()) throw Error(ErrorKind::InvalidConfig, "no input file configured");
    real = read_coco(cfg.input, schema);
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.failed_stage = "input";
    out.message = std::string("input: ") + e.what();
    log.error("input", e.what());
    return out;
  }
  std::unique_ptr<gen::Backend> backend;
  try {
    backend = gen::make_backend(cfg.backend);
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.failed_stage = "genbackend";
    out.message = std::string("genbackend: ") + e.what();
    log.error("genbackend", e.what());
    return out;
  }
  return synthesize(cfg, schema, std::move(real), *backend, log);
}

// ---- file-level commands -------------------------------------------------

/// Bounds used to validate a perturbed pose when the image size is unknown:
/// just large enough to contain the box and every labeled keypoint.
inline ImageSize effective_image_size(const AnnotatedSample& s) {
  if (s.image_size.width > 0 && s.image_size.height > 0) return s.image_size;
  double w = s.pose.bbox.x + s.pose.bbox.w, h = s.pose.bbox.y + s.pose.bbox.h;
  for (const auto& p : s.pose.points) {
    if (!p.labeled()) continue;
    w = std::max(w, p.x);
    h = std::max(h, p.y);
  }
  return {static_cast<int>(std::floor(w)) + 1, static_cast<int>(std::floor(h)) + 1};
}

struct PerturbFileResult {
  std::vector<AnnotatedSample> samples;
  std::string audit_jsonl;
};

/// Perturb every sample with a seed derived from (seed, instance key).
inline PerturbFileResult perturb_samples(const std::vector<AnnotatedSample>& in, const PerturbConfig& cfg, const PerturbOpSet& ops,
                                         std::uint64_t seed) {
  PerturbFileResult out;
  const auto keys = instance_keys(in);
  for (std::size_t i = 0; i < in.size(); ++i) {
    AnnotatedSample s = in[i];
    Rng rng(derive_seed(seed, keys[i], "perturb"));
    auto r = perturb(s.pose, cfg, ops, rng, effective_image_size(s));
    s.pose = std::move(r.pose);
    Json applied = Json::array(), skipped = Json::array();
    for (const auto op : r.audit.applied()) applied.push_back(std::string(to_string(op)));
    for (const auto op : r.audit.skipped()) skipped.push_back(std::string(to_string(op)));
    out.audit_jsonl += Json{{"image_ref", keys[i]}, {"applied", applied}, {"skipped", skipped}}.dump() + "\n";
    out.samples.push_back(std::move(s));
  }
  return out;
}

/// Pose maps for every sample, normalised to `size`; returns written paths.
inline std::vector<fs::path> render_samples(const std::vector<AnnotatedSample>& in, ImageSize size, PoseMapStyle style,
                                            const PoseMapOptions& opt, const fs::path& out_dir, Logger& log) {
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i].pose.labeled_count() == 0) {
      log.warn("render", "skipping sample without labeled keypoints", {{"image_ref", in[i].image_ref}});
      continue;
    }
    const Pose frame = normalize_to_frame(in[i].pose, size).first;
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "%05zu_", i);
    const fs::path path = out_dir / (std::string(prefix) + safe_stem(in[i].image_ref) + ".png");
    write_png(path, render_pose_map(frame, size, style, opt).image);
    written.push_back(path);
  }
  return written;
}

struct ScreenFileResult {
  std::vector<AnnotatedSample> accepted;
  std::vector<AnnotatedSample> rejected;
  double mean_oks = 0.0;
};

/// Screen generated samples against re-detected poses matched by image_ref.
/// Samples with no re-detection are rejected.
inline ScreenFileResult screen_samples(const std::vector<AnnotatedSample>& generated, const std::vector<AnnotatedSample>& redetected,
                                       const FilterConfig& cfg) {
  std::map<std::string, const Pose*> by_ref;
  for (const auto& r : redetected) {
    if (!by_ref.emplace(r.image_ref, &r.pose).second) {
      throw Error(ErrorKind::DuplicateSample, "two re-detections for '" + r.image_ref + "'");
    }
  }
  ScreenFileResult out;
  double sum = 0.0;
  for (const auto& s : generated) {
    const auto it = by_ref.find(s.image_ref);
    ScreenDecision d{false, 0.0, "no re-detection"};
    if (it != by_ref.end()) d = screen_sample(s, *it->second, cfg);
    sum += d.oks;
    (d.accepted ? out.accepted : out.rejected).push_back(s);
  }
  out.mean_oks = generated.empty() ? 0.0 : sum / static_cast<double>(generated.size());
  return out;
}

/// One overlay PNG per sample. Images resolve against image_root first, then
/// as given. Throws MissingImage for the first unresolvable reference.
inline std::vector<fs::path> viz_samples(const std::vector<AnnotatedSample>& samples, const fs::path& image_root, const fs::path& out_dir,
                                         const OverlayStyle& style = {}) {
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    fs::path src = image_root.empty() ? fs::path(s.image_ref) : image_root / s.image_ref;
    if (!fs::is_regular_file(src)) throw Error(ErrorKind::MissingImage, "missing image '" + s.image_ref + "' (looked at " + src.string() + ")");
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "%05zu_", i);
    const fs::path path = out_dir / (std::string(prefix) + safe_stem(s.image_ref) + ".png");
    write_png(path, render_overlay(read_png(src), s, style));
    written.push_back(path);
  }
  return written;
}

}  // namespace apcap
