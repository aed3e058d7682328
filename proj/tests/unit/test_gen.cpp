#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "apcap/apcap.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/stub_server.hpp"

using namespace apcap;
using namespace apcap::testing;
using gen::GenError;
using gen::GenRequest;
using gen::Strategy;

namespace {

SchemaPtr ap10k() { return builtin_schema(SchemaFamily::AP10K17); }

GenRequest mf_request(const Pose& pose, std::string prompt, std::uint64_t seed, ImageSize res = {256, 256}) {
  GenRequest req;
  req.strategy = Strategy::MF;
  req.prompt = std::move(prompt);
  req.seed = seed;
  req.resolution = res;
  req.category = "dog";
  req.pose_map = render_pose_map(pose, res, PoseMapStyle::SkeletonLines);
  req.pose = pose;
  return req;
}

Pose redetect(const gen::GenResponse& resp, const SchemaPtr& schema) {
  return gen::mock_redetect(decode_png(resp.image_png), schema);
}

double max_joint_error(const Pose& found, const Pose& truth) {
  double worst = 0.0;
  for (std::size_t k = 0; k < truth.points.size(); ++k) {
    if (!truth.points[k].labeled()) continue;
    if (!found.points[k].labeled()) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, distance(found.points[k], truth.points[k]));
  }
  return worst;
}

/// Wraps a backend and records how many generate calls overlap.
class CountingBackend : public gen::Backend {
 public:
  explicit CountingBackend(gen::Backend& inner, int sleep_ms = 0) : inner_(inner), sleep_ms_(sleep_ms) {}

  gen::GenResponse generate(const GenRequest& req) override {
    const int now = ++in_flight_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    // Stagger completion so results finish out of submission order.
    if (sleep_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms_ + static_cast<int>(req.seed % 5)));
    struct Leave {
      std::atomic<int>& n;
      ~Leave() { --n; }
    } leave{in_flight_};
    return inner_.generate(req);
  }

  std::string caption(const std::vector<std::uint8_t>& png, const std::string& instruction) override {
    return inner_.caption(png, instruction);
  }

  std::string id() const override { return inner_.id(); }

  int peak() const { return peak_.load(); }

 private:
  gen::Backend& inner_;
  int sleep_ms_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

}  // namespace

// ---- request checks and wire format ----------------------------------------

TEST(GenRequest, InvariantsChecked) {
  Rng rng(1);
  const auto pose = random_full_pose(ap10k(), rng);
  auto req = mf_request(pose, "p", 1);
  EXPECT_FALSE(gen::check_request(req));

  auto no_map = req;
  no_map.pose_map.reset();
  ASSERT_TRUE(gen::check_request(no_map));
  EXPECT_EQ(gen::check_request(no_map)->kind, GenError::Kind::InvalidRequest);

  auto ce = req;
  ce.strategy = Strategy::CE;
  ce.pose_map.reset();
  EXPECT_TRUE(gen::check_request(ce));
  ce.caption = "a dog";
  EXPECT_FALSE(gen::check_request(ce));

  auto wrong_size = req;
  wrong_size.resolution = {128, 128};
  EXPECT_TRUE(gen::check_request(wrong_size));
}

TEST(GenRequest, DescriptorValidation) {
  gen::BackendDescriptor d;
  EXPECT_NO_THROW(d.validate());
  d.max_in_flight = 0;
  EXPECT_THROW(d.validate(), Error);
  d = {};
  d.kind = gen::BackendDescriptor::Kind::Remote;
  EXPECT_THROW(d.validate(), Error);
  d.endpoint = "http://127.0.0.1:1";
  EXPECT_NO_THROW(d.validate());
}

TEST(Wire, RequestRoundTrip) {
  Rng rng(2);
  const auto pose = random_full_pose(ap10k(), rng, {{200, 120}});
  auto req = mf_request(pose, "a photo of a dog", 123456789, {200, 120});
  req.caption = "a dog stands";
  const auto back = gen::wire::decode_request(gen::wire::encode_request(req));
  EXPECT_EQ(back.strategy, req.strategy);
  EXPECT_EQ(back.prompt, req.prompt);
  EXPECT_EQ(back.caption, req.caption);
  EXPECT_EQ(back.seed, req.seed);
  EXPECT_EQ(back.resolution.width, 200);
  EXPECT_EQ(back.resolution.height, 120);
  EXPECT_EQ(back.category, "dog");
  ASSERT_TRUE(back.pose_map);
  EXPECT_EQ(back.pose_map->image.pixels, req.pose_map->image.pixels);
  EXPECT_FALSE(back.pose);
}

TEST(Wire, ResponseRoundTrip) {
  gen::GenResponse r;
  r.image_png = {1, 2, 3, 250};
  r.backend_id = "x";
  r.seed_echo = (1ULL << 53) - 1;
  const auto back = gen::wire::decode_response(gen::wire::encode_response(r));
  EXPECT_EQ(back.image_png, r.image_png);
  EXPECT_EQ(back.backend_id, "x");
  EXPECT_EQ(back.seed_echo, r.seed_echo);
}

TEST(Wire, MalformedFieldsNamed) {
  Rng rng(3);
  auto j = gen::wire::encode_request(mf_request(random_full_pose(ap10k(), rng), "p", 1));
  for (const auto& bad : {gen::wire::Json("abc"), gen::wire::Json::array({1}), gen::wire::Json::array({0, 5})}) {
    auto k = j;
    k["resolution"] = bad;
    try {
      gen::wire::decode_request(k);
      ADD_FAILURE() << "accepted resolution " << bad.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::ParseError);
      EXPECT_NE(std::string(e.what()).find("resolution"), std::string::npos);
    }
  }
  auto k = j;
  k.erase("seed");
  EXPECT_THROW(gen::wire::decode_request(k), Error);
  k = j;
  k["strategy"] = "XX";
  EXPECT_THROW(gen::wire::decode_request(k), Error);
}

// ---- mock backend ------------------------------------------------------------

TEST(Mock, SameRequestSameBytes) {
  Rng rng(4);
  gen::MockBackend mock;
  const auto req = mf_request(random_full_pose(ap10k(), rng), "a photo of a dog", 77);
  const auto a = mock.generate(req);
  const auto b = mock.generate(req);
  EXPECT_EQ(a.image_png, b.image_png);
  EXPECT_EQ(a.seed_echo, 77u);
  EXPECT_EQ(a.backend_id, "mock-v1");
}

TEST(Mock, PromptChangesImageNotJoints) {
  Rng rng(5);
  gen::MockBackend mock;
  const auto pose = random_spread_pose(ap10k(), rng, 6.0);
  const auto a = mock.generate(mf_request(pose, "a photo of a dog, spotted", 9));
  const auto b = mock.generate(mf_request(pose, "a photo of a dog, dark", 9));
  const auto ia = decode_png(a.image_png);
  const auto ib = decode_png(b.image_png);
  EXPECT_NE(image_hash(ia), image_hash(ib));
  const auto pa = gen::mock_redetect(ia, ap10k());
  const auto pb = gen::mock_redetect(ib, ap10k());
  EXPECT_LE(max_joint_error(pa, pose), 2.0);
  EXPECT_LE(max_joint_error(pb, pose), 2.0);
  EXPECT_LE(max_joint_error(pa, pb), 2.0);
}

TEST(Mock, SeedChangesImage) {
  Rng rng(6);
  gen::MockBackend mock;
  const auto pose = random_full_pose(ap10k(), rng);
  EXPECT_NE(mock.generate(mf_request(pose, "p", 1)).image_png, mock.generate(mf_request(pose, "p", 2)).image_png);
}

TEST(Mock, PoseAdherenceProperty) {
  Rng rng(7);
  gen::MockBackend mock;
  for (int trial = 0; trial < 60; ++trial) {
    const auto schema = random_any_schema(rng);
    PoseGenOptions opt;
    opt.margin = 0.05;
    auto pose = random_spread_pose(schema, rng, 6.0, opt);
    // Drop a few labels: unlabeled joints must come back unlabeled.
    for (auto& p : pose.points) {
      if (coin(rng, 0.1)) p = {};
    }
    if (pose.labeled_count() == 0) continue;
    const auto req = mf_request(pose, "prompt " + std::to_string(trial), rng() & kSeedMask);
    const auto found = redetect(mock.generate(req), schema);
    ASSERT_LE(max_joint_error(found, pose), 2.0) << "trial " << trial;
    for (std::size_t k = 0; k < pose.points.size(); ++k) EXPECT_EQ(found.points[k].labeled(), pose.points[k].labeled());
  }
}

TEST(Mock, NonSquareResolution) {
  Rng rng(8);
  gen::MockBackend mock;
  const auto pose = random_spread_pose(ap10k(), rng, 6.0, {{320, 200}});
  const auto resp = mock.generate(mf_request(pose, "p", 3, {320, 200}));
  const auto img = decode_png(resp.image_png);
  EXPECT_EQ(img.width, 320);
  EXPECT_EQ(img.height, 200);
  EXPECT_LE(max_joint_error(gen::mock_redetect(img, ap10k()), pose), 2.0);
}

TEST(Mock, RejectsInvalidRequests) {
  Rng rng(9);
  gen::MockBackend mock;
  auto req = mf_request(random_full_pose(ap10k(), rng), "p", 1);
  req.pose.reset();
  EXPECT_THROW(mock.generate(req), gen::GenerationFailure);
  req = mf_request(random_full_pose(ap10k(), rng), "p", 1);
  req.pose_map.reset();
  try {
    mock.generate(req);
    ADD_FAILURE();
  } catch (const gen::GenerationFailure& f) {
    EXPECT_EQ(f.error().kind, GenError::Kind::InvalidRequest);
  }
}

TEST(Mock, CaptionDeterministic) {
  gen::MockBackend mock;
  const std::vector<std::uint8_t> png{1, 2, 3};
  EXPECT_EQ(mock.caption(png, "describe"), mock.caption(png, "describe"));
  EXPECT_EQ(mock.caption(png, "describe").rfind("a ", 0), 0u);
}

// ---- remote backend against the in-process stub ------------------------------

TEST(Remote, SeedEchoAndResolution) {
  StubServer stub;
  gen::RemoteBackend remote(stub.descriptor());
  Rng rng(10);
  const auto req = mf_request(random_full_pose(ap10k(), rng), "a photo of a cat", 4242);
  const auto resp = remote.generate(req);
  EXPECT_EQ(resp.seed_echo, 4242u);
  EXPECT_EQ(resp.backend_id, "stub");
  const auto img = decode_png(resp.image_png);
  EXPECT_EQ(img.width, 256);
  EXPECT_EQ(img.height, 256);
  // The conditioning pose never travels over the wire.
  EXPECT_FALSE(stub.last_generate_body().contains("pose"));
  EXPECT_TRUE(stub.last_generate_body().contains("pose_map_png_b64"));
}

TEST(Remote, Health) {
  StubServer stub;
  gen::RemoteBackend remote(stub.descriptor());
  const auto h = remote.health();
  EXPECT_EQ(h.status, "ok");
  EXPECT_EQ(h.mode, "stub");
}

TEST(Remote, CaptionAndInstructionEcho) {
  StubServer stub;
  const auto dir = std::filesystem::temp_directory_path() / "apcap_caption_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "img.png";
  write_png(path, Image(8, 8, {1, 2, 4}));
  const std::string instruction = "Describe the animal's appearance and surroundings.";
  EXPECT_EQ(gen::caption_remote(path, instruction, stub.descriptor()), "a dog stands");
  EXPECT_EQ(stub.last_instruction(), instruction);
  std::filesystem::remove_all(dir);
}

TEST(Remote, MissingCaptionRouteIs404) {
  StubServer stub(false);
  gen::RemoteBackend remote(stub.descriptor());
  try {
    remote.caption({1, 2, 3}, "x");
    ADD_FAILURE();
  } catch (const gen::GenerationFailure& f) {
    EXPECT_EQ(f.error().kind, GenError::Kind::RemoteError);
    EXPECT_EQ(f.error().status, 404);
  }
}

TEST(Remote, PoisonedCategoryIs400) {
  StubServer stub;
  gen::RemoteBackend remote(stub.descriptor());
  Rng rng(11);
  auto req = mf_request(random_full_pose(ap10k(), rng), "p", 1);
  req.category = "poison";
  try {
    remote.generate(req);
    ADD_FAILURE();
  } catch (const gen::GenerationFailure& f) {
    EXPECT_EQ(f.error().status, 400);
    EXPECT_FALSE(f.error().retryable());
  }
}

TEST(Remote, UnreachableEndpoint) {
  int port = 0;
  {
    StubServer stub;
    port = std::stoi(stub.endpoint().substr(stub.endpoint().rfind(':') + 1));
  }
  gen::BackendDescriptor d;
  d.kind = gen::BackendDescriptor::Kind::Remote;
  d.endpoint = "http://127.0.0.1:" + std::to_string(port);
  d.timeout_ms = 2000;
  gen::RemoteBackend remote(d);
  Rng rng(12);
  try {
    remote.generate(mf_request(random_full_pose(ap10k(), rng), "p", 1));
    ADD_FAILURE();
  } catch (const gen::GenerationFailure& f) {
    EXPECT_EQ(f.error().kind, GenError::Kind::RemoteError);
    EXPECT_EQ(f.error().status, 0);
  }
}

TEST(Remote, MalformedResolutionNamedByServer) {
  StubServer stub;
  httplib::Client cli(stub.endpoint());
  Rng rng(13);
  auto body = gen::wire::encode_request(mf_request(random_full_pose(ap10k(), rng), "p", 1));
  body["resolution"] = "big";
  const auto res = cli.Post("/v1/generate", body.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_NE(res->body.find("resolution"), std::string::npos);
}

// ---- batching -----------------------------------------------------------------

TEST(Batch, EmptyIsEmpty) {
  gen::MockBackend mock;
  EXPECT_TRUE(gen::generate_batch({}, mock, 4).empty());
}

TEST(Batch, CapMustBePositive) {
  gen::MockBackend mock;
  EXPECT_THROW(gen::generate_batch({}, mock, 0), Error);
}

TEST(Batch, HundredMockRequestsRespectCap) {
  Rng rng(14);
  gen::MockBackend mock;
  CountingBackend counting(mock, 2);
  std::vector<GenRequest> reqs;
  for (int i = 0; i < 100; ++i) reqs.push_back(mf_request(random_full_pose(ap10k(), rng, {{64, 64}}), "p", i, {64, 64}));
  const auto out = gen::generate_batch(reqs, counting, 8);
  ASSERT_EQ(out.size(), 100u);
  for (const auto& r : out) EXPECT_TRUE(gen::ok(r));
  EXPECT_LE(counting.peak(), 8);
  EXPECT_GE(counting.peak(), 2);
}

TEST(Batch, PoisonedRequestIsolated) {
  Rng rng(15);
  gen::MockBackend mock;
  std::vector<GenRequest> reqs;
  for (int i = 0; i < 10; ++i) reqs.push_back(mf_request(random_full_pose(ap10k(), rng, {{64, 64}}), "p", i, {64, 64}));
  reqs[6].pose_map.reset();
  const auto out = gen::generate_batch(reqs, mock, 3);
  ASSERT_EQ(out.size(), 10u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(gen::ok(out[i]), i != 6) << i;
  EXPECT_EQ(std::get<GenError>(out[6]).kind, GenError::Kind::InvalidRequest);
}

TEST(Batch, OrderPreservedUnderShuffledCompletion) {
  Rng rng(16);
  gen::MockBackend mock;
  CountingBackend counting(mock, 1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<GenRequest> reqs;
    const int n = rand_int(rng, 1, 40);
    for (int i = 0; i < n; ++i) {
      reqs.push_back(mf_request(random_full_pose(ap10k(), rng, {{48, 48}}), "p", rng() & kSeedMask, {48, 48}));
    }
    const auto out = gen::generate_batch(reqs, counting, rand_int(rng, 1, 9));
    ASSERT_EQ(out.size(), reqs.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      ASSERT_TRUE(gen::ok(out[i]));
      EXPECT_EQ(std::get<gen::GenResponse>(out[i]).seed_echo, reqs[i].seed);
    }
  }
}

TEST(Batch, RemoteCapAndIsolation) {
  StubServer stub;
  stub.delay_ms = 5;
  gen::RemoteBackend remote(stub.descriptor());
  Rng rng(17);
  std::vector<GenRequest> reqs;
  for (int i = 0; i < 24; ++i) reqs.push_back(mf_request(random_full_pose(ap10k(), rng, {{32, 32}}), "p", i, {32, 32}));
  reqs[3].category = "poison";
  const auto out = gen::generate_batch(reqs, remote, 4);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(gen::ok(out[i]), i != 3);
  EXPECT_LE(stub.peak_in_flight.load(), 4);
  EXPECT_EQ(stub.generate_calls.load(), 24);
}

TEST(Batch, RetriesTransientFailures) {
  StubServer stub;
  stub.fail_first = 2;
  gen::RemoteBackend remote(stub.descriptor());
  Rng rng(18);
  const std::vector<GenRequest> reqs{mf_request(random_full_pose(ap10k(), rng, {{32, 32}}), "p", 5, {32, 32})};
  const auto out = gen::generate_batch(reqs, remote, 1, 3, 1);
  EXPECT_TRUE(gen::ok(out[0]));
  EXPECT_EQ(stub.generate_calls.load(), 3);
}

TEST(Batch, RetriesExhausted) {
  StubServer stub;
  stub.fail_first = 5;
  gen::RemoteBackend remote(stub.descriptor());
  Rng rng(19);
  const std::vector<GenRequest> reqs{mf_request(random_full_pose(ap10k(), rng, {{32, 32}}), "p", 5, {32, 32})};
  const auto out = gen::generate_batch(reqs, remote, 1, 1, 1);
  ASSERT_FALSE(gen::ok(out[0]));
  EXPECT_EQ(std::get<GenError>(out[0]).status, 503);
  EXPECT_EQ(stub.generate_calls.load(), 2);
}

TEST(Batch, ClientErrorsNotRetried) {
  StubServer stub;
  gen::RemoteBackend remote(stub.descriptor());
  Rng rng(20);
  auto req = mf_request(random_full_pose(ap10k(), rng, {{32, 32}}), "p", 5, {32, 32});
  req.category = "poison";
  const auto out = gen::generate_batch(std::vector<GenRequest>{req}, remote, 1, 3, 1);
  EXPECT_FALSE(gen::ok(out[0]));
  EXPECT_EQ(stub.generate_calls.load(), 1);
}

TEST(Batch, BackoffDoublesWithJitter) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (int attempt = 0; attempt < 4; ++attempt) {
      const auto d = gen::backoff_delay(250, attempt, seed).count();
      const double nominal = 250.0 * std::pow(2.0, attempt);
      EXPECT_GE(d, static_cast<long long>(0.5 * nominal) - 1);
      EXPECT_LT(d, 1.5 * nominal);
      EXPECT_EQ(d, gen::backoff_delay(250, attempt, seed).count());
    }
  }
}

TEST(Batch, DescriptorOverloadUsesMock) {
  Rng rng(21);
  gen::BackendDescriptor d;
  d.max_in_flight = 2;
  const std::vector<GenRequest> reqs{mf_request(random_full_pose(ap10k(), rng, {{32, 32}}), "p", 1, {32, 32})};
  const auto out = gen::generate_batch(reqs, d);
  ASSERT_TRUE(gen::ok(out[0]));
  EXPECT_EQ(std::get<gen::GenResponse>(out[0]).backend_id, "mock-v1");
}

// ---- filter loss ----------------------------------------------------------------

TEST(FilterLoss, WorkedExample) {
  const std::vector<double> losses{0.2, 0.9, 0.4};
  const auto r = filter_loss(losses, 0.5);
  EXPECT_DOUBLE_EQ(r.total, 0.6);
  EXPECT_EQ(r.mask, (std::vector<bool>{true, false, true}));
}

TEST(FilterLoss, InfiniteEpsilonIsPlainSum) {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> losses(static_cast<std::size_t>(rand_int(rng, 0, 30)));
    for (auto& l : losses) l = uniform(rng, 0.0, 5.0);
    double plain = 0.0;
    for (double l : losses) plain += l;
    const auto r = filter_loss(losses, std::numeric_limits<double>::infinity());
    EXPECT_EQ(r.total, plain);
    for (bool m : r.mask) EXPECT_TRUE(m);
  }
}

TEST(FilterLoss, ZeroEpsilonDropsPositiveLosses) {
  const std::vector<double> losses{0.1, 1e-12, 3.0};
  const auto r = filter_loss(losses, 0.0);
  EXPECT_EQ(r.total, 0.0);
  EXPECT_EQ(r.mask, (std::vector<bool>{false, false, false}));
}

TEST(FilterLoss, BoundaryIncluded) {
  const std::vector<double> losses{0.5};
  EXPECT_TRUE(filter_loss(losses, 0.5).mask[0]);
}

TEST(FilterLoss, MatchesOracleOnPoses) {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const auto schema = random_any_schema(rng);
    const auto gt = random_pose(schema, rng);
    auto pred = random_pose(schema, rng);
    const double eps = uniform(rng, 0.0, 0.3);
    const double diag2 = gt.bbox.w * gt.bbox.w + gt.bbox.h * gt.bbox.h;
    std::vector<double> losses;
    std::vector<bool> labeled;
    for (std::size_t k = 0; k < gt.points.size(); ++k) {
      const double dx = pred.points[k].x - gt.points[k].x;
      const double dy = pred.points[k].y - gt.points[k].y;
      losses.push_back((dx * dx + dy * dy) / diag2);
      labeled.push_back(gt.points[k].v != 0);
    }
    const auto want = oracle::filter_loss(losses, labeled, eps);
    const auto got = filter_loss(pred, gt, eps);
    EXPECT_NEAR(got.total, want.total, 1e-12);
    EXPECT_EQ(got.mask, want.mask);
  }
}

TEST(FilterLoss, MonotoneInEpsilon) {
  Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    const auto schema = random_any_schema(rng);
    const auto gt = random_pose(schema, rng);
    const auto pred = random_pose(schema, rng);
    double prev = -1.0;
    for (double eps = 0.0; eps < 1.0; eps += uniform(rng, 0.001, 0.1)) {
      const double t = filter_loss(pred, gt, eps).total;
      EXPECT_GE(t, prev);
      prev = t;
    }
  }
}

TEST(FilterLoss, UnlabeledExcluded) {
  Rng rng(25);
  const auto gt0 = random_full_pose(ap10k(), rng);
  auto gt = gt0;
  gt.points[4].v = kUnlabeled;
  auto pred = gt0;
  for (auto& p : pred.points) p.x += 0.5;
  const auto r = filter_loss(pred, gt, 1.0);
  EXPECT_FALSE(r.mask[4]);
  EXPECT_NEAR(r.total, filter_loss(pred, gt0, 1.0).total * 16.0 / 17.0, 1e-12);
}

TEST(FilterLoss, SchemaMismatch) {
  Rng rng(26);
  const auto a = random_full_pose(ap10k(), rng);
  const auto b = random_full_pose(builtin_schema(SchemaFamily::Birds23), rng);
  try {
    filter_loss(a, b, 0.1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaMismatch);
  }
}

TEST(FilterLoss, CustomLoss) {
  Rng rng(27);
  const auto gt = random_full_pose(ap10k(), rng);
  const auto r = filter_loss(gt, gt, [](const Keypoint&, const Keypoint&) { return 1.0; }, 1.0);
  EXPECT_EQ(r.total, 17.0);
}

// ---- OKS and screening ------------------------------------------------------------

namespace {

SchemaPtr pair_schema() {
  SchemaSpec s;
  s.family_id = "pair";
  s.keypoint_names = {"a", "b"};
  s.limbs = {{0, 1}};
  return KeypointSchema::make(s);
}

}  // namespace

TEST(Oks, IdentityIsOne) {
  Rng rng(28);
  const auto p = random_full_pose(ap10k(), rng);
  EXPECT_DOUBLE_EQ(oks(p, p), 1.0);
}

TEST(Oks, HalfTermGivesThreeQuarters) {
  // area 100*100, sigma 0.08: exp(-d^2 / (2 * 10000 * 0.0064)) = 0.5 at d^2 = 128 ln 2.
  const double d = std::sqrt(128.0 * std::log(2.0));
  const auto gt = Pose::make(pair_schema(), {{10, 10, 2}, {50, 50, 2}}, {0, 0, 100, 100});
  const auto pred = Pose::make(pair_schema(), {{10, 10, 2}, {50 + d, 50, 2}}, {0, 0, 100, 100});
  EXPECT_NEAR(oks(pred, gt), 0.75, 1e-12);
}

TEST(Oks, FarPredictionsNearZero) {
  const auto gt = Pose::make(pair_schema(), {{10, 10, 2}, {50, 50, 2}}, {0, 0, 100, 100});
  const auto pred = Pose::make(pair_schema(), {{1e5, 10, 2}, {50, 1e5, 2}}, {0, 0, 100, 100});
  EXPECT_LT(oks(pred, gt), 1e-6);
}

TEST(Oks, MatchesOracleAndBounds) {
  Rng rng(29);
  for (int trial = 0; trial < 500; ++trial) {
    const auto schema = random_any_schema(rng);
    const auto gt = random_pose(schema, rng);
    if (gt.labeled_count() == 0) continue;
    const auto pred = random_pose(schema, rng);
    const double v = oks(pred, gt);
    EXPECT_NEAR(v, oracle::oks_ref(pred, gt), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Oks, TranslationAndScaleInvariant) {
  Rng rng(30);
  for (int trial = 0; trial < 300; ++trial) {
    const auto schema = random_any_schema(rng);
    const auto gt = random_pose(schema, rng);
    if (gt.labeled_count() == 0) continue;
    auto pred = gt;
    for (auto& p : pred.points) {
      p.x += uniform(rng, -8, 8);
      p.y += uniform(rng, -8, 8);
    }
    const double base = oks(pred, gt);
    const double tx = uniform(rng, -500, 500), ty = uniform(rng, -500, 500), s = uniform(rng, 0.1, 10);
    auto move = [&](Pose q, double scale) {
      for (auto& p : q.points) {
        p.x = p.x * scale + tx;
        p.y = p.y * scale + ty;
      }
      q.bbox = {q.bbox.x * scale + tx, q.bbox.y * scale + ty, q.bbox.w * scale, q.bbox.h * scale};
      return q;
    };
    EXPECT_NEAR(oks(move(pred, 1.0), move(gt, 1.0)), base, 1e-9);
    EXPECT_NEAR(oks(move(pred, s), move(gt, s)), base, 1e-9);
  }
}

TEST(Oks, Errors) {
  const auto gt = Pose::make(pair_schema(), {{0, 0, 0}, {0, 0, 0}}, {0, 0, 10, 10});
  try {
    oks(gt, gt);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoLabeledKeypoints);
  }
  Rng rng(31);
  const auto a = random_full_pose(ap10k(), rng);
  EXPECT_THROW(oks(a, gt), Error);
}

TEST(Screen, IdenticalAcceptsAtAnyThreshold) {
  Rng rng(32);
  AnnotatedSample s = random_sample(ap10k(), rng, "a.png", "dog", Provenance::MF);
  s.pose = random_full_pose(ap10k(), rng);
  for (double t : {0.0, 0.5, 0.9, 1.0}) EXPECT_TRUE(screen_sample(s, s.pose, {0.1, t}).accepted);
}

TEST(Screen, TwoPixelErrorAcceptedAtPointNine) {
  // Worst case every joint off by 2 px on a 160 px box: exp(-4 / (2 * 160^2 * 0.08^2)).
  const double bound = std::exp(-4.0 / (2.0 * 160.0 * 160.0 * 0.0064));
  ASSERT_GE(bound, 0.9);
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    AnnotatedSample s;
    s.image_ref = "x.png";
    s.pose = random_full_pose(ap10k(), rng);
    s.pose.bbox = {40, 40, 160, 160};
    auto found = s.pose;
    for (auto& p : found.points) {
      const double a = uniform(rng, 0, 2 * std::acos(-1.0));
      const double r = uniform(rng, 0, 2.0);
      p.x += r * std::cos(a);
      p.y += r * std::sin(a);
    }
    const auto d = screen_sample(s, found, {0.1, 0.9});
    EXPECT_TRUE(d.accepted);
    EXPECT_GE(d.oks, bound - 1e-12);
  }
}

TEST(Screen, DisplacedByDiagonalRejected) {
  Rng rng(34);
  AnnotatedSample s;
  s.image_ref = "x.png";
  s.pose = random_full_pose(ap10k(), rng);
  auto found = s.pose;
  const double diag = s.pose.bbox.diagonal();
  for (auto& p : found.points) p.x += diag;
  const auto d = screen_sample(s, found, {});
  EXPECT_FALSE(d.accepted);
  EXPECT_FALSE(d.reason.empty());
  EXPECT_LT(d.oks, 0.7);
}

TEST(Screen, BoundaryAccepts) {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    AnnotatedSample s;
    s.pose = random_full_pose(ap10k(), rng);
    auto found = s.pose;
    for (auto& p : found.points) p.y += uniform(rng, -5, 5);
    const double v = oks(found, s.pose);
    EXPECT_TRUE(screen_sample(s, found, {0.1, v}).accepted);
    EXPECT_FALSE(screen_sample(s, found, {0.1, std::nextafter(v, 2.0)}).accepted);
  }
}

TEST(Screen, NoLabelsRejectedNotThrown) {
  AnnotatedSample s;
  s.pose = Pose::make(pair_schema(), {{0, 0, 0}, {0, 0, 0}}, {0, 0, 10, 10});
  const auto d = screen_sample(s, s.pose, {});
  EXPECT_FALSE(d.accepted);
}

TEST(Screen, FilterConfigValidation) {
  EXPECT_THROW((FilterConfig{-0.1, 0.5}.validate()), Error);
  EXPECT_THROW((FilterConfig{0.1, 1.5}.validate()), Error);
  EXPECT_NO_THROW((FilterConfig{0.0, 1.0}.validate()));
}
