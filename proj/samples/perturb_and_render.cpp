// Perturb the first pose of a COCO file and write before/after pose maps.
//
//   perturb_and_render <coco.json> <out_dir> [seed]

#include <cstdlib>
#include <iostream>

#include "apcap/apcap.hpp"

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: " << argv[0] << " <coco.json> <out_dir> [seed]\n";
    return 2;
  }
  const auto schema = apcap::builtin_schema(apcap::SchemaFamily::AP10K17);
  const auto samples = apcap::read_coco(argv[1], schema);
  if (samples.empty()) {
    std::cerr << "no samples in " << argv[1] << "\n";
    return 1;
  }
  const auto& real = samples.front();
  apcap::Rng rng(argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 1);

  apcap::PerturbConfig cfg;
  const auto image = apcap::effective_image_size(real);
  const auto result = apcap::perturb(real.pose, cfg, apcap::all_perturb_ops(), rng, image);
  for (const auto& step : result.audit.steps) {
    std::cout << apcap::to_string(step.op) << (step.applied ? " applied" : " skipped") << " after " << step.attempts
              << " draw(s)\n";
  }

  const std::filesystem::path out = argv[2];
  std::filesystem::create_directories(out);
  const apcap::ImageSize size{256, 256};
  const auto before = apcap::normalize_to_frame(real.pose, size).first;
  const auto after = apcap::normalize_to_frame(result.pose, size).first;
  apcap::write_png(out / "before.png", apcap::render_pose_map(before, size, apcap::PoseMapStyle::SkeletonLines).image);
  apcap::write_png(out / "after.png", apcap::render_pose_map(after, size, apcap::PoseMapStyle::SkeletonLines).image);
  std::cout << "wrote " << (out / "before.png").string() << " and " << (out / "after.png").string() << "\n";
}
