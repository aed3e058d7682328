// Run the generation pipeline in-process with the mock backend.
//
//   mock_synthesis <real.json> <out_dir>

#include <iostream>

#include "apcap/apcap.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: " << argv[0] << " <real.json> <out_dir>\n";
    return 2;
  }
  apcap::PipelineConfig cfg;
  cfg.input = argv[1];
  cfg.output_dir = argv[2];
  cfg.seed = 42;
  cfg.ratio = apcap::MixRatio::parse("1:3");

  apcap::Logger log(std::cerr, apcap::Logger::Level::Warn);
  const auto out = apcap::synthesize(cfg, log);
  if (out.exit_code) {
    std::cerr << out.failed_stage << ": " << out.message << "\n";
    return out.exit_code;
  }
  for (const auto& [prov, n] : out.accepted.provenance_counts()) std::cout << apcap::to_string(prov) << " " << n << "\n";
  std::cout << "acceptance " << out.acceptance_rate() << ", mean OKS " << out.mean_oks << "\n";
}
