// Score COCO results against ground truth with both metrics.
//
//   evaluate <preds.json> <gts.json>

#include <iostream>

#include "apcap/apcap.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: " << argv[0] << " <preds.json> <gts.json>\n";
    return 2;
  }
  try {
    const auto schema = apcap::builtin_schema(apcap::SchemaFamily::AP10K17);
    const auto gt = apcap::read_coco_document(argv[2], schema);
    const auto dets = apcap::read_coco_results(argv[1], schema, gt);

    const auto map = apcap::map_oks(dets, gt.samples);
    std::cout << "mAP " << map.overall << "\n";
    for (const auto& [thr, ap] : map.per_threshold) std::cout << "  AP@" << thr << " " << ap << "\n";

    // Top-scoring detection per ground-truth image as the PCK prediction.
    std::vector<apcap::Pose> preds;
    for (const auto& g : gt.samples) {
      const apcap::Detection* best = nullptr;
      for (const auto& d : dets) {
        if (d.image_ref == g.image_ref && (!best || d.score > best->score)) best = &d;
      }
      auto pose = best ? best->pose : g.pose;
      if (!best) {
        for (auto& k : pose.points) k.x = k.y = -1e9;  // missing prediction counts as a miss
      }
      preds.push_back(pose);
    }
    std::cout << "PCK@0.05 " << apcap::pck05(preds, gt.samples).overall << "\n";
  } catch (const apcap::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
