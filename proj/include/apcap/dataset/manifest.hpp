#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "apcap/error.hpp"
#include "apcap/sample.hpp"

namespace apcap {

enum class Split { Train, Val, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw Error(ErrorKind::ParseError, "unknown split '" + std::string(text) + "'");
}

using ProvenanceCounts = std::map<Provenance, std::size_t>;

inline ProvenanceCounts count_provenance(const std::vector<AnnotatedSample>& samples) {
  ProvenanceCounts counts{{Provenance::Real, 0}, {Provenance::MF, 0}, {Provenance::PA, 0}, {Provenance::CE, 0}};
  for (const auto& s : samples) ++counts[s.provenance];
  return counts;
}

/// Rejects two samples sharing both image_ref and keypoints.
inline void check_unique(const std::vector<AnnotatedSample>& samples) {
  std::unordered_map<std::string, std::vector<const AnnotatedSample*>> by_ref;
  for (const auto& s : samples) {
    auto& seen = by_ref[s.image_ref];
    for (const auto* other : seen) {
      if (other->pose.points == s.pose.points) {
        throw Error(ErrorKind::DuplicateSample, "duplicate sample '" + s.image_ref + "'");
      }
    }
    seen.push_back(&s);
  }
}

class DatasetManifest {
 public:
  DatasetManifest() = default;

  /// Validates every sample, rejects duplicates and derives provenance counts.
  DatasetManifest(std::string subset_id, std::vector<AnnotatedSample> samples, Split split = Split::Train,
                  std::uint64_t seed = 0)
      : subset_id_(std::move(subset_id)), samples_(std::move(samples)), split_(split), seed_(seed) {
    for (const auto& s : samples_) check_sample(s);
    check_unique(samples_);
    counts_ = count_provenance(samples_);
  }

  const std::string& subset_id() const noexcept { return subset_id_; }
  const std::vector<AnnotatedSample>& samples() const noexcept { return samples_; }
  Split split() const noexcept { return split_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const ProvenanceCounts& provenance_counts() const noexcept { return counts_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }

  std::size_t synthetic_count() const { return samples_.size() - counts_.at(Provenance::Real); }

 private:
  std::string subset_id_;
  std::vector<AnnotatedSample> samples_;
  Split split_ = Split::Train;
  std::uint64_t seed_ = 0;
  ProvenanceCounts counts_ = count_provenance({});
};

/// real:synthetic mixing ratio written "1:6". The synthetic side must split
/// evenly over the three strategies.
struct MixRatio {
  int real = 1;
  int synthetic = 6;

  int groups_per_strategy() const { return synthetic / 3; }

  static MixRatio parse(std::string_view text) {
    const auto colon = text.find(':');
    MixRatio r{};
    auto parse_int = [&](std::string_view part, int& out) {
      const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
      return ec == std::errc{} && ptr == part.data() + part.size();
    };
    if (colon == std::string_view::npos || !parse_int(text.substr(0, colon), r.real) ||
        !parse_int(text.substr(colon + 1), r.synthetic)) {
      throw Error(ErrorKind::ParseError, "ratio must look like 1:6, got '" + std::string(text) + "'");
    }
    if (r.real != 1 || r.synthetic < 3 || r.synthetic % 3 != 0) {
      throw Error(ErrorKind::RatioViolation, "ratio must be 1:N with N a positive multiple of 3");
    }
    return r;
  }
};

inline std::string to_string(const MixRatio& r) { return std::to_string(r.real) + ":" + std::to_string(r.synthetic); }

/// Synthetic groups per strategy; each group holds one sample per real seed.
using SynthGroups = std::map<Provenance, std::vector<std::vector<AnnotatedSample>>>;

/// Real samples followed by every synthetic group in strategy order. Each of
/// the 3 * groups_per_strategy groups must contain exactly |real| samples.
inline DatasetManifest assemble_in_domain(std::vector<AnnotatedSample> real, const SynthGroups& synth,
                                          MixRatio ratio = {}, std::string subset_id = "in_domain",
                                          std::uint64_t seed = 0) {
  const std::size_t n = real.size();
  const auto groups = static_cast<std::size_t>(ratio.groups_per_strategy());
  for (const auto& s : real) {
    if (s.provenance != Provenance::Real) throw Error(ErrorKind::InvalidArgument, "'" + s.image_ref + "' is not a real sample");
  }
  std::vector<AnnotatedSample> all = std::move(real);
  all.reserve(n * (1 + 3 * groups));
  for (const Provenance p : {Provenance::MF, Provenance::PA, Provenance::CE}) {
    const auto it = synth.find(p);
    const std::size_t have = it == synth.end() ? 0 : it->second.size();
    if (n == 0 && have == 0) continue;
    if (have != groups) {
      throw Error(ErrorKind::RatioViolation, std::string(to_string(p)) + " has " + std::to_string(have) + " groups, expected " +
                                                 std::to_string(groups));
    }
    for (std::size_t g = 0; g < groups; ++g) {
      const auto& group = it->second[g];
      if (group.size() != n) {
        throw Error(ErrorKind::RatioViolation, std::string(to_string(p)) + " group " + std::to_string(g) + " has " +
                                                   std::to_string(group.size()) + " samples, expected " + std::to_string(n));
      }
      for (const auto& s : group) {
        if (s.provenance != p) {
          throw Error(ErrorKind::InvalidArgument, "'" + s.image_ref + "' filed under " + std::string(to_string(p)) +
                                                      " but tagged " + std::string(to_string(s.provenance)));
        }
        all.push_back(s);
      }
    }
  }
  return DatasetManifest(std::move(subset_id), std::move(all), Split::Train, seed);
}

}  // namespace apcap
