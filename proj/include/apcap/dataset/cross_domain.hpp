#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "apcap/dataset/manifest.hpp"
#include "apcap/error.hpp"
#include "apcap/random.hpp"

namespace apcap {

/// Source categories keep their real annotations; target categories are
/// unseen during training except through synthetic samples. A batch holds
/// source_num/source_den source samples, the rest target.
struct CrossDomainSpec {
  std::set<std::string> source_categories;
  std::set<std::string> target_categories;
  int source_num = 1;
  int source_den = 3;

  void validate() const {
    for (const auto& c : source_categories) {
      if (target_categories.count(c)) throw Error(ErrorKind::InvalidConfig, "category '" + c + "' is both source and target");
    }
    if (source_den < 1 || source_num < 0 || source_num > source_den) {
      throw Error(ErrorKind::InvalidConfig, "source ratio must lie in [0, 1]");
    }
  }

  bool is_source(const std::string& c) const { return source_categories.count(c) > 0; }
  bool is_target(const std::string& c) const { return target_categories.count(c) > 0; }
};

struct CrossDomainSplit {
  DatasetManifest train;
  DatasetManifest test;
};

/// test: real target-category samples. train: real source-category samples
/// plus every synthetic sample. Real target samples never reach train.
inline CrossDomainSplit split_cross_domain(const std::vector<AnnotatedSample>& samples, const CrossDomainSpec& spec,
                                           std::uint64_t seed = 0) {
  spec.validate();
  std::vector<AnnotatedSample> train, test;
  for (const auto& s : samples) {
    const bool src = spec.is_source(s.category);
    if (!src && !spec.is_target(s.category)) {
      throw Error(ErrorKind::UnknownCategory, "category '" + s.category + "' of '" + s.image_ref + "' is in neither domain");
    }
    if (s.provenance != Provenance::Real) {
      train.push_back(s);
    } else if (src) {
      train.push_back(s);
    } else {
      test.push_back(s);
    }
  }
  return {DatasetManifest("cross_domain_train", std::move(train), Split::Train, seed),
          DatasetManifest("cross_domain_test", std::move(test), Split::Test, seed)};
}

/// Indices into the manifest, source-domain samples first.
using Batch = std::vector<std::size_t>;

/// Single-consumer stream of fixed-composition batches. Each epoch shuffles
/// both domain pools with a seed derived from (seed, epoch) and draws without
/// replacement; the incomplete tail of an epoch is dropped.
class BalancedBatchSampler {
 public:
  BalancedBatchSampler(const DatasetManifest& manifest, CrossDomainSpec spec, std::size_t batch_size, std::uint64_t seed)
      : spec_(std::move(spec)), seed_(seed) {
    spec_.validate();
    const auto num = static_cast<std::size_t>(spec_.source_num);
    const auto den = static_cast<std::size_t>(spec_.source_den);
    if (batch_size == 0 || (batch_size * num) % den != 0) {
      throw Error(ErrorKind::BadBatchSize, "batch size " + std::to_string(batch_size) + " does not split " +
                                               std::to_string(num) + "/" + std::to_string(den) + " source");
    }
    n_source_ = batch_size * num / den;
    n_target_ = batch_size - n_source_;
    const auto& samples = manifest.samples();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (spec_.is_source(samples[i].category)) {
        source_.push_back(i);
      } else if (spec_.is_target(samples[i].category)) {
        target_.push_back(i);
      } else {
        throw Error(ErrorKind::UnknownCategory, "category '" + samples[i].category + "' is in neither domain");
      }
    }
  }

  std::size_t source_per_batch() const noexcept { return n_source_; }
  std::size_t target_per_batch() const noexcept { return n_target_; }

  std::size_t batches_per_epoch() const {
    const std::size_t by_source = n_source_ ? source_.size() / n_source_ : SIZE_MAX;
    const std::size_t by_target = n_target_ ? target_.size() / n_target_ : SIZE_MAX;
    return std::min(by_source, by_target);
  }

  /// All batches of one epoch; independent of the stream position.
  std::vector<Batch> epoch(std::size_t index) const {
    auto src = shuffled(source_, index, "source");
    auto tgt = shuffled(target_, index, "target");
    std::vector<Batch> out;
    const std::size_t n = batches_per_epoch();
    out.reserve(n);
    for (std::size_t b = 0; b < n; ++b) {
      Batch batch;
      batch.reserve(n_source_ + n_target_);
      batch.insert(batch.end(), src.begin() + static_cast<std::ptrdiff_t>(b * n_source_),
                   src.begin() + static_cast<std::ptrdiff_t>((b + 1) * n_source_));
      batch.insert(batch.end(), tgt.begin() + static_cast<std::ptrdiff_t>(b * n_target_),
                   tgt.begin() + static_cast<std::ptrdiff_t>((b + 1) * n_target_));
      out.push_back(std::move(batch));
    }
    return out;
  }

  /// Next batch, rolling over into the following epoch. nullopt when the
  /// pools are too small to fill a single batch.
  std::optional<Batch> next() {
    if (batches_per_epoch() == 0) return std::nullopt;
    if (pos_ >= current_.size()) {
      current_ = epoch(epoch_index_++);
      pos_ = 0;
    }
    return current_[pos_++];
  }

  /// Epoch of the most recently returned batch.
  std::size_t current_epoch() const noexcept { return epoch_index_ == 0 ? 0 : epoch_index_ - 1; }

 private:
  std::vector<std::size_t> shuffled(std::vector<std::size_t> pool, std::size_t epoch_index, const char* domain) const {
    Rng rng(derive_seed(seed_, "epoch", std::to_string(epoch_index), domain));
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[uniform_index(rng, i)]);
    return pool;
  }

  CrossDomainSpec spec_;
  std::uint64_t seed_;
  std::size_t n_source_ = 0;
  std::size_t n_target_ = 0;
  std::vector<std::size_t> source_;
  std::vector<std::size_t> target_;
  std::vector<Batch> current_;
  std::size_t pos_ = 0;
  std::size_t epoch_index_ = 0;
};

}  // namespace apcap
