#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "apcap/error.hpp"
#include "apcap/random.hpp"

namespace apcap {

inline constexpr std::string_view kCategorySlot = "category";
inline constexpr std::string_view kTrainTemplate = "A {category} is in the background";

/// Text-conditioning recipe for one animal category. Templates use `{slot}`
/// placeholders; `{category}` is mandatory and never moves.
struct PromptSpec {
  std::string category;
  std::map<std::string, std::vector<std::string>> descriptor_pools;
  std::string template_text = "a photo of a {category}, {appearance}, {setting}, {lighting}";
  std::string train_template = std::string(kTrainTemplate);
  std::vector<std::string> question_variants;
  std::uint64_t rng_seed = 0;
};

enum class PromptMode { Train, Infer };

namespace detail {

struct TemplatePart {
  bool is_slot = false;
  std::string text;  // literal text, or slot name
};

inline std::vector<TemplatePart> parse_template(std::string_view tpl) {
  std::vector<TemplatePart> parts;
  std::string literal;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] != '{') {
      literal.push_back(tpl[i]);
      continue;
    }
    const auto close = tpl.find('}', i);
    if (close == std::string_view::npos) throw Error(ErrorKind::InvalidArgument, "unterminated slot in template");
    if (!literal.empty()) parts.push_back({false, std::move(literal)});
    literal.clear();
    parts.push_back({true, std::string(tpl.substr(i + 1, close - i - 1))});
    i = close;
  }
  if (!literal.empty()) parts.push_back({false, std::move(literal)});
  return parts;
}

/// Collapse the debris empty slots leave behind: repeated spaces, spaces
/// before punctuation, doubled commas and dangling separators.
inline std::string tidy_prompt(std::string_view raw) {
  std::string out;
  for (char c : raw) {
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    if ((c == ',' || c == '.') && !out.empty() && out.back() == ' ') out.pop_back();
    if (c == ',' && !out.empty() && out.back() == ',') continue;
    out.push_back(c);
  }
  while (!out.empty() && (out.back() == ' ' || out.back() == ',')) out.pop_back();
  std::size_t start = 0;
  while (start < out.size() && (out[start] == ' ' || out[start] == ',')) ++start;
  return out.substr(start);
}

}  // namespace detail

/// Reject templates that use undeclared slots or do not contain exactly one
/// `{category}`.
inline void validate_prompt_spec(const PromptSpec& spec) {
  int categories = 0;
  for (const auto& part : detail::parse_template(spec.template_text)) {
    if (!part.is_slot) continue;
    if (part.text == kCategorySlot) {
      ++categories;
    } else if (!spec.descriptor_pools.count(part.text)) {
      throw Error(ErrorKind::UnknownSlot, "template slot '" + part.text + "' has no descriptor pool");
    }
  }
  if (categories != 1) throw Error(ErrorKind::InvalidArgument, "template must contain {category} exactly once");
  for (const auto& part : detail::parse_template(spec.train_template)) {
    if (part.is_slot && part.text != kCategorySlot) {
      throw Error(ErrorKind::UnknownSlot, "training template slot '" + part.text + "' is not {category}");
    }
  }
  if (spec.category.empty()) throw Error(ErrorKind::InvalidArgument, "prompt category is empty");
}

/// Train: the fixed minimalist template with the category substituted.
/// Infer: each descriptor slot gets a uniformly drawn descriptor, then the
/// descriptors are shuffled across the slot positions; the category stays put.
inline std::string make_prompt(const PromptSpec& spec, PromptMode mode, Rng& rng) {
  validate_prompt_spec(spec);
  if (mode == PromptMode::Train) {
    std::string out;
    for (const auto& part : detail::parse_template(spec.train_template)) out += part.is_slot ? spec.category : part.text;
    return out;
  }

  const auto parts = detail::parse_template(spec.template_text);
  std::vector<std::string> fillers;
  for (const auto& part : parts) {
    if (!part.is_slot || part.text == kCategorySlot) continue;
    const auto& pool = spec.descriptor_pools.at(part.text);
    fillers.push_back(pool.empty() ? std::string() : pool[uniform_index(rng, pool.size())]);
  }
  for (std::size_t i = fillers.size(); i > 1; --i) std::swap(fillers[i - 1], fillers[uniform_index(rng, i)]);

  std::string raw;
  std::size_t next = 0;
  for (const auto& part : parts) {
    if (!part.is_slot) {
      raw += part.text;
    } else if (part.text == kCategorySlot) {
      raw += spec.category;
    } else {
      raw += fillers[next++];
    }
  }
  return detail::tidy_prompt(raw);
}

/// Pick one caption-eliciting instruction uniformly. The image reference is
/// carried alongside by the caller; no network access happens here.
inline std::string make_caption_request(std::string_view /*image_ref*/, const std::vector<std::string>& question_variants,
                                        Rng& rng) {
  if (question_variants.empty()) throw Error(ErrorKind::InvalidArgument, "no caption question variants");
  return question_variants[uniform_index(rng, question_variants.size())];
}

}  // namespace apcap
