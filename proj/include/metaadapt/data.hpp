#pragma once

// Dataset ingestion, text preprocessing, splitting, k-shot selection,
// source-task sampling, and the synthetic domain-shift generator.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "metaadapt/model.hpp"
#include "metaadapt/rng.hpp"

namespace metaadapt::data {

struct Example {
  std::string text;
  int label = 0;  // 0 = misinformation, 1 = true

  bool operator==(const Example&) const = default;
};

struct Dataset {
  std::string name;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

struct SplitSpec {
  double train = 0.7;
  double valid = 0.2;
  double test = 0.1;
  std::size_t k = 10;

  void validate() const;
};

struct SplitResult {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// The fixed k-per-class target set used for the meta loss.
struct MetaTask {
  model::Batch examples;
};

struct KShotSelection {
  Dataset meta;
  Dataset remaining;
};

/// One JSON object per line with `text` (string) and `label` (0/1); other
/// fields are ignored. Blank lines are skipped.
Dataset load_jsonl(const std::filesystem::path& path);
Dataset parse_jsonl(std::string_view content, std::string name = "");
void write_jsonl(const Dataset& ds, const std::filesystem::path& path);

/// Lowercases, strips '#'/'@' markers, replaces URLs with "url", drops
/// everything outside [a-z0-9 ], and collapses whitespace.
std::string preprocess(std::string_view text);
Dataset preprocess_all(const Dataset& ds);

/// Seeded shuffle, then contiguous cuts at floor(train*n) and
/// floor((train+valid)*n).
SplitResult split(const Dataset& ds, const SplitSpec& spec, std::uint64_t seed);

/// Scans `valid` in order and takes the first k examples of each class.
/// Throws DataError naming the class that runs short.
KShotSelection select_k_shot(const Dataset& valid, std::size_t k);

model::Batch featurize_all(const Dataset& ds, const model::ModelSpec& spec);

/// `batch_size` distinct examples drawn uniformly from `train`.
model::Batch sample_source_task(const model::Batch& train, std::size_t batch_size, Rng& rng);

struct SynthConfig {
  std::size_t vocab_size = 500;
  double overlap = 0.5;
  std::size_t n_source = 2000;
  std::size_t n_target = 2000;
  double target_pos_rate = 0.7;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthCorpora {
  Dataset source;
  Dataset target;
};

/// Two domains over one vocabulary. Each class owns a set of indicative
/// tokens per domain; a fraction `overlap` of each set is shared between
/// the domains and the rest is domain-exclusive. Source labels are
/// balanced; exactly round(target_pos_rate * n_target) target texts are
/// positive.
SynthCorpora synth_shift_generate(const SynthConfig& cfg);

}  // namespace metaadapt::data
