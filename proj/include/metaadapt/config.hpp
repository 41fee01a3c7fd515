#pragma once

// Run configuration: a JSON object with `paths`, `split`, `model`, and
// `meta` sections mirroring the library structs. Missing keys keep their
// defaults; unknown keys are rejected so typos cannot silently fall back.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "metaadapt/data.hpp"
#include "metaadapt/metaadapt.hpp"
#include "metaadapt/model.hpp"

namespace metaadapt::cli {

struct Paths {
  std::string source;
  std::string target;
  std::string out_dir = "out";
};

struct RunConfig {
  Paths paths;
  data::SplitSpec split;
  model::ModelSpec model;
  meta::MetaConfig meta;

  /// Nested invariants, plus inner-LR sanity for the learnable variants.
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Throws ConfigError on wrong types, unknown keys, or broken invariants.
RunConfig from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);
/// Pretty-printed, two-space indent, trailing newline.
std::string dump_config(const RunConfig& cfg);

nlohmann::ordered_json synth_to_json(const data::SynthConfig& cfg);

}  // namespace metaadapt::cli
