#pragma once

// The command implementations behind the `metaadapt` tool. Each cmd_*
// returns a process exit code: 0 success, 1 configuration error, 2 data or
// I/O error, 3 numeric error, 4 failed gradient check.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <vector>

#include "metaadapt/config.hpp"
#include "metaadapt/data.hpp"
#include "metaadapt/eval.hpp"
#include "metaadapt/metaadapt.hpp"

namespace metaadapt::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigFailure = 1,
  kDataFailure = 2,
  kNumericFailure = 3,
  kCheckFailure = 4,
};

/// Runs `fn`, mapping library exceptions to exit codes with one diagnostic
/// line on `err`.
int guarded(const std::function<int()>& fn, std::ostream& err);

struct AdaptOutcome {
  meta::RunResult run;
  eval::Metrics test;
  ParameterVector pretrained;
};

/// The full pipeline on in-memory corpora: preprocess, split, k-shot
/// selection, source pretraining, meta adaptation (skipped when k = 0), and
/// evaluation of the best parameters on the target test split.
AdaptOutcome adapt(const data::Dataset& source, const data::Dataset& target, const RunConfig& cfg);

/// Writes history.csv, final_metrics.csv, resolved_config.json and
/// best_params.madp into cfg.paths.out_dir.
int cmd_adapt(const RunConfig& cfg, std::ostream& out, std::ostream& err);

struct GradcheckConfig {
  model::ModelSpec model{16, 4, 2, {1, 2}};
  std::size_t inner_steps = 3;
  std::size_t task_batch = 4;
  std::size_t k = 2;
  double alpha0 = 0.1;
  meta::GradMode mode = meta::GradMode::kSecondOrder;
  std::size_t draws = 5;
  std::uint64_t seed = 0;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
};

struct GradcheckReport {
  std::size_t n_params = 0;
  std::vector<double> draw_errors;
  double max_rel_error = 0.0;
};

inline constexpr std::size_t kGradcheckMaxParams = 200;

/// Per-coordinate |a - b| / max(|a|, |b|, 1e-6), maximized over coordinates.
double max_relative_error(std::span<const double> a, std::span<const double> b);

GradcheckReport gradcheck(const GradcheckConfig& cfg);
int cmd_gradcheck(const GradcheckConfig& cfg, std::ostream& out, std::ostream& err);

/// Writes source.jsonl and target.jsonl into `out_dir`.
int cmd_synth(const data::SynthConfig& cfg, const std::filesystem::path& out_dir,
              std::ostream& out, std::ostream& err);

/// Each non-empty axis contributes its values to a cartesian product; axes
/// left empty keep the base config's value. All axes empty means no points.
struct SweepGrid {
  std::vector<double> tau;
  std::vector<double> alpha0;
  std::vector<double> beta0;
  std::vector<std::size_t> k;

  bool empty() const { return tau.empty() && alpha0.empty() && beta0.empty() && k.empty(); }
};

std::vector<RunConfig> sweep_points(const RunConfig& base, const SweepGrid& grid);

/// Runs every grid point into out_dir/point_NNN and writes out_dir/sweep.csv.
/// A failing point is recorded in its row and the sweep continues.
int cmd_sweep(const RunConfig& base, const SweepGrid& grid, std::ostream& out, std::ostream& err);

/// Scores a saved parameter file on a JSONL dataset; prints `ba,acc,f1,n`.
int cmd_eval(const std::filesystem::path& params, const std::filesystem::path& dataset,
             const model::ModelSpec& spec, const std::filesystem::path& out_csv,
             std::ostream& out, std::ostream& err);

}  // namespace metaadapt::cli
