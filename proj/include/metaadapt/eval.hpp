#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "metaadapt/data.hpp"
#include "metaadapt/model.hpp"
#include "metaadapt/params.hpp"

namespace metaadapt::eval {

/// Class 1 is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
  double ba = 0.0;
  double acc = 0.0;
  double f1 = 0.0;
  std::size_t n = 0;

  bool operator==(const Metrics&) const = default;
};

/// One row of a training history.
struct ValidationPoint {
  std::size_t iter = 0;
  Metrics metrics;
};

ConfusionMatrix confusion(const ParameterVector& params, const model::Batch& ds);
ConfusionMatrix confusion(const ParameterVector& params, const data::Dataset& ds,
                          const model::ModelSpec& spec);

/// Mean of sensitivity and specificity. A side with an empty denominator
/// counts as 0.5.
double balanced_accuracy(const ConfusionMatrix& cm);
double accuracy(const ConfusionMatrix& cm);
/// Positive-class F1; 0 when tp + fp + fn = 0.
double f1(const ConfusionMatrix& cm);

Metrics metrics_from(const ConfusionMatrix& cm);
Metrics evaluate(const ParameterVector& params, const model::Batch& ds);
Metrics evaluate(const ParameterVector& params, const data::Dataset& ds,
                 const model::ModelSpec& spec);

/// `iter,ba,acc,f1,n` with six-decimal fixed formatting, LF line endings.
std::string format_csv(const std::vector<ValidationPoint>& history);
void report_csv(const std::vector<ValidationPoint>& history, const std::filesystem::path& path);

}  // namespace metaadapt::eval
