#include "metaadapt/eval.hpp"

#include <cstdio>
#include <fstream>

#include "metaadapt/errors.hpp"

namespace metaadapt::eval {

ConfusionMatrix confusion(const ParameterVector& params, const model::Batch& ds) {
  if (ds.empty()) throw DataError("cannot evaluate on an empty dataset");
  ConfusionMatrix cm;
  for (const auto& ex : ds) {
    const int pred = model::predict(params, ex.features).label;
    if (ex.label == 1) {
      (pred == 1 ? cm.tp : cm.fn) += 1;
    } else {
      (pred == 1 ? cm.fp : cm.tn) += 1;
    }
  }
  return cm;
}

ConfusionMatrix confusion(const ParameterVector& params, const data::Dataset& ds,
                          const model::ModelSpec& spec) {
  return confusion(params, data::featurize_all(ds, spec));
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  const std::size_t pos = cm.tp + cm.fn;
  const std::size_t neg = cm.tn + cm.fp;
  const double sensitivity = pos == 0 ? 0.5 : static_cast<double>(cm.tp) / static_cast<double>(pos);
  const double specificity = neg == 0 ? 0.5 : static_cast<double>(cm.tn) / static_cast<double>(neg);
  return 0.5 * (sensitivity + specificity);
}

double accuracy(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  return total == 0 ? 0.0 : static_cast<double>(cm.tp + cm.tn) / static_cast<double>(total);
}

double f1(const ConfusionMatrix& cm) {
  const std::size_t denom = 2 * cm.tp + cm.fp + cm.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(cm.tp) / static_cast<double>(denom);
}

Metrics metrics_from(const ConfusionMatrix& cm) {
  return Metrics{balanced_accuracy(cm), accuracy(cm), f1(cm), cm.total()};
}

Metrics evaluate(const ParameterVector& params, const model::Batch& ds) {
  return metrics_from(confusion(params, ds));
}

Metrics evaluate(const ParameterVector& params, const data::Dataset& ds,
                 const model::ModelSpec& spec) {
  return metrics_from(confusion(params, ds, spec));
}

std::string format_csv(const std::vector<ValidationPoint>& history) {
  std::string out = "iter,ba,acc,f1,n\n";
  char line[160];
  for (const auto& p : history) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%zu\n", p.iter, p.metrics.ba,
                  p.metrics.acc, p.metrics.f1, p.metrics.n);
    out += line;
  }
  return out;
}

void report_csv(const std::vector<ValidationPoint>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_csv(history);
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace metaadapt::eval
