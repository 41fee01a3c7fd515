#include "metaadapt/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "metaadapt/errors.hpp"
#include "metaadapt/rng.hpp"

namespace metaadapt::model {

namespace {

struct Dims {
  std::size_t hash = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

Dims dims_of(const Layout& layout) {
  const Segment& w1 = layout.segment("w1");
  const Segment& b1 = layout.segment("b1");
  const Segment& w2 = layout.segment("w2");
  const Segment& b2 = layout.segment("b2");
  if (b1.length == 0 || w1.length % b1.length != 0 || b2.length != 2 ||
      w2.length != b1.length * b2.length) {
    throw StructuralError("parameter layout does not describe a 2-class MLP");
  }
  return Dims{w1.length / b1.length, b1.length, b2.length,
              w1.offset,            b1.offset, w2.offset, b2.offset};
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

void ModelSpec::validate() const {
  if (n_classes != 2) throw ConfigError("model.n_classes must be 2");
  if (hash_dim < n_classes) throw ConfigError("model.hash_dim must be >= n_classes");
  if (hidden_dim < 1) throw ConfigError("model.hidden_dim must be >= 1");
  if (ngram_orders.empty()) throw ConfigError("model.ngram_orders must not be empty");
  for (int n : ngram_orders) {
    if (n < 1) throw ConfigError("model.ngram_orders entries must be >= 1");
  }
}

std::vector<double> FeatureVector::dense() const {
  std::vector<double> out(dim, 0.0);
  for (std::size_t k = 0; k < indices.size(); ++k) out[indices[k]] = values[k];
  return out;
}

double FeatureVector::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

FeatureVector featurize(std::string_view text, const ModelSpec& spec) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && text[pos] == ' ') ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && text[pos] != ' ') ++pos;
    if (pos > start) tokens.push_back(text.substr(start, pos - start));
  }

  std::map<std::uint32_t, double> counts;
  std::string gram;
  for (int order : spec.ngram_orders) {
    const auto n = static_cast<std::size_t>(order);
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      gram.assign(tokens[i]);
      for (std::size_t j = 1; j < n; ++j) {
        gram.push_back(' ');
        gram.append(tokens[i + j]);
      }
      counts[static_cast<std::uint32_t>(fnv1a64(gram) % spec.hash_dim)] += 1.0;
    }
  }

  FeatureVector fv;
  fv.dim = spec.hash_dim;
  double sq = 0.0;
  for (const auto& [idx, c] : counts) sq += c * c;
  if (sq == 0.0) return fv;
  const double inv = 1.0 / std::sqrt(sq);
  for (const auto& [idx, c] : counts) {
    fv.indices.push_back(idx);
    fv.values.push_back(c * inv);
  }
  return fv;
}

Layout param_layout(const ModelSpec& spec, std::size_t inner_lr_steps) {
  spec.validate();
  Layout layout;
  layout.append("w1", spec.hidden_dim * spec.hash_dim);
  layout.append("b1", spec.hidden_dim);
  layout.append("w2", spec.n_classes * spec.hidden_dim);
  layout.append("b2", spec.n_classes);
  layout.append("inner_lr", inner_lr_steps);
  return layout;
}

ParameterVector init_params(const ModelSpec& spec, std::uint64_t seed,
                            std::size_t inner_lr_steps, double alpha0) {
  ParameterVector p;
  p.layout = param_layout(spec, inner_lr_steps);
  p.values.assign(p.layout.size(), 0.0);
  Rng rng(seed);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(spec.hash_dim));
  for (double& w : p.segment("w1")) w = uniform(rng, -r1, r1);
  const double r2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim));
  for (double& w : p.segment("w2")) w = uniform(rng, -r2, r2);
  for (double& a : p.segment("inner_lr")) a = alpha0;
  return p;
}

std::array<ad::Var, 2> build_logits(ad::Graph& g, std::span<const ad::Var> params,
                                    const Layout& layout, const FeatureVector& x) {
  if (params.size() != layout.size()) {
    throw StructuralError("build_logits: " + std::to_string(params.size()) +
                          " parameter nodes for a layout of " + std::to_string(layout.size()));
  }
  const Dims d = dims_of(layout);
  if (x.dim != d.hash) {
    throw StructuralError("feature dimension " + std::to_string(x.dim) +
                          " does not match model hash_dim " + std::to_string(d.hash));
  }

  std::vector<ad::Var> xs;
  xs.reserve(x.indices.size());
  for (double v : x.values) xs.push_back(g.constant(v));
  const ad::Var one = g.constant(1.0);

  std::vector<ad::Var> terms;
  std::vector<ad::Var> hidden(d.hidden);
  for (std::size_t j = 0; j < d.hidden; ++j) {
    terms.clear();
    terms.push_back(params[d.b1 + j]);
    const std::size_t row = d.w1 + j * d.hash;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      terms.push_back(g.mul(params[row + x.indices[k]], xs[k]));
    }
    const ad::Var pre = g.sum(terms);
    hidden[j] = g.log(g.add(one, g.exp(pre)));
  }

  std::array<ad::Var, 2> z;
  for (std::size_t c = 0; c < 2; ++c) {
    terms.clear();
    terms.push_back(params[d.b2 + c]);
    for (std::size_t j = 0; j < d.hidden; ++j) {
      terms.push_back(g.mul(params[d.w2 + c * d.hidden + j], hidden[j]));
    }
    z[c] = g.sum(terms);
  }
  return z;
}

ad::Var build_loss(ad::Graph& g, std::span<const ad::Var> params, const Layout& layout,
                   std::span<const LabeledFeatures> batch) {
  if (batch.empty()) throw StructuralError("loss: empty batch");
  std::vector<ad::Var> losses;
  losses.reserve(batch.size());
  for (const auto& ex : batch) {
    if (ex.label != 0 && ex.label != 1) {
      throw StructuralError("loss: label " + std::to_string(ex.label) + " is not 0 or 1");
    }
    const auto z = build_logits(g, params, layout, ex.features);
    // log-sum-exp shifted by the max logit, minus the true-class logit.
    const ad::Var m = g.max(z[0], z[1]);
    const ad::Var lse =
        g.add(m, g.log(g.add(g.exp(g.sub(z[0], m)), g.exp(g.sub(z[1], m)))));
    losses.push_back(g.sub(lse, z[static_cast<std::size_t>(ex.label)]));
  }
  return g.mul(g.sum(losses), g.constant(1.0 / static_cast<double>(batch.size())));
}

double loss_value(const ParameterVector& params, std::span<const LabeledFeatures> batch) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (double v : params.values) vars.push_back(g.constant(v));
  return g.value(build_loss(g, vars, params.layout, batch));
}

GradientVector loss_gradient(const ParameterVector& params,
                             std::span<const LabeledFeatures> batch, double* loss) {
  ad::Graph g;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (double v : params.values) vars.push_back(g.leaf(v));
  const ad::Var out = build_loss(g, vars, params.layout, batch);
  if (loss != nullptr) *loss = g.value(out);
  GradientVector grad{g.backward(out), params.layout};
  require_finite(grad.values, "loss gradient");
  return grad;
}

std::array<double, 2> logits(const ParameterVector& params, const FeatureVector& x) {
  const Dims d = dims_of(params.layout);
  if (x.dim != d.hash) {
    throw StructuralError("feature dimension " + std::to_string(x.dim) +
                          " does not match model hash_dim " + std::to_string(d.hash));
  }
  const auto& p = params.values;
  std::array<double, 2> z{p[d.b2], p[d.b2 + 1]};
  for (std::size_t j = 0; j < d.hidden; ++j) {
    double pre = p[d.b1 + j];
    const std::size_t row = d.w1 + j * d.hash;
    for (std::size_t k = 0; k < x.indices.size(); ++k) pre += p[row + x.indices[k]] * x.values[k];
    const double a = softplus(pre);
    z[0] += p[d.w2 + j] * a;
    z[1] += p[d.w2 + d.hidden + j] * a;
  }
  return z;
}

Prediction prediction_from_logits(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  Prediction pred;
  pred.probs.resize(z.size());
  double total = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    pred.probs[c] = std::exp(z[c] - m);
    total += pred.probs[c];
  }
  for (double& p : pred.probs) p /= total;
  // max_element returns the first maximum, i.e. the lower class index on ties.
  pred.label = static_cast<int>(std::max_element(pred.probs.begin(), pred.probs.end()) -
                                pred.probs.begin());
  return pred;
}

Prediction predict(const ParameterVector& params, const FeatureVector& x) {
  const auto z = logits(params, x);
  return prediction_from_logits(z);
}

}  // namespace metaadapt::model
