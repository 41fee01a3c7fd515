#pragma once

// Hashed bag-of-n-grams featurizer and a one-hidden-layer MLP classifier.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaadapt/autodiff.hpp"
#include "metaadapt/params.hpp"

namespace metaadapt::model {

struct ModelSpec {
  std::size_t hash_dim = 2048;
  std::size_t hidden_dim = 32;
  std::size_t n_classes = 2;
  std::vector<int> ngram_orders = {1, 2};

  /// Throws ConfigError when an invariant is broken.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// L2-normalized hashed n-gram counts, stored sparsely. `indices` are
/// strictly increasing; every stored value is nonzero.
struct FeatureVector {
  std::size_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::vector<double> dense() const;
  double norm() const;
};

struct LabeledFeatures {
  FeatureVector features;
  int label = 0;
};
using Batch = std::vector<LabeledFeatures>;

struct Prediction {
  std::vector<double> probs;
  int label = 0;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Hashes every word n-gram of `text` (space separated) into `hash_dim`
/// buckets and L2-normalizes the counts. Empty text gives the zero vector.
FeatureVector featurize(std::string_view text, const ModelSpec& spec);

/// Segments: w1 (hidden x hash), b1, w2 (classes x hidden), b2, inner_lr.
Layout param_layout(const ModelSpec& spec, std::size_t inner_lr_steps);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, every inner-LR
/// entry set to `alpha0`.
ParameterVector init_params(const ModelSpec& spec, std::uint64_t seed,
                            std::size_t inner_lr_steps = 0, double alpha0 = 0.0);

/// Class logits as graph nodes; `params` holds one node per coordinate of
/// `layout` (leaves or recorded expressions).
std::array<ad::Var, 2> build_logits(ad::Graph& g, std::span<const ad::Var> params,
                                    const Layout& layout, const FeatureVector& x);

/// Mean softmax cross-entropy over `batch` as a differentiable node.
ad::Var build_loss(ad::Graph& g, std::span<const ad::Var> params, const Layout& layout,
                   std::span<const LabeledFeatures> batch);

/// Mean cross-entropy, evaluated through a fresh graph.
double loss_value(const ParameterVector& params, std::span<const LabeledFeatures> batch);

/// d(mean cross-entropy)/d(params) via one numeric backward pass.
GradientVector loss_gradient(const ParameterVector& params,
                             std::span<const LabeledFeatures> batch, double* loss = nullptr);

/// Plain double-precision forward pass; does not touch the autodiff graph.
std::array<double, 2> logits(const ParameterVector& params, const FeatureVector& x);

Prediction predict(const ParameterVector& params, const FeatureVector& x);

/// Softmax with argmax; ties go to the lower class index.
Prediction prediction_from_logits(std::span<const double> z);

}  // namespace metaadapt::model
