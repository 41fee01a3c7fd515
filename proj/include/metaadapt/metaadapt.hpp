#pragma once

// Similarity-rescaled second-order meta adaptation, its baselines, and its
// ablations.
//
// One outer iteration samples n source tasks. For each task the inner loop
// takes a few plain gradient steps from the shared snapshot theta to phi_i,
// recording them differentiably; the meta loss on the fixed k-shot target
// set is then differentiated back through those steps to theta. Each meta
// gradient is scored by the cosine between the task displacement phi_i - theta
// and the meta descent direction, the scores go through a tempered softmax,
// and the weighted sum of meta gradients drives an AdamW step on theta.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaadapt/autodiff.hpp"
#include "metaadapt/data.hpp"
#include "metaadapt/eval.hpp"
#include "metaadapt/model.hpp"
#include "metaadapt/params.hpp"

namespace metaadapt::meta {

enum class Variant {
  kFull,
  kNoSimilarity,   // uniform task weights
  kNoAdaptiveLr,   // inner LRs frozen to the annealed alpha schedule
  kFirstOrder,     // d(phi)/d(theta) treated as identity
  kMaml,           // uniform task weights, similarity never consulted
  kNaiveFinetune,  // supervised steps on the k-shot set only
};

std::string_view variant_name(Variant v);
/// Accepts the snake_case names used in configs; throws ConfigError.
Variant parse_variant(std::string_view name);

bool uses_learnable_lrs(Variant v);
bool uses_similarity_weights(Variant v);

struct MetaConfig {
  std::size_t n_tasks = 3;
  std::size_t inner_steps = 3;
  double alpha0 = 1e-2;
  double beta0 = 1e-2;
  double tau = 0.1;
  std::size_t n_iters = 500;
  std::size_t validate_every = 50;
  std::size_t task_batch = 4;
  Variant variant = Variant::kFull;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  // Supervised source training that produces the starting point shared by
  // every variant (and the 0-shot model).
  std::size_t pretrain_iters = 300;
  double pretrain_lr = 1e-2;

  void validate() const;
};

enum class GradMode { kSecondOrder, kFirstOrder };

/// Inner learning rates, one per step. When `learnable`, the values are
/// read from (and differentiated with respect to) the parameter vector's
/// `inner_lr` segment.
struct InnerLrs {
  std::vector<double> values;
  bool learnable = false;

  static InnerLrs fixed(std::vector<double> values) { return InnerLrs{std::move(values), false}; }
  static InnerLrs from_params(const ParameterVector& theta);
};

struct InnerTrace {
  ParameterVector start;
  ParameterVector end;
  // Present only for recorded traces: leaves are `start`, and `end_vars`
  // are the nodes holding `end`.
  std::shared_ptr<ad::Graph> graph;
  std::vector<ad::Var> end_vars;

  bool recorded() const { return graph != nullptr; }
};

struct MetaGradient {
  double loss = 0.0;
  GradientVector grad;
};

struct TaskOutcome {
  GradientVector task_grad;  // phi_i - theta
  double meta_loss = 0.0;
  GradientVector meta_grad;
  double similarity = 0.0;
};

struct SimilarityWeights {
  std::vector<double> weights;
};

struct LRSchedule {
  double eta0 = 0.0;
  double eta_min = 0.0;
  std::size_t horizon = 1;
};

/// Decoupled-weight-decay Adam. The `inner_lr` segment is exempt from
/// weight decay and projected onto [0, inf) after each step.
class AdamW {
 public:
  explicit AdamW(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(ParameterVector& theta, std::span<const double> grad, double lr, double weight_decay);
  std::size_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

/// phi <- phi - alpha_j * grad L(phi, task) for each j. Recorded traces keep
/// every step in a graph so the meta loss can be differentiated through it.
InnerTrace inner_update(const ParameterVector& theta, const model::Batch& task,
                        const InnerLrs& lrs, bool record = true);

/// phi - theta: the summed inner-loop steps.
GradientVector task_gradient(const InnerTrace& trace);

MetaGradient meta_gradient(const InnerTrace& trace, const data::MetaTask& meta, GradMode mode);

/// Cosine of the flattened vectors; 0 when either norm is below 1e-12.
double task_similarity(const GradientVector& task_grad, const GradientVector& meta_grad);

/// softmax(scores / tau) with max subtraction.
SimilarityWeights rescale_weights(std::span<const double> scores, double tau);

GradientVector aggregate(std::span<const TaskOutcome> outcomes, const SimilarityWeights& weights);

ParameterVector outer_update(const ParameterVector& theta, std::span<const TaskOutcome> outcomes,
                             const SimilarityWeights& weights, double beta_t,
                             const MetaConfig& cfg, AdamW& optimizer);

/// eta_min + (eta0 - eta_min)(1 + cos(pi t / horizon)) / 2 for t in [0, horizon].
double cosine_anneal(const LRSchedule& sched, std::size_t t);

/// Supervised AdamW on random source batches of n_tasks * task_batch.
ParameterVector pretrain_source(const model::Batch& source_train, const ParameterVector& init,
                                const MetaConfig& cfg);

struct RunResult {
  ParameterVector best_params;
  std::size_t best_iter = 0;
  std::vector<eval::ValidationPoint> history;
};

/// Called after every outer update with the 1-based iteration.
using StepObserver = std::function<void(std::size_t iter, const ParameterVector& theta)>;

RunResult run_metaadapt(const model::Batch& source_train, const data::MetaTask& meta,
                        const model::Batch& valid, const MetaConfig& cfg,
                        const ParameterVector& init, const StepObserver& observer = {});

}  // namespace metaadapt::meta
