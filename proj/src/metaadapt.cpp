#include "metaadapt/metaadapt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "metaadapt/errors.hpp"
#include "metaadapt/rng.hpp"

namespace metaadapt::meta {

namespace {

constexpr std::string_view kLrSegment = "inner_lr";
constexpr double kZeroNorm = 1e-12;
constexpr std::uint64_t kPretrainStream = 0x9e7a;

struct VariantInfo {
  Variant v;
  std::string_view name;
};
constexpr VariantInfo kVariants[] = {
    {Variant::kFull, "full"},
    {Variant::kNoSimilarity, "no_similarity"},
    {Variant::kNoAdaptiveLr, "no_adaptive_lr"},
    {Variant::kFirstOrder, "first_order"},
    {Variant::kMaml, "maml"},
    {Variant::kNaiveFinetune, "naive_finetune"},
};

// The inner displacement phi - theta is a descent direction, so it is
// compared against the meta descent direction -meta_grad.
double score_task(const TaskOutcome& out) {
  GradientVector descent = out.meta_grad;
  for (double& x : descent.values) x = -x;
  return task_similarity(out.task_grad, descent);
}

}  // namespace

GradientVector task_gradient(const InnerTrace& trace) {
  GradientVector d{std::vector<double>(trace.start.size()), trace.start.layout};
  for (std::size_t i = 0; i < d.size(); ++i) d.values[i] = trace.end.values[i] - trace.start.values[i];
  return d;
}

std::string_view variant_name(Variant v) {
  for (const auto& info : kVariants) {
    if (info.v == v) return info.name;
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (const auto& info : kVariants) {
    if (info.name == name) return info.v;
  }
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected full, no_similarity, no_adaptive_lr, first_order, maml, "
                    "naive_finetune)");
}

bool uses_learnable_lrs(Variant v) {
  return v == Variant::kFull || v == Variant::kNoSimilarity || v == Variant::kFirstOrder ||
         v == Variant::kMaml;
}

bool uses_similarity_weights(Variant v) {
  return v == Variant::kFull || v == Variant::kNoAdaptiveLr || v == Variant::kFirstOrder;
}

void MetaConfig::validate() const {
  if (n_tasks < 1) throw ConfigError("n_tasks must be >= 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
  if (!(alpha0 > 0.0)) throw ConfigError("alpha0 must be > 0");
  if (!(beta0 > 0.0)) throw ConfigError("beta0 must be > 0");
  if (task_batch < 1) throw ConfigError("task_batch must be >= 1");
  if (validate_every < 1) throw ConfigError("validate_every must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be > 0");
}

InnerLrs InnerLrs::from_params(const ParameterVector& theta) {
  const auto seg = theta.segment(kLrSegment);
  return InnerLrs{std::vector<double>(seg.begin(), seg.end()), true};
}

AdamW::AdamW(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(ParameterVector& theta, std::span<const double> grad, double lr,
                 double weight_decay) {
  if (grad.size() != theta.size() || m_.size() != theta.size()) {
    throw StructuralError("AdamW: gradient/state size does not match parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const Segment* lr_seg = theta.layout.find(kLrSegment);
  const std::size_t lr_begin = lr_seg ? lr_seg->offset : theta.size();
  const std::size_t lr_end = lr_seg ? lr_seg->offset + lr_seg->length : theta.size();

  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    const bool is_lr = i >= lr_begin && i < lr_end;
    double x = theta.values[i];
    if (!is_lr) x -= lr * weight_decay * x;
    x -= lr * update;
    if (is_lr && x < 0.0) x = 0.0;
    theta.values[i] = x;
  }
  require_finite(theta.values, "AdamW step");
}

InnerTrace inner_update(const ParameterVector& theta, const model::Batch& task,
                        const InnerLrs& lrs, bool record) {
  const std::size_t steps = lrs.values.size();
  const Segment& lr_seg = theta.layout.segment(kLrSegment);
  if (lrs.learnable && lr_seg.length != steps) {
    throw StructuralError("inner_update: " + std::to_string(steps) +
                          " learnable LRs but the inner_lr segment holds " +
                          std::to_string(lr_seg.length));
  }

  InnerTrace trace;
  trace.start = theta;
  if (!record) {
    ParameterVector phi = theta;
    for (std::size_t j = 0; j < steps; ++j) {
      try {
        const GradientVector g = model::loss_gradient(phi, task);
        for (std::size_t i = 0; i < phi.size(); ++i) phi.values[i] -= lrs.values[j] * g.values[i];
        require_finite(phi.values, "parameters");
      } catch (const NumericError& e) {
        throw NumericError("inner step " + std::to_string(j + 1) + ": " + e.what());
      }
    }
    trace.end = std::move(phi);
    return trace;
  }

  auto graph = std::make_shared<ad::Graph>();
  ad::Graph& g = *graph;
  std::vector<ad::Var> cur;
  cur.reserve(theta.size());
  for (double v : theta.values) cur.push_back(g.leaf(v));
  const std::vector<ad::Var> lr_leaves(cur.begin() + static_cast<std::ptrdiff_t>(lr_seg.offset),
                                       cur.begin() +
                                           static_cast<std::ptrdiff_t>(lr_seg.offset + lr_seg.length));

  for (std::size_t j = 0; j < steps; ++j) {
    try {
      const ad::Var neg_alpha =
          lrs.learnable ? g.neg(lr_leaves[j]) : g.constant(-lrs.values[j]);
      const ad::Var loss = model::build_loss(g, cur, theta.layout, task);
      const std::vector<ad::Var> grads = g.grad(loss, cur);
      for (std::size_t i = 0; i < cur.size(); ++i) {
        if (grads[i].valid()) cur[i] = g.add(cur[i], g.mul(neg_alpha, grads[i]));
      }
    } catch (const NumericError& e) {
      throw NumericError("inner step " + std::to_string(j + 1) + ": " + e.what());
    }
  }

  trace.end = theta;
  for (std::size_t i = 0; i < cur.size(); ++i) trace.end.values[i] = g.value(cur[i]);
  trace.graph = std::move(graph);
  trace.end_vars = std::move(cur);
  return trace;
}

MetaGradient meta_gradient(const InnerTrace& trace, const data::MetaTask& meta, GradMode mode) {
  MetaGradient out;
  if (mode == GradMode::kFirstOrder) {
    out.grad = model::loss_gradient(trace.end, meta.examples, &out.loss);
    out.grad.layout = trace.start.layout;
    return out;
  }
  if (!trace.recorded()) {
    throw StructuralError("second-order meta gradient needs a recorded inner trace");
  }
  ad::Graph& g = *trace.graph;
  const ad::Var loss = model::build_loss(g, trace.end_vars, trace.start.layout, meta.examples);
  out.loss = g.value(loss);
  out.grad = GradientVector{g.backward(loss), trace.start.layout};
  require_finite(out.grad.values, "meta gradient");
  return out;
}

double task_similarity(const GradientVector& task_grad, const GradientVector& meta_grad) {
  if (task_grad.size() != meta_grad.size() || !(task_grad.layout == meta_grad.layout)) {
    throw StructuralError("task_similarity: gradient layouts differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < task_grad.size(); ++i) {
    const double a = task_grad.values[i];
    const double b = meta_grad.values[i];
    dot += a * b;
    na += a * a;
    nb += b * b;
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kZeroNorm || nb < kZeroNorm) return 0.0;
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

SimilarityWeights rescale_weights(std::span<const double> scores, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (scores.empty()) throw ConfigError("rescale_weights needs at least one score");
  double top = scores[0] / tau;
  for (double s : scores) top = std::max(top, s / tau);
  SimilarityWeights w;
  w.weights.reserve(scores.size());
  double total = 0.0;
  for (double s : scores) {
    w.weights.push_back(std::exp(s / tau - top));
    total += w.weights.back();
  }
  for (double& x : w.weights) x /= total;
  return w;
}

GradientVector aggregate(std::span<const TaskOutcome> outcomes, const SimilarityWeights& weights) {
  if (outcomes.empty() || outcomes.size() != weights.weights.size()) {
    throw StructuralError("aggregate: " + std::to_string(outcomes.size()) + " outcomes but " +
                          std::to_string(weights.weights.size()) + " weights");
  }
  GradientVector g{std::vector<double>(outcomes[0].meta_grad.size(), 0.0),
                   outcomes[0].meta_grad.layout};
  for (std::size_t t = 0; t < outcomes.size(); ++t) {
    const auto& mg = outcomes[t].meta_grad.values;
    if (mg.size() != g.size()) throw StructuralError("aggregate: meta gradient sizes differ");
    const double w = weights.weights[t];
    for (std::size_t i = 0; i < g.size(); ++i) g.values[i] += w * mg[i];
  }
  require_finite(g.values, "aggregated meta gradient");
  return g;
}

ParameterVector outer_update(const ParameterVector& theta, std::span<const TaskOutcome> outcomes,
                             const SimilarityWeights& weights, double beta_t,
                             const MetaConfig& cfg, AdamW& optimizer) {
  const GradientVector g = aggregate(outcomes, weights);
  ParameterVector next = theta;
  optimizer.step(next, g.values, beta_t, cfg.weight_decay);
  return next;
}

double cosine_anneal(const LRSchedule& sched, std::size_t t) {
  if (sched.horizon == 0) throw ConfigError("cosine_anneal: horizon must be >= 1");
  if (t > sched.horizon) {
    throw ConfigError("cosine_anneal: step " + std::to_string(t) + " is past the horizon " +
                      std::to_string(sched.horizon));
  }
  if (t == sched.horizon) return sched.eta_min;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(sched.horizon);
  return sched.eta_min + 0.5 * (sched.eta0 - sched.eta_min) * (1.0 + std::cos(phase));
}

ParameterVector pretrain_source(const model::Batch& source_train, const ParameterVector& init,
                                const MetaConfig& cfg) {
  cfg.validate();
  ParameterVector theta = init;
  if (cfg.pretrain_iters == 0) return theta;
  AdamW opt(theta.size());
  const LRSchedule sched{cfg.pretrain_lr, 0.0, cfg.pretrain_iters};
  const std::size_t batch = std::min(source_train.size(), cfg.n_tasks * cfg.task_batch);
  for (std::size_t t = 0; t < cfg.pretrain_iters; ++t) {
    Rng rng = derive_rng(cfg.seed ^ kPretrainStream, t);
    const model::Batch b = data::sample_source_task(source_train, batch, rng);
    try {
      const GradientVector g = model::loss_gradient(theta, b);
      opt.step(theta, g.values, cosine_anneal(sched, t), cfg.weight_decay);
    } catch (const NumericError& e) {
      throw NumericError("source pretraining iteration " + std::to_string(t + 1) + ": " +
                         e.what());
    }
  }
  return theta;
}

RunResult run_metaadapt(const model::Batch& source_train, const data::MetaTask& meta,
                        const model::Batch& valid, const MetaConfig& cfg,
                        const ParameterVector& init, const StepObserver& observer) {
  cfg.validate();
  bool has_class[2] = {false, false};
  for (const auto& ex : valid) has_class[ex.label == 1 ? 1 : 0] = true;
  if (!has_class[0] || !has_class[1]) {
    throw DataError("validation set must contain both classes");
  }
  if (meta.examples.empty()) throw DataError("meta task is empty (k = 0)");

  const Segment& lr_seg = init.layout.segment(kLrSegment);
  const bool learnable = uses_learnable_lrs(cfg.variant);
  if (cfg.variant != Variant::kNaiveFinetune && learnable && lr_seg.length != cfg.inner_steps) {
    throw ConfigError("parameter vector holds " + std::to_string(lr_seg.length) +
                      " inner LRs but inner_steps = " + std::to_string(cfg.inner_steps));
  }
  const GradMode mode =
      cfg.variant == Variant::kFirstOrder ? GradMode::kFirstOrder : GradMode::kSecondOrder;

  RunResult result;
  result.best_params = init;
  ParameterVector theta = init;
  AdamW opt(theta.size());
  const LRSchedule beta_sched{cfg.beta0, 0.0, std::max<std::size_t>(cfg.n_iters, 1)};
  const LRSchedule alpha_sched{cfg.alpha0, 0.0, std::max<std::size_t>(cfg.n_iters, 1)};
  double best_ba = -1.0;

  if (cfg.n_iters == 0) {
    result.history.push_back({0, eval::evaluate(theta, valid)});
    return result;
  }

  for (std::size_t t = 0; t < cfg.n_iters; ++t) {
    const double beta_t = cosine_anneal(beta_sched, t);
    try {
      if (cfg.variant == Variant::kNaiveFinetune) {
        const GradientVector g = model::loss_gradient(theta, meta.examples);
        opt.step(theta, g.values, beta_t, cfg.weight_decay);
      } else {
        const InnerLrs lrs =
            learnable ? InnerLrs::from_params(theta)
                      : InnerLrs::fixed(std::vector<double>(cfg.inner_steps,
                                                            cosine_anneal(alpha_sched, t)));
        std::vector<TaskOutcome> outcomes;
        outcomes.reserve(cfg.n_tasks);
        std::vector<double> scores;
        for (std::size_t i = 0; i < cfg.n_tasks; ++i) {
          Rng rng = derive_rng(cfg.seed, t + 1, i);
          const model::Batch task = data::sample_source_task(source_train, cfg.task_batch, rng);
          const InnerTrace trace = inner_update(theta, task, lrs, mode == GradMode::kSecondOrder);
          MetaGradient mg = meta_gradient(trace, meta, mode);
          TaskOutcome out{task_gradient(trace), mg.loss, std::move(mg.grad), 0.0};
          if (cfg.variant != Variant::kMaml) out.similarity = score_task(out);
          scores.push_back(out.similarity);
          outcomes.push_back(std::move(out));
        }
        const SimilarityWeights weights =
            uses_similarity_weights(cfg.variant)
                ? rescale_weights(scores, cfg.tau)
                : SimilarityWeights{std::vector<double>(cfg.n_tasks,
                                                        1.0 / static_cast<double>(cfg.n_tasks))};
        theta = outer_update(theta, outcomes, weights, beta_t, cfg, opt);
      }
    } catch (const NumericError& e) {
      throw NumericError("meta iteration " + std::to_string(t + 1) + ": " + e.what());
    }

    if (observer) observer(t + 1, theta);
    if ((t + 1) % cfg.validate_every == 0 || t + 1 == cfg.n_iters) {
      const eval::Metrics m = eval::evaluate(theta, valid);
      result.history.push_back({t + 1, m});
      if (m.ba > best_ba) {
        best_ba = m.ba;
        result.best_params = theta;
        result.best_iter = t + 1;
      }
    }
  }
  return result;
}

}  // namespace metaadapt::meta
