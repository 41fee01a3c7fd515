#include "metaadapt/autodiff.hpp"

#include <cmath>
#include <string>

#include "metaadapt/errors.hpp"

namespace metaadapt::ad {

namespace {

constexpr std::uint32_t kNil = Var::kNone;

std::string describe(std::uint32_t id, Op op) {
  return "node " + std::to_string(id) + " (" + std::string(op_name(op)) + ")";
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kNeg: return "neg";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kMax: return "max";
    case Op::kSum: return "sum";
    case Op::kStepGe: return "step_ge";
  }
  return "?";
}

void Graph::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw StructuralError("operand " + (v.valid() ? std::to_string(v.id) : std::string("<none>")) +
                          " does not belong to this graph (size " +
                          std::to_string(nodes_.size()) + ")");
  }
}

Var Graph::push(Op op, bool active, std::uint32_t a, std::uint32_t b, double value) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  if (!std::isfinite(value)) {
    throw NumericError(describe(id, op) + " produced a non-finite value");
  }
  nodes_.push_back(Node{op, active, a, b});
  values_.push_back(value);
  return Var{id};
}

Var Graph::leaf(double value) {
  const auto index = static_cast<std::uint32_t>(leaves_.size());
  Var v = push(Op::kLeaf, true, index, kNil, value);
  leaves_.push_back(v);
  return v;
}

Var Graph::constant(double value) { return push(Op::kConst, false, kNil, kNil, value); }

Var Graph::add(Var a, Var b) {
  check(a);
  check(b);
  return push(Op::kAdd, nodes_[a.id].active || nodes_[b.id].active, a.id, b.id,
              values_[a.id] + values_[b.id]);
}

Var Graph::mul(Var a, Var b) {
  check(a);
  check(b);
  // Multiplying by a literal one is the identity; skipping it keeps the
  // seed adjoint of a backward pass from producing a node per operand.
  if (nodes_[a.id].op == Op::kConst && values_[a.id] == 1.0) return b;
  if (nodes_[b.id].op == Op::kConst && values_[b.id] == 1.0) return a;
  return push(Op::kMul, nodes_[a.id].active || nodes_[b.id].active, a.id, b.id,
              values_[a.id] * values_[b.id]);
}

Var Graph::neg(Var a) {
  check(a);
  return push(Op::kNeg, nodes_[a.id].active, a.id, kNil, -values_[a.id]);
}

Var Graph::exp(Var a) {
  check(a);
  return push(Op::kExp, nodes_[a.id].active, a.id, kNil, std::exp(values_[a.id]));
}

Var Graph::log(Var a) {
  check(a);
  return push(Op::kLog, nodes_[a.id].active, a.id, kNil, std::log(values_[a.id]));
}

Var Graph::max(Var a, Var b) {
  check(a);
  check(b);
  const double va = values_[a.id];
  const double vb = values_[b.id];
  return push(Op::kMax, nodes_[a.id].active || nodes_[b.id].active, a.id, b.id,
              va >= vb ? va : vb);
}

Var Graph::step_ge(Var a, Var b) {
  check(a);
  check(b);
  return push(Op::kStepGe, false, a.id, b.id, values_[a.id] >= values_[b.id] ? 1.0 : 0.0);
}

Var Graph::sum(std::span<const Var> terms) {
  if (terms.empty()) return constant(0.0);
  if (terms.size() == 1) {
    check(terms[0]);
    return terms[0];
  }
  const auto offset = static_cast<std::uint32_t>(sum_operands_.size());
  bool any_active = false;
  double total = 0.0;
  for (Var t : terms) {
    check(t);
    any_active = any_active || nodes_[t.id].active;
    total += values_[t.id];
    sum_operands_.push_back(t.id);
  }
  return push(Op::kSum, any_active, offset, static_cast<std::uint32_t>(terms.size()), total);
}

double Graph::value(Var v) const {
  check(v);
  return values_[v.id];
}

Op Graph::op(Var v) const {
  check(v);
  return nodes_[v.id].op;
}

bool Graph::active(Var v) const {
  check(v);
  return nodes_[v.id].active;
}

void Graph::set_output(Var v) {
  check(v);
  output_ = v;
}

Var Graph::output() const {
  if (!output_.valid()) throw StructuralError("graph has no output node");
  return output_;
}

void Graph::clear() {
  nodes_.clear();
  values_.clear();
  sum_operands_.clear();
  leaves_.clear();
  output_ = Var{};
}

double Graph::compute(const Node& n) const {
  switch (n.op) {
    case Op::kAdd: return values_[n.a] + values_[n.b];
    case Op::kMul: return values_[n.a] * values_[n.b];
    case Op::kNeg: return -values_[n.a];
    case Op::kExp: return std::exp(values_[n.a]);
    case Op::kLog: return std::log(values_[n.a]);
    case Op::kMax: return values_[n.a] >= values_[n.b] ? values_[n.a] : values_[n.b];
    case Op::kStepGe: return values_[n.a] >= values_[n.b] ? 1.0 : 0.0;
    case Op::kSum: {
      double total = 0.0;
      for (std::uint32_t k = 0; k < n.b; ++k) total += values_[sum_operands_[n.a + k]];
      return total;
    }
    case Op::kLeaf:
    case Op::kConst: break;
  }
  return 0.0;
}

void Graph::evaluate(std::span<const double> leaf_values) {
  if (leaf_values.size() != leaves_.size()) {
    throw StructuralError("evaluate: graph declares " + std::to_string(leaves_.size()) +
                          " leaves but " + std::to_string(leaf_values.size()) + " were given");
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::kConst) continue;
    const double v = n.op == Op::kLeaf ? leaf_values[n.a] : compute(n);
    if (!std::isfinite(v)) {
      throw NumericError(describe(static_cast<std::uint32_t>(i), n.op) +
                         " produced a non-finite value");
    }
    values_[i] = v;
  }
}

std::vector<Var> Graph::grad(Var out, std::span<const Var> wrt) {
  check(out);
  for (Var w : wrt) check(w);

  const auto n0 = static_cast<std::uint32_t>(nodes_.size());
  struct Contribution {
    std::uint32_t var;
    std::uint32_t next;
  };
  std::vector<std::uint32_t> head(n0, kNil);
  std::vector<Contribution> contributions;
  std::vector<std::uint8_t> stop(n0, 0);
  std::vector<Var> stopped_adjoint(wrt.size());
  std::vector<std::uint32_t> stop_slot(n0, kNil);
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    stop[wrt[k].id] = 1;
    stop_slot[wrt[k].id] = static_cast<std::uint32_t>(k);
  }

  auto contribute = [&](std::uint32_t target, Var v) {
    if (!nodes_[target].active) return;
    contributions.push_back(Contribution{v.id, head[target]});
    head[target] = static_cast<std::uint32_t>(contributions.size() - 1);
  };

  std::vector<Var> terms;
  std::vector<Var> adjoint_at(n0);
  contribute(out.id, constant(1.0));

  for (std::int64_t i = out.id; i >= 0; --i) {
    const auto id = static_cast<std::uint32_t>(i);
    if (head[id] == kNil) continue;
    terms.clear();
    for (std::uint32_t c = head[id]; c != kNil; c = contributions[c].next) {
      terms.push_back(Var{contributions[c].var});
    }
    const Var adj = sum(terms);
    if (stop[id]) {
      adjoint_at[id] = adj;
      continue;
    }
    // Copy: emitting nodes below may reallocate nodes_.
    const Node n = nodes_[id];
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
      case Op::kStepGe: break;
      case Op::kAdd:
        contribute(n.a, adj);
        contribute(n.b, adj);
        break;
      case Op::kSum:
        for (std::uint32_t k = 0; k < n.b; ++k) contribute(sum_operands_[n.a + k], adj);
        break;
      case Op::kMul:
        if (nodes_[n.a].active) contribute(n.a, mul(adj, Var{n.b}));
        if (nodes_[n.b].active) contribute(n.b, mul(adj, Var{n.a}));
        break;
      case Op::kNeg: contribute(n.a, neg(adj)); break;
      case Op::kExp: contribute(n.a, mul(adj, Var{id})); break;
      case Op::kLog:
        // d log(a) = 1/a = exp(-log a), which stays within the primitive set.
        contribute(n.a, mul(adj, exp(neg(Var{id}))));
        break;
      case Op::kMax: {
        const Var pick_a = step_ge(Var{n.a}, Var{n.b});
        const Var to_a = mul(adj, pick_a);
        if (nodes_[n.a].active) contribute(n.a, to_a);
        if (nodes_[n.b].active) contribute(n.b, sub(adj, to_a));
        break;
      }
    }
  }

  std::vector<Var> result(wrt.size());
  for (std::size_t k = 0; k < wrt.size(); ++k) result[k] = adjoint_at[wrt[k].id];
  return result;
}

std::vector<double> Graph::backward(Var out) const {
  check(out);
  std::vector<double> adj(static_cast<std::size_t>(out.id) + 1, 0.0);
  adj[out.id] = 1.0;
  for (std::int64_t i = out.id; i >= 0; --i) {
    const double g = adj[i];
    const Node& n = nodes_[i];
    if (g == 0.0 || !n.active) continue;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
      case Op::kStepGe: break;
      case Op::kAdd:
        adj[n.a] += g;
        adj[n.b] += g;
        break;
      case Op::kSum:
        for (std::uint32_t k = 0; k < n.b; ++k) adj[sum_operands_[n.a + k]] += g;
        break;
      case Op::kMul:
        adj[n.a] += g * values_[n.b];
        adj[n.b] += g * values_[n.a];
        break;
      case Op::kNeg: adj[n.a] -= g; break;
      case Op::kExp: adj[n.a] += g * values_[i]; break;
      case Op::kLog: adj[n.a] += g / values_[n.a]; break;
      case Op::kMax:
        if (values_[n.a] >= values_[n.b]) {
          adj[n.a] += g;
        } else {
          adj[n.b] += g;
        }
        break;
    }
  }
  std::vector<double> out_grad(leaves_.size(), 0.0);
  for (std::size_t k = 0; k < leaves_.size(); ++k) {
    const auto id = leaves_[k].id;
    if (id <= out.id) out_grad[k] = adj[id];
  }
  return out_grad;
}

double evaluate(Graph& graph, const ParameterVector& leaves) {
  const Var out = graph.output();
  graph.evaluate(leaves.values);
  return graph.value(out);
}

GradientVector gradient(Graph& graph, const ParameterVector& leaves) {
  const Var out = graph.output();
  graph.evaluate(leaves.values);
  GradientVector g{graph.backward(out), leaves.layout};
  require_finite(g.values, "gradient");
  return g;
}

Graph record_through(const GraphBuilder& build, const ParameterVector& leaves) {
  Graph graph;
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (double v : leaves.values) vars.push_back(graph.leaf(v));
  graph.set_output(build(graph, vars));
  return graph;
}

GradientVector finite_diff_gradient(const ScalarFunction& fn, const ParameterVector& at,
                                    double step) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_gradient: step must be positive");
  GradientVector g{std::vector<double>(at.size(), 0.0), at.layout};
  ParameterVector probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double x = at.values[i];
    probe.values[i] = x + step;
    const double up = fn(probe);
    probe.values[i] = x - step;
    const double down = fn(probe);
    probe.values[i] = x;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_gradient: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    g.values[i] = (up - down) / (2.0 * step);
  }
  return g;
}

}  // namespace metaadapt::ad
