#pragma once

// Scalar-node reverse-mode automatic differentiation.
//
// Every node holds one double. The symbolic backward pass (Graph::grad)
// emits its adjoints as ordinary nodes, so a gradient recorded in the graph
// can itself be differentiated; the numeric backward pass (Graph::backward)
// only propagates doubles and is what callers use for the final derivative.

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "metaadapt/params.hpp"

namespace metaadapt::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kMul,
  kNeg,
  kExp,
  kLog,
  kMax,
  kSum,
  // 1 if a >= b else 0. Piecewise constant, emitted by the backward of kMax.
  kStepGe,
};

std::string_view op_name(Op op);

/// Handle to a node. A default-constructed Var is the structural zero
/// returned by Graph::grad for inputs the output does not depend on.
struct Var {
  static constexpr std::uint32_t kNone = 0xffffffffu;
  std::uint32_t id = kNone;

  bool valid() const { return id != kNone; }
  bool operator==(const Var&) const = default;
};

class Graph {
 public:
  Graph() = default;

  Var leaf(double value);
  Var constant(double value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b) { return add(a, neg(b)); }
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var max(Var a, Var b);
  Var sum(std::span<const Var> terms);
  Var step_ge(Var a, Var b);

  double value(Var v) const;
  Op op(Var v) const;
  /// True if the node depends on at least one leaf.
  bool active(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t leaf_count() const { return leaves_.size(); }
  const std::vector<Var>& leaves() const { return leaves_; }

  void set_output(Var v);
  Var output() const;
  bool has_output() const { return output_.valid(); }

  /// Recomputes every cached value with new leaf values (in leaf creation
  /// order). Throws StructuralError on a count mismatch and NumericError
  /// naming the first node that turns non-finite.
  void evaluate(std::span<const double> leaf_values);

  /// Symbolic reverse pass: returns d(out)/d(wrt[i]) as graph nodes. Nodes in
  /// `wrt` stop propagation, so `wrt` may be any cut of the graph. Inputs
  /// that `out` does not reach get an invalid Var (structural zero).
  std::vector<Var> grad(Var out, std::span<const Var> wrt);

  /// Numeric reverse pass: d(out)/d(leaf) for every leaf, in leaf order.
  std::vector<double> backward(Var out) const;

  /// Drops all nodes but keeps allocated capacity.
  void clear();

 private:
  struct Node {
    Op op;
    bool active;
    std::uint32_t a;
    std::uint32_t b;
  };

  Var push(Op op, bool active, std::uint32_t a, std::uint32_t b, double value);
  void check(Var v) const;
  double compute(const Node& n) const;

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<std::uint32_t> sum_operands_;
  std::vector<Var> leaves_;
  Var output_;
};

/// Value of the graph's single output after re-evaluating at `leaves`.
double evaluate(Graph& graph, const ParameterVector& leaves);

/// d(output)/d(leaf) at `leaves`, laid out like `leaves`.
GradientVector gradient(Graph& graph, const ParameterVector& leaves);

/// Builds a graph whose leaves are exactly `leaves` (in order) and whose
/// output is whatever `build` returns. Gradient steps taken inside `build`
/// via Graph::grad are recorded as ordinary nodes.
using GraphBuilder = std::function<Var(Graph&, std::span<const Var>)>;
Graph record_through(const GraphBuilder& build, const ParameterVector& leaves);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
using ScalarFunction = std::function<double(const ParameterVector&)>;
GradientVector finite_diff_gradient(const ScalarFunction& fn, const ParameterVector& at,
                                    double step);

}  // namespace metaadapt::ad
