#include <algorithm>
#include <cstring>
#include <functional>
#include <string>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "metaadapt/autodiff.hpp"
#include "metaadapt/errors.hpp"
#include "metaadapt/rng.hpp"

using namespace metaadapt;
using namespace metaadapt::ad;

namespace {

ParameterVector pv(std::vector<double> v) {
  ParameterVector p;
  p.layout.append("x", v.size());
  p.values = std::move(v);
  return p;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("evaluate square and identity") {
  Graph g = record_through([](Graph& gr, std::span<const Var> x) { return gr.mul(x[0], x[0]); },
                           pv({3.0}));
  CHECK(evaluate(g, pv({3.0})) == 9.0);
  CHECK(evaluate(g, pv({-1.5})) == 2.25);

  Graph id = record_through([](Graph&, std::span<const Var> x) { return x[0]; }, pv({0.0}));
  for (double c : {-7.25, 0.0, 1e10}) CHECK(evaluate(id, pv({c})) == c);
}

TEST_CASE("evaluate two-class cross entropy matches hand arithmetic") {
  // logits z0 = w0*x, z1 = w1*x; loss = log(e^z0 + e^z1) - z1 for label 1
  const double w0 = 0.4, w1 = -0.3, x = 2.0;
  Graph g = record_through(
      [&](Graph& gr, std::span<const Var> p) {
        const Var xv = gr.constant(x);
        const Var z0 = gr.mul(p[0], xv);
        const Var z1 = gr.mul(p[1], xv);
        const Var lse = gr.log(gr.add(gr.exp(z0), gr.exp(z1)));
        return gr.sub(lse, z1);
      },
      pv({w0, w1}));
  const double z0 = w0 * x, z1 = w1 * x;
  const double expected = -std::log(std::exp(z1) / (std::exp(z0) + std::exp(z1)));
  CHECK(evaluate(g, pv({w0, w1})) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("evaluate rejects layout mismatch and names non-finite nodes") {
  Graph g = record_through([](Graph& gr, std::span<const Var> x) { return gr.log(x[0]); },
                           pv({1.0}));
  CHECK_THROWS_AS(evaluate(g, pv({1.0, 2.0})), StructuralError);
  try {
    evaluate(g, pv({-1.0}));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
    CHECK(std::string(e.what()).find("node") != std::string::npos);
  }
}

TEST_CASE("re-evaluation is bit-identical") {
  Graph g = record_through(
      [](Graph& gr, std::span<const Var> x) {
        return gr.log(gr.add(gr.exp(gr.mul(x[0], x[1])), gr.max(x[0], x[1])));
      },
      pv({0.3, 0.7}));
  const double a = evaluate(g, pv({0.123, -0.456}));
  const double b = evaluate(g, pv({0.123, -0.456}));
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("first derivatives of simple functions") {
  Graph sq = record_through([](Graph& gr, std::span<const Var> x) { return gr.mul(x[0], x[0]); },
                            pv({3.0}));
  CHECK(gradient(sq, pv({3.0})).values[0] == 6.0);

  Graph prod = record_through([](Graph& gr, std::span<const Var> x) { return gr.mul(x[0], x[1]); },
                              pv({2.0, 5.0}));
  const auto g = gradient(prod, pv({2.0, 5.0}));
  CHECK(g.values[0] == 5.0);
  CHECK(g.values[1] == 2.0);
}

TEST_CASE("second derivative through a recorded gradient") {
  // g(x) = d/dx (x^3 / 2) = 1.5 x^2; dg/dx = 3x = 6 at x = 2
  auto build = [](Graph& gr, std::span<const Var> x) {
    const Var cube = gr.mul(gr.mul(x[0], x[0]), x[0]);
    const Var f = gr.mul(gr.constant(0.5), cube);
    return gr.grad(f, x)[0];
  };
  Graph g = record_through(build, pv({2.0}));
  CHECK(evaluate(g, pv({2.0})) == doctest::Approx(6.0));
  const double analytic = gradient(g, pv({2.0})).values[0];
  CHECK(analytic == doctest::Approx(6.0).epsilon(1e-12));

  // oracle: central differences of the first-derivative function, step 1e-4
  const auto fd = finite_diff_gradient(
      [&](const ParameterVector& p) {
        Graph h = record_through(build, p);
        return h.value(h.output());
      },
      pv({2.0}), 1e-4);
  CHECK(rel_err(analytic, fd.values[0]) < 1e-8);
}

TEST_CASE("record_through captures gradient steps") {
  // one SGD step on L = theta^2 / 2 with alpha = 0.1
  auto sgd = [](std::size_t steps) {
    return [steps](Graph& gr, std::span<const Var> x) {
      Var phi = x[0];
      for (std::size_t s = 0; s < steps; ++s) {
        std::vector<Var> cur{phi};
        const Var loss = gr.mul(gr.constant(0.5), gr.mul(phi, phi));
        phi = gr.sub(phi, gr.mul(gr.constant(0.1), gr.grad(loss, cur)[0]));
      }
      return phi;
    };
  };
  Graph one = record_through(sgd(1), pv({1.0}));
  CHECK(evaluate(one, pv({1.0})) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(gradient(one, pv({1.0})).values[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(one.leaf_count() == 1);

  Graph zero = record_through(sgd(0), pv({1.0}));
  CHECK(gradient(zero, pv({1.0})).values[0] == 1.0);

  Graph two = record_through(sgd(2), pv({1.0}));
  const double analytic = gradient(two, pv({1.0})).values[0];
  const auto fd = finite_diff_gradient(
      [&](const ParameterVector& p) {
        Graph h = record_through(sgd(2), p);
        return h.value(h.output());
      },
      pv({1.0}), 1e-5);
  CHECK(analytic == doctest::Approx(0.81).epsilon(1e-14));
  CHECK(rel_err(analytic, fd.values[0]) < 1e-8);
}

TEST_CASE("record_through rejects foreign operands") {
  Graph other;
  const Var stray = other.leaf(1.0);
  const Var stray_big{12345};
  CHECK_THROWS_AS(record_through([&](Graph&, std::span<const Var>) { return stray_big; }, pv({1.0})),
                  StructuralError);
  CHECK_THROWS_AS(record_through([&](Graph& gr, std::span<const Var> x) { return gr.add(x[0], Var{}); },
                                 pv({1.0})),
                  StructuralError);
  (void)stray;
}

TEST_CASE("finite differences") {
  const auto g = finite_diff_gradient(
      [](const ParameterVector& p) { return p.values[0] * p.values[0]; }, pv({3.0}), 1e-5);
  CHECK(std::abs(g.values[0] - 6.0) < 1e-6);

  const auto c = finite_diff_gradient([](const ParameterVector&) { return 4.2; },
                                      pv({1.0, -2.0, 3.0}), 1e-3);
  for (double v : c.values) CHECK(v == 0.0);

  CHECK_THROWS_AS(finite_diff_gradient([](const ParameterVector&) { return 0.0; }, pv({1.0}), 0.0),
                  ConfigError);
  CHECK_THROWS_AS(finite_diff_gradient([](const ParameterVector& p) { return std::log(p.values[0]); },
                                       pv({0.0}), 1e-3),
                  NumericError);
}

TEST_CASE("finite differences agree with gradient on a 10-parameter cross entropy") {
  // 5 features x 2 classes linear model, 3 fixed examples
  const std::vector<std::vector<double>> xs = {
      {0.5, -1.0, 0.2, 0.0, 1.5}, {-0.3, 0.8, 1.1, -0.7, 0.0}, {1.0, 1.0, -1.0, 0.4, -0.2}};
  const std::vector<int> ys = {1, 0, 1};
  auto build = [&](Graph& gr, std::span<const Var> w) {
    std::vector<Var> terms;
    for (std::size_t n = 0; n < xs.size(); ++n) {
      Var z[2];
      for (int c = 0; c < 2; ++c) {
        std::vector<Var> prods;
        for (std::size_t j = 0; j < 5; ++j) prods.push_back(gr.mul(w[c * 5 + j], gr.constant(xs[n][j])));
        z[c] = gr.sum(prods);
      }
      const Var lse = gr.log(gr.add(gr.exp(z[0]), gr.exp(z[1])));
      terms.push_back(gr.sub(lse, z[ys[n]]));
    }
    return gr.mul(gr.constant(1.0 / 3.0), gr.sum(terms));
  };
  Rng rng(11);
  std::vector<double> w(10);
  for (double& v : w) v = uniform(rng, -1, 1);
  Graph g = record_through(build, pv(w));
  const auto analytic = gradient(g, pv(w));
  const auto fd = finite_diff_gradient(
      [&](const ParameterVector& p) { return evaluate(g, p); }, pv(w), 1e-5);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(rel_err(analytic.values[i], fd.values[i]) < 1e-5);
}

TEST_CASE("every primitive matches finite differences on random inputs") {
  using Build = std::function<Var(Graph&, std::span<const Var>)>;
  const std::vector<std::pair<const char*, Build>> prims = {
      {"add", [](Graph& g, std::span<const Var> x) { return g.add(x[0], x[1]); }},
      {"sub", [](Graph& g, std::span<const Var> x) { return g.sub(x[0], x[1]); }},
      {"mul", [](Graph& g, std::span<const Var> x) { return g.mul(x[0], x[1]); }},
      {"neg", [](Graph& g, std::span<const Var> x) { return g.neg(x[0]); }},
      {"exp", [](Graph& g, std::span<const Var> x) { return g.exp(x[0]); }},
      // log needs a positive argument; shift the [-2, 2] draw into [1, 5]
      {"log", [](Graph& g, std::span<const Var> x) { return g.log(g.add(x[0], g.constant(3.0))); }},
      {"max", [](Graph& g, std::span<const Var> x) { return g.max(x[0], x[1]); }},
      {"sum",
       [](Graph& g, std::span<const Var> x) {
         const Var t[3] = {x[0], x[1], g.mul(x[0], x[1])};
         return g.sum(t);
       }},
  };
  Rng rng(2024);
  for (const auto& [name, build] : prims) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      double a = uniform(rng, -2, 2), b = uniform(rng, -2, 2);
      if (std::string(name) == "max" && std::abs(a - b) < 1e-3) b += 0.01;  // keep away from the kink
      Graph g = record_through(build, pv({a, b}));
      const auto an = gradient(g, pv({a, b}));
      const auto fd = finite_diff_gradient([&](const ParameterVector& p) { return evaluate(g, p); },
                                           pv({a, b}), 1e-5);
      for (int i = 0; i < 2; ++i) {
        const double scale = std::max({std::abs(an.values[i]), std::abs(fd.values[i]), 1e-6});
        worst = std::max(worst, std::abs(an.values[i] - fd.values[i]) / scale);
      }
    }
    INFO(name);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("gradient is linear") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = uniform(rng, -3, 3), b = uniform(rng, -3, 3);
    const std::vector<double> x = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
    auto f = [](Graph& g, std::span<const Var> v) { return g.exp(g.mul(v[0], v[1])); };
    auto h = [](Graph& g, std::span<const Var> v) { return g.mul(g.mul(v[0], v[0]), v[1]); };
    Graph gf = record_through(f, pv(x));
    Graph gh = record_through(h, pv(x));
    Graph gc = record_through(
        [&](Graph& g, std::span<const Var> v) {
          return g.add(g.mul(g.constant(a), f(g, v)), g.mul(g.constant(b), h(g, v)));
        },
        pv(x));
    const auto df = gradient(gf, pv(x)), dh = gradient(gh, pv(x)), dc = gradient(gc, pv(x));
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(dc.values[i] - (a * df.values[i] + b * dh.values[i])) <= 1e-12);
    }
  }
}

TEST_CASE("grad-of-grad on cubic polynomials matches symbolic second derivatives") {
  // p(x, y) = c0 x^3 + c1 x^2 y + c2 x y + c3 y^2 + c4 x
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    double c[5];
    for (double& v : c) v = uniform(rng, -2, 2);
    const double x = uniform(rng, -2, 2), y = uniform(rng, -2, 2);
    for (int which = 0; which < 2; ++which) {
      Graph g = record_through(
          [&](Graph& gr, std::span<const Var> v) {
            auto k = [&](double t) { return gr.constant(t); };
            const Var xx = gr.mul(v[0], v[0]);
            const Var terms[5] = {gr.mul(k(c[0]), gr.mul(xx, v[0])), gr.mul(k(c[1]), gr.mul(xx, v[1])),
                                  gr.mul(k(c[2]), gr.mul(v[0], v[1])),
                                  gr.mul(k(c[3]), gr.mul(v[1], v[1])), gr.mul(k(c[4]), v[0])};
            return gr.grad(gr.sum(terms), v)[which];
          },
          pv({x, y}));
      const auto h = gradient(g, pv({x, y}));
      // Hessian of p
      const double pxx = 6 * c[0] * x + 2 * c[1] * y;
      const double pxy = 2 * c[1] * x + c[2];
      const double pyy = 2 * c[3];
      const double expect0 = which == 0 ? pxx : pxy;
      const double expect1 = which == 0 ? pxy : pyy;
      CHECK(std::abs(h.values[0] - expect0) <= 1e-10);
      CHECK(std::abs(h.values[1] - expect1) <= 1e-10);
    }
  }
}

TEST_CASE("structural zeros for unreachable inputs") {
  Graph g;
  const Var x = g.leaf(1.0), y = g.leaf(2.0);
  const Var out = g.exp(x);
  const Var wrt[2] = {x, y};
  const auto d = g.grad(out, wrt);
  CHECK(d[0].valid());
  CHECK_FALSE(d[1].valid());
  const auto num = g.backward(out);
  CHECK(num[1] == 0.0);
}
