#include "metaadapt/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "metaadapt/autodiff.hpp"
#include "metaadapt/checkpoint.hpp"
#include "metaadapt/errors.hpp"
#include "metaadapt/rng.hpp"

namespace metaadapt::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kRelErrFloor = 1e-6;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

bool has_both_classes(const model::Batch& b) {
  bool seen[2] = {false, false};
  for (const auto& ex : b) seen[ex.label == 1 ? 1 : 0] = true;
  return seen[0] && seen[1];
}

std::string csv_escape(const std::string& s) {
  if (s.empty()) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const StructuralError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  }
}

AdaptOutcome adapt(const data::Dataset& source, const data::Dataset& target, const RunConfig& cfg) {
  cfg.validate();
  const auto& ms = cfg.model;
  const auto seed = cfg.meta.seed;

  const data::SplitResult src = data::split(data::preprocess_all(source), cfg.split, seed);
  const data::SplitResult tgt = data::split(data::preprocess_all(target), cfg.split, seed);
  const data::KShotSelection shots = data::select_k_shot(tgt.valid, cfg.split.k);

  const model::Batch src_train = data::featurize_all(src.train, ms);
  const model::Batch valid = data::featurize_all(shots.remaining, ms);
  const model::Batch test = data::featurize_all(tgt.test, ms);
  if (test.empty()) throw DataError("target test split is empty");
  if (src_train.size() < cfg.meta.task_batch) {
    throw DataError("source training split has " + std::to_string(src_train.size()) +
                    " examples, fewer than task_batch " + std::to_string(cfg.meta.task_batch));
  }

  const ParameterVector init =
      model::init_params(ms, seed, cfg.meta.inner_steps, cfg.meta.alpha0);
  AdaptOutcome o;
  o.pretrained = meta::pretrain_source(src_train, init, cfg.meta);

  if (cfg.split.k == 0) {
    if (!has_both_classes(valid)) throw DataError("validation set must contain both classes");
    o.run.best_params = o.pretrained;
    o.run.history.push_back({0, eval::evaluate(o.pretrained, valid)});
  } else {
    const data::MetaTask meta{data::featurize_all(shots.meta, ms)};
    o.run = meta::run_metaadapt(src_train, meta, valid, cfg.meta, o.pretrained);
  }
  o.test = eval::evaluate(o.run.best_params, test);
  return o;
}

int cmd_adapt(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        cfg.validate();
        if (cfg.paths.source.empty()) throw ConfigError("paths.source (--source) is required");
        if (cfg.paths.target.empty()) throw ConfigError("paths.target (--target) is required");
        if (cfg.paths.out_dir.empty()) throw ConfigError("paths.out_dir (--out-dir) is required");
        const data::Dataset source = data::load_jsonl(cfg.paths.source);
        const data::Dataset target = data::load_jsonl(cfg.paths.target);
        const fs::path dir = cfg.paths.out_dir;
        make_dir(dir);

        const AdaptOutcome o = adapt(source, target, cfg);
        eval::report_csv(o.run.history, dir / "history.csv");
        eval::report_csv({{o.run.best_iter, o.test}}, dir / "final_metrics.csv");
        write_text(dir / "resolved_config.json", dump_config(cfg));
        checkpoint::save(o.run.best_params, dir / "best_params.madp");

        char line[200];
        std::snprintf(line, sizeof line, "%s: best_iter=%zu test ba=%.4f acc=%.4f f1=%.4f n=%zu\n",
                      std::string(meta::variant_name(cfg.meta.variant)).c_str(), o.run.best_iter,
                      o.test.ba, o.test.acc, o.test.f1, o.test.n);
        out << line;
        return kOk;
      },
      err);
}

double max_relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), kRelErrFloor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

GradcheckReport gradcheck(const GradcheckConfig& cfg) {
  cfg.model.validate();
  if (cfg.draws == 0) throw ConfigError("gradcheck needs at least one draw");
  if (cfg.task_batch == 0) throw ConfigError("task_batch must be >= 1");
  if (cfg.k == 0) throw ConfigError("gradcheck needs k >= 1");
  if (!(cfg.fd_step > 0.0)) throw ConfigError("fd_step must be > 0");
  const Layout layout = model::param_layout(cfg.model, cfg.inner_steps);
  if (layout.size() > kGradcheckMaxParams) {
    throw ConfigError("gradcheck model has " + std::to_string(layout.size()) +
                      " parameters; the limit is " + std::to_string(kGradcheckMaxParams));
  }

  data::SynthConfig sc;
  sc.vocab_size = 60;
  sc.n_source = 200;
  sc.n_target = 200;
  sc.target_pos_rate = 0.5;
  sc.seed = cfg.seed;
  const auto corpora = data::synth_shift_generate(sc);
  const model::Batch source = data::featurize_all(corpora.source, cfg.model);
  const model::Batch target = data::featurize_all(corpora.target, cfg.model);

  GradcheckReport report;
  report.n_params = layout.size();
  for (std::size_t d = 0; d < cfg.draws; ++d) {
    Rng rng = derive_rng(cfg.seed, 0x6c4e, d);
    ParameterVector theta = model::init_params(cfg.model, cfg.seed + d, cfg.inner_steps, cfg.alpha0);
    const Segment& lr = layout.segment("inner_lr");
    for (std::size_t i = 0; i < lr.offset; ++i) theta.values[i] += uniform(rng, -0.1, 0.1);

    const model::Batch task = data::sample_source_task(source, cfg.task_batch, rng);
    data::MetaTask meta;
    std::size_t taken[2] = {0, 0};
    while (taken[0] < cfg.k || taken[1] < cfg.k) {
      const auto& ex = target[uniform_index(rng, target.size())];
      auto& count = taken[ex.label == 1 ? 1 : 0];
      if (count < cfg.k) {
        meta.examples.push_back(ex);
        ++count;
      }
    }

    const bool second = cfg.mode == meta::GradMode::kSecondOrder;
    const meta::InnerTrace trace =
        meta::inner_update(theta, task, meta::InnerLrs::from_params(theta), second);
    const meta::MetaGradient analytic = meta::meta_gradient(trace, meta, cfg.mode);
    const GradientVector numeric = ad::finite_diff_gradient(
        [&](const ParameterVector& p) {
          const auto t = meta::inner_update(p, task, meta::InnerLrs::from_params(p), false);
          return model::loss_value(t.end, meta.examples);
        },
        theta, cfg.fd_step);
    const double e = max_relative_error(analytic.grad.values, numeric.values);
    report.draw_errors.push_back(e);
    report.max_rel_error = std::max(report.max_rel_error, e);
  }
  return report;
}

int cmd_gradcheck(const GradcheckConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const GradcheckReport r = gradcheck(cfg);
        char line[160];
        for (std::size_t d = 0; d < r.draw_errors.size(); ++d) {
          std::snprintf(line, sizeof line, "draw %zu: max_rel_err=%.3e\n", d, r.draw_errors[d]);
          out << line;
        }
        std::snprintf(line, sizeof line, "params=%zu mode=%s max_rel_err=%.3e tolerance=%.1e %s\n",
                      r.n_params,
                      cfg.mode == meta::GradMode::kSecondOrder ? "second_order" : "first_order",
                      r.max_rel_error, cfg.tolerance,
                      r.max_rel_error <= cfg.tolerance ? "PASS" : "FAIL");
        out << line;
        return r.max_rel_error <= cfg.tolerance ? kOk : kCheckFailure;
      },
      err);
}

int cmd_synth(const data::SynthConfig& cfg, const fs::path& out_dir, std::ostream& out,
              std::ostream& err) {
  return guarded(
      [&] {
        const auto corpora = data::synth_shift_generate(cfg);
        make_dir(out_dir);
        data::write_jsonl(corpora.source, out_dir / "source.jsonl");
        data::write_jsonl(corpora.target, out_dir / "target.jsonl");
        out << "wrote " << corpora.source.size() << " source and " << corpora.target.size()
            << " target examples to " << out_dir.string() << "\n";
        return kOk;
      },
      err);
}

std::vector<RunConfig> sweep_points(const RunConfig& base, const SweepGrid& grid) {
  std::vector<RunConfig> points;
  if (grid.empty()) return points;
  auto axis = [](const auto& values, auto fallback) {
    using T = decltype(fallback);
    return values.empty() ? std::vector<T>{fallback} : std::vector<T>(values.begin(), values.end());
  };
  const auto taus = axis(grid.tau, base.meta.tau);
  const auto alphas = axis(grid.alpha0, base.meta.alpha0);
  const auto betas = axis(grid.beta0, base.meta.beta0);
  const auto ks = axis(grid.k, base.split.k);
  for (double tau : taus) {
    for (double a : alphas) {
      for (double b : betas) {
        for (std::size_t k : ks) {
          RunConfig c = base;
          c.meta.tau = tau;
          c.meta.alpha0 = a;
          c.meta.beta0 = b;
          c.split.k = k;
          char name[32];
          std::snprintf(name, sizeof name, "point_%03zu", points.size());
          c.paths.out_dir = (fs::path(base.paths.out_dir) / name).string();
          points.push_back(std::move(c));
        }
      }
    }
  }
  return points;
}

int cmd_sweep(const RunConfig& base, const SweepGrid& grid, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        if (base.paths.out_dir.empty()) throw ConfigError("paths.out_dir (--out-dir) is required");
        const fs::path dir = base.paths.out_dir;
        make_dir(dir);
        const auto points = sweep_points(base, grid);

        std::string csv = "point,variant,tau,alpha0,beta0,k,status,best_iter,ba,acc,f1,n,message\n";
        std::size_t failures = 0;
        for (std::size_t p = 0; p < points.size(); ++p) {
          const RunConfig& c = points[p];
          std::string row = std::to_string(p) + "," +
                            std::string(meta::variant_name(c.meta.variant)) + "," +
                            fmt("%.6g", c.meta.tau) + "," + fmt("%.6g", c.meta.alpha0) + "," +
                            fmt("%.6g", c.meta.beta0) + "," + std::to_string(c.split.k) + ",";
          std::string message;
          int code = kOk;
          AdaptOutcome o;
          auto run_point = [&] {
            if (c.paths.source.empty() || c.paths.target.empty()) {
              throw ConfigError("paths.source and paths.target are required");
            }
            o = adapt(data::load_jsonl(c.paths.source), data::load_jsonl(c.paths.target), c);
            make_dir(c.paths.out_dir);
            eval::report_csv(o.run.history, fs::path(c.paths.out_dir) / "history.csv");
            eval::report_csv({{o.run.best_iter, o.test}},
                             fs::path(c.paths.out_dir) / "final_metrics.csv");
            write_text(fs::path(c.paths.out_dir) / "resolved_config.json", dump_config(c));
            checkpoint::save(o.run.best_params, fs::path(c.paths.out_dir) / "best_params.madp");
            return kOk;
          };
          std::ostringstream point_err;
          code = guarded(run_point, point_err);
          if (code == kOk) {
            row += "ok," + std::to_string(o.run.best_iter) + "," + fmt("%.6f", o.test.ba) + "," +
                   fmt("%.6f", o.test.acc) + "," + fmt("%.6f", o.test.f1) + "," +
                   std::to_string(o.test.n) + ",";
          } else {
            ++failures;
            message = point_err.str();
            while (!message.empty() && message.back() == '\n') message.pop_back();
            err << "point " << p << ": " << message << "\n";
            row += "error,,,,,,";
          }
          row += csv_escape(message) + "\n";
          csv += row;
          out << "point " << p << "/" << points.size() << (code == kOk ? " ok" : " failed") << "\n";
        }
        write_text(dir / "sweep.csv", csv);
        out << "wrote " << (dir / "sweep.csv").string() << " (" << points.size() << " points, "
            << failures << " failed)\n";
        return kOk;
      },
      err);
}

int cmd_eval(const fs::path& params, const fs::path& dataset, const model::ModelSpec& spec,
             const fs::path& out_csv, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        spec.validate();
        const ParameterVector p = checkpoint::load(params);
        const Segment* lr = p.layout.find("inner_lr");
        const Layout expected = model::param_layout(spec, lr ? lr->length : 0);
        if (!(expected == p.layout)) {
          throw ConfigError("parameter file layout does not match the model spec (hash_dim " +
                            std::to_string(spec.hash_dim) + ", hidden_dim " +
                            std::to_string(spec.hidden_dim) + ")");
        }
        const data::Dataset ds = data::preprocess_all(data::load_jsonl(dataset));
        const eval::Metrics m = eval::evaluate(p, ds, spec);
        char line[160];
        std::snprintf(line, sizeof line, "ba,acc,f1,n\n%.6f,%.6f,%.6f,%zu\n", m.ba, m.acc, m.f1, m.n);
        out << line;
        if (!out_csv.empty()) write_text(out_csv, line);
        return kOk;
      },
      err);
}

}  // namespace metaadapt::cli
