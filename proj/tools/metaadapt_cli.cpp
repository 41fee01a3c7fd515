// metaadapt: adapt | gradcheck | synth | sweep | eval

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metaadapt/commands.hpp"
#include "metaadapt/errors.hpp"

namespace {

using namespace metaadapt;
using cli::RunConfig;

// Flag values that, when given, override the config file.
struct RunFlags {
  std::string config;
  std::optional<std::string> source, target, out_dir, variant;
  std::optional<double> train, valid, test;
  std::optional<std::size_t> k;
  std::optional<std::size_t> hash_dim, hidden_dim;
  std::optional<std::vector<int>> ngram_orders;
  std::optional<std::size_t> n_tasks, inner_steps, n_iters, validate_every, task_batch;
  std::optional<std::size_t> pretrain_iters;
  std::optional<double> alpha0, beta0, tau, weight_decay, pretrain_lr;
  std::optional<std::uint64_t> seed;
};

void add_model_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--hash-dim", f.hash_dim, "Feature hash dimension");
  app->add_option("--hidden-dim", f.hidden_dim, "Hidden layer width");
  app->add_option("--ngram-orders", f.ngram_orders, "Word n-gram orders, e.g. 1,2")->delimiter(',');
}

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--config", f.config, "JSON run config; flags override its values");
  app->add_option("--source", f.source, "Source-domain JSONL");
  app->add_option("--target", f.target, "Target-domain JSONL");
  app->add_option("--out-dir", f.out_dir, "Output directory");
  app->add_option("--variant", f.variant,
                  "full, no_similarity, no_adaptive_lr, first_order, maml, naive_finetune");
  app->add_option("--train", f.train, "Train split ratio");
  app->add_option("--valid", f.valid, "Validation split ratio");
  app->add_option("--test", f.test, "Test split ratio");
  app->add_option("--k", f.k, "Target examples per class (0 = evaluate the source model)");
  add_model_flags(app, f);
  app->add_option("--tasks,--n-tasks", f.n_tasks, "Source tasks per meta iteration");
  app->add_option("--inner-steps", f.inner_steps, "Inner gradient steps per task");
  app->add_option("--alpha0", f.alpha0, "Initial inner learning rate");
  app->add_option("--beta0", f.beta0, "Initial outer learning rate");
  app->add_option("--tau", f.tau, "Softmax temperature for task weights");
  app->add_option("--iters,--n-iters", f.n_iters, "Meta iterations");
  app->add_option("--validate-every", f.validate_every, "Validation interval");
  app->add_option("--task-batch", f.task_batch, "Examples per source task");
  app->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay");
  app->add_option("--seed", f.seed, "Seed for splits, init, and sampling");
  app->add_option("--pretrain-iters", f.pretrain_iters, "Supervised source iterations");
  app->add_option("--pretrain-lr", f.pretrain_lr, "Source pretraining learning rate");
}

template <typename T>
void apply(const std::optional<T>& v, T& dst) {
  if (v) dst = *v;
}

RunConfig resolve(const RunFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : cli::load_config(f.config);
  apply(f.source, c.paths.source);
  apply(f.target, c.paths.target);
  apply(f.out_dir, c.paths.out_dir);
  if (f.variant) c.meta.variant = meta::parse_variant(*f.variant);
  apply(f.train, c.split.train);
  apply(f.valid, c.split.valid);
  apply(f.test, c.split.test);
  apply(f.k, c.split.k);
  apply(f.hash_dim, c.model.hash_dim);
  apply(f.hidden_dim, c.model.hidden_dim);
  apply(f.ngram_orders, c.model.ngram_orders);
  apply(f.n_tasks, c.meta.n_tasks);
  apply(f.inner_steps, c.meta.inner_steps);
  apply(f.n_iters, c.meta.n_iters);
  apply(f.validate_every, c.meta.validate_every);
  apply(f.task_batch, c.meta.task_batch);
  apply(f.pretrain_iters, c.meta.pretrain_iters);
  apply(f.alpha0, c.meta.alpha0);
  apply(f.beta0, c.meta.beta0);
  apply(f.tau, c.meta.tau);
  apply(f.weight_decay, c.meta.weight_decay);
  apply(f.pretrain_lr, c.meta.pretrain_lr);
  apply(f.seed, c.meta.seed);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot domain-adaptive meta learning"};
  app.require_subcommand(1);

  RunFlags adapt_flags;
  auto* adapt = app.add_subcommand("adapt", "Adapt a source-trained model to a target domain");
  add_run_flags(adapt, adapt_flags);

  RunFlags sweep_flags;
  cli::SweepGrid grid;
  auto* sweep = app.add_subcommand("sweep", "Run adapt over a hyperparameter grid");
  add_run_flags(sweep, sweep_flags);
  sweep->add_option("--tau-grid", grid.tau, "Temperatures")->delimiter(',');
  sweep->add_option("--alpha0-grid", grid.alpha0, "Initial inner LRs")->delimiter(',');
  sweep->add_option("--beta0-grid", grid.beta0, "Initial outer LRs")->delimiter(',');
  sweep->add_option("--k-grid", grid.k, "Shots per class")->delimiter(',');

  cli::GradcheckConfig gc;
  std::string gc_mode = "second_order";
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare meta gradients with finite differences");
  gradcheck->add_option("--hash-dim", gc.model.hash_dim, "Feature hash dimension")->capture_default_str();
  gradcheck->add_option("--hidden-dim", gc.model.hidden_dim, "Hidden layer width")->capture_default_str();
  gradcheck->add_option("--inner-steps", gc.inner_steps, "Inner gradient steps")->capture_default_str();
  gradcheck->add_option("--task-batch", gc.task_batch, "Examples per source task")->capture_default_str();
  gradcheck->add_option("--k", gc.k, "Meta examples per class")->capture_default_str();
  gradcheck->add_option("--alpha0", gc.alpha0, "Inner learning rate")->capture_default_str();
  gradcheck->add_option("--mode", gc_mode, "second_order or first_order")
      ->check(CLI::IsMember({"second_order", "first_order"}))
      ->capture_default_str();
  gradcheck->add_option("--draws", gc.draws, "Seeded (task, meta task) draws")->capture_default_str();
  gradcheck->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  gradcheck->add_option("--fd-step", gc.fd_step, "Central-difference step")->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance, "Pass threshold")->capture_default_str();

  data::SynthConfig sc;
  std::string synth_out = "synth";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic source/target corpus pair");
  synth->add_option("--vocab-size", sc.vocab_size, "Vocabulary size")->capture_default_str();
  synth->add_option("--overlap", sc.overlap, "Shared fraction of indicative tokens")->capture_default_str();
  synth->add_option("--n-source", sc.n_source, "Source examples")->capture_default_str();
  synth->add_option("--n-target", sc.n_target, "Target examples")->capture_default_str();
  synth->add_option("--target-pos-rate", sc.target_pos_rate, "Target positive rate")->capture_default_str();
  synth->add_option("--seed", sc.seed, "Seed")->capture_default_str();
  synth->add_option("--out-dir", synth_out, "Output directory")->capture_default_str();

  RunFlags eval_flags;
  std::string eval_params, eval_data, eval_out;
  auto* ev = app.add_subcommand("eval", "Evaluate a saved parameter file on a dataset");
  ev->add_option("--params", eval_params, "best_params.madp file")->required();
  ev->add_option("--data", eval_data, "JSONL dataset")->required();
  ev->add_option("--config", eval_flags.config, "Run config supplying the model spec");
  add_model_flags(ev, eval_flags);
  ev->add_option("--out", eval_out, "Also write the metrics CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kConfigFailure;
  }

  if (*adapt) {
    RunConfig cfg;
    const int rc = cli::guarded([&] { cfg = resolve(adapt_flags); return 0; }, std::cerr);
    return rc != 0 ? rc : cli::cmd_adapt(cfg, std::cout, std::cerr);
  }
  if (*sweep) {
    RunConfig cfg;
    const int rc = cli::guarded([&] { cfg = resolve(sweep_flags); return 0; }, std::cerr);
    return rc != 0 ? rc : cli::cmd_sweep(cfg, grid, std::cout, std::cerr);
  }
  if (*gradcheck) {
    gc.mode = gc_mode == "first_order" ? meta::GradMode::kFirstOrder : meta::GradMode::kSecondOrder;
    return cli::cmd_gradcheck(gc, std::cout, std::cerr);
  }
  if (*synth) return cli::cmd_synth(sc, synth_out, std::cout, std::cerr);
  if (*ev) {
    RunConfig cfg;
    const int rc = cli::guarded([&] { cfg = resolve(eval_flags); return 0; }, std::cerr);
    return rc != 0 ? rc : cli::cmd_eval(eval_params, eval_data, cfg.model, eval_out, std::cout, std::cerr);
  }
  return cli::kConfigFailure;
}
