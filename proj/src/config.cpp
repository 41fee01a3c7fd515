#include "metaadapt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "metaadapt/errors.hpp"

namespace metaadapt::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, std::set<std::string> known) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in '" + where + "'");
  }
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + where + "." + key + "' has the wrong type");
  }
  if constexpr (std::is_unsigned_v<T>) {
    const json& v = obj.at(key);
    if (v.is_number_float()) throw ConfigError("'" + where + "." + key + "' must be an integer");
    if (v.is_number_integer() && !v.is_number_unsigned()) {
      throw ConfigError("'" + where + "." + key + "' must be >= 0");
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  split.validate();
  model.validate();
  meta.validate();
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["paths"] = {{"source", cfg.paths.source},
                {"target", cfg.paths.target},
                {"out_dir", cfg.paths.out_dir}};
  j["split"] = {{"train", cfg.split.train},
                {"valid", cfg.split.valid},
                {"test", cfg.split.test},
                {"k", cfg.split.k}};
  j["model"] = {{"hash_dim", cfg.model.hash_dim},
                {"hidden_dim", cfg.model.hidden_dim},
                {"n_classes", cfg.model.n_classes},
                {"ngram_orders", cfg.model.ngram_orders}};
  const auto& m = cfg.meta;
  j["meta"] = {{"variant", std::string(meta::variant_name(m.variant))},
               {"n_tasks", m.n_tasks},
               {"inner_steps", m.inner_steps},
               {"alpha0", m.alpha0},
               {"beta0", m.beta0},
               {"tau", m.tau},
               {"n_iters", m.n_iters},
               {"validate_every", m.validate_every},
               {"task_batch", m.task_batch},
               {"weight_decay", m.weight_decay},
               {"seed", m.seed},
               {"pretrain_iters", m.pretrain_iters},
               {"pretrain_lr", m.pretrain_lr}};
  return j;
}

RunConfig from_json(const nlohmann::json& j) {
  RunConfig cfg;
  reject_unknown(j, "config", {"paths", "split", "model", "meta"});
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    reject_unknown(p, "paths", {"source", "target", "out_dir"});
    read(p, "paths", "source", cfg.paths.source);
    read(p, "paths", "target", cfg.paths.target);
    read(p, "paths", "out_dir", cfg.paths.out_dir);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    reject_unknown(s, "split", {"train", "valid", "test", "k"});
    read(s, "split", "train", cfg.split.train);
    read(s, "split", "valid", cfg.split.valid);
    read(s, "split", "test", cfg.split.test);
    read(s, "split", "k", cfg.split.k);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, "model", {"hash_dim", "hidden_dim", "n_classes", "ngram_orders"});
    read(m, "model", "hash_dim", cfg.model.hash_dim);
    read(m, "model", "hidden_dim", cfg.model.hidden_dim);
    read(m, "model", "n_classes", cfg.model.n_classes);
    read(m, "model", "ngram_orders", cfg.model.ngram_orders);
  }
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    reject_unknown(m, "meta",
                   {"variant", "n_tasks", "inner_steps", "alpha0", "beta0", "tau", "n_iters",
                    "validate_every", "task_batch", "weight_decay", "seed", "pretrain_iters",
                    "pretrain_lr"});
    std::string variant(meta::variant_name(cfg.meta.variant));
    read(m, "meta", "variant", variant);
    cfg.meta.variant = meta::parse_variant(variant);
    read(m, "meta", "n_tasks", cfg.meta.n_tasks);
    read(m, "meta", "inner_steps", cfg.meta.inner_steps);
    read(m, "meta", "alpha0", cfg.meta.alpha0);
    read(m, "meta", "beta0", cfg.meta.beta0);
    read(m, "meta", "tau", cfg.meta.tau);
    read(m, "meta", "n_iters", cfg.meta.n_iters);
    read(m, "meta", "validate_every", cfg.meta.validate_every);
    read(m, "meta", "task_batch", cfg.meta.task_batch);
    read(m, "meta", "weight_decay", cfg.meta.weight_decay);
    read(m, "meta", "seed", cfg.meta.seed);
    read(m, "meta", "pretrain_iters", cfg.meta.pretrain_iters);
    read(m, "meta", "pretrain_lr", cfg.meta.pretrain_lr);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON (" + e.what() + ")");
  }
  return from_json(j);
}

std::string dump_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

nlohmann::ordered_json synth_to_json(const data::SynthConfig& cfg) {
  return {{"vocab_size", cfg.vocab_size},   {"overlap", cfg.overlap},
          {"n_source", cfg.n_source},       {"n_target", cfg.n_target},
          {"target_pos_rate", cfg.target_pos_rate}, {"seed", cfg.seed}};
}

}  // namespace metaadapt::cli
