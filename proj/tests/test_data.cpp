#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "metaadapt/data.hpp"
#include "metaadapt/errors.hpp"
#include "metaadapt/eval.hpp"
#include "metaadapt/metaadapt.hpp"

using namespace metaadapt;
using namespace metaadapt::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path dir = fs::temp_directory_path() / "metaadapt_test_data";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

Dataset labeled(std::initializer_list<int> labels) {
  Dataset ds{"t", {}};
  int i = 0;
  for (int y : labels) ds.examples.push_back({"ex" + std::to_string(i++), y});
  return ds;
}

std::multiset<std::string> texts(const Dataset& ds) {
  std::multiset<std::string> s;
  for (const auto& e : ds.examples) s.insert(e.text);
  return s;
}

std::map<std::string, int> class_token_counts(const Dataset& ds, int label) {
  std::map<std::string, int> counts;
  for (const auto& e : ds.examples) {
    if (e.label != label) continue;
    std::istringstream in(e.text);
    std::string tok;
    while (in >> tok) ++counts[tok];
  }
  return counts;
}

std::set<std::string> top_tokens(const std::map<std::string, int>& counts, std::size_t n) {
  std::vector<std::pair<int, std::string>> v;
  for (const auto& [t, c] : counts) v.push_back({c, t});
  std::sort(v.rbegin(), v.rend());
  std::set<std::string> out;
  for (std::size_t i = 0; i < n && i < v.size(); ++i) out.insert(v[i].second);
  return out;
}

}  // namespace

TEST_CASE("load_jsonl") {
  SUBCASE("order preserved, extra fields ignored") {
    const auto p = temp_file("two.jsonl", "{\"text\":\"a\",\"label\":1}\n{\"text\":\"b\",\"label\":0,\"id\":7}\n");
    const auto ds = load_jsonl(p);
    REQUIRE(ds.size() == 2);
    CHECK(ds.examples[0] == Example{"a", 1});
    CHECK(ds.examples[1] == Example{"b", 0});
  }
  SUBCASE("empty file") { CHECK(load_jsonl(temp_file("empty.jsonl", "")).empty()); }
  SUBCASE("bad label names its line") {
    const auto p = temp_file("bad.jsonl", "{\"text\":\"a\",\"label\":1}\n{\"text\":\"b\",\"label\":2}\n");
    try {
      load_jsonl(p);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("malformed JSON names its line") {
    try {
      parse_jsonl("{\"text\":\"a\",\"label\":1}\n\n{\"text\": oops}\n");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_jsonl("/nonexistent/x.jsonl"), DataError); }
  SUBCASE("write then load round-trips") {
    Dataset ds{"rt", {{"hello \"world\"", 1}, {"caf\xc3\xa9", 0}}};
    const fs::path p = fs::temp_directory_path() / "metaadapt_test_data" / "rt.jsonl";
    write_jsonl(ds, p);
    CHECK(load_jsonl(p).examples == ds.examples);
  }
}

TEST_CASE("preprocess") {
  CHECK(preprocess("Check https://x.co NOW!! #Covid @who") == "check url now covid who");
  CHECK(preprocess("") == "");
  CHECK(preprocess("plain words") == "plain words");
  CHECK(preprocess("  see www.example.com/path?q=1\tand\nHTTP://A.B  ") == "see url and url");
  CHECK(preprocess("don't-stop") == "dontstop");
}

TEST_CASE("preprocess is idempotent") {
  Rng rng(42);
  const std::string alphabet = "aZ9 #@!.:/\t\nhtpsw-_'";
  for (int i = 0; i < 500; ++i) {
    std::string t;
    const auto len = uniform_index(rng, 40);
    for (std::size_t j = 0; j < len; ++j) t.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    if (i % 5 == 0) t += " https://q.io/x";
    const std::string once = preprocess(t);
    CHECK(preprocess(once) == once);
  }
}

TEST_CASE("split") {
  SplitSpec spec;
  const Dataset ten = labeled({1, 0, 1, 0, 1, 0, 1, 0, 1, 0});
  const auto r = split(ten, spec, 1);
  CHECK(r.train.size() == 7);
  CHECK(r.valid.size() == 2);
  CHECK(r.test.size() == 1);

  const auto again = split(ten, spec, 1);
  CHECK(r.train.examples == again.train.examples);
  CHECK(r.valid.examples == again.valid.examples);

  const auto empty = split(Dataset{}, spec, 1);
  CHECK(empty.train.empty());
  CHECK(empty.valid.empty());
  CHECK(empty.test.empty());

  CHECK_THROWS_AS(split(ten, SplitSpec{0.5, 0.2, 0.2, 1}, 0), ConfigError);
  CHECK_THROWS_AS(split(ten, SplitSpec{0.0, 0.5, 0.5, 1}, 0), ConfigError);
}

TEST_CASE("split parts are disjoint and cover the input") {
  for (std::size_t n : {0u, 1u, 3u, 17u, 100u, 1001u}) {
    Dataset ds{"n", {}};
    for (std::size_t i = 0; i < n; ++i) ds.examples.push_back({"t" + std::to_string(i), int(i % 2)});
    const auto r = split(ds, SplitSpec{}, n);
    CHECK(r.train.size() == static_cast<std::size_t>(std::floor(0.7 * n + 1e-9)));
    CHECK(r.train.size() + r.valid.size() == static_cast<std::size_t>(std::floor(0.9 * n + 1e-9)));
    auto all = texts(r.train);
    for (const auto& s : texts(r.valid)) all.insert(s);
    for (const auto& s : texts(r.test)) all.insert(s);
    CHECK(all == texts(ds));
    CHECK(std::set<std::string>(all.begin(), all.end()).size() == n);
  }
}

TEST_CASE("select_k_shot") {
  const Dataset v = labeled({1, 1, 0, 1, 0, 0});
  const auto s = select_k_shot(v, 2);
  std::vector<std::string> meta, rest;
  for (const auto& e : s.meta.examples) meta.push_back(e.text);
  for (const auto& e : s.remaining.examples) rest.push_back(e.text);
  CHECK(meta == std::vector<std::string>{"ex0", "ex1", "ex2", "ex4"});
  CHECK(rest == std::vector<std::string>{"ex3", "ex5"});

  const auto zero = select_k_shot(v, 0);
  CHECK(zero.meta.empty());
  CHECK(zero.remaining.examples == v.examples);

  try {
    select_k_shot(labeled({1, 1, 1}), 1);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("class 0") != std::string::npos);
  }
}

TEST_CASE("select_k_shot partitions its input") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Dataset ds{"p", {}};
    const auto n = 10 + uniform_index(rng, 40);
    for (std::size_t i = 0; i < n; ++i) {
      ds.examples.push_back({"e" + std::to_string(i), static_cast<int>(uniform_index(rng, 2))});
    }
    const std::size_t k = uniform_index(rng, 4);
    KShotSelection s;
    try {
      s = select_k_shot(ds, k);
    } catch (const DataError&) {
      continue;
    }
    std::size_t per[2] = {0, 0};
    for (const auto& e : s.meta.examples) ++per[e.label];
    CHECK(per[0] == k);
    CHECK(per[1] == k);
    auto all = texts(s.meta);
    for (const auto& t : texts(s.remaining)) {
      CHECK(all.count(t) == 0);
      all.insert(t);
    }
    CHECK(all == texts(ds));
  }
}

TEST_CASE("sample_source_task") {
  model::ModelSpec spec{16, 2, 2, {1}};
  SUBCASE("whole set when batch equals size") {
    const auto train = featurize_all(labeled({0, 1, 0, 1}), spec);
    Rng rng(1);
    const auto task = sample_source_task(train, 4, rng);
    CHECK(task.size() == 4);
    std::set<std::uint32_t> seen;
    for (const auto& ex : task) seen.insert(ex.features.indices.at(0));
    CHECK(seen.size() == 4);
  }
  SUBCASE("same rng state gives the same task") {
    Dataset ds{"s", {}};
    for (int i = 0; i < 50; ++i) ds.examples.push_back({"w" + std::to_string(i), i % 2});
    const auto train = featurize_all(ds, spec);
    Rng a(5), b(5);
    const auto ta = sample_source_task(train, 4, a), tb = sample_source_task(train, 4, b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ta[i].features.indices == tb[i].features.indices);
  }
  SUBCASE("too small or empty") {
    Rng rng(0);
    CHECK_THROWS_AS(sample_source_task(featurize_all(labeled({0, 1}), spec), 4, rng), DataError);
    CHECK_THROWS_AS(sample_source_task(model::Batch{}, 1, rng), DataError);
  }
}

TEST_CASE("source task sampling is uniform") {
  // 10^4 single-example draws from 100 examples; chi-square oracle
  model::Batch train;
  for (std::uint32_t i = 0; i < 100; ++i) train.push_back({model::FeatureVector{100, {i}, {1.0}}, 0});
  std::vector<int> counts(100, 0);
  Rng rng(20240501);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) ++counts[sample_source_task(train, 1, rng)[0].features.indices[0]];
  const double expected = draws / 100.0;
  const double sigma = std::sqrt(draws * 0.01 * 0.99);
  double chi2 = 0.0;
  int outside_4sigma = 0;
  for (int c : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
    if (std::abs(c - expected) > 4 * sigma) ++outside_4sigma;
  }
  // 99 degrees of freedom: upper 0.1% critical value is about 148.2
  CHECK(chi2 < 148.2);
  CHECK(outside_4sigma == 0);

  // within one task no example repeats
  for (int d = 0; d < 200; ++d) {
    const auto task = sample_source_task(train, 10, rng);
    std::set<std::uint32_t> s;
    for (const auto& ex : task) s.insert(ex.features.indices[0]);
    CHECK(s.size() == 10);
  }
}

TEST_CASE("synth_shift_generate") {
  SynthConfig cfg;
  SUBCASE("deterministic") {
    const auto a = synth_shift_generate(cfg), b = synth_shift_generate(cfg);
    CHECK(a.source.examples == b.source.examples);
    CHECK(a.target.examples == b.target.examples);
    cfg.seed = 1;
    CHECK(synth_shift_generate(cfg).source.examples != a.source.examples);
  }
  SUBCASE("sizes, lengths, and label rates") {
    for (double p : {0.5, 0.7, 0.9}) {
      cfg.target_pos_rate = p;
      const auto c = synth_shift_generate(cfg);
      CHECK(c.source.size() == cfg.n_source);
      CHECK(c.target.size() == cfg.n_target);
      double pos = 0;
      for (const auto& e : c.target.examples) pos += e.label;
      CHECK(std::abs(pos / c.target.size() - p) <= 0.02);
      for (const auto& e : c.source.examples) {
        const auto words = std::count(e.text.begin(), e.text.end(), ' ') + 1;
        CHECK(words >= 5);
        CHECK(words <= 15);
        CHECK(preprocess(e.text) == e.text);
      }
    }
  }
  SUBCASE("overlap 1 shares class-indicative tokens, overlap 0 shares none") {
    cfg.overlap = 1.0;
    auto c = synth_shift_generate(cfg);
    for (int y = 0; y < 2; ++y) {
      CHECK(top_tokens(class_token_counts(c.source, y), 20) ==
            top_tokens(class_token_counts(c.target, y), 20));
    }
    cfg.overlap = 0.0;
    c = synth_shift_generate(cfg);
    for (int y = 0; y < 2; ++y) {
      const auto s = top_tokens(class_token_counts(c.source, y), 20);
      const auto t = top_tokens(class_token_counts(c.target, y), 20);
      std::vector<std::string> shared;
      std::set_intersection(s.begin(), s.end(), t.begin(), t.end(), std::back_inserter(shared));
      CHECK(shared.empty());
    }
  }
  SUBCASE("config validation") {
    cfg.overlap = 2.0;
    CHECK_THROWS_AS(synth_shift_generate(cfg), ConfigError);
    cfg.overlap = 0.5;
    cfg.target_pos_rate = -0.1;
    CHECK_THROWS_AS(synth_shift_generate(cfg), ConfigError);
  }
}

TEST_CASE("no shared indicative tokens means chance-level transfer") {
  model::ModelSpec spec{1024, 8, 2, {1, 2}};
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig sc;
    sc.overlap = 0.0;
    sc.seed = seed;
    const auto c = synth_shift_generate(sc);
    const auto src = split(c.source, SplitSpec{}, seed);
    const auto tgt = split(c.target, SplitSpec{}, seed);
    meta::MetaConfig mc;
    mc.seed = seed;
    const auto pre = meta::pretrain_source(featurize_all(src.train, spec), model::init_params(spec, seed, 3, 0.1), mc);
    CHECK(eval::evaluate(pre, featurize_all(src.test, spec)).ba > 0.8);
    total += eval::evaluate(pre, featurize_all(tgt.test, spec)).ba;
  }
  CHECK(std::abs(total / 5 - 0.5) <= 0.05);
}
