#include "metaadapt/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "metaadapt/errors.hpp"

namespace metaadapt::data {

namespace {

// Guards floor() against 0.9 * n landing just below an integer.
constexpr double kCutSlack = 1e-9;

// Synthetic generator shape: each class owns vocab_size / 25 indicative
// tokens per domain, and a token is drawn from the indicative set with this
// probability (background otherwise).
constexpr double kSignalRate = 0.25;
constexpr std::size_t kVocabPerIndicative = 25;
constexpr std::size_t kMinLength = 5;
constexpr std::size_t kMaxLength = 15;

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix) {
  return s.substr(pos, prefix.size()) == prefix;
}

void shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  }
}

}  // namespace

void SplitSpec::validate() const {
  if (!(train > 0 && valid > 0 && test > 0)) throw ConfigError("split ratios must be positive");
  if (std::abs(train + valid + test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
}

Dataset parse_jsonl(std::string_view content, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string()) {
      throw DataError("line " + std::to_string(line_no) + ": missing string field 'text'");
    }
    if (!obj.contains("label") || !obj["label"].is_number_integer()) {
      throw DataError("line " + std::to_string(line_no) + ": missing integer field 'label'");
    }
    const auto label = obj["label"].get<std::int64_t>();
    if (label != 0 && label != 1) {
      throw DataError("line " + std::to_string(line_no) + ": label " + std::to_string(label) +
                      " is not 0 or 1");
    }
    ds.examples.push_back(Example{obj["text"].get<std::string>(), static_cast<int>(label)});
  }
  return ds;
}

Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_jsonl(buf.str(), path.stem().string());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& ex : ds.examples) {
    nlohmann::json obj{{"text", ex.text}, {"label", ex.label}};
    out << obj.dump() << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::string preprocess(std::string_view text) {
  std::string lower(text);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  std::string spaced;
  spaced.reserve(lower.size());
  for (std::size_t i = 0; i < lower.size();) {
    if (starts_with_at(lower, i, "http://") || starts_with_at(lower, i, "https://") ||
        starts_with_at(lower, i, "www.")) {
      spaced += " url ";
      while (i < lower.size() && !std::isspace(static_cast<unsigned char>(lower[i]))) ++i;
      continue;
    }
    const char c = lower[i++];
    if (std::isspace(static_cast<unsigned char>(c))) {
      spaced.push_back(' ');
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      spaced.push_back(c);
    }
  }

  std::string out;
  out.reserve(spaced.size());
  for (char c : spaced) {
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(c);
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

Dataset preprocess_all(const Dataset& ds) {
  Dataset out{ds.name, {}};
  out.examples.reserve(ds.size());
  for (const auto& ex : ds.examples) out.examples.push_back(Example{preprocess(ex.text), ex.label});
  return out;
}

SplitResult split(const Dataset& ds, const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n = ds.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = derive_rng(seed, 0x5e11);
  shuffle(idx, rng);

  const auto nd = static_cast<double>(n);
  const auto cut1 = static_cast<std::size_t>(std::floor(spec.train * nd + kCutSlack));
  const auto cut2 = std::min(
      n, static_cast<std::size_t>(std::floor((spec.train + spec.valid) * nd + kCutSlack)));

  SplitResult r{{ds.name + "/train", {}}, {ds.name + "/valid", {}}, {ds.name + "/test", {}}};
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& part = i < cut1 ? r.train : (i < cut2 ? r.valid : r.test);
    part.examples.push_back(ds.examples[idx[i]]);
  }
  return r;
}

KShotSelection select_k_shot(const Dataset& valid, std::size_t k) {
  KShotSelection out{{valid.name + "/kshot", {}}, {valid.name, {}}};
  std::size_t taken[2] = {0, 0};
  for (const auto& ex : valid.examples) {
    auto& count = taken[ex.label == 1 ? 1 : 0];
    if (count < k) {
      out.meta.examples.push_back(ex);
      ++count;
    } else {
      out.remaining.examples.push_back(ex);
    }
  }
  for (int c = 0; c < 2; ++c) {
    if (taken[c] < k) {
      throw DataError("validation set has only " + std::to_string(taken[c]) +
                      " examples of class " + std::to_string(c) + ", need k=" +
                      std::to_string(k));
    }
  }
  return out;
}

model::Batch featurize_all(const Dataset& ds, const model::ModelSpec& spec) {
  model::Batch out;
  out.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    out.push_back(model::LabeledFeatures{model::featurize(ex.text, spec), ex.label});
  }
  return out;
}

model::Batch sample_source_task(const model::Batch& train, std::size_t batch_size, Rng& rng) {
  if (train.empty()) throw DataError("cannot sample a source task from an empty training set");
  if (train.size() < batch_size) {
    throw DataError("training set of " + std::to_string(train.size()) +
                    " is smaller than the task batch size " + std::to_string(batch_size));
  }
  std::vector<std::size_t> picked;
  picked.reserve(batch_size);
  while (picked.size() < batch_size) {
    const auto i = static_cast<std::size_t>(uniform_index(rng, train.size()));
    if (std::find(picked.begin(), picked.end(), i) == picked.end()) picked.push_back(i);
  }
  model::Batch task;
  task.reserve(batch_size);
  for (std::size_t i : picked) task.push_back(train[i]);
  return task;
}

void SynthConfig::validate() const {
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("overlap must be in [0, 1]");
  if (!(target_pos_rate >= 0.0 && target_pos_rate <= 1.0)) {
    throw ConfigError("target_pos_rate must be in [0, 1]");
  }
  if (vocab_size < 10) throw ConfigError("vocab_size must be >= 10");
}

SynthCorpora synth_shift_generate(const SynthConfig& cfg) {
  cfg.validate();

  std::vector<std::size_t> vocab(cfg.vocab_size);
  for (std::size_t i = 0; i < vocab.size(); ++i) vocab[i] = i;
  Rng assign = derive_rng(cfg.seed, 0);
  shuffle(vocab, assign);

  const std::size_t per_class = std::max<std::size_t>(1, cfg.vocab_size / kVocabPerIndicative);
  const auto shared = static_cast<std::size_t>(std::lround(cfg.overlap * static_cast<double>(per_class)));
  const std::size_t exclusive = per_class - shared;

  // indicative[domain][class]
  std::vector<std::size_t> indicative[2][2];
  std::size_t next = 0;
  auto take = [&](std::size_t count) {
    std::vector<std::size_t> out(vocab.begin() + static_cast<std::ptrdiff_t>(next),
                                 vocab.begin() + static_cast<std::ptrdiff_t>(next + count));
    next += count;
    return out;
  };
  for (int c = 0; c < 2; ++c) {
    const auto common = take(shared);
    for (int d = 0; d < 2; ++d) {
      indicative[d][c] = common;
      const auto own = take(exclusive);
      indicative[d][c].insert(indicative[d][c].end(), own.begin(), own.end());
    }
  }
  const std::vector<std::size_t> background(vocab.begin() + static_cast<std::ptrdiff_t>(next),
                                            vocab.end());

  auto make_text = [&](int domain, int label, Rng& rng) {
    const auto length = kMinLength + uniform_index(rng, kMaxLength - kMinLength + 1);
    const auto& signal = indicative[domain][label];
    std::string text;
    for (std::size_t t = 0; t < length; ++t) {
      const bool use_signal = uniform01(rng) < kSignalRate;
      const auto& pool = use_signal ? signal : background;
      if (!text.empty()) text.push_back(' ');
      text += "w" + std::to_string(pool[uniform_index(rng, pool.size())]);
    }
    return text;
  };

  auto make_domain = [&](int domain, std::size_t n, std::size_t positives, std::string name) {
    Rng rng = derive_rng(cfg.seed, static_cast<std::uint64_t>(domain) + 1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
    Dataset ds{std::move(name), {}};
    ds.examples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = order[i] < positives ? 1 : 0;
      ds.examples.push_back(Example{make_text(domain, label, rng), label});
    }
    return ds;
  };

  SynthCorpora out;
  out.source = make_domain(0, cfg.n_source, cfg.n_source / 2, "synth-source");
  const auto target_pos = static_cast<std::size_t>(
      std::llround(cfg.target_pos_rate * static_cast<double>(cfg.n_target)));
  out.target = make_domain(1, cfg.n_target, target_pos, "synth-target");
  return out;
}

}  // namespace metaadapt::data
