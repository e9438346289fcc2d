#include "deer/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "deer/checkpoint.hpp"
#include "deer/encoder.hpp"
#include "deer/errors.hpp"
#include "deer/rng.hpp"

namespace deer {

namespace {

Sample sample_from_json(const nlohmann::json& j, std::size_t line) {
  const std::string where = "line " + std::to_string(line) + ": ";
  if (!j.is_object()) throw DataError(where + "expected a JSON object");
  if (!j.contains("text") || !j["text"].is_string()) throw DataError(where + "missing string 'text'");
  if (!j.contains("label") || !j["label"].is_number_integer()) {
    throw DataError(where + "missing integer 'label'");
  }
  Sample s;
  s.text = j["text"].get<std::string>();
  const auto label = j["label"].get<long long>();
  if (label != kHuman && label != kMachine) {
    throw DataError(where + "label must be 0 or 1, got " + std::to_string(label));
  }
  s.label = static_cast<int>(label);
  if (j.contains("domain") && !j["domain"].is_null()) {
    if (!j["domain"].is_string()) throw DataError(where + "'domain' must be a string");
    s.domain = j["domain"].get<std::string>();
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "text" && key != "label" && key != "domain") s.extra[key] = value;
  }
  return s;
}

}  // namespace

std::vector<Sample> parse_jsonl(std::string_view content) {
  std::vector<Sample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    const std::size_t end = std::min(content.find('\n', pos), content.size());
    std::string_view line = content.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == content.size()) break;
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    out.push_back(sample_from_json(j, line_no));
    if (end == content.size()) break;
  }
  return out;
}

std::vector<Sample> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_jsonl(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_jsonl(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const Sample& s : samples) {
    nlohmann::json j{{"text", s.text}, {"label", s.label}};
    if (s.domain) j["domain"] = *s.domain;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

void SyntheticConfig::validate() const {
  if (n_source == 0 || per_domain == 0 || vocab_per_domain == 0 || shared_machine_vocab == 0) {
    throw ArgumentError("synthetic config counts must be positive");
  }
  if (shared_signal < 0.0 || shared_signal > 1.0 || domain_signal < 0.0 || domain_signal > 1.0) {
    throw ArgumentError("signal strengths must lie in [0, 1]");
  }
  if (shared_signal + domain_signal > 1.0) {
    throw ArgumentError("shared_signal + domain_signal must not exceed 1");
  }
  if (repeat_bias < 0.0 || repeat_bias > 1.0) throw ArgumentError("repeat_bias must lie in [0, 1]");
  if (min_len == 0 || min_len > max_len) throw ArgumentError("invalid length range");
  if (quirk_vocab == 0 || quirk_vocab > vocab_per_domain) {
    throw ArgumentError("quirk_vocab must lie in [1, vocab_per_domain]");
  }
  if (zipf_exponent < 0.0) throw ArgumentError("zipf_exponent must be non-negative");
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"n_source", c.n_source},
                     {"n_ood", c.n_ood},
                     {"per_domain", c.per_domain},
                     {"vocab_per_domain", c.vocab_per_domain},
                     {"shared_machine_vocab", c.shared_machine_vocab},
                     {"shared_signal", c.shared_signal},
                     {"domain_signal", c.domain_signal},
                     {"repeat_bias", c.repeat_bias},
                     {"min_len", c.min_len},
                     {"max_len", c.max_len},
                     {"quirk_vocab", c.quirk_vocab},
                     {"zipf_exponent", c.zipf_exponent},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  const SyntheticConfig d;
  c.n_source = j.value("n_source", d.n_source);
  c.n_ood = j.value("n_ood", d.n_ood);
  c.per_domain = j.value("per_domain", d.per_domain);
  c.vocab_per_domain = j.value("vocab_per_domain", d.vocab_per_domain);
  c.shared_machine_vocab = j.value("shared_machine_vocab", d.shared_machine_vocab);
  c.shared_signal = j.value("shared_signal", d.shared_signal);
  c.domain_signal = j.value("domain_signal", d.domain_signal);
  c.repeat_bias = j.value("repeat_bias", d.repeat_bias);
  c.min_len = j.value("min_len", d.min_len);
  c.max_len = j.value("max_len", d.max_len);
  c.quirk_vocab = j.value("quirk_vocab", d.quirk_vocab);
  c.zipf_exponent = j.value("zipf_exponent", d.zipf_exponent);
  c.seed = j.value("seed", d.seed);
}

std::vector<const DomainData*> SyntheticCorpus::sources() const {
  std::vector<const DomainData*> out;
  for (const auto& d : domains) {
    if (d.source) out.push_back(&d);
  }
  return out;
}

std::vector<const DomainData*> SyntheticCorpus::ood() const {
  std::vector<const DomainData*> out;
  for (const auto& d : domains) {
    if (!d.source) out.push_back(&d);
  }
  return out;
}

const DomainData& SyntheticCorpus::domain(std::string_view name) const {
  for (const auto& d : domains) {
    if (d.name == name) return d;
  }
  throw DomainError("no domain named '" + std::string(name) + "'");
}

namespace {

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      acc += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cdf_[r] = acc;
    }
    for (double& c : cdf_) c /= acc;
  }
  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

// Words are built from one shared syllable inventory, so every domain shares
// orthography (character n-grams) while word types stay disjoint.
std::vector<std::string> fresh_words(std::size_t count, Rng& rng,
                                     std::unordered_set<std::string>& used) {
  static constexpr std::string_view kOnsets = "bcdfghjklmnprstvwz";
  static constexpr std::string_view kVowels = "aeiou";
  std::vector<std::string> words;
  words.reserve(count);
  while (words.size() < count) {
    const std::size_t syllables = 2 + rng.below(2);
    std::string w;
    for (std::size_t i = 0; i < syllables; ++i) {
      w.push_back(kOnsets[rng.below(kOnsets.size())]);
      w.push_back(kVowels[rng.below(kVowels.size())]);
    }
    if (used.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

struct TextGenerator {
  const SyntheticConfig& cfg;
  const std::vector<std::string>& shared;
  const ZipfSampler& shared_zipf;
  const DomainData& domain;
  const ZipfSampler& domain_zipf;

  std::string human(Rng& rng) const {
    std::vector<std::string> tokens(length(rng));
    for (auto& t : tokens) t = domain.vocab[domain_zipf(rng)];
    return join(tokens);
  }

  std::string machine(Rng& rng) const {
    std::vector<std::string> tokens(length(rng));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i > 0 && rng.bernoulli(cfg.repeat_bias)) {
        tokens[i] = tokens[i - 1];
        continue;
      }
      const double u = rng.uniform();
      if (u < cfg.shared_signal) {
        tokens[i] = shared[shared_zipf(rng)];
      } else if (u < cfg.shared_signal + cfg.domain_signal) {
        tokens[i] = domain.quirk_vocab[rng.below(domain.quirk_vocab.size())];
      } else {
        tokens[i] = domain.vocab[domain_zipf(rng)];
      }
    }
    return join(tokens);
  }

  std::size_t length(Rng& rng) const { return cfg.min_len + rng.below(cfg.max_len - cfg.min_len + 1); }
};

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticCorpus corpus;
  corpus.cfg = cfg;

  Rng vocab_rng(cfg.seed, "synthetic.vocab");
  std::unordered_set<std::string> used;
  corpus.shared_vocab = fresh_words(cfg.shared_machine_vocab, vocab_rng, used);

  for (std::size_t k = 0; k < cfg.n_source + cfg.n_ood; ++k) {
    DomainData d;
    d.source = k < cfg.n_source;
    d.name = d.source ? "src-" + std::to_string(k) : "ood-" + std::to_string(k - cfg.n_source);
    d.vocab = fresh_words(cfg.vocab_per_domain, vocab_rng, used);
    std::vector<std::size_t> ranks(d.vocab.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) ranks[i] = i;
    vocab_rng.shuffle(ranks.begin(), ranks.end());
    for (std::size_t i = 0; i < cfg.quirk_vocab; ++i) d.quirk_vocab.push_back(d.vocab[ranks[i]]);
    corpus.domains.push_back(std::move(d));
  }

  const ZipfSampler shared_zipf(cfg.shared_machine_vocab, cfg.zipf_exponent);
  const ZipfSampler domain_zipf(cfg.vocab_per_domain, cfg.zipf_exponent);
  for (DomainData& d : corpus.domains) {
    Rng rng(cfg.seed, "synthetic.text." + d.name);
    const TextGenerator gen{cfg, corpus.shared_vocab, shared_zipf, d, domain_zipf};
    std::vector<Sample> all;
    all.reserve(cfg.per_domain);
    for (std::size_t i = 0; i < cfg.per_domain; ++i) {
      Sample s;
      s.label = i % 2 == 0 ? kHuman : kMachine;
      s.text = s.label == kHuman ? gen.human(rng) : gen.machine(rng);
      s.domain = d.name;
      all.push_back(std::move(s));
    }
    rng.shuffle(all.begin(), all.end());
    const std::size_t n_train = cfg.per_domain * 8 / 10;
    const std::size_t n_val = cfg.per_domain / 10;
    d.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.val.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                 all.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    d.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), all.end());
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "deer-corpus";
  manifest["version"] = 1;
  manifest["config"] = corpus.cfg;
  manifest["seed"] = corpus.cfg.seed;
  manifest["source_domains"] = nlohmann::json::array();
  manifest["ood_domains"] = nlohmann::json::array();
  for (const DomainData& d : corpus.domains) {
    manifest[d.source ? "source_domains" : "ood_domains"].push_back(d.name);
    const auto sub = dir / d.name;
    std::filesystem::create_directories(sub);
    save_jsonl(sub / "train.jsonl", d.train);
    save_jsonl(sub / "val.jsonl", d.val);
    save_jsonl(sub / "test.jsonl", d.test);
  }
  write_json(dir / "manifest.json", manifest);
}

CorpusDir CorpusDir::open(const std::filesystem::path& root) {
  const auto manifest_path = root / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw DataError("no manifest.json in " + root.string());
  }
  CorpusDir c;
  c.root = root;
  c.manifest = read_json(manifest_path);
  try {
    c.source = c.manifest.at("source_domains").get<std::vector<std::string>>();
    c.ood = c.manifest.value("ood_domains", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in " + root.string() + ": " + e.what());
  }
  return c;
}

bool CorpusDir::has(std::string_view domain, std::string_view split) const {
  return std::filesystem::exists(root / std::string(domain) / (std::string(split) + ".jsonl"));
}

std::vector<Sample> CorpusDir::load(std::string_view domain, std::string_view split) const {
  return load_jsonl(root / std::string(domain) / (std::string(split) + ".jsonl"));
}

std::vector<Sample> CorpusDir::load_all(std::span<const std::string> domains,
                                        std::string_view split) const {
  std::vector<Sample> out;
  for (const auto& d : domains) {
    auto part = load(d, split);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

PerturbKind parse_perturb_kind(std::string_view name) {
  if (name == "repeat") return PerturbKind::repeat;
  if (name == "delete") return PerturbKind::remove;
  if (name == "replace") return PerturbKind::replace;
  throw ArgumentError("unknown perturbation kind '" + std::string(name) + "'");
}

std::string_view to_string(PerturbKind kind) noexcept {
  switch (kind) {
    case PerturbKind::repeat: return "repeat";
    case PerturbKind::remove: return "delete";
    case PerturbKind::replace: return "replace";
  }
  return "unknown";
}

std::string perturb(std::string_view text, PerturbKind kind, double rate, std::uint64_t seed,
                    std::span<const std::string> vocab) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ArgumentError("perturbation rate must lie in [0, 1]");
  if (kind == PerturbKind::replace && vocab.empty() && rate > 0.0) {
    throw ArgumentError("replace perturbation needs a non-empty vocabulary");
  }
  Rng rng(seed, "perturb");
  const std::vector<std::string> tokens = tokenize(text, false);
  std::vector<std::string> out;
  out.reserve(tokens.size() * 2);
  for (const std::string& t : tokens) {
    if (!rng.bernoulli(rate)) {
      out.push_back(t);
      continue;
    }
    switch (kind) {
      case PerturbKind::repeat:
        out.push_back(t);
        out.push_back(t);
        break;
      case PerturbKind::remove:
        break;
      case PerturbKind::replace:
        out.push_back(vocab[rng.below(vocab.size())]);
        break;
    }
  }
  return join(out);
}

std::vector<std::string> collect_vocabulary(std::span<const Sample> samples) {
  std::set<std::string> words;
  for (const Sample& s : samples) {
    for (auto& t : tokenize(s.text, false)) words.insert(std::move(t));
  }
  return {words.begin(), words.end()};
}

std::size_t token_count(std::string_view text) { return tokenize(text, false).size(); }

}  // namespace deer
