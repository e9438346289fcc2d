#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace deer {

inline constexpr int kHuman = 0;
inline constexpr int kMachine = 1;

struct Sample {
  std::string text;
  int label = kHuman;
  std::optional<std::string> domain;
  nlohmann::json extra = nlohmann::json::object();  // unknown keys seen on read

  friend bool operator==(const Sample& a, const Sample& b) {
    return a.text == b.text && a.label == b.label && a.domain == b.domain;
  }
};

// One JSON object per line with keys text, label and optional domain.
// Errors name the 1-based line number.
std::vector<Sample> load_jsonl(const std::filesystem::path& path);
std::vector<Sample> parse_jsonl(std::string_view content);
void save_jsonl(const std::filesystem::path& path, std::span<const Sample> samples);

struct SyntheticConfig {
  std::size_t n_source = 3;
  std::size_t n_ood = 2;
  std::size_t per_domain = 2000;
  std::size_t vocab_per_domain = 400;
  std::size_t shared_machine_vocab = 60;
  double shared_signal = 0.35;  // per-token probability of a shared machine word
  double domain_signal = 0.25;  // per-token probability of a domain quirk word
  double repeat_bias = 0.15;    // probability a machine token repeats its predecessor
  std::size_t min_len = 30;
  std::size_t max_len = 120;
  std::size_t quirk_vocab = 40;  // size of each domain's machine-quirk subset
  double zipf_exponent = 1.0;
  std::uint64_t seed = 0;

  // Throws ArgumentError when an invariant is violated.
  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticConfig& cfg);
void from_json(const nlohmann::json& j, SyntheticConfig& cfg);

struct DomainData {
  std::string name;
  bool source = true;
  std::vector<std::string> vocab;
  std::vector<std::string> quirk_vocab;  // subset of vocab
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

struct SyntheticCorpus {
  SyntheticConfig cfg;
  std::vector<std::string> shared_vocab;
  std::vector<DomainData> domains;  // source domains first, then OOD

  std::vector<const DomainData*> sources() const;
  std::vector<const DomainData*> ood() const;
  const DomainData& domain(std::string_view name) const;
};

// Fully determined by cfg (including cfg.seed).
SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg);

// Writes <dir>/<domain>/{train,val,test}.jsonl and <dir>/manifest.json.
void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

// Corpus directory as written by write_corpus (or any directory laid out the same way).
struct CorpusDir {
  std::filesystem::path root;
  nlohmann::json manifest;
  std::vector<std::string> source;
  std::vector<std::string> ood;

  static CorpusDir open(const std::filesystem::path& root);
  bool has(std::string_view domain, std::string_view split) const;
  std::vector<Sample> load(std::string_view domain, std::string_view split) const;
  // Concatenation of one split over the given domains, in order.
  std::vector<Sample> load_all(std::span<const std::string> domains, std::string_view split) const;
};

enum class PerturbKind { repeat, remove, replace };

PerturbKind parse_perturb_kind(std::string_view name);
std::string_view to_string(PerturbKind kind) noexcept;

// Independently per token with probability rate: repeat duplicates it in place,
// remove drops it, replace substitutes a uniform draw from vocab.
std::string perturb(std::string_view text, PerturbKind kind, double rate, std::uint64_t seed,
                    std::span<const std::string> vocab = {});

// Sorted distinct whitespace tokens of the given samples.
std::vector<std::string> collect_vocabulary(std::span<const Sample> samples);

std::size_t token_count(std::string_view text);

}  // namespace deer
