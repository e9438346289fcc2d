#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deer/params.hpp"

namespace deer {

enum class EncoderBackend {
  hashed_ngram,  // frozen hashed featurizer only
  adapter,       // hashed featurizer followed by a trainable D x D linear map
};

struct EncoderConfig {
  std::size_t dim = 768;
  std::vector<std::size_t> word_ngrams{1, 2};
  std::vector<std::size_t> char_ngrams{3};
  bool lowercase = true;
  EncoderBackend backend = EncoderBackend::hashed_ngram;

  // Throws ConfigError when dim < 8 or an n-gram order is zero.
  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& cfg);
void from_json(const nlohmann::json& j, EncoderConfig& cfg);

// Splits on Unicode whitespace (UTF-8 input); ASCII letters are lowercased when asked.
std::vector<std::string> tokenize(std::string_view text, bool lowercase = true);

// Bucket and sign of one hashed feature.
struct HashedFeature {
  std::size_t index;
  double sign;
};
HashedFeature hash_feature(std::string_view ngram, std::size_t dim) noexcept;

// All word and character n-grams of a text, in generation order.
std::vector<std::string> extract_ngrams(const EncoderConfig& cfg, std::string_view text);

// Signed hashed n-gram counts, L2-normalized. Empty text maps to the zero vector.
Vector encode(const EncoderConfig& cfg, std::string_view text);

// Routing state of a text. With the hashed backend this is encode(); models
// with an adapter expose their own state through DmoeModel::state.
Vector state_of(const EncoderConfig& cfg, std::string_view text);

// One column per text.
Matrix encode_batch(const EncoderConfig& cfg, const std::vector<std::string>& texts);

}  // namespace deer
