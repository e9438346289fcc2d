#include "deer/encoder.hpp"

#include <cmath>

#include "deer/errors.hpp"
#include "deer/rng.hpp"

namespace deer {

void EncoderConfig::validate() const {
  if (dim < 8) throw ConfigError("encoder dim must be at least 8");
  for (std::size_t n : word_ngrams) {
    if (n == 0) throw ConfigError("word n-gram order must be >= 1");
  }
  for (std::size_t n : char_ngrams) {
    if (n == 0) throw ConfigError("char n-gram order must be >= 1");
  }
}

void to_json(nlohmann::json& j, const EncoderConfig& cfg) {
  j = nlohmann::json{{"dim", cfg.dim},
                     {"word_ngrams", cfg.word_ngrams},
                     {"char_ngrams", cfg.char_ngrams},
                     {"lowercase", cfg.lowercase},
                     {"hash", "fnv1a64"},
                     {"backend", cfg.backend == EncoderBackend::adapter ? "adapter" : "hashed-ngram"}};
}

void from_json(const nlohmann::json& j, EncoderConfig& cfg) {
  EncoderConfig d;
  cfg.dim = j.value("dim", d.dim);
  cfg.word_ngrams = j.value("word_ngrams", d.word_ngrams);
  cfg.char_ngrams = j.value("char_ngrams", d.char_ngrams);
  cfg.lowercase = j.value("lowercase", d.lowercase);
  const std::string backend = j.value("backend", std::string("hashed-ngram"));
  if (backend == "hashed-ngram") {
    cfg.backend = EncoderBackend::hashed_ngram;
  } else if (backend == "adapter") {
    cfg.backend = EncoderBackend::adapter;
  } else {
    throw ConfigError("unknown encoder backend '" + backend + "'");
  }
  cfg.validate();
}

namespace {

// Decodes one UTF-8 sequence starting at pos; malformed bytes decode as themselves.
char32_t decode_at(std::string_view s, std::size_t pos, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t k) -> int {
    if (pos + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0) {
    int c1 = cont(1);
    if (c1 >= 0) {
      len = 2;
      return static_cast<char32_t>(((b0 & 0x1F) << 6) | c1);
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      len = 3;
      return static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2);
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      len = 4;
      return static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3);
    }
  }
  len = 1;
  return b0;
}

bool is_unicode_space(char32_t c) {
  if ((c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680) return true;
  if (c >= 0x2000 && c <= 0x200A) return true;
  return c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

// Byte offsets of each code point, plus a final end offset.
std::vector<std::size_t> codepoint_offsets(std::string_view s) {
  std::vector<std::size_t> offsets;
  std::size_t pos = 0;
  while (pos < s.size()) {
    offsets.push_back(pos);
    std::size_t len = 1;
    decode_at(s, pos, len);
    pos += len;
  }
  offsets.push_back(s.size());
  return offsets;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, bool lowercase) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = 1;
    const char32_t c = decode_at(text, pos, len);
    if (is_unicode_space(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      for (std::size_t k = 0; k < len; ++k) {
        char b = text[pos + k];
        if (lowercase && b >= 'A' && b <= 'Z') b = static_cast<char>(b - 'A' + 'a');
        current.push_back(b);
      }
    }
    pos += len;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

HashedFeature hash_feature(std::string_view ngram, std::size_t dim) noexcept {
  const std::uint64_t h = fnv1a64(ngram);
  return {static_cast<std::size_t>(h % dim), (h >> 63) == 0 ? 1.0 : -1.0};
}

std::vector<std::string> extract_ngrams(const EncoderConfig& cfg, std::string_view text) {
  const std::vector<std::string> tokens = tokenize(text, cfg.lowercase);
  std::vector<std::string> grams;
  for (std::size_t n : cfg.word_ngrams) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (std::size_t k = 1; k < n; ++k) {
        g.push_back(' ');
        g += tokens[i + k];
      }
      grams.push_back(std::move(g));
    }
  }
  if (!cfg.char_ngrams.empty() && !tokens.empty()) {
    std::string joined = tokens.front();
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      joined.push_back(' ');
      joined += tokens[i];
    }
    const std::vector<std::size_t> offsets = codepoint_offsets(joined);
    const std::size_t chars = offsets.size() - 1;
    for (std::size_t n : cfg.char_ngrams) {
      for (std::size_t i = 0; i + n <= chars; ++i) {
        grams.push_back(joined.substr(offsets[i], offsets[i + n] - offsets[i]));
      }
    }
  }
  return grams;
}

Vector encode(const EncoderConfig& cfg, std::string_view text) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(cfg.dim));
  for (const std::string& g : extract_ngrams(cfg, text)) {
    const HashedFeature f = hash_feature(g, cfg.dim);
    v[static_cast<Eigen::Index>(f.index)] += f.sign;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

Vector state_of(const EncoderConfig& cfg, std::string_view text) { return encode(cfg, text); }

Matrix encode_batch(const EncoderConfig& cfg, const std::vector<std::string>& texts) {
  Matrix out(static_cast<Eigen::Index>(cfg.dim), static_cast<Eigen::Index>(texts.size()));
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = encode(cfg, texts[i]);
  }
  return out;
}

}  // namespace deer
