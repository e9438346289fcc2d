#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "deer/data.hpp"
#include "deer/dmoe.hpp"
#include "deer/encoder.hpp"
#include "deer/policy.hpp"
#include "deer/rng.hpp"

namespace deer::test {

// n=2, m1=m2=1, D=8, every parameter drawn from seed 7.
inline DmoeModel tiny_model(std::uint64_t seed = 7, std::size_t m1 = 1, std::size_t m2 = 1) {
  EncoderConfig enc;
  enc.dim = 8;
  DmoeConfig cfg;
  cfg.m1 = m1;
  cfg.m2 = m2;
  cfg.expert_hidden = 4;
  cfg.head_hidden = 4;
  cfg.seed = seed;
  return DmoeModel(enc, cfg, {"d0", "d1"});
}

inline Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-scale, scale);
  }
  return m;
}

// A small corpus that trains in well under a second.
inline SyntheticConfig small_corpus_config(std::uint64_t seed = 0) {
  SyntheticConfig c;
  c.n_source = 2;
  c.n_ood = 1;
  c.per_domain = 200;
  c.vocab_per_domain = 120;
  c.shared_machine_vocab = 30;
  c.quirk_vocab = 15;
  c.min_len = 20;
  c.max_len = 40;
  c.seed = seed;
  return c;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / ("deer_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace deer::test
