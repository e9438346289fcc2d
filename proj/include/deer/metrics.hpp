#pragma once

#include <cstddef>
#include <span>

#include <nlohmann/json.hpp>

namespace deer {

// Binary detection metrics with machine (label 1) as the positive class.
struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t n() const noexcept { return tp + fp + fn + tn; }
  double accuracy() const noexcept;
  double precision() const noexcept;
  double recall() const noexcept;
  // 2PR/(P+R), 0 when P+R == 0.
  double f1() const noexcept;
  // Mean of the per-class F1 scores (human and machine).
  double macro_f1() const noexcept;

  Metrics& operator+=(const Metrics& other) noexcept;
  void add(int pred, int label) noexcept;
};

// Throws DataError on length mismatch or empty input.
Metrics metrics(std::span<const int> preds, std::span<const int> labels);

nlohmann::json to_json(const Metrics& m);

}  // namespace deer
