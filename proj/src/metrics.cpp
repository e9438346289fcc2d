#include "deer/metrics.hpp"

#include "deer/errors.hpp"

namespace deer {

namespace {

double ratio(std::size_t num, std::size_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_from(std::size_t tp, std::size_t fp, std::size_t fn) noexcept {
  const double p = ratio(tp, tp + fp);
  const double r = ratio(tp, tp + fn);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

}  // namespace

double Metrics::accuracy() const noexcept { return ratio(tp + tn, n()); }
double Metrics::precision() const noexcept { return ratio(tp, tp + fp); }
double Metrics::recall() const noexcept { return ratio(tp, tp + fn); }
double Metrics::f1() const noexcept { return f1_from(tp, fp, fn); }
double Metrics::macro_f1() const noexcept { return 0.5 * (f1_from(tp, fp, fn) + f1_from(tn, fn, fp)); }

Metrics& Metrics::operator+=(const Metrics& other) noexcept {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  return *this;
}

void Metrics::add(int pred, int label) noexcept {
  if (pred == 1) {
    label == 1 ? ++tp : ++fp;
  } else {
    label == 1 ? ++fn : ++tn;
  }
}

Metrics metrics(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw DataError("metrics: " + std::to_string(preds.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw DataError("metrics: empty input");
  Metrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) m.add(preds[i], labels[i]);
  return m;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"acc", m.accuracy()}, {"f1", m.f1()},   {"macro_f1", m.macro_f1()},
          {"precision", m.precision()}, {"recall", m.recall()}, {"n", m.n()},
          {"tp", m.tp},        {"fp", m.fp},   {"fn", m.fn}, {"tn", m.tn}};
}

}  // namespace deer
