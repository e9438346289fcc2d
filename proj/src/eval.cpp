#include "deer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include "deer/encoder.hpp"
#include "deer/errors.hpp"
#include "deer/inference.hpp"
#include "deer/optim.hpp"
#include "deer/rng.hpp"

namespace deer {

RoutingStrategy parse_strategy(std::string_view name) {
  if (name == "rl") return RoutingStrategy::rl;
  if (name == "oracle") return RoutingStrategy::oracle;
  if (name == "random") return RoutingStrategy::random;
  if (name == "classifier") return RoutingStrategy::classifier;
  throw ConfigError("unknown routing strategy '" + std::string(name) + "'");
}

std::string_view to_string(RoutingStrategy s) noexcept {
  switch (s) {
    case RoutingStrategy::rl: return "rl";
    case RoutingStrategy::oracle: return "oracle";
    case RoutingStrategy::random: return "random";
    case RoutingStrategy::classifier: return "classifier";
  }
  return "rl";
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"hidden", c.hidden}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
       {"lr", c.lr},         {"weight_decay", c.weight_decay}, {"seed", c.seed}};
}

DomainClassifier::DomainClassifier(EncoderConfig encoder, std::vector<std::string> domains, std::size_t hidden,
                                   std::uint64_t seed)
    : encoder_(std::move(encoder)), domains_(std::move(domains)) {
  if (domains_.size() < 2) throw DataError("domain classifier needs at least two domains");
  net_ = TwoLayerNet::create(params_, "classifier", encoder_.dim, hidden, domains_.size(), Activation::relu, seed);
}

Vector DomainClassifier::probs(std::string_view text) const {
  return softmax(net_.forward(params_, encode(encoder_, text)));
}

Matrix DomainClassifier::probs(const Matrix& hashed) const {
  return softmax_columns(net_.forward(params_, hashed));
}

std::size_t DomainClassifier::predict(std::string_view text) const { return argmax(probs(text)); }

namespace {

std::vector<std::size_t> domain_targets(const std::vector<std::string>& domains, std::span<const Sample> samples) {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    if (!s.domain) throw DataError("domain classifier training requires domain tags");
    auto it = std::find(domains.begin(), domains.end(), *s.domain);
    if (it == domains.end()) throw DataError("sample tagged with unlisted domain '" + *s.domain + "'");
    out.push_back(static_cast<std::size_t>(it - domains.begin()));
  }
  return out;
}

std::vector<std::string> texts_of(std::span<const Sample> samples) {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(s.text);
  return out;
}

double domain_accuracy(const DomainClassifier& clf, const Matrix& x, const std::vector<std::size_t>& y) {
  if (y.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Matrix p = clf.probs(x);
  std::size_t hits = 0;
  for (Eigen::Index c = 0; c < p.cols(); ++c) hits += argmax(p.col(c)) == y[static_cast<std::size_t>(c)];
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

}  // namespace

DomainClassifier train_domain_classifier(const EncoderConfig& encoder, const std::vector<std::string>& domains,
                                         std::span<const Sample> train, std::span<const Sample> val,
                                         const ClassifierConfig& cfg) {
  DomainClassifier clf(encoder, domains, cfg.hidden, derive_seed(cfg.seed, "classifier.init"));
  if (train.empty()) throw DataError("empty domain classifier training set");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  const std::vector<std::size_t> y = domain_targets(domains, train);
  const std::vector<std::size_t> y_val = domain_targets(domains, val);
  const Matrix x = encode_batch(encoder, texts_of(train));
  const Matrix x_val = encode_batch(encoder, texts_of(val));

  AdamWState state(clf.params(), AdamWHyper{.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  Gradients grads(clf.params());
  const TwoLayerNet& net = clf.net();
  std::vector<std::size_t> order(y.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed, "classifier.epoch." + std::to_string(epoch));
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Eigen::Index> cols(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      const Matrix xb = x(Eigen::all, cols);
      TwoLayerNet::Cache cache;
      Matrix grad = softmax_columns(net.forward(clf.params(), xb, &cache));
      const double scale = 1.0 / static_cast<double>(cols.size());
      for (Eigen::Index c = 0; c < grad.cols(); ++c) {
        grad(static_cast<Eigen::Index>(y[static_cast<std::size_t>(cols[static_cast<std::size_t>(c)])]), c) -= 1.0;
      }
      grad *= scale;
      grads.clear();
      net.backward(clf.params(), xb, cache, grad, grads, nullptr);
      adamw_step(clf.params(), grads, state);
    }
  }
  clf.params().set_all_frozen(true);
  clf.train_accuracy = domain_accuracy(clf, x, y);
  clf.val_accuracy = domain_accuracy(clf, x_val, y_val);
  return clf;
}

std::string length_bucket(std::size_t tokens) {
  if (tokens <= 100) return "<=100";
  if (tokens <= 200) return "101-200";
  if (tokens <= 300) return "201-300";
  return ">300";
}

namespace {

// Two-class logits of every sample under the requested routing, as 2 x N.
Matrix routed_predictions(const DmoeModel& model, const PolicyRouter* router, const DomainClassifier* classifier,
                          std::span<const Sample> samples, const Matrix& hashed, const EvalOptions& opts) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (model.config().base) {
    const std::vector<std::size_t> zeros(samples.size(), 0);
    return model.routed_logits(hashed, zeros);
  }
  switch (opts.strategy) {
    case RoutingStrategy::rl: {
      if (router == nullptr) throw ConfigError("rl routing requires a policy");
      check_compatible(model, *router);
      if (opts.m < 1) throw ArgumentError("top-m selection requires m >= 1");
      const Matrix pi = router->policy.probs(router->normalizer.normalize(model.adapt(hashed)));
      const std::vector<Matrix> all = model.all_pathway_logits(hashed);
      Matrix out(2, n);
      std::vector<Vector> logits(model.n_domains());
      for (Eigen::Index c = 0; c < n; ++c) {
        const auto choices = top_m(pi.col(c), opts.m);
        for (const auto& ch : choices) logits[ch.index] = all[ch.index].col(c);
        // Probabilities are re-expressed as logits so that argmax is unchanged.
        out.col(c) = fuse_pathway_logits(choices, logits, opts.renormalize).array().log().matrix();
      }
      return out;
    }
    case RoutingStrategy::oracle: {
      std::vector<Eigen::Index> known_cols;
      std::vector<std::size_t> known_domains;
      std::vector<Eigen::Index> unknown_cols;
      for (Eigen::Index c = 0; c < n; ++c) {
        const Sample& s = samples[static_cast<std::size_t>(c)];
        if (!s.domain) throw DataError("oracle routing requires domain tags (sample " + std::to_string(c) + ")");
        if (auto k = model.domain_index(*s.domain)) {
          known_cols.push_back(c);
          known_domains.push_back(*k);
        } else {
          unknown_cols.push_back(c);
        }
      }
      Matrix out(2, n);
      if (!known_cols.empty()) {
        out(Eigen::all, known_cols) = model.routed_logits(hashed(Eigen::all, known_cols), known_domains);
      }
      if (!unknown_cols.empty()) {
        out(Eigen::all, unknown_cols) = model.shared_only_logits_batch(hashed(Eigen::all, unknown_cols));
      }
      return out;
    }
    case RoutingStrategy::random: {
      Rng rng(opts.seed, "eval.random");
      std::vector<std::size_t> domains(samples.size());
      for (auto& d : domains) d = static_cast<std::size_t>(rng.below(model.n_domains()));
      return model.routed_logits(hashed, domains);
    }
    case RoutingStrategy::classifier: {
      if (classifier == nullptr) throw ConfigError("classifier routing requires a domain classifier");
      if (classifier->domain_names() != model.domain_names()) {
        throw CompatError("domain classifier and model disagree on domains");
      }
      const Matrix p = classifier->probs(hashed);
      std::vector<std::size_t> domains(samples.size());
      for (Eigen::Index c = 0; c < n; ++c) domains[static_cast<std::size_t>(c)] = argmax(p.col(c));
      return model.routed_logits(hashed, domains);
    }
  }
  throw ConfigError("unknown routing strategy");
}

}  // namespace

EvalReport evaluate(const DmoeModel& model, const PolicyRouter* router, const DomainClassifier* classifier,
                    std::span<const Sample> samples, const EvalOptions& opts) {
  if (samples.empty()) throw DataError("empty evaluation set");
  const Matrix hashed = encode_batch(model.encoder(), texts_of(samples));
  const Matrix logits = routed_predictions(model, router, classifier, samples, hashed, opts);
  EvalReport r;
  r.strategy = opts.strategy;
  r.m = opts.strategy == RoutingStrategy::rl ? opts.m : 1;
  r.seed = opts.seed;
  r.predictions.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const int pred = classify_logits(logits.col(static_cast<Eigen::Index>(i))).label;
    r.predictions.push_back(pred);
    r.pooled.add(pred, s.label);
    r.per_domain[s.domain.value_or(std::string(kUntagged))].add(pred, s.label);
    if (opts.buckets) r.buckets[length_bucket(token_count(s.text))].add(pred, s.label);
  }
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_domain = nlohmann::json::object();
  for (const auto& [name, m] : r.per_domain) per_domain[name] = to_json(m);
  nlohmann::json j = {{"strategy", to_string(r.strategy)},
                      {"m", r.m},
                      {"seed", r.seed},
                      {"pooled", to_json(r.pooled)},
                      {"per_domain", per_domain}};
  if (!r.buckets.empty()) {
    nlohmann::json buckets = nlohmann::json::object();
    for (const auto& [name, m] : r.buckets) buckets[name] = to_json(m);
    j["buckets"] = buckets;
  }
  return j;
}

std::map<std::string, EvalReport> evaluate_domains(const DmoeModel& model, const PolicyRouter* router,
                                                   const DomainClassifier* classifier,
                                                   const ExperimentData& data,
                                                   std::span<const std::string> domains, const EvalOptions& opts) {
  std::map<std::string, EvalReport> out;
  for (const auto& name : domains) {
    auto it = data.test.find(name);
    if (it == data.test.end() || it->second.empty()) throw DataError("domain " + name + " has no test split");
    out.emplace(name, evaluate(model, router, classifier, it->second, opts));
  }
  return out;
}

AblationKind parse_ablation_kind(std::string_view name) {
  if (name == "expert_type") return AblationKind::expert_type;
  if (name == "routing") return AblationKind::routing;
  throw ConfigError("unknown ablation kind '" + std::string(name) + "'");
}

std::string_view to_string(AblationKind k) noexcept {
  return k == AblationKind::expert_type ? "expert_type" : "routing";
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

double DomainSummary::f1_mean() const { return mean_of(f1); }
double DomainSummary::f1_std() const { return std_of(f1); }
double DomainSummary::acc_mean() const { return mean_of(acc); }
double DomainSummary::acc_std() const { return std_of(acc); }

const AblationRow& AblationReport::row(std::string_view variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return r;
  }
  throw ArgumentError("no ablation row '" + std::string(variant) + "'");
}

namespace {

void record(AblationRow& row, const ExperimentData& data, const std::map<std::string, EvalReport>& reports) {
  std::vector<double> ood;
  std::vector<double> ind;
  for (const auto& [name, rep] : reports) {
    auto& summary = row.per_domain[name];
    summary.f1.push_back(rep.pooled.f1());
    summary.acc.push_back(rep.pooled.accuracy());
    const bool is_source = std::find(data.source.begin(), data.source.end(), name) != data.source.end();
    (is_source ? ind : ood).push_back(rep.pooled.f1());
  }
  row.ood_mean_f1.push_back(mean_of(ood));
  row.ind_mean_f1.push_back(mean_of(ind));
}

std::vector<std::string> test_domains(const ExperimentData& data) {
  std::vector<std::string> all = data.source;
  for (const auto& name : data.ood) {
    if (data.test.contains(name)) all.push_back(name);
  }
  return all;
}

}  // namespace

AblationReport run_ablation(AblationKind kind, const ExperimentData& data, const AblationConfig& cfg) {
  if (data.source.empty()) throw DataError("ablation needs source domains");
  if (data.ood.empty()) throw DataError("ablation needs OOD domains");
  if (cfg.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  AblationReport report;
  report.kind = kind;
  report.source = data.source;
  report.ood = data.ood;
  report.seeds = cfg.seeds;
  nlohmann::json cfg_json = {{"kind", to_string(kind)},
                             {"pipeline", to_json(cfg.pipeline)},
                             {"classifier", cfg.classifier},
                             {"seeds", cfg.seeds}};
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(cfg_json.dump());
  report.config_hash = hash.str();

  const std::vector<std::string> domains = test_domains(data);
  EvalOptions rl_opts{.strategy = RoutingStrategy::rl, .m = cfg.pipeline.m};

  if (kind == AblationKind::expert_type) {
    const std::vector<std::pair<std::string, Ablation>> variants = {
        {"base", Ablation::base},
        {"no-ds", Ablation::no_domain_specific},
        {"no-shared", Ablation::no_shared},
        {"full", Ablation::none}};
    for (const auto& [name, ablation] : variants) {
      AblationRow row{name, {}, {}, {}};
      for (std::uint64_t seed : cfg.seeds) {
        PipelineConfig pc = cfg.pipeline.with_seed(seed);
        pc.arch = apply_ablation(pc.arch, ablation);
        const TrainedPipeline trained = train_pipeline(data, pc);
        const PolicyRouter* router = trained.router ? &*trained.router : nullptr;
        rl_opts.seed = seed;
        record(row, data, evaluate_domains(trained.model, router, nullptr, data, domains, rl_opts));
      }
      report.rows.push_back(std::move(row));
    }
    return report;
  }

  const std::vector<RoutingStrategy> strategies = {RoutingStrategy::oracle, RoutingStrategy::random,
                                                   RoutingStrategy::classifier, RoutingStrategy::rl};
  for (RoutingStrategy s : strategies) report.rows.push_back(AblationRow{std::string(to_string(s)), {}, {}, {}});
  for (std::uint64_t seed : cfg.seeds) {
    const PipelineConfig pc = cfg.pipeline.with_seed(seed);
    const TrainedPipeline trained = train_pipeline(data, pc);
    ClassifierConfig cc = cfg.classifier;
    cc.seed = derive_seed(seed, "classifier");
    const DomainClassifier clf = train_domain_classifier(pc.encoder, data.source, data.pooled("train", data.source),
                                                         data.pooled("val", data.source), cc);
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      EvalOptions opts{.strategy = strategies[i], .m = cfg.pipeline.m, .seed = seed};
      record(report.rows[i], data,
             evaluate_domains(trained.model, trained.router ? &*trained.router : nullptr, &clf, data, domains, opts));
    }
  }
  return report;
}

AblationReport merge_ablation(std::span<const AblationReport> reports) {
  if (reports.empty()) throw ArgumentError("nothing to merge");
  AblationReport out = reports.front();
  for (std::size_t r = 1; r < reports.size(); ++r) {
    const AblationReport& next = reports[r];
    if (next.kind != out.kind || next.rows.size() != out.rows.size()) {
      throw ArgumentError("cannot merge ablation reports of different shapes");
    }
    out.seeds.insert(out.seeds.end(), next.seeds.begin(), next.seeds.end());
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      AblationRow& dst = out.rows[i];
      const AblationRow& src = next.rows[i];
      if (dst.variant != src.variant) throw ArgumentError("cannot merge ablation rows of different variants");
      for (const auto& [name, s] : src.per_domain) {
        auto& d = dst.per_domain[name];
        d.f1.insert(d.f1.end(), s.f1.begin(), s.f1.end());
        d.acc.insert(d.acc.end(), s.acc.begin(), s.acc.end());
      }
      dst.ood_mean_f1.insert(dst.ood_mean_f1.end(), src.ood_mean_f1.begin(), src.ood_mean_f1.end());
      dst.ind_mean_f1.insert(dst.ind_mean_f1.end(), src.ind_mean_f1.begin(), src.ind_mean_f1.end());
    }
  }
  return out;
}

nlohmann::json to_json(const AblationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json per_domain = nlohmann::json::object();
    for (const auto& [name, s] : row.per_domain) {
      per_domain[name] = {{"acc", s.acc_mean()}, {"acc_std", s.acc_std()}, {"f1", s.f1_mean()},
                          {"std", s.f1_std()},   {"f1_runs", s.f1}};
    }
    rows.push_back({{"variant", row.variant},
                    {"per_domain", per_domain},
                    {"pooled",
                     {{"ood_mean_f1", mean_of(row.ood_mean_f1)},
                      {"ood_mean_f1_std", std_of(row.ood_mean_f1)},
                      {"ind_mean_f1", mean_of(row.ind_mean_f1)},
                      {"ind_mean_f1_std", std_of(row.ind_mean_f1)}}}});
  }
  return {{"kind", to_string(r.kind)}, {"source_domains", r.source}, {"ood_domains", r.ood},
          {"seeds", r.seeds},          {"config_hash", r.config_hash}, {"rows", rows}};
}

std::string format_table(const AblationReport& r) {
  std::vector<std::string> cols = r.ood;
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(12) << "variant";
  for (const auto& c : cols) out << std::right << std::setw(16) << c;
  out << std::setw(16) << "ood-mean" << std::setw(16) << "ind-mean" << '\n';
  auto cell = [&](double mean, double sd) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * mean << "+-" << 100.0 * sd;
    out << std::right << std::setw(16) << s.str();
  };
  for (const auto& row : r.rows) {
    out << std::left << std::setw(12) << row.variant;
    for (const auto& c : cols) {
      auto it = row.per_domain.find(c);
      if (it == row.per_domain.end()) {
        out << std::right << std::setw(16) << "-";
      } else {
        cell(it->second.f1_mean(), it->second.f1_std());
      }
    }
    cell(mean_of(row.ood_mean_f1), std_of(row.ood_mean_f1));
    cell(mean_of(row.ind_mean_f1), std_of(row.ind_mean_f1));
    out << '\n';
  }
  return out.str();
}

}  // namespace deer
