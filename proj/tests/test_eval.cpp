#include <cmath>

#include <gtest/gtest.h>

#include "deer/errors.hpp"
#include "deer/eval.hpp"
#include "deer/inference.hpp"
#include "deer/metrics.hpp"
#include "deer/pipeline.hpp"
#include "support.hpp"

namespace deer {
namespace {

TEST(Metrics, HandCounts) {
  // TP=2, FP=1, FN=1, TN=1
  const std::vector<int> preds{1, 1, 1, 0, 0};
  const std::vector<int> labels{1, 1, 0, 1, 0};
  const Metrics m = metrics(preds, labels);
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 1u);
  EXPECT_DOUBLE_EQ(m.precision(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.accuracy(), 0.6);
}

TEST(Metrics, PerfectAndAllNegative) {
  const std::vector<int> labels{0, 1, 1, 0};
  const Metrics perfect = metrics(labels, labels);
  EXPECT_EQ(perfect.accuracy(), 1.0);
  EXPECT_EQ(perfect.f1(), 1.0);
  const std::vector<int> zeros(4, 0);
  EXPECT_EQ(metrics(zeros, labels).f1(), 0.0);
}

TEST(Metrics, Errors) {
  const std::vector<int> a{0, 1};
  const std::vector<int> b{0};
  EXPECT_THROW(metrics(a, b), DataError);
  EXPECT_THROW(metrics(std::vector<int>{}, std::vector<int>{}), DataError);
}

TEST(Metrics, IdentitiesOnRandomCounts) {
  Rng rng(12);
  for (int t = 0; t < 1000; ++t) {
    Metrics m;
    m.tp = rng.below(20);
    m.fp = rng.below(20);
    m.fn = rng.below(20);
    m.tn = rng.below(20) + 1;
    const double n = static_cast<double>(m.n());
    EXPECT_DOUBLE_EQ(m.accuracy(), static_cast<double>(m.tp + m.tn) / n);
    const double p = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    const double r = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    const double f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    EXPECT_NEAR(m.f1(), f1, 1e-12);
    EXPECT_GE(m.f1(), 0.0);
    EXPECT_LE(m.f1(), 1.0);
    EXPECT_GE(m.macro_f1(), 0.0);
    EXPECT_LE(m.macro_f1(), 1.0);
  }
}

TEST(Strategy, ParseAndPrint) {
  for (auto s : {RoutingStrategy::rl, RoutingStrategy::oracle, RoutingStrategy::random, RoutingStrategy::classifier}) {
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  }
  EXPECT_THROW(parse_strategy("greedy"), ConfigError);
  EXPECT_EQ(length_bucket(100), "<=100");
  EXPECT_EQ(length_bucket(101), "101-200");
  EXPECT_EQ(length_bucket(300), "201-300");
  EXPECT_EQ(length_bucket(301), ">300");
}

// A small trained pipeline shared by the evaluation tests.
class EvalFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new SyntheticCorpus(generate_synthetic(test::small_corpus_config(1)));
    data_ = new ExperimentData(ExperimentData::from_corpus(*corpus_));
    PipelineConfig cfg = PipelineConfig::desk().with_seed(1);
    cfg.encoder.dim = 64;
    cfg.stage1.epochs = 3;
    cfg.policy.epochs = 3;
    cfg.policy.hidden = 16;
    pipe_ = new TrainedPipeline(train_pipeline(*data_, cfg));
  }
  static void TearDownTestSuite() {
    delete pipe_;
    delete data_;
    delete corpus_;
  }

  static SyntheticCorpus* corpus_;
  static ExperimentData* data_;
  static TrainedPipeline* pipe_;
};

SyntheticCorpus* EvalFixture::corpus_ = nullptr;
ExperimentData* EvalFixture::data_ = nullptr;
TrainedPipeline* EvalFixture::pipe_ = nullptr;

TEST_F(EvalFixture, RandomStrategyDeterministicUnderSeed) {
  const auto test_set = data_->pooled("test", data_->source);
  EvalOptions opts;
  opts.strategy = RoutingStrategy::random;
  opts.seed = 5;
  const EvalReport a = evaluate(pipe_->model, nullptr, nullptr, test_set, opts);
  const EvalReport b = evaluate(pipe_->model, nullptr, nullptr, test_set, opts);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST_F(EvalFixture, OracleMatchesTrueDomainPathway) {
  const auto test_set = data_->pooled("test", data_->source);
  EvalOptions opts;
  opts.strategy = RoutingStrategy::oracle;
  const EvalReport r = evaluate(pipe_->model, nullptr, nullptr, test_set, opts);
  ASSERT_EQ(r.predictions.size(), test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const std::size_t k = pipe_->model.require_domain(*test_set[i].domain);
    EXPECT_EQ(r.predictions[i], pipe_->model.classify_pathway(k, test_set[i].text).label);
  }
}

TEST_F(EvalFixture, OracleOnUnknownDomainUsesSharedExperts) {
  const auto& ood = data_->test.at("ood-0");
  EvalOptions opts;
  opts.strategy = RoutingStrategy::oracle;
  const EvalReport r = evaluate(pipe_->model, nullptr, nullptr, ood, opts);
  for (std::size_t i = 0; i < ood.size(); ++i) {
    EXPECT_EQ(r.predictions[i], classify_logits(pipe_->model.shared_only_logits(ood[i].text)).label);
  }
}

TEST_F(EvalFixture, OracleNeedsTags) {
  std::vector<Sample> untagged = data_->test.at("src-0");
  for (auto& s : untagged) s.domain.reset();
  EvalOptions opts;
  opts.strategy = RoutingStrategy::oracle;
  EXPECT_THROW(evaluate(pipe_->model, nullptr, nullptr, untagged, opts), DataError);
}

TEST_F(EvalFixture, RlWithFullMEqualsFullFusion) {
  const auto test_set = data_->pooled("test", data_->ood);
  EvalOptions opts;
  opts.m = pipe_->model.n_domains();
  const EvalReport r = evaluate(pipe_->model, &*pipe_->router, nullptr, test_set, opts);
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const Vector h = pipe_->model.features(test_set[i].text);
    const Vector pi = policy_forward(pipe_->router->policy, pipe_->router->normalizer, h);
    Vector z = Vector::Zero(2);
    for (std::size_t k = 0; k < pipe_->model.n_domains(); ++k) {
      z += pi[static_cast<Eigen::Index>(k)] * pipe_->model.pathway_logits(k, test_set[i].text);
    }
    EXPECT_EQ(r.predictions[i], classify_logits(z).label);
  }
}

TEST_F(EvalFixture, RlAgreesWithDetect) {
  const auto test_set = data_->pooled("test", data_->source);
  const EvalReport r = evaluate(pipe_->model, &*pipe_->router, nullptr, test_set, EvalOptions{});
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    EXPECT_EQ(r.predictions[i], detect(pipe_->model, *pipe_->router, test_set[i].text).label);
  }
}

TEST_F(EvalFixture, PerDomainCountsSumToPooled) {
  std::vector<Sample> mixed = data_->pooled("test", data_->source);
  const auto ood = data_->pooled("test", data_->ood);
  mixed.insert(mixed.end(), ood.begin(), ood.end());
  mixed.push_back({"no tag here", 1, std::nullopt, {}});
  EvalOptions opts;
  opts.buckets = true;
  const EvalReport r = evaluate(pipe_->model, &*pipe_->router, nullptr, mixed, opts);
  Metrics sum;
  for (const auto& [name, m] : r.per_domain) sum += m;
  EXPECT_EQ(sum.tp, r.pooled.tp);
  EXPECT_EQ(sum.fp, r.pooled.fp);
  EXPECT_EQ(sum.fn, r.pooled.fn);
  EXPECT_EQ(sum.tn, r.pooled.tn);
  EXPECT_TRUE(r.per_domain.count(std::string(kUntagged)));
  Metrics bsum;
  for (const auto& [name, m] : r.buckets) bsum += m;
  EXPECT_EQ(bsum.n(), r.pooled.n());
  EXPECT_TRUE(to_json(r).contains("buckets"));
}

TEST_F(EvalFixture, MissingArtifactsAreConfigErrors) {
  const auto& test_set = data_->test.at("src-0");
  EvalOptions opts;
  EXPECT_THROW(evaluate(pipe_->model, nullptr, nullptr, test_set, opts), ConfigError);
  opts.strategy = RoutingStrategy::classifier;
  EXPECT_THROW(evaluate(pipe_->model, nullptr, nullptr, test_set, opts), ConfigError);
  EXPECT_THROW(evaluate(pipe_->model, &*pipe_->router, nullptr, std::vector<Sample>{}, EvalOptions{}), DataError);
}

TEST_F(EvalFixture, ClassifierRoutingUsesArgmaxDomain) {
  ClassifierConfig ccfg;
  ccfg.epochs = 2;
  const auto train = data_->pooled("train", data_->source);
  const auto val = data_->pooled("val", data_->source);
  const DomainClassifier clf =
      train_domain_classifier(pipe_->model.encoder(), pipe_->model.domain_names(), train, val, ccfg);
  EXPECT_TRUE(clf.params().all_frozen());
  EvalOptions opts;
  opts.strategy = RoutingStrategy::classifier;
  const auto& test_set = data_->test.at("ood-0");
  const EvalReport r = evaluate(pipe_->model, nullptr, &clf, test_set, opts);
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const std::size_t k = clf.predict(test_set[i].text);
    EXPECT_EQ(r.predictions[i], pipe_->model.classify_pathway(k, test_set[i].text).label);
  }
  const DomainClassifier other(pipe_->model.encoder(), {"x", "y"}, 4, 0);
  EXPECT_THROW(evaluate(pipe_->model, nullptr, &other, test_set, opts), CompatError);
}

TEST(Classifier, SeparatesDefaultCorpusDomains) {
  const auto corpus = generate_synthetic(SyntheticConfig{});
  const auto data = ExperimentData::from_corpus(corpus);
  const auto train = data.pooled("train", data.source);
  const auto val = data.pooled("val", data.source);
  const DomainClassifier clf = train_domain_classifier(EncoderConfig{}, data.source, train, val, ClassifierConfig{});
  EXPECT_GE(clf.val_accuracy, 0.95);
  const Vector p = clf.probs(val.front().text);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(Classifier, DeterministicAndValidated) {
  const auto corpus = generate_synthetic(test::small_corpus_config(2));
  const auto data = ExperimentData::from_corpus(corpus);
  EncoderConfig enc;
  enc.dim = 32;
  ClassifierConfig cfg;
  cfg.epochs = 1;
  const auto train = data.pooled("train", data.source);
  const auto val = data.pooled("val", data.source);
  const auto a = train_domain_classifier(enc, data.source, train, val, cfg);
  const auto b = train_domain_classifier(enc, data.source, train, val, cfg);
  EXPECT_TRUE(a.params().identical(b.params()));
  const std::vector<std::string> one{"src-0"};
  EXPECT_THROW(train_domain_classifier(enc, one, data.train.at("src-0"), {}, cfg), DataError);
}

TEST(Ablation, ReportSchemas) {
  const auto corpus = generate_synthetic(test::small_corpus_config(0));
  const auto data = ExperimentData::from_corpus(corpus);
  AblationConfig cfg;
  cfg.pipeline.encoder.dim = 32;
  cfg.pipeline.arch.expert_hidden = 8;
  cfg.pipeline.arch.head_hidden = 8;
  cfg.pipeline.stage1.epochs = 1;
  cfg.pipeline.policy.epochs = 1;
  cfg.pipeline.policy.hidden = 8;
  cfg.classifier.epochs = 1;
  cfg.seeds = {0, 1};

  const AblationReport types = run_ablation(AblationKind::expert_type, data, cfg);
  ASSERT_EQ(types.rows.size(), 4u);
  EXPECT_EQ(types.rows[0].variant, "base");
  EXPECT_EQ(types.rows[1].variant, "no-ds");
  EXPECT_EQ(types.rows[2].variant, "no-shared");
  EXPECT_EQ(types.rows[3].variant, "full");
  for (const auto& row : types.rows) {
    EXPECT_EQ(row.ood_mean_f1.size(), 2u);
    EXPECT_EQ(row.per_domain.size(), 3u);
  }

  const AblationReport routing = run_ablation(AblationKind::routing, data, cfg);
  ASSERT_EQ(routing.rows.size(), 4u);
  EXPECT_EQ(routing.rows[0].variant, "oracle");
  EXPECT_EQ(routing.rows[1].variant, "random");
  EXPECT_EQ(routing.rows[2].variant, "classifier");
  EXPECT_EQ(routing.rows[3].variant, "rl");
  EXPECT_THROW(routing.row("full"), std::exception);

  const nlohmann::json j = to_json(types);
  EXPECT_EQ(j.at("rows").size(), 4u);
  EXPECT_TRUE(j.contains("config_hash"));
  EXPECT_TRUE(j.at("rows")[0].at("per_domain").at("ood-0").contains("std"));
  EXPECT_EQ(to_json(run_ablation(AblationKind::expert_type, data, cfg)).dump(), j.dump());
  EXPECT_FALSE(format_table(routing).empty());
  EXPECT_THROW(parse_ablation_kind("everything"), ConfigError);
}

TEST(Stats, MeanAndPopulationStd) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean_of(v), 2.5);
  EXPECT_DOUBLE_EQ(std_of(v), std::sqrt(1.25));
}

}  // namespace
}  // namespace deer
