// deer: train, evaluate and inspect mixture-of-experts detectors from the command line.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deer/checkpoint.hpp"
#include "deer/data.hpp"
#include "deer/dmoe.hpp"
#include "deer/errors.hpp"
#include "deer/eval.hpp"
#include "deer/incremental.hpp"
#include "deer/inference.hpp"
#include "deer/pipeline.hpp"
#include "deer/policy.hpp"
#include "deer/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_report(const std::string& path, const json& j) {
  if (path.empty()) return;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  deer::write_json(p, j);
}

deer::ExperimentData load_data(const std::string& path) {
  if (!fs::exists(path)) throw deer::DataError("data path " + path + " does not exist");
  return deer::ExperimentData::from_dir(deer::CorpusDir::open(path));
}

// Test samples of every domain, or the lines of a single jsonl file.
std::vector<deer::Sample> load_eval_set(const std::string& path, const std::string& split) {
  if (fs::is_regular_file(path)) return deer::load_jsonl(path);
  const deer::ExperimentData data = load_data(path);
  const auto& table = split == "train" ? data.train : split == "val" ? data.val : data.test;
  std::vector<deer::Sample> out;
  auto add = [&](const std::string& name) {
    auto it = table.find(name);
    if (it != table.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  };
  for (const auto& d : data.source) add(d);
  for (const auto& d : data.ood) add(d);
  return out;
}

// Train split of every model domain present in the corpus.
std::vector<deer::Sample> model_domain_split(const deer::ExperimentData& data, const deer::DmoeModel& model,
                                             const std::string& split) {
  const auto& table = split == "train" ? data.train : data.val;
  std::vector<deer::Sample> out;
  for (const auto& name : model.domain_names()) {
    auto it = table.find(name);
    if (it != table.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  if (split == "train" && out.empty()) throw deer::DataError("corpus has no training data for the model's domains");
  return out;
}

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void run_synth(const SynthArgs& a) {
  deer::SyntheticConfig cfg;
  if (!a.config.empty()) cfg = deer::read_json(a.config).get<deer::SyntheticConfig>();
  if (a.seed) cfg.seed = *a.seed;
  const deer::SyntheticCorpus corpus = deer::generate_synthetic(cfg);
  deer::write_corpus(a.out, corpus);
  std::size_t n = 0;
  for (const auto& d : corpus.domains) n += d.train.size() + d.val.size() + d.test.size();
  std::cout << "wrote " << corpus.domains.size() << " domains, " << n << " samples to " << a.out << '\n';
}

struct TrainDmoeArgs {
  std::string data;
  std::string out;
  std::string report;
  std::string ablate = "none";
  std::string backend = "hashed-ngram";
  std::size_t dim = 768;
  std::size_t m1 = 5;
  std::size_t m2 = 6;
  std::size_t expert_hidden = 256;
  std::size_t head_hidden = 128;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 2e-5;
  double wd = 0.01;
  std::uint64_t seed = 0;
};

void run_train_dmoe(const TrainDmoeArgs& a) {
  const deer::ExperimentData data = load_data(a.data);
  deer::PipelineConfig pc = deer::PipelineConfig::reference().with_seed(a.seed);
  pc.encoder.dim = a.dim;
  pc.encoder.backend = json{{"backend", a.backend}}.get<deer::EncoderConfig>().backend;
  pc.arch.m1 = a.m1;
  pc.arch.m2 = a.m2;
  pc.arch.expert_hidden = a.expert_hidden;
  pc.arch.head_hidden = a.head_hidden;
  pc.arch = deer::apply_ablation(pc.arch, deer::parse_ablation(a.ablate));
  pc.stage1.epochs = a.epochs;
  pc.stage1.batch_size = a.batch;
  pc.stage1.lr = a.lr;
  pc.stage1.weight_decay = a.wd;

  deer::DmoeModel model(pc.encoder, pc.arch, data.source);
  const auto train = data.pooled("train", data.source);
  const auto val = data.pooled("val", data.source);
  const deer::TrainHistory history = deer::train_stage1(model, train, val, pc.stage1);
  model.params().set_all_frozen(true);
  model.save(a.out);
  write_report(a.report, {{"command", "train-dmoe"},
                          {"ablate", a.ablate},
                          {"encoder", pc.encoder},
                          {"arch", pc.arch},
                          {"stage1", pc.stage1},
                          {"history", deer::to_json(history)},
                          {"params", model.params().total_count()}});
  std::cout << "trained " << model.n_domains() << "-domain model (" << model.params().total_count()
            << " parameters)";
  if (!history.val_f1.empty() && history.best_epoch) {
    std::cout << ", best val F1 " << history.val_f1[*history.best_epoch] << " at epoch " << *history.best_epoch + 1;
  }
  std::cout << '\n';
}

struct TrainPolicyArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string report;
  std::string reward = "neg_loss";
  std::size_t epochs = 100;
  std::size_t batch = 16;
  std::size_t hidden = 512;
  double lr = 1e-3;
  double wd = 1e-5;
  double entropy = 0.01;
  std::uint64_t seed = 0;
};

void run_train_policy(const TrainPolicyArgs& a) {
  const deer::DmoeModel model = deer::DmoeModel::load(a.model);
  const deer::ExperimentData data = load_data(a.data);
  deer::PolicyConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.hidden = a.hidden;
  cfg.lr = a.lr;
  cfg.weight_decay = a.wd;
  cfg.entropy_coef = a.entropy;
  cfg.reward = deer::parse_reward_kind(a.reward);
  cfg.seed = deer::derive_seed(a.seed, "policy");
  cfg.validate();
  const auto train = model_domain_split(data, model, "train");
  deer::PolicyRouter router(model.dim(), model.domain_names(), cfg.hidden, cfg.seed);
  const deer::PolicyHistory history = deer::train_policy(router, model, train, cfg);
  router.save(a.out, cfg);
  write_report(a.report, {{"command", "train-policy"}, {"policy", cfg}, {"history", deer::to_json(history)}});
  std::cout << "trained policy over " << router.n_domains() << " domains";
  if (!history.routed_accuracy.empty()) std::cout << ", final routed accuracy " << history.routed_accuracy.back();
  std::cout << '\n';
}

struct EvaluateArgs {
  std::string model;
  std::string policy;
  std::string data;
  std::string report;
  std::string strategy = "rl";
  std::string split = "test";
  std::size_t m = deer::kDefaultTopM;
  bool buckets = false;
  bool renormalize = false;
  std::uint64_t seed = 0;
  std::size_t clf_epochs = 5;
};

void run_evaluate(const EvaluateArgs& a) {
  const deer::DmoeModel model = deer::DmoeModel::load(a.model);
  const deer::EvalOptions opts{.strategy = deer::parse_strategy(a.strategy),
                               .m = a.m,
                               .renormalize = a.renormalize,
                               .buckets = a.buckets,
                               .seed = a.seed};
  std::optional<deer::PolicyRouter> router;
  if (!a.policy.empty()) router = deer::PolicyRouter::load(a.policy);
  if (opts.strategy == deer::RoutingStrategy::rl && !router && !model.config().base) {
    throw deer::ConfigError("--strategy rl requires --policy");
  }
  const std::vector<deer::Sample> samples = load_eval_set(a.data, a.split);

  std::optional<deer::DomainClassifier> clf;
  if (opts.strategy == deer::RoutingStrategy::classifier) {
    if (fs::is_regular_file(a.data)) throw deer::ConfigError("classifier routing needs a corpus directory");
    const deer::ExperimentData data = load_data(a.data);
    deer::ClassifierConfig cc;
    cc.epochs = a.clf_epochs;
    cc.seed = deer::derive_seed(a.seed, "classifier");
    clf = deer::train_domain_classifier(model.encoder(), model.domain_names(),
                                        model_domain_split(data, model, "train"),
                                        model_domain_split(data, model, "val"), cc);
  }
  const deer::EvalReport r =
      deer::evaluate(model, router ? &*router : nullptr, clf ? &*clf : nullptr, samples, opts);
  json j = deer::to_json(r);
  j["command"] = "evaluate";
  j["split"] = a.split;
  if (clf) j["classifier"] = {{"train_accuracy", clf->train_accuracy}, {"val_accuracy", clf->val_accuracy}};
  write_report(a.report, j);
  std::cout << "strategy " << a.strategy << ": accuracy " << r.pooled.accuracy() << ", F1 " << r.pooled.f1()
            << " over " << r.pooled.n() << " samples\n";
  for (const auto& [name, m] : r.per_domain) std::cout << "  " << name << ": F1 " << m.f1() << '\n';
}

struct DetectArgs {
  std::string model;
  std::string policy;
  std::string input;
  std::string out;
  std::optional<std::string> text;
  std::size_t m = deer::kDefaultTopM;
  bool renormalize = false;
};

void run_detect(const DetectArgs& a) {
  const deer::DmoeModel model = deer::DmoeModel::load(a.model);
  const deer::PolicyRouter router = deer::PolicyRouter::load(a.policy);
  deer::check_compatible(model, router);
  std::vector<std::string> texts;
  if (a.text) {
    texts.push_back(*a.text);
  } else {
    for (auto& s : deer::load_jsonl(a.input)) texts.push_back(std::move(s.text));
  }
  const deer::EnsembleOptions opts{.m = a.m, .renormalize = a.renormalize};
  const auto results = deer::detect_batch(model, router, texts, opts);
  std::ostringstream lines;
  std::size_t machine = 0;
  for (const auto& r : results) {
    lines << deer::to_json(r).dump() << '\n';
    machine += r.label == deer::kMachine;
  }
  if (a.out.empty() || a.out == "-") {
    std::cout << lines.str();
    return;
  }
  const fs::path p(a.out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw deer::DataError("cannot write " + a.out);
  f << lines.str();
  std::cout << results.size() << " texts, " << machine << " flagged as machine-generated\n";
}

struct PerturbArgs {
  std::string model;
  std::string policy;
  std::string data;
  std::string report;
  std::string kinds = "repeat,delete,replace";
  double rate = 0.15;
  std::size_t m = deer::kDefaultTopM;
  std::uint64_t seed = 0;
};

void run_perturb_eval(const PerturbArgs& a) {
  if (!(a.rate >= 0.0 && a.rate <= 1.0)) throw deer::ConfigError("--rate must lie in [0, 1]");
  const deer::DmoeModel model = deer::DmoeModel::load(a.model);
  const deer::PolicyRouter router = deer::PolicyRouter::load(a.policy);
  deer::check_compatible(model, router);
  const std::vector<deer::Sample> clean = load_eval_set(a.data, "test");
  if (clean.empty()) throw deer::DataError("no test samples in " + a.data);
  std::vector<deer::Sample> vocab_source;
  if (fs::is_directory(a.data)) {
    const deer::ExperimentData data = load_data(a.data);
    vocab_source = model_domain_split(data, model, "train");
  } else {
    vocab_source = clean;
  }
  const std::vector<std::string> vocab = deer::collect_vocabulary(vocab_source);

  std::vector<deer::PerturbKind> kinds;
  std::stringstream ss(a.kinds);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) kinds.push_back(deer::parse_perturb_kind(item));
  }
  if (kinds.empty()) throw deer::ConfigError("--kinds lists no perturbation");

  const deer::EvalOptions opts{.strategy = deer::RoutingStrategy::rl, .m = a.m, .seed = a.seed};
  const deer::EvalReport base = deer::evaluate(model, &router, nullptr, clean, opts);
  json per_kind = json::object();
  std::cout << "clean: F1 " << base.pooled.f1() << '\n';
  for (deer::PerturbKind kind : kinds) {
    std::vector<deer::Sample> noisy = clean;
    const std::string name(deer::to_string(kind));
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      noisy[i].text = deer::perturb(noisy[i].text, kind, a.rate,
                                    deer::derive_seed(a.seed, name + "." + std::to_string(i)), vocab);
    }
    const deer::EvalReport r = deer::evaluate(model, &router, nullptr, noisy, opts);
    json j = deer::to_json(r);
    j["f1_drop"] = base.pooled.f1() - r.pooled.f1();
    per_kind[name] = j;
    std::cout << name << ": F1 " << r.pooled.f1() << '\n';
  }
  write_report(a.report, {{"command", "perturb-eval"},
                          {"rate", a.rate},
                          {"seed", a.seed},
                          {"m", a.m},
                          {"clean", deer::to_json(base)},
                          {"perturbed", per_kind}});
}

struct AblateArgs {
  std::string kind;
  std::string data;
  std::string report;
  std::string preset = "reference";
  std::size_t seeds = 3;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> policy_epochs;
};

void run_ablate(const AblateArgs& a) {
  const deer::ExperimentData data = load_data(a.data);
  deer::AblationConfig cfg;
  if (a.preset == "reference") {
    cfg.pipeline = deer::PipelineConfig::reference();
  } else if (a.preset == "desk") {
    cfg.pipeline = deer::PipelineConfig::desk();
  } else {
    throw deer::ConfigError("unknown preset '" + a.preset + "'");
  }
  if (a.dim) cfg.pipeline.encoder.dim = *a.dim;
  if (a.epochs) cfg.pipeline.stage1.epochs = *a.epochs;
  if (a.policy_epochs) cfg.pipeline.policy.epochs = *a.policy_epochs;
  if (a.seeds == 0) throw deer::ConfigError("--seeds must be positive");
  cfg.seeds.clear();
  for (std::uint64_t s = 0; s < a.seeds; ++s) cfg.seeds.push_back(s);
  const deer::AblationReport r = deer::run_ablation(deer::parse_ablation_kind(a.kind), data, cfg);
  json j = deer::to_json(r);
  j["command"] = "ablate";
  j["preset"] = a.preset;
  write_report(a.report, j);
  std::cout << deer::format_table(r);
}

struct ExpandArgs {
  std::string model;
  std::string policy;
  std::string new_domain;
  std::string data;
  std::string out;
  std::string report;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 2e-5;
  double wd = 0.01;
  bool strict = false;
  std::uint64_t seed = 0;
};

std::optional<double> oracle_f1(const deer::DmoeModel& model, const deer::ExperimentData& data,
                                const std::vector<std::string>& domains) {
  std::vector<double> f1;
  for (const auto& name : domains) {
    auto it = data.test.find(name);
    if (it == data.test.end() || it->second.empty()) continue;
    const deer::EvalOptions opts{.strategy = deer::RoutingStrategy::oracle};
    f1.push_back(deer::evaluate(model, nullptr, nullptr, it->second, opts).pooled.f1());
  }
  if (f1.empty()) return std::nullopt;
  return deer::mean_of(f1);
}

void run_expand(const ExpandArgs& a) {
  deer::DmoeModel model = deer::DmoeModel::load(a.model);
  const deer::ExperimentData data = load_data(a.data);
  auto split = [&](const auto& table) {
    auto it = table.find(a.new_domain);
    return it == table.end() ? std::vector<deer::Sample>{} : it->second;
  };
  const auto train = split(data.train);
  const auto val = split(data.val);
  const auto test = split(data.test);
  if (train.empty()) throw deer::DataError("corpus has no train split for domain " + a.new_domain);

  json report = {{"command", "expand"}, {"new_domain", a.new_domain}};
  const std::vector<std::string> old_domains = model.domain_names();
  if (!a.policy.empty() && !test.empty()) {
    const deer::PolicyRouter router = deer::PolicyRouter::load(a.policy);
    const deer::EvalOptions opts{.strategy = deer::RoutingStrategy::rl};
    report["new_domain_f1_before"] = deer::evaluate(model, &router, nullptr, test, opts).pooled.f1();
  }
  if (auto f1 = oracle_f1(model, data, old_domains)) report["source_oracle_f1_before"] = *f1;

  deer::ExpandConfig cfg;
  cfg.stage1.epochs = a.epochs;
  cfg.stage1.batch_size = a.batch;
  cfg.stage1.lr = a.lr;
  cfg.stage1.weight_decay = a.wd;
  cfg.stage1.seed = deer::derive_seed(a.seed, "expand");
  cfg.freeze_head = a.strict;
  const deer::ExpandResult result = deer::expand_domain(model, a.new_domain, train, val, cfg);
  model.save(a.out);

  if (!test.empty()) {
    const deer::EvalOptions opts{.strategy = deer::RoutingStrategy::oracle};
    std::vector<deer::Sample> tagged = test;
    for (auto& s : tagged) s.domain = a.new_domain;
    report["new_domain_f1_after"] = deer::evaluate(model, nullptr, nullptr, tagged, opts).pooled.f1();
  }
  if (auto f1 = oracle_f1(model, data, old_domains)) report["source_oracle_f1_after"] = *f1;
  report["params"] = deer::to_json(result.params);
  report["history"] = deer::to_json(result.history);
  report["strict"] = a.strict;
  write_report(a.report, report);
  std::cout << "added domain " << a.new_domain << "; trainable fraction during fine-tuning "
            << result.params.fraction << " (" << result.params.trainable << " of "
            << result.params.trainable + result.params.frozen << ")\n";
}

int fail(std::string_view category, const std::string& message) {
  std::string line = message;
  for (char& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error category=" << category << " message=" << line << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-experts machine-text detector with learned routing"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic multi-domain corpus");
  c_synth->add_option("--config", synth.config, "SyntheticConfig JSON file");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Overrides the config seed");

  TrainDmoeArgs td;
  auto* c_td = app.add_subcommand("train-dmoe", "Stage 1: supervised training of the expert mixture");
  c_td->add_option("--data", td.data, "Corpus directory")->required();
  c_td->add_option("--out", td.out, "Checkpoint path")->required();
  c_td->add_option("--report", td.report, "Training report JSON");
  c_td->add_option("--m1", td.m1, "Domain-specific experts per domain")->capture_default_str();
  c_td->add_option("--m2", td.m2, "Domain-shared experts")->capture_default_str();
  c_td->add_option("--dim", td.dim, "Encoder feature dimension")->capture_default_str();
  c_td->add_option("--backend", td.backend, "hashed-ngram|adapter")->capture_default_str();
  c_td->add_option("--expert-hidden", td.expert_hidden, "Expert hidden width")->capture_default_str();
  c_td->add_option("--head-hidden", td.head_hidden, "Head hidden width")->capture_default_str();
  c_td->add_option("--epochs", td.epochs, "Training epochs")->capture_default_str();
  c_td->add_option("--batch", td.batch, "Mini-batch size")->capture_default_str();
  c_td->add_option("--lr", td.lr, "AdamW learning rate")->capture_default_str();
  c_td->add_option("--wd", td.wd, "AdamW weight decay")->capture_default_str();
  c_td->add_option("--seed", td.seed, "Run seed")->capture_default_str();
  c_td->add_option("--ablate", td.ablate, "none|no-ds|no-shared|base")->capture_default_str();

  TrainPolicyArgs tp;
  auto* c_tp = app.add_subcommand("train-policy", "Stage 2: REINFORCE training of the routing policy");
  c_tp->add_option("--model", tp.model, "Frozen expert checkpoint")->required();
  c_tp->add_option("--data", tp.data, "Corpus directory")->required();
  c_tp->add_option("--out", tp.out, "Policy checkpoint path")->required();
  c_tp->add_option("--report", tp.report, "Training report JSON");
  c_tp->add_option("--epochs", tp.epochs, "Training epochs")->capture_default_str();
  c_tp->add_option("--batch", tp.batch, "Mini-batch size")->capture_default_str();
  c_tp->add_option("--hidden", tp.hidden, "Policy hidden width")->capture_default_str();
  c_tp->add_option("--lr", tp.lr, "AdamW learning rate")->capture_default_str();
  c_tp->add_option("--wd", tp.wd, "AdamW weight decay")->capture_default_str();
  c_tp->add_option("--entropy", tp.entropy, "Entropy bonus coefficient")->capture_default_str();
  c_tp->add_option("--reward", tp.reward, "neg_loss|accuracy")->capture_default_str();
  c_tp->add_option("--seed", tp.seed, "Run seed")->capture_default_str();

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Evaluate under a routing strategy");
  c_ev->add_option("--model", ev.model, "Expert checkpoint")->required();
  c_ev->add_option("--policy", ev.policy, "Policy checkpoint (required for rl)");
  c_ev->add_option("--data", ev.data, "Corpus directory or jsonl file")->required();
  c_ev->add_option("--strategy", ev.strategy, "rl|oracle|random|classifier")->capture_default_str();
  c_ev->add_option("--split", ev.split, "train|val|test")->capture_default_str();
  c_ev->add_option("--m", ev.m, "Pathways fused under rl routing")->capture_default_str();
  c_ev->add_flag("--buckets", ev.buckets, "Add length buckets to the report");
  c_ev->add_flag("--renormalize", ev.renormalize, "Rescale kept routing weights to sum to 1");
  c_ev->add_option("--clf-epochs", ev.clf_epochs, "Domain classifier epochs")->capture_default_str();
  c_ev->add_option("--seed", ev.seed, "Seed for random routing and the classifier")->capture_default_str();
  c_ev->add_option("--report", ev.report, "Report JSON")->required();

  DetectArgs dt;
  auto* c_dt = app.add_subcommand("detect", "Classify texts");
  c_dt->add_option("--model", dt.model, "Expert checkpoint")->required();
  c_dt->add_option("--policy", dt.policy, "Policy checkpoint")->required();
  c_dt->add_option("--m", dt.m, "Pathways fused")->capture_default_str();
  c_dt->add_flag("--renormalize", dt.renormalize, "Rescale kept routing weights to sum to 1");
  auto* o_text = c_dt->add_option("--text", dt.text, "Single text");
  auto* o_input = c_dt->add_option("--input", dt.input, "jsonl file with a text field");
  o_text->excludes(o_input);
  c_dt->add_option("--out", dt.out, "Results jsonl (default stdout)");

  PerturbArgs pe;
  auto* c_pe = app.add_subcommand("perturb-eval", "Robustness under token-level perturbations");
  c_pe->add_option("--model", pe.model, "Expert checkpoint")->required();
  c_pe->add_option("--policy", pe.policy, "Policy checkpoint")->required();
  c_pe->add_option("--data", pe.data, "Corpus directory or jsonl file")->required();
  c_pe->add_option("--kinds", pe.kinds, "Comma-separated subset of repeat,delete,replace")->capture_default_str();
  c_pe->add_option("--rate", pe.rate, "Per-token perturbation probability")->capture_default_str();
  c_pe->add_option("--m", pe.m, "Pathways fused")->capture_default_str();
  c_pe->add_option("--seed", pe.seed, "Perturbation seed")->capture_default_str();
  c_pe->add_option("--report", pe.report, "Report JSON")->required();

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Expert-type or routing ablation over seeds");
  c_ab->add_option("--kind", ab.kind, "expert_type|routing")->required();
  c_ab->add_option("--data", ab.data, "Corpus directory")->required();
  c_ab->add_option("--seeds", ab.seeds, "Number of seeds (0..N-1)")->capture_default_str();
  c_ab->add_option("--preset", ab.preset, "reference|desk")->capture_default_str();
  c_ab->add_option("--dim", ab.dim, "Override the encoder dimension");
  c_ab->add_option("--epochs", ab.epochs, "Override stage-1 epochs");
  c_ab->add_option("--policy-epochs", ab.policy_epochs, "Override policy epochs");
  c_ab->add_option("--report", ab.report, "Report JSON")->required();

  ExpandArgs ex;
  auto* c_ex = app.add_subcommand("expand", "Add an expert group for a new domain");
  c_ex->add_option("--model", ex.model, "Expert checkpoint")->required();
  c_ex->add_option("--policy", ex.policy, "Policy checkpoint, to measure the new domain before expansion");
  c_ex->add_option("--new-domain", ex.new_domain, "Domain name in the corpus")->required();
  c_ex->add_option("--data", ex.data, "Corpus directory")->required();
  c_ex->add_option("--out", ex.out, "Expanded checkpoint path")->required();
  c_ex->add_option("--report", ex.report, "Report JSON")->required();
  c_ex->add_option("--epochs", ex.epochs, "Fine-tuning epochs")->capture_default_str();
  c_ex->add_option("--batch", ex.batch, "Mini-batch size")->capture_default_str();
  c_ex->add_option("--lr", ex.lr, "AdamW learning rate")->capture_default_str();
  c_ex->add_option("--wd", ex.wd, "AdamW weight decay")->capture_default_str();
  c_ex->add_flag("--strict", ex.strict, "Also freeze the classification head");
  c_ex->add_option("--seed", ex.seed, "Run seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what());
  }

  try {
    if (*c_synth) run_synth(synth);
    else if (*c_td) run_train_dmoe(td);
    else if (*c_tp) run_train_policy(tp);
    else if (*c_ev) run_evaluate(ev);
    else if (*c_dt) run_detect(dt);
    else if (*c_pe) run_perturb_eval(pe);
    else if (*c_ab) run_ablate(ab);
    else if (*c_ex) run_expand(ex);
  } catch (const deer::Error& e) {
    return fail(deer::cli_category(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("data", e.what());
  } catch (const std::exception& e) {
    return fail("config", e.what());
  }
  return 0;
}
