// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deer/data.hpp"
#include "deer/dmoe.hpp"
#include "deer/eval.hpp"
#include "deer/incremental.hpp"
#include "deer/inference.hpp"
#include "deer/optim.hpp"
#include "deer/pipeline.hpp"
#include "deer/policy.hpp"
#include "deer/rng.hpp"

namespace fs = std::filesystem;
using namespace deer;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream ss;
  ss << std::setprecision(digits) << std::fixed << v;
  return ss.str();
}

std::string sci(double v) {
  std::ostringstream ss;
  ss << std::setprecision(2) << std::scientific << v;
  return ss.str();
}

Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) m.col(c) = random_vector(rng, rows, scale);
  return m;
}

DmoeModel small_model(std::size_t dim, std::size_t m1, std::size_t m2, std::vector<std::string> domains,
                      std::uint64_t seed) {
  EncoderConfig enc;
  enc.dim = dim;
  DmoeConfig cfg;
  cfg.m1 = m1;
  cfg.m2 = m2;
  cfg.expert_hidden = 4;
  cfg.head_hidden = 4;
  cfg.seed = seed;
  return DmoeModel(enc, cfg, std::move(domains));
}

// 1. Analytic gradients against central differences.
Outcome gradients() {
  const Timer t;
  double worst_stage1 = 0.0;
  double worst_policy = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DmoeModel model = small_model(8, 1, 1, {"d0", "d1"}, seed);
    Rng rng(seed, "acceptance.grad");
    const Matrix h = random_matrix(rng, 8, 6);
    std::vector<int> labels;
    std::vector<std::size_t> domains;
    for (int i = 0; i < 6; ++i) {
      labels.push_back(static_cast<int>(rng.below(2)));
      domains.push_back(rng.below(2));
    }
    Gradients analytic(model.params());
    model.loss_and_gradient(h, labels, domains, &analytic);
    DmoeModel probe = model;
    const Gradients numeric = finite_difference_gradient(
        [&](const ParamStore& store) {
          probe.params() = store;
          return probe.loss_and_gradient(h, labels, domains, nullptr);
        },
        model.params());
    worst_stage1 = std::max(worst_stage1, max_relative_error(model.params(), analytic, numeric));

    PolicyNetwork policy(8, 5, 2, seed);
    const Matrix s = random_matrix(rng, 8, 6, 2.0);
    std::vector<std::size_t> actions;
    std::vector<double> adv;
    for (int i = 0; i < 6; ++i) {
      actions.push_back(rng.below(2));
      adv.push_back(rng.uniform(-1.0, 1.0));
    }
    Gradients pa(policy.params());
    policy.surrogate_loss(s, actions, adv, 0.01, &pa);
    PolicyNetwork pprobe = policy;
    const Gradients pn = finite_difference_gradient(
        [&](const ParamStore& store) {
          pprobe.params() = store;
          return pprobe.surrogate_loss(s, actions, adv, 0.01, nullptr);
        },
        policy.params());
    worst_policy = std::max(worst_policy, max_relative_error(policy.params(), pa, pn));
  }
  const double secs = t.seconds();
  return {worst_stage1 <= 1e-4 && worst_policy <= 1e-4 && secs < 30.0,
          "max rel err stage-1 " + sci(worst_stage1) + ", surrogate " + sci(worst_policy) + " (<= 1e-4), " +
              fmt(secs, 2) + " s (< 30)"};
}

// 2. A domain-k-only optimizer step leaves other domains untouched.
Outcome isolation() {
  const Timer t;
  bool ok = true;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    DmoeModel model = small_model(16, 2, 2, {"a", "b", "c"}, 40 + k);
    const ParamStore before = model.params();
    Rng rng(k, "acceptance.isolation");
    const Matrix h = random_matrix(rng, 16, 8);
    const std::vector<int> labels{0, 1, 0, 1, 1, 0, 1, 0};
    const std::vector<std::size_t> domains(8, k);
    Gradients g(model.params());
    model.loss_and_gradient(h, labels, domains, &g);
    AdamWState opt(model.params(), AdamWHyper{.lr = 1e-2, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.01});
    adamw_step(model.params(), g, opt);
    for (std::size_t j = 0; j < 3; ++j) {
      if (j == k) {
        ok = ok && !model.params().identical_prefix(before, DmoeModel::domain_prefix(j));
        continue;
      }
      ok = ok && model.params().identical_prefix(before, DmoeModel::domain_prefix(j)) &&
           model.params().identical_prefix(before, DmoeModel::gate_prefix(j));
      checked += 2;
    }
  }
  const double secs = t.seconds();
  return {ok && secs < 5.0, std::to_string(checked) + " foreign groups bit-identical, " + fmt(secs, 3) + " s (< 5)"};
}

// 3. Gating, ensemble and reward identities.
Outcome identities() {
  const Timer t;
  Rng rng(3, "acceptance.identities");
  EncoderConfig enc;
  enc.dim = 32;
  DmoeConfig arch;
  arch.m1 = 2;
  arch.m2 = 3;
  arch.expert_hidden = 8;
  arch.head_hidden = 8;
  DmoeModel model(enc, arch, {"a", "b", "c", "d"});
  model.params().set_all_frozen(true);
  PolicyRouter router(32, model.domain_names(), 16, 5);

  double gate_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vector h = random_vector(rng, 32, 3.0);
    gate_err = std::max(gate_err, std::abs(model.gate_weights(rng.below(4), h).sum() - 1.0));
  }

  double fusion_err = 0.0;
  bool argmax_ok = true;
  double zero_sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::string text;
    const std::size_t words = 1 + rng.below(12);
    for (std::size_t w = 0; w < words; ++w) text += (w ? " t" : "t") + std::to_string(rng.below(200));
    const int label = static_cast<int>(rng.below(2));
    double sum = 0.0;
    for (std::size_t a = 0; a < 4; ++a) sum += relative_reward(model, text, label, a);
    zero_sum = std::max(zero_sum, std::abs(sum));
    if (i >= 200) continue;
    const Vector h = model.features(text);
    const Vector pi = policy_forward(router.policy, router.normalizer, h);
    Vector z = Vector::Zero(2);
    for (std::size_t k = 0; k < 4; ++k) z += pi[static_cast<Eigen::Index>(k)] * model.pathway_logits(k, text);
    fusion_err = std::max(fusion_err, (ensemble_predict(model, router, text, {4, false}) - softmax(z)).cwiseAbs().maxCoeff());
    const DetectionResult one = detect(model, router, text, {1, false});
    argmax_ok = argmax_ok && one.label == model.classify_pathway(argmax(pi), text).label;
  }
  const double secs = t.seconds();
  const bool ok = gate_err <= 1e-9 && fusion_err <= 1e-12 && argmax_ok && zero_sum <= 1e-12 * 4 && secs < 30.0;
  return {ok, "gate sum err " + sci(gate_err) + ", m=n fusion err " + sci(fusion_err) + ", m=1 argmax " +
                  (argmax_ok ? "ok" : "mismatch") + ", zero-sum " + sci(zero_sum) + ", " + fmt(secs, 2) + " s (< 30)"};
}

// 4. Running state statistics and reward standardization.
Outcome normalization() {
  StateNormalizer n(1);
  for (double x : {1.0, 2.0, 3.0}) n.update(Vector{{x}});
  const bool welford = n.mean()[0] == 2.0 && std::abs(n.variance()[0] - 1.0) <= 1e-15;

  Rng rng(4, "acceptance.norm");
  double worst_mean = 0.0;
  double worst_std = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> r(2 + rng.below(62));
    for (auto& x : r) x = rng.uniform(-10.0, 10.0);
    const auto out = normalize_rewards(r);
    double mean = 0.0;
    for (double x : out) mean += x;
    mean /= static_cast<double>(out.size());
    double var = 0.0;
    for (double x : out) var += (x - mean) * (x - mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(var / static_cast<double>(out.size())) - 1.0));
  }
  const std::vector<double> flat{0.5, 0.5 + 1e-10, 0.5 - 1e-10};
  const auto centered = normalize_rewards(flat);
  bool center_only = true;
  for (std::size_t i = 0; i < flat.size(); ++i) center_only = center_only && std::abs(centered[i] - (flat[i] - 0.5)) < 1e-15;
  return {welford && worst_mean <= 1e-9 && worst_std <= 1e-6 && center_only,
          std::string("Welford [1,2,3] ") + (welford ? "mean 2 var 1" : "wrong") + ", |mean| " + sci(worst_mean) +
              ", |std-1| " + sci(worst_std) + ", tiny spread " + (center_only ? "centered only" : "rescaled")};
}

struct SeedRun {
  double full_ood = 0.0, full_ind = 0.0;
  double base_ood = 0.0;
  double random_ood = 0.0;
  double oracle_ind = 0.0;
  double no_ds_ood = 0.0, no_shared_ood = 0.0;
  double gain = 0.0, source_drop = 0.0, fraction = 0.0;
  bool frozen_ok = true;
  double core_secs = 0.0, expand_secs = 0.0;
};

std::pair<double, double> ood_ind(const ExperimentData& data, const std::map<std::string, EvalReport>& reports) {
  std::vector<double> ood, ind;
  for (const auto& [name, r] : reports) {
    const bool src = std::find(data.source.begin(), data.source.end(), name) != data.source.end();
    (src ? ind : ood).push_back(100.0 * r.pooled.f1());
  }
  return {mean_of(ood), mean_of(ind)};
}

double source_oracle_f1(const DmoeModel& model, const ExperimentData& data) {
  std::vector<double> f1;
  for (const auto& name : data.source) {
    const EvalOptions opts{.strategy = RoutingStrategy::oracle};
    f1.push_back(100.0 * evaluate(model, nullptr, nullptr, data.test.at(name), opts).pooled.f1());
  }
  return mean_of(f1);
}

bool frozen_bits_identical(const ParamStore& before, const ParamStore& after) {
  for (const Param& p : before.entries()) {
    const bool may_move = p.name.starts_with("experts_dc.") || p.name.starts_with("head.");
    if (may_move) continue;
    const auto id = after.find(p.name);
    if (!id || after[*id].values != p.values) return false;
  }
  return true;
}

// Everything criteria 5-7 need from one seed: corpus seed s, run seed s.
SeedRun run_seed(std::uint64_t s) {
  SeedRun out;
  Timer core;
  SyntheticConfig sc;
  sc.seed = s;
  const ExperimentData data = ExperimentData::from_corpus(generate_synthetic(sc));
  std::vector<std::string> domains = data.source;
  domains.insert(domains.end(), data.ood.begin(), data.ood.end());
  const PipelineConfig pc = PipelineConfig::desk().with_seed(s);

  auto train = [&](Ablation a) {
    PipelineConfig c = pc;
    c.arch = apply_ablation(c.arch, a);
    return train_pipeline(data, c);
  };
  auto rl = [&](const TrainedPipeline& tp) {
    const EvalOptions opts{.strategy = RoutingStrategy::rl, .m = pc.m, .seed = s};
    return ood_ind(data, evaluate_domains(tp.model, tp.router ? &*tp.router : nullptr, nullptr, data, domains, opts));
  };

  const TrainedPipeline full = train(Ablation::none);
  const TrainedPipeline base = train(Ablation::base);
  std::tie(out.full_ood, out.full_ind) = rl(full);
  out.base_ood = rl(base).first;
  const EvalOptions random_opts{.strategy = RoutingStrategy::random, .m = pc.m, .seed = s};
  out.random_ood = ood_ind(data, evaluate_domains(full.model, nullptr, nullptr, data, domains, random_opts)).first;
  const EvalOptions oracle_opts{.strategy = RoutingStrategy::oracle, .m = pc.m, .seed = s};
  out.oracle_ind = ood_ind(data, evaluate_domains(full.model, nullptr, nullptr, data, domains, oracle_opts)).second;
  out.core_secs = core.seconds();

  out.no_ds_ood = rl(train(Ablation::no_domain_specific)).first;
  out.no_shared_ood = rl(train(Ablation::no_shared)).first;

  // Expansion onto the first OOD domain, which the model has never seen.
  const std::string fresh = data.ood.front();
  const EvalOptions rl_opts{.strategy = RoutingStrategy::rl, .m = pc.m, .seed = s};
  const double before_new = 100.0 * evaluate(full.model, &*full.router, nullptr, data.test.at(fresh), rl_opts).pooled.f1();
  const double before_src = source_oracle_f1(full.model, data);
  Timer expand_timer;
  DmoeModel model = full.model;
  const ParamStore snapshot = model.params();
  ExpandConfig ecfg;
  ecfg.stage1 = pc.stage1;
  ecfg.stage1.seed = derive_seed(s, "expand");
  const ExpandResult r = expand_domain(model, fresh, data.train.at(fresh), data.val.at(fresh), ecfg);
  out.expand_secs = expand_timer.seconds();
  const double after_new = 100.0 * evaluate(model, nullptr, nullptr, data.test.at(fresh), oracle_opts).pooled.f1();
  out.gain = after_new - before_new;
  out.source_drop = before_src - source_oracle_f1(model, data);
  out.fraction = r.params.fraction;
  out.frozen_ok = frozen_bits_identical(snapshot, model.params());
  return out;
}

double mean_by(const std::vector<SeedRun>& runs, double SeedRun::*field) {
  double s = 0.0;
  for (const auto& r : runs) s += r.*field;
  return s / static_cast<double>(runs.size());
}

Outcome generalization(const std::vector<SeedRun>& runs) {
  const double full = mean_by(runs, &SeedRun::full_ood);
  const double base = mean_by(runs, &SeedRun::base_ood);
  const double random = mean_by(runs, &SeedRun::random_ood);
  const double ind = mean_by(runs, &SeedRun::full_ind);
  const double oracle = mean_by(runs, &SeedRun::oracle_ind);
  double secs = 0.0;
  for (const auto& r : runs) secs += r.core_secs;
  const bool ok = full >= base + 3.0 && full >= random + 1.0 && std::abs(ind - oracle) <= 1.0 && secs < 300.0;
  return {ok, "OOD F1 full " + fmt(full, 2) + " vs base " + fmt(base, 2) + " (+3 needed), random " + fmt(random, 2) +
                  " (+1 needed); IND full " + fmt(ind, 2) + " vs oracle " + fmt(oracle, 2) + " (<= 1); " +
                  fmt(secs, 1) + " s (< 300)"};
}

Outcome ablation_order(const std::vector<SeedRun>& runs) {
  const double full = mean_by(runs, &SeedRun::full_ood);
  const double no_ds = mean_by(runs, &SeedRun::no_ds_ood);
  const double no_shared = mean_by(runs, &SeedRun::no_shared_ood);
  return {full >= no_ds && full >= no_shared,
          "OOD F1 full " + fmt(full, 2) + ", no-ds " + fmt(no_ds, 2) + ", no-shared " + fmt(no_shared, 2)};
}

Outcome incremental(const std::vector<SeedRun>& runs) {
  const double gain = mean_by(runs, &SeedRun::gain);
  const double drop = mean_by(runs, &SeedRun::source_drop);
  const double fraction = mean_by(runs, &SeedRun::fraction);
  bool frozen = true;
  double secs = 0.0;
  for (const auto& r : runs) {
    frozen = frozen && r.frozen_ok;
    secs += r.expand_secs;
  }
  const bool ok = gain >= 10.0 && drop <= 2.0 && fraction <= 0.35 && frozen && secs < 120.0;
  return {ok, "new-domain F1 gain " + fmt(gain, 2) + " (>= 10), source oracle drop " + fmt(drop, 2) +
                  " (<= 2), trainable fraction " + fmt(fraction, 4) + " (<= 0.35), frozen " +
                  (frozen ? "bit-identical" : "CHANGED") + ", " + fmt(secs, 1) + " s (< 120)"};
}

// CLI helpers for criteria 8 and 9.
class Workspace {
 public:
  Workspace() {
    root_ = fs::temp_directory_path() / ("deer_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root_, ec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  std::string path(const std::string& name) const { return (root_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(DEER_CLI_PATH) + " " + args + " >" + path("stdout.log") + " 2>" + path("stderr.log");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

 private:
  fs::path root_;
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tree_contents(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + slurp(f.string());
  return all;
}

constexpr const char* kCliCorpus =
    R"({"n_source":2,"n_ood":1,"per_domain":120,"vocab_per_domain":100,"shared_machine_vocab":30,)"
    R"("quirk_vocab":15,"min_len":15,"max_len":40})";

// Trains the small model and policy both CLI criteria use.
bool prepare_cli(const Workspace& ws) {
  std::ofstream(ws.path("synth.json")) << kCliCorpus;
  return ws.run("synth --config " + ws.path("synth.json") + " --out " + ws.path("corpus") + " --seed 1") == 0 &&
         ws.run("train-dmoe --data " + ws.path("corpus") + " --out " + ws.path("model.ckpt") +
                " --dim 64 --m1 2 --m2 2 --expert-hidden 16 --head-hidden 16 --epochs 2 --lr 1e-3 --seed 1") == 0 &&
         ws.run("train-policy --model " + ws.path("model.ckpt") + " --data " + ws.path("corpus") + " --out " +
                ws.path("policy.ckpt") + " --epochs 3 --hidden 16 --seed 1") == 0;
}

// 8. Perturbation harness contract.
Outcome perturbation(const Workspace& ws) {
  const CorpusDir corpus = CorpusDir::open(ws.path("corpus"));
  const auto test = corpus.load_all(corpus.source, "test");
  const std::vector<std::string> vocab{"x"};
  bool identity = true;
  bool emptied = true;
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (auto kind : {PerturbKind::repeat, PerturbKind::remove, PerturbKind::replace}) {
      identity = identity && perturb(test[i].text, kind, 0.0, i, vocab) == test[i].text;
    }
    emptied = emptied && perturb(test[i].text, PerturbKind::remove, 1.0, i).empty();
  }
  const std::string common = "perturb-eval --model " + ws.path("model.ckpt") + " --policy " + ws.path("policy.ckpt") +
                             " --data " + ws.path("corpus") + " --seed 2";
  const int code = ws.run(common + " --kinds repeat,delete,replace --rate 0.15 --report " + ws.path("pe.json"));
  bool complete = code == 0;
  if (complete) {
    const auto j = nlohmann::json::parse(slurp(ws.path("pe.json")));
    complete = j.contains("clean") && j.at("clean").contains("pooled");
    for (const char* kind : {"repeat", "delete", "replace"}) {
      complete = complete && j.at("perturbed").contains(kind) && j.at("perturbed").at(kind).contains("pooled");
    }
  }
  const int code_all = ws.run(common + " --kinds delete --rate 1 --report " + ws.path("pe_all.json"));
  const bool ok = identity && emptied && complete && code_all == 0;
  return {ok, std::string("rate 0 ") + (identity ? "identity" : "changed text") + ", rate 0.15 report " +
                  (complete ? "has all three kinds" : "incomplete") + ", delete rate 1 " +
                  (emptied && code_all == 0 ? "empties texts without error" : "failed")};
}

// 9. Every subcommand twice with the same flags and seed.
Outcome determinism(const Workspace& ws) {
  const std::string corpus = ws.path("corpus");
  const std::string mp = "--model " + ws.path("model.ckpt") + " --policy " + ws.path("policy.ckpt");
  struct Case {
    std::string name;
    std::function<std::vector<std::string>(const std::string&)> commands;  // run tag -> invocations
    std::function<std::string(const std::string&)> artifacts;
  };
  const std::vector<Case> cases = {
      {"synth", [&](const std::string& t) -> std::vector<std::string> { return {"synth --config " + ws.path("synth.json") + " --out " + ws.path("syn" + t) + " --seed 5"}; },
       [&](const std::string& t) { return tree_contents(ws.path("syn" + t)); }},
      {"train-dmoe",
       [&](const std::string& t) -> std::vector<std::string> {
         return {"train-dmoe --data " + corpus + " --out " + ws.path("m" + t + ".ckpt") + " --report " + ws.path("td" + t + ".json") +
                " --dim 32 --m1 1 --m2 2 --expert-hidden 8 --head-hidden 8 --epochs 1 --lr 1e-3 --seed 3"};
       },
       [&](const std::string& t) { return slurp(ws.path("td" + t + ".json")) + slurp(ws.path("m" + t + ".ckpt")); }},
      {"train-policy",
       [&](const std::string& t) -> std::vector<std::string> {
         return {"train-policy --model " + ws.path("model.ckpt") + " --data " + corpus + " --out " + ws.path("p" + t + ".ckpt") +
                " --report " + ws.path("tp" + t + ".json") + " --epochs 2 --hidden 8 --seed 3"};
       },
       [&](const std::string& t) { return slurp(ws.path("tp" + t + ".json")) + slurp(ws.path("p" + t + ".ckpt")); }},
      {"evaluate",
       [&](const std::string& t) {
         std::vector<std::string> cmds;
         for (const char* s : {"rl", "oracle", "random", "classifier"}) {
           cmds.push_back("evaluate " + mp + " --data " + corpus + " --strategy " + s +
                          " --buckets --clf-epochs 1 --seed 3 --report " + ws.path(std::string("ev_") + s + t + ".json"));
         }
         return cmds;
       },
       [&](const std::string& t) {
         std::string all;
         for (const char* s : {"rl", "oracle", "random", "classifier"}) all += slurp(ws.path(std::string("ev_") + s + t + ".json"));
         return all;
       }},
      {"detect",
       [&](const std::string& t) -> std::vector<std::string> {
         return {"detect " + mp + " --input " + ws.path("corpus/ood-0/test.jsonl") + " --out " + ws.path("det" + t + ".jsonl")};
       },
       [&](const std::string& t) { return slurp(ws.path("det" + t + ".jsonl")); }},
      {"perturb-eval",
       [&](const std::string& t) -> std::vector<std::string> { return {"perturb-eval " + mp + " --data " + corpus + " --seed 3 --report " + ws.path("pe" + t + ".json")}; },
       [&](const std::string& t) { return slurp(ws.path("pe" + t + ".json")); }},
      {"ablate",
       [&](const std::string& t) -> std::vector<std::string> {
         return {"ablate --kind routing --data " + corpus + " --seeds 1 --preset desk --dim 32 --epochs 1 --policy-epochs 1 --report " +
                ws.path("ab" + t + ".json")};
       },
       [&](const std::string& t) { return slurp(ws.path("ab" + t + ".json")); }},
      {"expand",
       [&](const std::string& t) -> std::vector<std::string> {
         return {"expand " + mp + " --new-domain ood-0 --data " + corpus + " --out " + ws.path("x" + t + ".ckpt") +
                " --epochs 1 --lr 1e-3 --seed 3 --report " + ws.path("x" + t + ".json")};
       },
       [&](const std::string& t) { return slurp(ws.path("x" + t + ".json")) + slurp(ws.path("x" + t + ".ckpt")); }},
  };
  std::vector<std::string> bad;
  for (const auto& c : cases) {
    bool ran = true;
    for (const char* tag : {"a", "b"}) {
      for (const auto& cmd : c.commands(tag)) ran = ran && ws.run(cmd) == 0;
    }
    const std::string ra = c.artifacts("a");
    if (!ran || ra.empty() || ra != c.artifacts("b")) bad.push_back(c.name);
  }
  std::string detail = std::to_string(cases.size() - bad.size()) + "/" + std::to_string(cases.size()) +
                       " subcommands byte-identical";
  for (const auto& b : bad) detail += ", differs: " + b;
  return {bad.empty(), detail};
}

void report(int id, const std::string& name, const Outcome& o, bool& all_pass) {
  all_pass = all_pass && o.pass;
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name << ": " << o.detail << std::endl;
}

}  // namespace

int main() {
  bool all = true;
  report(1, "gradient-correctness", gradients(), all);
  report(2, "disentanglement-isolation", isolation(), all);
  report(3, "gating-ensemble-identities", identities(), all);
  report(4, "normalization-contracts", normalization(), all);

  std::vector<SeedRun> runs;
  for (std::uint64_t s = 0; s < 3; ++s) runs.push_back(run_seed(s));
  report(5, "synthetic-generalization", generalization(runs), all);
  report(6, "ablation-ordering", ablation_order(runs), all);
  report(7, "incremental-adaptation", incremental(runs), all);

  const Workspace ws;
  if (!prepare_cli(ws)) {
    report(8, "perturbation-harness", {false, "could not train the CLI fixture: " + slurp(ws.path("stderr.log"))}, all);
    report(9, "cli-determinism", {false, "could not train the CLI fixture"}, all);
  } else {
    report(8, "perturbation-harness", perturbation(ws), all);
    report(9, "cli-determinism", determinism(ws), all);
  }
  return all ? 0 : 1;
}
