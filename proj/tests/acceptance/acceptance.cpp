// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <skipreward/cli.hpp>
#include <skipreward/gradient_check.hpp>

#include "test_support.hpp"

using namespace skipreward;
namespace fs = std::filesystem;

namespace {

constexpr Perspective kP = Perspective::alignment;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const Objective objectives[] = {Objective::bt, Objective::gpm, Objective::ce};
  double worst = 0.0;
  std::string where;
  for (int i = 0; i < 20; ++i) {
    ModelConfig mc = testsupport::tiny_config(i % 2 == 0 ? 8 : 16);
    mc.n_layers = 1 + static_cast<int>(rng() % 2);
    mc.n_heads = (rng() % 2) ? 2 : 1;
    mc.lora_rank = 1 + static_cast<int>(rng() % 3);
    mc.lora_alpha = 1.0 + static_cast<double>(rng() % 4);
    const Objective obj = objectives[i % 3];
    HeadConfig hc = testsupport::head_for(obj);
    if (obj == Objective::gpm && rng() % 2) hc.output_dim = 4;
    hc.pooling = rng() % 2 ? Pooling::eos : Pooling::mean;
    hc.visual_layer = static_cast<int>(rng() % (mc.n_layers + 1));
    hc.n_heads = (rng() % 2) ? 1 : 0;
    auto model = RewardModel<double>::random(mc, 100 + i);
    model.add_perspective(kP, hc, 200 + i);
    std::mt19937_64 r(300 + i);
    randomize_adapter(model.adapter(kP), r);
    const auto pairs = testsupport::tiny_pairs(400 + i, 3);
    TrainConfig tc;
    tc.objective = obj;
    tc.temperature = 0.5 + 0.25 * (i % 3);
    GradCheckConfig gc;
    gc.seed = 500 + i;
    const auto res = gradient_check(model, kP, std::span<const PairExample>(pairs), tc, gc);
    if (res.max_rel_error > worst) {
      worst = res.max_rel_error;
      where = "config " + std::to_string(i) + " " + res.worst;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          "max rel error " + fmt("%.3g", worst) + " at " + where + ", " + fmt("%.1f s", secs)};
}

Outcome zero_init_anchor() {
  auto model = RewardModel<float>::random(ModelConfig{}, 1);
  model.add_perspective(kP, HeadConfig{}, 2);
  const auto pairs = gen_synthetic_corpus(3, 32, CorpusSpec{}).pairs;
  const double loss = batch_loss(model, kP, std::span<const PairExample>(pairs), TrainConfig{});
  const double err = std::abs(loss - std::log(2.0));
  return {err <= 1e-6, "loss " + fmt("%.9f", loss) + ", |loss - ln2| = " + fmt("%.2g", err)};
}

CorpusSpec separable_alignment() {
  CorpusSpec s;
  s.n_corruption_levels = 1;
  s.position_jitter = false;
  return s;
}

TrainConfig end_to_end_train_config() {
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 8;
  tc.grad_accum = 1;
  tc.epochs = 1;
  return tc;
}

double heldout_accuracy(const RewardModel<float>& model, const std::vector<PairExample>& pairs) {
  std::vector<PairRecord> recs;
  recs.reserve(pairs.size());
  for (const auto& p : pairs) {
    const double sc = model.score(p.prompt, p.chosen, kP).scalar();
    const double sr = model.score(p.rejected_leg_prompt(), p.rejected, kP).scalar();
    recs.push_back({sc - sr, Judgment::chosen});
  }
  return accuracy_without_ties(recs);
}

Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  const CorpusSpec spec = separable_alignment();
  auto model = RewardModel<float>::random(ModelConfig{}, 11);
  model.add_perspective(kP, HeadConfig{}, 12);
  train(model, kP, gen_synthetic_corpus(100, 2000, spec).pairs, end_to_end_train_config());
  const double acc = heldout_accuracy(model, gen_synthetic_corpus(200, 500, spec).pairs);
  const double secs = seconds_since(t0);
  return {acc >= 0.95 && secs < 600.0, "held-out accuracy " + fmt("%.3f", acc) + ", " + fmt("%.1f s", secs)};
}

Outcome skipca_vs_linear() {
  const auto t0 = Clock::now();
  CorpusSpec spec;
  spec.binding = true;
  spec.n_distractors = 3;
  spec.n_corruption_levels = 1;
  spec.position_jitter = false;
  double sum_skip = 0.0, sum_lin = 0.0;
  std::string per_seed;
  for (int s = 0; s < 5; ++s) {
    const auto train_pairs = gen_synthetic_corpus(1000 + s, 1000, spec).pairs;
    const auto test_pairs = gen_synthetic_corpus(2000 + s, 300, spec).pairs;
    double acc[2];
    for (int h = 0; h < 2; ++h) {
      HeadConfig hc;
      hc.kind = h == 0 ? HeadKind::skipca : HeadKind::linear;
      auto model = RewardModel<float>::random(ModelConfig{}, 3000 + s);
      model.add_perspective(kP, hc, 4000 + s);
      TrainConfig tc = end_to_end_train_config();
      tc.seed = s;
      train(model, kP, train_pairs, tc);
      acc[h] = heldout_accuracy(model, test_pairs);
    }
    sum_skip += acc[0];
    sum_lin += acc[1];
    per_seed += fmt(" %.3f", acc[0]) + fmt("/%.3f", acc[1]);
  }
  const double gap = 100.0 * (sum_skip - sum_lin) / 5.0;
  return {gap >= 5.0, "skipca " + fmt("%.3f", sum_skip / 5) + " vs linear " + fmt("%.3f", sum_lin / 5) + ", gap " +
                          fmt("%.1f points", gap) + " (per seed:" + per_seed + "), " +
                          fmt("%.0f s", seconds_since(t0))};
}

Outcome objective_algebra() {
  std::mt19937_64 rng(55);
  std::size_t antisym_fail = 0, antisym_n = 0;
  std::uniform_int_distribution<int> iv(-1000, 1000);
  for (int m : {2, 4, 6, 8}) {
    const SkewOperator R(m);
    for (int i = 0; i < 20000; ++i) {
      std::vector<double> a(m), b(m);
      for (auto& x : a) x = iv(rng);
      for (auto& x : b) x = iv(rng);
      ++antisym_n;
      antisym_fail += gpm_score_diff(a, b, R) != -gpm_score_diff(b, a, R);
      antisym_fail += gpm_score_diff(a, a, R) != 0.0;
    }
  }
  const double ulp = std::nextafter(1.0, 2.0) - 1.0;
  std::size_t comp_fail = 0;
  std::uniform_real_distribution<double> sv(-50.0, 50.0);
  for (int i = 0; i < 1000000; ++i) {
    const double a = sv(rng), b = sv(rng);
    comp_fail += std::abs(preference_prob(a, b) + preference_prob(b, a) - 1.0) > ulp;
  }
  std::size_t mono_fail = 0;
  std::uniform_real_distribution<double> dv(-60.0, 60.0);
  for (int i = 0; i < 100000; ++i) {
    double x = dv(rng), y = dv(rng);
    if (x > y) std::swap(x, y);
    // larger chosen-minus-rejected margin never costs more
    mono_fail += bt_loss(x, 0.0) < bt_loss(y, 0.0);
    mono_fail += bt_loss(0.0, x) > bt_loss(0.0, y);
  }
  return {antisym_fail == 0 && comp_fail == 0 && mono_fail == 0,
          std::to_string(antisym_fail) + " antisymmetry failures over " + std::to_string(antisym_n) + " pairs, " +
              std::to_string(comp_fail) + " complement failures over 1e6, " + std::to_string(mono_fail) +
              " monotonicity violations over 1e5"};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(66);
  std::uniform_int_distribution<int> len(2, 50);
  int fails = 0;
  double worst_pearson = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = len(rng);
    auto m = testsupport::tie_heavy_scores(rng, n, inst % 2 ? 5 : 100000);
    auto h = testsupport::tie_heavy_scores(rng, n, inst % 3 ? 4 : 100000);
    if (std::all_of(m.begin(), m.end(), [&](double x) { return x == m[0]; })) m[0] += 1;
    if (std::all_of(h.begin(), h.end(), [&](double x) { return x == h[0]; })) h[0] += 1;
    fails += kendall_tau(m, h) != testsupport::brute_tau_b(m, h);
    fails += pairwise_acc(m, h) != testsupport::brute_pairwise_acc(m, h);
    const double dp = std::abs(pearson(m, h) - testsupport::brute_pearson(m, h));
    worst_pearson = std::max(worst_pearson, dp);
    fails += dp > 1e-12;

    std::unique_ptr<bool[]> pred(new bool[n]), lab(new bool[n]);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = m[i] > m[0];
      lab[i] = h[i] > h[0];
    }
    for (std::size_t i = 0; i < n; ++i) {
      tp += pred[i] && lab[i];
      fp += pred[i] && !lab[i];
      fn += !pred[i] && lab[i];
    }
    const double want = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    fails += std::abs(f1_binary({pred.get(), n}, {lab.get(), n}) - want) > 1e-15;
  }
  return {fails == 0, std::to_string(fails) + " mismatches over 100 instances, worst pearson deviation " +
                          fmt("%.2g", worst_pearson)};
}

Outcome steering_gain() {
  const auto t0 = Clock::now();
  const ToyDiffusion process = ToyDiffusion::four_modes();
  const RewardFn reward = distance_reward({2.0, 2.0});
  SteeringConfig k1, k4;
  k1.k = 1;
  k4.k = 4;
  k1.lambda = k4.lambda = 10.0;
  const int n = 200;
  std::vector<double> diff(n);
  double m1 = 0.0, m4 = 0.0;
  for (int s = 0; s < n; ++s) {
    const double r1 = smc_steer(process, k1, reward, s).reward;
    const double r4 = smc_steer(process, k4, reward, s).reward;
    m1 += r1 / n;
    m4 += r4 / n;
    diff[s] = r4 - r1;
  }
  const double mean_d = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
  double var = 0.0;
  for (double d : diff) var += (d - mean_d) * (d - mean_d);
  var /= (n - 1);
  const double t = mean_d / std::sqrt(var / n);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(n - 1), std::abs(t)));
  const double rel = (m4 - m1) / std::abs(m1);

  // lambda = 0 with resampling at every step: parents must be uniform.
  SteeringConfig flat;
  flat.lambda = 0.0;
  std::vector<double> counts(flat.k, 0.0);
  for (int s = 0; s < n; ++s)
    for (const auto& parents : smc_steer(process, flat, reward, 10000 + s).ancestry)
      for (auto i : parents) counts[i] += 1;
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  double chi = 0.0;
  for (double c : counts) chi += (c - total / flat.k) * (c - total / flat.k) / (total / flat.k);
  const double p_chi = boost::math::cdf(boost::math::complement(boost::math::chi_squared(flat.k - 1), chi));
  const double secs = seconds_since(t0);
  return {rel >= 0.10 && mean_d > 0 && p < 0.01 && p_chi > 0.01 && secs < 300.0,
          "K=1 " + fmt("%.3f", m1) + " -> K=4 " + fmt("%.3f", m4) + " (" + fmt("%+.1f%%", 100 * rel) +
              "), paired t p=" + fmt("%.2g", p) + "; lambda=0 chi-square p=" + fmt("%.3f", p_chi) + ", " +
              fmt("%.1f s", secs)};
}

Outcome freeze_and_adapters() {
  auto model = testsupport::tiny_model<float>(7);
  const auto frozen = testsupport::frozen_snapshot(model);
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.batch_size = 2;
  tc.grad_accum = 1;
  const auto st = train(model, kP, testsupport::tiny_pairs(8, 1000), tc);
  const bool frozen_ok = st.step == 500 && testsupport::frozen_snapshot(model) == frozen;

  const auto bb = Backbone<double>::random(ModelConfig{}, 9);
  std::mt19937_64 rng(10);
  auto ad = bb.new_adapter(rng);
  const auto pair = gen_synthetic_corpus(11, 1, CorpusSpec{}).pairs[0];
  const auto base = bb.forward(pair.prompt, pair.chosen);
  const auto zero = bb.forward(pair.prompt, pair.chosen, &ad);
  bool zero_ok = base.hidden.size() == zero.hidden.size();
  for (std::size_t l = 0; zero_ok && l < base.hidden.size(); ++l) zero_ok = base.hidden[l] == zero.hidden[l];

  ad.for_each([&rng](const std::string&, Matrix<double>& m) { detail::fill_normal(m, rng, 0.1); });
  const auto dynamic = bb.forward(pair.prompt, pair.chosen, &ad);
  const auto merged = merge_adapter(bb, ad).forward(pair.prompt, pair.chosen);
  double scale = 0.0;
  for (double v : dynamic.hidden.back().values()) scale = std::max(scale, std::abs(v));
  const double rel = testsupport::max_abs_diff(dynamic.hidden.back(), merged.hidden.back()) / scale;
  return {frozen_ok && zero_ok && rel <= 1e-6,
          std::string("frozen weights ") + (frozen_ok ? "bit-identical" : "CHANGED") + " after " +
              std::to_string(st.step) + " steps; merge rel diff " + fmt("%.2g", rel) + "; zero adapter " +
              (zero_ok ? "bitwise equal" : "DIFFERS")};
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "skipreward");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "skipreward_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&dir](const std::string& n) { return (dir / n).string(); };
  const json cfg = {{"schema_version", 1},
                    {"model", to_json(testsupport::tiny_config())},
                    {"corpus", {{"height", 8}, {"width", 8}}},
                    {"train", {{"learning_rate", 1e-2}, {"batch_size", 4}, {"grad_accum", 2}}}};
  write_file_atomic(dir / "cfg.json", cfg.dump());
  int rc = run_cli({"gen-data", "--config", p("cfg.json"), "--out", p("d.jsonl"), "--n", "80", "--seed", "3"});
  for (const char* run : {"a", "b"}) {
    const std::string r = run;
    rc |= run_cli({"train", "--config", p("cfg.json"), "--data", p("d.jsonl"), "--seed", "5", "--out-checkpoint",
                   p(r + ".ckpt.json"), "--loss-csv", p(r + ".loss.csv")});
    rc |= run_cli({"steer", "--checkpoint", p(r + ".ckpt.json"), "--seed", "7", "--seeds", "3", "--out", p(r + "_ckpt")});
    rc |= run_cli({"steer", "--oracle", "--seed", "7", "--seeds", "5", "--out", p(r + "_oracle")});
  }
  if (rc != 0) return {false, "a CLI command failed"};
  int same = 0, total = 0;
  for (const char* suffix : {".loss.csv", ".ckpt.json", "_ckpt_diagnostics.csv", "_ckpt.csv", "_oracle_diagnostics.csv",
                             "_oracle.csv"}) {
    ++total;
    same += read_file(p(std::string("a") + suffix)) == read_file(p(std::string("b") + suffix));
  }
  return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                             " output files byte-identical across reruns (loss curve, checkpoint, diagnostics)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"zero-init anchor", zero_init_anchor},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"cross-attention head vs linear head", skipca_vs_linear},
      {"objective algebra", objective_algebra},
      {"metric oracles", metric_oracles},
      {"steering gain", steering_gain},
      {"freeze and adapter contracts", freeze_and_adapters},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
