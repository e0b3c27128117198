#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "curation.hpp"
#include "dataset_io.hpp"
#include "evaluation.hpp"
#include "fk_steering.hpp"
#include "gradient_check.hpp"
#include "training.hpp"

namespace skipreward {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

// Relative output paths are placed under this directory when it is set.
inline constexpr const char* kOutDirEnv = "SKIPREWARD_OUT_DIR";

inline std::filesystem::path output_path(const std::string& p) {
  std::filesystem::path path(p);
  const char* dir = std::getenv(kOutDirEnv);
  if (dir && *dir && path.is_relative()) return std::filesystem::path(dir) / path;
  return path;
}

// A flat report: ordered (key, value) rows written as JSON and CSV.
class Report {
 public:
  void add(const std::string& key, const json& value) { rows_.emplace_back(key, value); }

  std::string to_json_text() const {
    json j = json::object();
    for (const auto& [k, v] : rows_) j[k] = v;
    return j.dump(2) + "\n";
  }

  std::string to_csv() const {
    std::string out = "key,value\n";
    for (const auto& [k, v] : rows_) out += k + "," + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
    return out;
  }

  void write(const std::string& prefix) const {
    write_file_atomic(output_path(prefix + ".json"), to_json_text());
    write_file_atomic(output_path(prefix + ".csv"), to_csv());
  }

 private:
  std::vector<std::pair<std::string, json>> rows_;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Maps a 2-D latent onto a synthetic image: the quadrant picks shape and
// color, distance from the nearest mode center picks the corruption level.
inline SyntheticImage latent_image(std::span<const double> x, const ModelConfig& mc) {
  CorpusSpec spec;
  spec.height = mc.image_height;
  spec.width = mc.image_width;
  spec.position_jitter = false;
  ImageAttributes a;
  a.shape = x[0] >= 0.0 ? 0 : 1;
  a.color = x[1] >= 0.0 ? 0 : 1;
  const double dx = std::abs(x[0]) - 2.0;
  const double dy = std::abs(x[1]) - 2.0;
  a.corruption = std::min(spec.n_corruption_levels - 1, static_cast<int>(std::sqrt(dx * dx + dy * dy)));
  std::mt19937_64 rng(0);
  return render_image(a, spec, rng);
}

template <class T>
RewardFn model_reward(const RewardModel<T>& model, Perspective p, const std::string& prompt) {
  if (model.adapter(p).head_config.mode() != RewardMode::scalar)
    throw ConfigError("steering needs a scalar reward head");
  TextPrompt tp = TextPrompt::from_text(prompt);
  return [&model, p, tp](std::span<const double> x) {
    return static_cast<double>(model.score(tp, latent_image(x, model.config()), p).scalar());
  };
}

namespace detail {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string report;
};

inline RunConfig load_config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (schema_version 1)");
  cmd->add_option("--seed", o.seed, "Seed for all randomness");
  cmd->add_option("--report", o.report, "Report path prefix (writes PREFIX.json and PREFIX.csv)");
}

template <class T>
std::vector<PairRecord> pair_records(const RewardModel<T>& model, Perspective p, const std::vector<PairExample>& pairs) {
  const HeadConfig& hc = model.adapter(p).head_config;
  std::optional<SkewOperator> R;
  if (hc.mode() == RewardMode::embedding) R.emplace(hc.output_dim);
  std::vector<PairRecord> out;
  for (const auto& ex : pairs) {
    const auto oc = model.score(ex.prompt, ex.chosen, p);
    const auto orr = model.score(ex.rejected_leg_prompt(), ex.rejected, p);
    double diff;
    if (R) {
      const std::vector<double> rc(oc.values.begin(), oc.values.end());
      const std::vector<double> rr(orr.values.begin(), orr.values.end());
      diff = gpm_score_diff(rc, rr, *R);
    } else {
      diff = static_cast<double>(oc.scalar()) - static_cast<double>(orr.scalar());
    }
    out.push_back({diff, Judgment::chosen});
  }
  return out;
}

template <class Example>
std::vector<Example> of_perspective(const std::vector<Example>& v, Perspective p) {
  std::vector<Example> out;
  for (const auto& ex : v)
    if (ex.perspective == p) out.push_back(ex);
  return out;
}

}  // namespace detail

// Runs one subcommand; returns the process exit status.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"skipreward: multimodal preference reward model toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  detail::CommonOptions common;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic preference dataset");
  std::string gen_out, gen_persp = "";
  int gen_n = 1000, gen_scored = -1;
  gen->add_option("--out", gen_out, "Output dataset (JSON lines)")->required();
  gen->add_option("--n", gen_n, "Number of pairs (and labeled images)");
  gen->add_option("--scored", gen_scored, "Number of scored images (default: --n)");
  gen->add_option("--perspective", gen_persp, "alignment|fidelity|safety|overall");
  detail::add_common(gen, common);

  // mine-negatives
  auto* mine = app.add_subcommand("mine-negatives", "Append hard-negative pairs");
  std::string mine_in, mine_out;
  mine->add_option("--data", mine_in)->required();
  mine->add_option("--out", mine_out)->required();
  detail::add_common(mine, common);

  // filter
  auto* filt = app.add_subcommand("filter", "Drop training examples whose prompts overlap a holdout set");
  std::string filt_in, filt_holdout, filt_out;
  double filt_threshold = 0.2;
  filt->add_option("--data", filt_in)->required();
  filt->add_option("--holdout", filt_holdout)->required();
  filt->add_option("--out", filt_out)->required();
  filt->add_option("--threshold", filt_threshold, "Normalized edit distance below which a prompt overlaps");
  detail::add_common(filt, common);

  // train
  auto* tr = app.add_subcommand("train", "Train one perspective's adapter");
  std::string tr_data, tr_ckpt, tr_persp = "alignment", tr_init, tr_loss_csv, tr_objective;
  std::optional<double> tr_lr;
  std::optional<int> tr_batch, tr_accum, tr_epochs;
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--out-checkpoint", tr_ckpt)->required();
  tr->add_option("--perspective", tr_persp);
  tr->add_option("--init-checkpoint", tr_init, "Add the adapter to an existing model");
  tr->add_option("--loss-csv", tr_loss_csv, "Loss curve (default: CHECKPOINT.loss.csv)");
  tr->add_option("--objective", tr_objective, "bt|gpm|ce");
  tr->add_option("--lr", tr_lr);
  tr->add_option("--batch-size", tr_batch);
  tr->add_option("--grad-accum", tr_accum);
  tr->add_option("--epochs", tr_epochs);
  detail::add_common(tr, common);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_persp = "alignment", ev_metrics, ev_out;
  std::optional<double> ev_tie_eps;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--perspective", ev_persp);
  ev->add_option("--metrics", ev_metrics, "Comma-separated subset of the metrics");
  ev->add_option("--tie-eps", ev_tie_eps);
  ev->add_option("--out", ev_out, "Report prefix")->required();
  detail::add_common(ev, common);

  // steer
  auto* st = app.add_subcommand("steer", "Reward-steered sampling of the toy process");
  std::string st_ckpt, st_out, st_persp = "alignment", st_selection, st_resample, st_prompt;
  bool st_oracle = false;
  std::optional<int> st_k, st_steps;
  std::optional<double> st_lambda, st_eta;
  int st_seeds = 1;
  std::vector<double> st_target;
  auto* st_ckpt_opt = st->add_option("--checkpoint", st_ckpt);
  auto* st_oracle_opt = st->add_flag("--oracle", st_oracle, "Use the analytic reward -||x - target||^2");
  st_ckpt_opt->excludes(st_oracle_opt);
  st->add_option("--perspective", st_persp);
  st->add_option("--prompt", st_prompt);
  st->add_option("--k", st_k);
  st->add_option("--lambda", st_lambda);
  st->add_option("--steps", st_steps);
  st->add_option("--eta", st_eta);
  st->add_option("--seeds", st_seeds, "Number of consecutive seeds to run");
  st->add_option("--target", st_target)->expected(2)->delimiter(',');
  st->add_option("--selection", st_selection, "argmax_reward|weighted_sample");
  st->add_option("--resample", st_resample, "every_step|ess_threshold");
  st->add_option("--out", st_out, "Output prefix")->required();
  detail::add_common(st, common);

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check on a tiny model");
  int gc_d_model = 8, gc_samples = 64, gc_pairs = 4;
  double gc_eps = 1e-5;
  std::string gc_objective = "bt";
  gc->add_option("--d-model", gc_d_model);
  gc->add_option("--objective", gc_objective);
  gc->add_option("--epsilon", gc_eps);
  gc->add_option("--samples", gc_samples);
  gc->add_option("--pairs", gc_pairs);
  detail::add_common(gc, common);

  if (argc < 2) {
    out << app.help();
    return kExitUsage;
  }
  {
    const std::string first = argv[1];
    if (first != "--help" && first != "-h" && first != "--help-all" && !app.get_subcommand_no_throw(first)) {
      err << "error: usage error: unknown subcommand '" << first << "'\n" << app.help();
      return kExitUsage;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    RunConfig cfg = detail::load_config_or_default(common.config_path);
    const std::uint64_t seed = common.seed.value_or(cfg.train.seed);

    if (*gen) {
      CorpusSpec spec = cfg.corpus;
      if (!gen_persp.empty()) spec.perspective = parse_perspective(gen_persp);
      if (gen_n < 1) throw ConfigError("--n must be >= 1");
      spec.validate();
      const Corpus c = gen_synthetic_corpus(seed, gen_n, spec);
      Dataset d{c.pairs, c.binary, {}};
      const int n_scored = gen_scored < 0 ? gen_n : gen_scored;
      if (n_scored > 0) d.scored = gen_scored_examples(seed + 1, n_scored, spec);
      save_dataset(output_path(gen_out), d);
      Report r;
      r.add("command", "gen-data");
      r.add("perspective", to_string(spec.perspective));
      r.add("seed", seed);
      r.add("pairs", d.pairs.size());
      r.add("binary", d.binary.size());
      r.add("scored", d.scored.size());
      r.write(common.report.empty() ? gen_out + ".report" : common.report);
      out << "wrote " << d.pairs.size() << " pairs, " << d.binary.size() << " labeled and " << d.scored.size()
          << " scored images to " << gen_out << "\n";
      return kExitOk;
    }

    if (*mine) {
      Dataset d = load_dataset(mine_in);
      MiningStats stats;
      d.pairs = mine_hard_negatives(d.pairs, &stats);
      save_dataset(output_path(mine_out), d);
      Report r;
      r.add("command", "mine-negatives");
      r.add("negative_prompt_pairs", stats.negative_prompt_pairs);
      r.add("negative_image_pairs", stats.negative_image_pairs);
      r.add("pairs", d.pairs.size());
      r.write(common.report.empty() ? mine_out + ".report" : common.report);
      out << "mined " << stats.negative_prompt_pairs << " negative-prompt and " << stats.negative_image_pairs
          << " negative-image pairs\n";
      return kExitOk;
    }

    if (*filt) {
      const Dataset d = load_dataset(filt_in);
      const Dataset h = load_dataset(filt_holdout);
      const Dataset f = filter_overlap(d, h, filt_threshold);
      save_dataset(output_path(filt_out), f);
      Report r;
      r.add("command", "filter");
      r.add("threshold", filt_threshold);
      r.add("pairs_kept", f.pairs.size());
      r.add("pairs_removed", d.pairs.size() - f.pairs.size());
      r.add("binary_kept", f.binary.size());
      r.add("binary_removed", d.binary.size() - f.binary.size());
      r.add("scored_kept", f.scored.size());
      r.add("scored_removed", d.scored.size() - f.scored.size());
      r.write(common.report.empty() ? filt_out + ".report" : common.report);
      out << "kept " << f.pairs.size() << " of " << d.pairs.size() << " pairs\n";
      return kExitOk;
    }

    if (*tr) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      if (!tr_objective.empty()) tc.objective = parse_objective(tr_objective);
      if (tr_lr) tc.learning_rate = *tr_lr;
      if (tr_batch) tc.batch_size = *tr_batch;
      if (tr_accum) tc.grad_accum = *tr_accum;
      if (tr_epochs) tc.epochs = *tr_epochs;
      tc.validate();
      const Perspective p = parse_perspective(tr_persp);
      HeadConfig hc = cfg.head;
      if (tc.objective == Objective::gpm && hc.output_dim == 1) hc.output_dim = 2;
      check_objective_mode(tc.objective, hc);

      RewardModel<float> model;
      if (!tr_init.empty()) {
        model = load_checkpoint<float>(tr_init);
        if (!common.config_path.empty()) check_config_hash(cfg.model, model.config());
      } else {
        model = RewardModel<float>::random(cfg.model, seed);
      }
      model.add_perspective(p, hc, seed + 1);
      const Dataset d = load_dataset(tr_data);
      TrainState<float> state;
      const auto binary = detail::of_perspective(d.binary, p);
      const auto pairs = detail::of_perspective(d.pairs, p);
      if (tc.objective == Objective::ce && !binary.empty()) {
        state = train(model, p, binary, tc);
      } else {
        if (pairs.empty()) throw ConfigError(std::string("no training pairs for perspective ") + to_string(p));
        state = train(model, p, pairs, tc);
      }
      save_checkpoint(output_path(tr_ckpt), model);
      const std::string loss_path = tr_loss_csv.empty() ? tr_ckpt + ".loss.csv" : tr_loss_csv;
      write_file_atomic(output_path(loss_path), loss_curve_csv(state.history));
      const TrainableSelection sel = trainable_params(model, p);
      Report r;
      r.add("command", "train");
      r.add("perspective", to_string(p));
      r.add("objective", to_string(tc.objective));
      r.add("seed", seed);
      r.add("micro_steps", state.micro_steps);
      r.add("optimizer_steps", state.step);
      r.add("initial_loss", state.history.front().loss);
      r.add("final_loss", state.history.back().loss);
      r.add("trainable_parameters", sel.trainable);
      r.add("total_parameters", sel.total);
      r.add("trainable_fraction", sel.fraction());
      r.add("config_hash", detail::hash_hex(model.config().hash()));
      r.write(common.report.empty() ? tr_ckpt + ".report" : common.report);
      out << "trained " << to_string(p) << " for " << state.step << " optimizer steps; final loss "
          << format_double(state.history.back().loss) << "\n";
      return kExitOk;
    }

    if (*ev) {
      const RewardModel<float> model = load_checkpoint<float>(ev_ckpt);
      if (!common.config_path.empty()) check_config_hash(cfg.model, model.config());
      const Perspective p = parse_perspective(ev_persp);
      model.adapter(p);
      const double tie_eps = ev_tie_eps.value_or(cfg.eval.tie_eps);
      if (!(tie_eps >= 0.0)) throw ConfigError("--tie-eps must be >= 0");
      const Dataset d = load_dataset(ev_data);
      const auto pairs = detail::of_perspective(d.pairs, p);
      const auto binary = detail::of_perspective(d.binary, p);
      const auto scored = detail::of_perspective(d.scored, p);
      const bool scalar = model.adapter(p).head_config.mode() == RewardMode::scalar;

      std::vector<std::string> wanted = detail::split_csv(ev_metrics);
      const bool explicit_list = !wanted.empty();
      if (!explicit_list)
        wanted = {"accuracy_with_ties", "accuracy_without_ties", "pearson", "kendall_tau", "pairwise_acc", "f1"};
      const std::vector<std::string> known = {"accuracy_with_ties", "accuracy_without_ties", "pearson",
                                              "kendall_tau",        "pairwise_acc",          "f1"};
      for (const auto& m : wanted)
        if (std::find(known.begin(), known.end(), m) == known.end()) throw ConfigError("unknown metric '" + m + "'");

      std::vector<MetricValue> metrics;
      std::vector<PairRecord> records;
      if (!pairs.empty()) records = detail::pair_records(model, p, pairs);
      std::vector<double> model_scores, human_scores;
      if (scalar)
        for (const auto& ex : scored) {
          model_scores.push_back(static_cast<double>(model.score(ex.prompt, ex.image, p).scalar()));
          human_scores.push_back(ex.score);
        }
      for (const auto& m : wanted) {
        const bool pair_metric = m == "accuracy_with_ties" || m == "accuracy_without_ties";
        const bool list_metric = m == "pearson" || m == "kendall_tau" || m == "pairwise_acc";
        if (pair_metric && records.empty()) {
          if (explicit_list) throw ConfigError("metric " + m + " needs preference pairs");
          continue;
        }
        if (list_metric && model_scores.size() < 2) {
          if (explicit_list) throw ConfigError("metric " + m + " needs scored images and a scalar head");
          continue;
        }
        if (m == "f1" && (binary.empty() || !scalar)) {
          if (explicit_list) throw ConfigError("metric f1 needs labeled images and a scalar head");
          continue;
        }
        if (m == "accuracy_with_ties") metrics.push_back({m, accuracy_with_ties(records, tie_eps), records.size()});
        if (m == "accuracy_without_ties") metrics.push_back({m, accuracy_without_ties(records), records.size()});
        if (m == "pearson") metrics.push_back({m, pearson(model_scores, human_scores), model_scores.size()});
        if (m == "kendall_tau") metrics.push_back({m, kendall_tau(model_scores, human_scores), model_scores.size()});
        if (m == "pairwise_acc") metrics.push_back({m, pairwise_acc(model_scores, human_scores), model_scores.size()});
        if (m == "f1") {
          const std::size_t n = binary.size();
          std::unique_ptr<bool[]> pred(new bool[n]), lab(new bool[n]);
          for (std::size_t i = 0; i < n; ++i) {
            pred[i] = model.score(binary[i].prompt, binary[i].image, p).scalar() > 0.0f;
            lab[i] = binary[i].label;
          }
          metrics.push_back({m, f1_binary({pred.get(), n}, {lab.get(), n}), n});
        }
      }
      if (metrics.empty()) throw ConfigError("no metric applies to this data");

      json j;
      j["command"] = "eval";
      j["perspective"] = to_string(p);
      j["tie_eps"] = tie_eps;
      j["config_hash"] = detail::hash_hex(model.config().hash());
      j["metrics"] = json::array();
      std::string csv = "metric,value,n\n";
      for (const auto& m : metrics) {
        j["metrics"].push_back({{"name", m.name}, {"value", m.value}, {"n", m.n}});
        csv += m.name + "," + format_double(m.value) + "," + std::to_string(m.n) + "\n";
        out << m.name << " " << format_double(m.value) << " (n=" << m.n << ")\n";
      }
      write_file_atomic(output_path(ev_out + ".json"), j.dump(2) + "\n");
      write_file_atomic(output_path(ev_out + ".csv"), csv);
      return kExitOk;
    }

    if (*st) {
      SteerSettings s = cfg.steer;
      if (st_k) s.smc.k = *st_k;
      if (st_lambda) s.smc.lambda = *st_lambda;
      if (st_steps) s.process.steps = *st_steps;
      if (st_eta) s.process.eta = *st_eta;
      if (!st_target.empty()) s.process.target = st_target;
      if (!st_selection.empty()) s.smc.selection = parse_final_selection(st_selection);
      if (!st_resample.empty()) s.smc.resample_rule = parse_resample_rule(st_resample);
      if (!st_prompt.empty()) s.prompt = st_prompt;
      if (st_seeds < 1) throw ConfigError("--seeds must be >= 1");
      if (!st_oracle && st_ckpt.empty()) throw ConfigError("steer needs --oracle or --checkpoint");
      s.smc.validate();
      s.process.validate();
      const ToyDiffusion process = ToyDiffusion::four_modes(s.process.steps, s.process.eta);

      std::optional<RewardModel<float>> model;
      RewardFn reward;
      if (st_oracle) {
        reward = distance_reward(s.process.target);
      } else {
        model = load_checkpoint<float>(st_ckpt);
        if (!common.config_path.empty()) check_config_hash(cfg.model, model->config());
        reward = model_reward(*model, parse_perspective(st_persp), s.prompt);
      }

      std::string diag = "seed,step,ess,mean_reward,max_reward,resampled\n";
      std::string finals = "seed,reward,x0,x1\n";
      double mean_final = 0.0;
      for (int i = 0; i < st_seeds; ++i) {
        const std::uint64_t sd = seed + static_cast<std::uint64_t>(i);
        const SteerResult res = smc_steer(process, s.smc, reward, sd);
        for (const auto& d : res.steps)
          diag += std::to_string(sd) + "," + std::to_string(d.step) + "," + format_double(d.ess) + "," +
                  format_double(d.mean_reward) + "," + format_double(d.max_reward) + "," + (d.resampled ? "1" : "0") +
                  "\n";
        finals += std::to_string(sd) + "," + format_double(res.reward) + "," + format_double(res.sample[0]) + "," +
                  format_double(res.sample[1]) + "\n";
        mean_final += res.reward / st_seeds;
      }
      write_file_atomic(output_path(st_out + "_diagnostics.csv"), diag);
      write_file_atomic(output_path(st_out + ".csv"), finals);
      json j = {{"command", "steer"},
                {"reward", st_oracle ? "oracle" : "checkpoint"},
                {"seed", seed},
                {"seeds", st_seeds},
                {"settings", to_json(s)},
                {"mean_final_reward", mean_final}};
      write_file_atomic(output_path(st_out + ".json"), j.dump(2) + "\n");
      out << "mean final reward " << format_double(mean_final) << " over " << st_seeds << " seeds\n";
      return kExitOk;
    }

    if (*gc) {
      if (gc_samples < 1 || gc_pairs < 1) throw ConfigError("--samples and --pairs must be >= 1");
      ModelConfig mc;
      mc.d_model = gc_d_model;
      mc.n_heads = 2;
      mc.n_layers = 2;
      mc.lora_rank = 2;
      mc.lora_alpha = 2.0;
      mc.mlp_ratio = 2;
      mc.validate();
      TrainConfig tc;
      tc.objective = parse_objective(gc_objective);
      HeadConfig hc;
      if (tc.objective == Objective::gpm) hc.output_dim = 2;
      RewardModel<double> model = RewardModel<double>::random(mc, seed);
      model.add_perspective(Perspective::alignment, hc, seed + 1);
      std::mt19937_64 rng(seed + 2);
      randomize_adapter(model.adapter(Perspective::alignment), rng);
      const Corpus corpus = gen_synthetic_corpus(seed + 3, gc_pairs, CorpusSpec{});
      GradCheckConfig gcc;
      gcc.epsilon = gc_eps;
      gcc.n_samples = static_cast<std::size_t>(gc_samples);
      gcc.seed = seed + 4;
      const GradCheckResult res =
          gradient_check(model, Perspective::alignment, std::span<const PairExample>(corpus.pairs), tc, gcc);
      const bool ok = res.max_rel_error < 1e-4;
      out << "max relative error " << format_double(res.max_rel_error) << " (" << res.worst << ")\n";
      if (!common.report.empty()) {
        Report r;
        r.add("command", "grad-check");
        r.add("objective", to_string(tc.objective));
        r.add("d_model", gc_d_model);
        r.add("samples", res.entries.size());
        r.add("max_rel_error", res.max_rel_error);
        r.add("worst", res.worst);
        r.add("pass", ok);
        r.write(common.report);
      }
      return ok ? kExitOk : kExitRuntime;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "error: usage error: no subcommand\n";
  return kExitUsage;
}

}  // namespace skipreward
