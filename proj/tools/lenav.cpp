#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/cvae/checkpoint.hpp"
#include "lenav/cvae/train.hpp"
#include "lenav/dataio/dataset.hpp"
#include "lenav/metrics/metrics.hpp"
#include "lenav/nav/episode.hpp"
#include "lenav/pipeline/bench.hpp"
#include "lenav/pipeline/evaluate.hpp"
#include "lenav/pipeline/svg.hpp"
#include "lenav/scene/mllm.hpp"

namespace fs = std::filesystem;
using namespace lenav;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string default_dir(const char* sub) { return (fs::path(LENAV_SOURCE_DIR) / sub).string(); }

std::string hex(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

std::vector<sim::Scenario> load_scenarios(const std::vector<std::string>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".json") files.push_back(e.path());
    } else {
      files.emplace_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no scenario files found");
  std::vector<sim::Scenario> out;
  for (const auto& f : files) out.push_back(sim::load_scenario(f));
  return out;
}

std::string split_path_for(const std::string& data) {
  fs::path p(data);
  return (p.parent_path() / (p.stem().string() + "_split.json")).string();
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

PlannerFamily family_arg(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return parse_family(u);
}

scene::LossMode loss_arg(const std::string& s, double p) {
  if (s == "random") return scene::LossMode::random(p);
  return scene::parse_loss_mode(s);
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string family = "teb";
  std::vector<std::string> scenarios{default_dir("scenarios")};
  std::string out_dir = "data";
  std::uint64_t seed = 7;
  int count = 0;
  int val = 9;
  int records = 12;
  double noise = dataio::kDefaultExpertNoise;
};

int cmd_gen_data(const GenDataArgs& a) {
  const PlannerFamily f = family_arg(a.family);
  const auto scenarios = load_scenarios(a.scenarios);
  dataio::GenerationOptions g;
  g.records_per_sequence = a.records;
  g.noise = a.noise;
  const std::size_t count = a.count > 0 ? static_cast<std::size_t>(a.count) : dataio::default_sequence_count(f);
  const auto out = dataio::generate_dataset(scenarios, f, count, static_cast<std::size_t>(a.val), a.seed, g);
  fs::create_directories(a.out_dir);
  std::string name(to_string(f));
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const std::string data = (fs::path(a.out_dir) / (name + ".jsonl")).string();
  dataio::save_dataset(data, out.dataset);
  auto split = dataio::to_json(out.split);
  split["seed"] = a.seed;
  split["config_hash"] = out.dataset.config_hash;
  pipeline::write_text(split_path_for(data), split.dump(1) + "\n");
  std::size_t records = 0;
  for (const auto& s : out.dataset.sequences) records += s.records.size();
  std::cout << "wrote " << data << ": " << out.dataset.sequences.size() << " sequences, " << records << " records ("
            << out.split.train.size() << " train / " << out.split.val.size() << " val), seed " << a.seed
            << ", config " << hex(out.dataset.config_hash) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string split;
  std::string out = "model.ckpt";
  std::string curve;
  int epochs = cvae::TrainConfig{}.epochs;
  double lr = cvae::TrainConfig{}.lr;
  int batch = cvae::TrainConfig{}.batch_size;
  double p_train = cvae::ModelConfig{}.p_train;
  std::uint64_t seed = 1;
  std::string model_config;
};

struct LoadedData {
  dataio::Dataset dataset;
  dataio::DatasetSplit split;
};

LoadedData load_data(const std::string& data, const std::string& split) {
  LoadedData d;
  d.dataset = dataio::load_dataset(data);
  if (d.dataset.sequences.empty()) throw ConfigError("dataset " + data + " is empty");
  d.split = dataio::split_from_json(read_json(split.empty() ? split_path_for(data) : split));
  return d;
}

int cmd_train(const TrainArgs& a) {
  const auto d = load_data(a.data, a.split);
  const auto spec = NormalizationSpec::defaults(d.dataset.family);
  cvae::ModelConfig mc = a.model_config.empty() ? cvae::ModelConfig{} : cvae::model_config_from_json(read_json(a.model_config));
  mc.p_train = a.p_train;
  mc.seed = a.seed;
  mc.validate();
  cvae::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.lr = a.lr;
  tc.batch_size = a.batch;
  tc.seed = a.seed;
  const auto train_set = dataio::make_examples(d.dataset, d.split.train, spec, static_cast<std::size_t>(mc.slots));
  const auto val_set = dataio::make_examples(d.dataset, d.split.val, spec, static_cast<std::size_t>(mc.slots));
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = cvae::train(train_set, val_set, cvae::init_params(mc, a.seed), tc);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cvae::save_checkpoint(res.params, a.out, a.seed, static_cast<std::uint32_t>(res.best_epoch));
  if (!a.curve.empty()) cvae::write_curve_csv(res.curve, a.curve);
  std::cout << "trained " << to_string(d.dataset.family) << " model on " << train_set.size() << " windows in "
            << std::fixed << std::setprecision(1) << secs << " s; best epoch " << res.best_epoch << " val loss "
            << std::setprecision(5) << res.best_val << "; wrote " << a.out << " (seed " << a.seed << ", config "
            << hex(cvae::config_hash(mc)) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string split;
  std::string checkpoint;
  std::string loss = "random";
  double p = cvae::ModelConfig{}.p_train;
  int k = pipeline::kTopK;
  std::uint64_t seed = 99;
};

int cmd_eval_gen(const EvalArgs& a) {
  const auto d = load_data(a.data, a.split);
  cvae::CheckpointInfo info;
  const auto params = cvae::load_checkpoint(a.checkpoint, &info);
  const auto spec = NormalizationSpec::defaults(d.dataset.family);
  const auto val = dataio::make_examples(d.dataset, d.split.val, spec, static_cast<std::size_t>(params.config.slots));
  const auto mode = loss_arg(a.loss, a.p);
  const auto r = pipeline::evaluate_generation(params, val, d.dataset.family, mode, a.seed, a.k);
  std::cout << "# checkpoint " << a.checkpoint << " config " << hex(info.config_hash) << " seed " << a.seed << '\n';
  std::cout << "family,loss,k,windows,top_err,mean_err\n";
  std::cout << to_string(d.dataset.family) << ',' << scene::to_string(mode) << ',' << a.k << ',' << val.size() << ','
            << std::fixed << std::setprecision(2) << r.overall.top_err << ',' << r.overall.mean_err << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SimArgs {
  std::string scenario;
  std::string family = "teb";
  std::string checkpoint;
  std::string preset = "progressive";
  std::uint64_t seed = 1;
  std::string out = "run.csv";
  std::string svg;
  double max_time = 0.0;
  bool mllm = false;
  std::string prompts = default_dir("prompts/v1");
  std::string endpoint = scene::MllmConfig{}.endpoint;
  std::string model = scene::MllmConfig{}.model;
};

int cmd_simulate(const SimArgs& a) {
  const PlannerFamily f = family_arg(a.family);
  const auto base = sim::load_scenario(a.scenario);
  pipeline::Method m{"", f, pipeline::Tuning::Adaptive};
  pipeline::Models models;
  if (!a.checkpoint.empty()) {
    auto p = cvae::load_checkpoint(a.checkpoint);
    (f == PlannerFamily::TEB ? models.teb : models.dwa) = std::move(p);
  } else if (a.preset == "progressive") {
    m.tuning = pipeline::Tuning::Progressive;
  } else if (a.preset == "conservative") {
    m.tuning = pipeline::Tuning::Conservative;
  } else {
    throw ConfigError("preset must be progressive or conservative");
  }
  m.name = pipeline::method_name(f, m.tuning);
  const sim::Scenario world = nav::perturb_scenario(base, a.seed);
  nav::EpisodeOptions o;
  o.family = f;
  o.initial = pipeline::initial_hyperparams(m);
  o.seed = a.seed;
  nlohmann::json run{{"scenario", base.name}, {"method", m.name}, {"seed", a.seed}, {"mllm", a.mllm}};
  if (!a.checkpoint.empty()) run["model"] = hex(cvae::params_checksum(models.for_family(f)));
  o.config_hash = fnv1a(run.dump());
  if (a.max_time > 0.0) o.max_time = a.max_time;
  std::unique_ptr<scene::AsyncSceneRater> rater;
  if (a.mllm) {
    scene::MllmConfig mc;
    mc.endpoint = a.endpoint;
    mc.model = a.model;
    rater = std::make_unique<scene::AsyncSceneRater>(scene::load_prompt_bundle(a.prompts), mc);
    o.mllm = rater.get();
  }
  const auto ep = nav::run_episode(world, pipeline::make_tuner(m, models, a.seed), o);
  pipeline::write_text(a.out, sim::runlog_csv(ep.log));
  if (!a.svg.empty()) pipeline::write_text(a.svg, pipeline::trajectory_svg(world, ep));
  const auto rm = metrics::run_metrics(ep.log, ep.success());
  int lost = 0;
  for (const auto& r : ep.ratings) lost += r.valid ? 0 : 1;
  std::cout << base.name << ' ' << m.name << " seed " << a.seed << ": " << nav::to_string(ep.outcome) << " at "
            << std::fixed << std::setprecision(1) << rm.time << " s, risk " << std::setprecision(2) << rm.risk.local
            << '/' << rm.risk.within_5s << '/' << rm.risk.within_2s << " %, acc " << rm.comfort.acc << ", jerk "
            << rm.comfort.jerk << ", ratings " << ep.ratings.size() << " (" << lost << " lost); wrote " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::vector<std::string> scenarios{default_dir("scenarios")};
  std::string teb_checkpoint;
  std::string dwa_checkpoint;
  int trials = 3;
  std::uint64_t seed = 1;
  std::string out = "bench.csv";
  std::string trials_out;
  std::string svg_dir;
};

int cmd_bench(const BenchArgs& a) {
  const auto scenarios = load_scenarios(a.scenarios);
  pipeline::Models models;
  if (!a.teb_checkpoint.empty()) models.teb = cvae::load_checkpoint(a.teb_checkpoint);
  if (!a.dwa_checkpoint.empty()) models.dwa = cvae::load_checkpoint(a.dwa_checkpoint);
  const auto methods = pipeline::default_methods(models.teb.has_value(), models.dwa.has_value());
  pipeline::BenchConfig cfg;
  cfg.trials = a.trials;
  cfg.seed = a.seed;
  nlohmann::json run{{"trials", a.trials}, {"seed", a.seed}};
  if (models.teb) run["teb_model"] = hex(cvae::params_checksum(*models.teb));
  if (models.dwa) run["dwa_model"] = hex(cvae::params_checksum(*models.dwa));
  for (const auto& s : scenarios) run["scenarios"].push_back(s.name);
  cfg.config_hash = fnv1a(run.dump());
  cfg.keep_episodes = !a.svg_dir.empty();
  const auto res = pipeline::bench(scenarios, methods, models, cfg);
  const auto scores = metrics::score_by_scenario(res.summaries);
  {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write " + a.out);
    out << "# config_hash=" << hex(cfg.config_hash) << " seed=" << a.seed << '\n';
    metrics::write_metrics_csv(out, res.summaries, scores);
  }
  if (!a.trials_out.empty()) {
    std::ofstream out(a.trials_out);
    if (!out) throw Error("cannot write " + a.trials_out);
    out << "# config_hash=" << hex(cfg.config_hash) << " seed=" << a.seed << '\n';
    out << "scenario,method,trial,seed,outcome,time,risk_local,risk_5s,risk_2s,acc,jerk\n";
    for (const auto& t : res.trials)
      out << t.scenario << ',' << t.method << ',' << t.trial << ',' << t.seed << ',' << nav::to_string(t.outcome) << ','
          << t.metrics.time << ',' << t.metrics.risk.local << ',' << t.metrics.risk.within_5s << ','
          << t.metrics.risk.within_2s << ',' << t.metrics.comfort.acc << ',' << t.metrics.comfort.jerk << '\n';
  }
  if (!a.svg_dir.empty()) {
    fs::create_directories(a.svg_dir);
    std::map<std::string, const sim::Scenario*> by_name;
    for (const auto& s : scenarios) by_name[s.name] = &s;
    for (const auto& t : res.trials) {
      const auto world = nav::perturb_scenario(*by_name[t.scenario], t.seed);
      const auto file = fs::path(a.svg_dir) / (t.scenario + "_" + t.method + "_" + std::to_string(t.trial) + ".svg");
      pipeline::write_text(file.string(), pipeline::trajectory_svg(world, t.episode));
    }
  }
  metrics::write_metrics_table(std::cout, res.summaries, scores);
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string csv;
  std::string out;
};

int cmd_score(const ScoreArgs& a) {
  std::ifstream in(a.csv);
  if (!in) throw ConfigError("cannot open " + a.csv);
  const auto rows = metrics::read_metrics_csv(in);
  const auto scores = metrics::score_by_scenario(rows);
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw Error("cannot write " + a.out);
    metrics::write_metrics_csv(out, rows, scores);
  }
  metrics::write_metrics_table(std::cout, rows, scores);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-adaptive local planner tuning workbench"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic expert dataset by closed-loop simulation");
  gen->add_option("--family", gd.family, "Planner family (teb|dwa)")->capture_default_str();
  gen->add_option("--scenarios", gd.scenarios, "Scenario files or directories")->capture_default_str();
  gen->add_option("--out-dir", gd.out_dir, "Output directory")->capture_default_str();
  gen->add_option("--seed", gd.seed, "Master seed")->capture_default_str();
  gen->add_option("--count", gd.count, "Sequences (0 = family default)")->capture_default_str();
  gen->add_option("--val", gd.val, "Validation sequences")->capture_default_str();
  gen->add_option("--records", gd.records, "Ratings per sequence")->capture_default_str();
  gen->add_option("--noise", gd.noise, "Expert noise (normalized units)")->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the hyperparameter generator");
  train->add_option("--data", tr.data, "Dataset (.jsonl)")->required();
  train->add_option("--split", tr.split, "Split manifest (default: <data>_split.json)");
  train->add_option("--out", tr.out, "Checkpoint path")->capture_default_str();
  train->add_option("--curve", tr.curve, "Loss curve CSV");
  train->add_option("--epochs", tr.epochs)->capture_default_str();
  train->add_option("--lr", tr.lr)->capture_default_str();
  train->add_option("--batch", tr.batch)->capture_default_str();
  train->add_option("--p-train", tr.p_train, "Random-loss augmentation probability (0 disables)")->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();
  train->add_option("--model-config", tr.model_config, "Model config JSON");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval-gen", "Top-k / mean generation error on the validation split");
  eval->add_option("--data", ev.data, "Dataset (.jsonl)")->required();
  eval->add_option("--split", ev.split, "Split manifest (default: <data>_split.json)");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--loss", ev.loss, "none|random|latest|latest-two|random:<p>")->capture_default_str();
  eval->add_option("--p", ev.p, "Drop probability for --loss random")->capture_default_str();
  eval->add_option("--k", ev.k, "Samples per window")->capture_default_str();
  eval->add_option("--seed", ev.seed)->capture_default_str();

  SimArgs sa;
  auto* simc = app.add_subcommand("simulate", "One closed-loop run with live retuning");
  simc->add_option("--scenario", sa.scenario)->required();
  simc->add_option("--family", sa.family)->capture_default_str();
  simc->add_option("--checkpoint", sa.checkpoint, "Generator checkpoint (omit for a fixed preset)");
  simc->add_option("--preset", sa.preset, "progressive|conservative when no checkpoint")->capture_default_str();
  simc->add_option("--seed", sa.seed)->capture_default_str();
  simc->add_option("--out", sa.out, "RunLog CSV")->capture_default_str();
  simc->add_option("--svg", sa.svg, "Trajectory plot");
  simc->add_option("--max-time", sa.max_time, "Override the scenario timeout (s)");
  simc->add_flag("--mllm", sa.mllm, "Rate scenes with the MLLM client (key from LENAV_MLLM_API_KEY)");
  simc->add_option("--prompts", sa.prompts)->capture_default_str();
  simc->add_option("--mllm-endpoint", sa.endpoint)->capture_default_str();
  simc->add_option("--mllm-model", sa.model)->capture_default_str();

  BenchArgs ba;
  auto* benchc = app.add_subcommand("bench", "Repeated trials of every method over a scenario set");
  benchc->add_option("--scenarios", ba.scenarios)->capture_default_str();
  benchc->add_option("--teb-checkpoint", ba.teb_checkpoint);
  benchc->add_option("--dwa-checkpoint", ba.dwa_checkpoint);
  benchc->add_option("--trials", ba.trials)->capture_default_str();
  benchc->add_option("--seed", ba.seed)->capture_default_str();
  benchc->add_option("--out", ba.out, "Metrics CSV")->capture_default_str();
  benchc->add_option("--trials-out", ba.trials_out, "Per-trial CSV");
  benchc->add_option("--svg-dir", ba.svg_dir, "Write one trajectory plot per trial");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Score column from a metrics CSV");
  score->add_option("csv", sc.csv, "Metrics CSV")->required();
  score->add_option("--out", sc.out, "Write the CSV with a score column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gd);
    if (*train) return cmd_train(tr);
    if (*eval) return cmd_eval_gen(ev);
    if (*simc) return cmd_simulate(sa);
    if (*benchc) return cmd_bench(ba);
    if (*score) return cmd_score(sc);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "error: schema: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "error: parse: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
