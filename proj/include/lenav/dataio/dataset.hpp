#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenav/core/error.hpp"
#include "lenav/core/hyperparams.hpp"
#include "lenav/core/random.hpp"
#include "lenav/cvae/model.hpp"
#include "lenav/dataio/expert.hpp"
#include "lenav/nav/episode.hpp"
#include "lenav/planner/path.hpp"
#include "lenav/scene/rating.hpp"

namespace lenav::dataio {

struct SequenceEntry {
  double t = 0.0;
  scene::SceneRating rating;
  HyperparamVector expert;
  std::optional<nav::Snapshot> snapshot;
};

struct SequenceRecord {
  std::string id;
  PlannerFamily family = PlannerFamily::DWA;
  std::string scenario;
  std::vector<SequenceEntry> records;

  // Timestamps strictly increasing at the rating period.
  void validate() const {
    for (std::size_t k = 1; k < records.size(); ++k)
      if (std::abs(records[k].t - records[k - 1].t - scene::kRatingPeriod) > 1e-6)
        throw SchemaError("sequence " + id + ": records must be " + std::to_string(scene::kRatingPeriod) + " s apart");
    for (const auto& r : records) lenav::detail::check_family(r.expert.family, family);
  }
};

struct Dataset {
  PlannerFamily family = PlannerFamily::DWA;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<SequenceRecord> sequences;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
};

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::json record_line(const SequenceRecord& s, const SequenceEntry& e) {
  nlohmann::json j{{"seq", s.id},
                   {"family", std::string(to_string(s.family))},
                   {"scenario", s.scenario},
                   {"t", e.t},
                   {"rating", scene::to_json(e.rating)},
                   {"expert", to_json(e.expert)}};
  if (e.snapshot) j["snapshot"] = nav::to_json(*e.snapshot);
  return j;
}

inline void write_jsonl(std::ostream& os, const Dataset& d) {
  os << nlohmann::json{{"_meta", {{"version", 1}, {"family", std::string(to_string(d.family))}, {"seed", d.seed},
                                  {"config_hash", d.config_hash}}}}
            .dump()
     << '\n';
  for (const auto& s : d.sequences)
    for (const auto& e : s.records) os << record_line(s, e).dump() << '\n';
}

// One JSON object per line; a leading {"_meta": ...} line is optional. Empty input is an empty dataset.
inline Dataset read_jsonl(std::istream& in) {
  Dataset d;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> index;
  bool family_known = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed dataset line: ") + e.what(), lineno);
    }
    try {
      if (j.contains("_meta")) {
        const auto& m = j["_meta"];
        d.family = parse_family(m.at("family").get<std::string>());
        d.seed = m.value("seed", std::uint64_t{0});
        d.config_hash = m.value("config_hash", std::uint64_t{0});
        family_known = true;
        continue;
      }
      const PlannerFamily fam = parse_family(j.at("family").get<std::string>());
      if (!family_known) {
        d.family = fam;
        family_known = true;
      }
      const std::string id = j.at("seq").get<std::string>();
      auto it = index.find(id);
      if (it == index.end()) {
        it = index.emplace(id, d.sequences.size()).first;
        d.sequences.push_back({id, fam, j.at("scenario").get<std::string>(), {}});
      }
      SequenceEntry e;
      e.t = j.at("t").get<double>();
      e.rating = scene::rating_from_json(j.at("rating"));
      e.expert = hyperparams_from_json(fam, j.at("expert"));
      if (j.contains("snapshot")) e.snapshot = nav::snapshot_from_json(j["snapshot"]);
      auto& seq = d.sequences[it->second];
      if (seq.family != fam) throw SchemaError("sequence " + id + " mixes planner families");
      if (!seq.records.empty() && std::abs(e.t - seq.records.back().t - scene::kRatingPeriod) > 1e-6)
        throw SchemaError("sequence " + id + ": records must be 2 s apart and in order");
      seq.records.push_back(std::move(e));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return d;
}

inline void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_jsonl(out, d);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + path);
  return read_jsonl(in);
}

inline nlohmann::json to_json(const DatasetSplit& s) { return {{"train", s.train}, {"val", s.val}}; }

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  DatasetSplit s;
  try {
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("split manifest: ") + e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Splitting and training examples

inline DatasetSplit split_dataset(const Dataset& d, std::size_t n_val, std::uint64_t seed) {
  if (n_val > d.sequences.size()) throw RangeError("validation count exceeds sequence count");
  std::vector<std::size_t> order(d.sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5b1));
  rng.shuffle(order);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  DatasetSplit s;
  for (std::size_t i : train) s.train.push_back(d.sequences[i].id);
  for (std::size_t i : val) s.val.push_back(d.sequences[i].id);
  return s;
}

// One example per record; windows only look back within their own sequence.
inline std::vector<cvae::Example> make_examples(const Dataset& d, const std::vector<std::string>& ids,
                                                const NormalizationSpec& spec, std::size_t slots = scene::window_slots()) {
  std::map<std::string, const SequenceRecord*> by_id;
  for (const auto& s : d.sequences) by_id[s.id] = &s;
  std::vector<cvae::Example> out;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw SchemaError("split names unknown sequence " + id);
    nav::RatingHistory h;
    for (const auto& e : it->second->records) h.push(e.rating, true);
    for (std::size_t k = 0; k < h.size(); ++k) {
      cvae::Example ex;
      ex.window = h.window(k, slots);
      const auto u = normalize(it->second->records[k].expert, spec);
      for (std::size_t j = 0; j < kNumHyperparams; ++j) ex.target[j] = u[j];
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation

struct GenerationOptions {
  int records_per_sequence = 12;
  double noise = kDefaultExpertNoise;
  double max_start_fraction = 0.4;  // start somewhere on the first part of the path
  double max_time_shift = 8.0;      // pedestrians start up to this far into their scripts
};

inline std::size_t default_sequence_count(PlannerFamily f) { return f == PlannerFamily::TEB ? 53 : 56; }
inline std::size_t default_validation_count(PlannerFamily) { return 9; }

namespace detail {
inline double path_length(const std::vector<Vec2>& p) {
  double len = 0.0;
  for (std::size_t k = 1; k < p.size(); ++k) len += distance(p[k - 1], p[k]);
  return len;
}
}  // namespace detail

// Scenario variant for one recorded sequence: shifted start along the path, pedestrian timing offset.
inline sim::Scenario sequence_scenario(const sim::Scenario& base, std::uint64_t seed, const GenerationOptions& g) {
  sim::Scenario s = nav::perturb_scenario(base, seed);
  Rng rng(mix_seed(seed, 0xda7a));
  const double shift = rng.uniform(0.0, g.max_time_shift);
  for (auto& p : s.pedestrians) p.start_time -= shift;
  const double along = rng.uniform(0.0, g.max_start_fraction) * detail::path_length(s.path);
  if (along > 0.0 && s.path.size() >= 2) {
    const Pose p = planner::lookahead_pose(s.path, s.start.position(), along);
    sim::Scenario moved = s;
    moved.start = p;
    const auto proj = planner::project_onto_path(s.path, p.position());
    moved.path.assign(s.path.begin() + static_cast<std::ptrdiff_t>(proj.segment) + 1, s.path.end());
    moved.path.insert(moved.path.begin(), p.position());
    const sim::WorldState w = sim::make_world(moved, moved.start);
    if (sim::robot_clearance(w, w.robot.pose.position()) > 0.1) return moved;
  }
  return s;
}

inline SequenceRecord record_sequence(const sim::Scenario& base, PlannerFamily family, const std::string& id,
                                      std::uint64_t seed, const GenerationOptions& g, const ExpertPresets& pr) {
  const auto spec = NormalizationSpec::defaults(family);
  const sim::Scenario s = sequence_scenario(base, seed, g);
  std::uint64_t calls = 0;
  nav::Tuner expert = [&](const nav::RatingHistory& h) -> std::optional<HyperparamVector> {
    return synth_expert(h.ratings.back(), family, pr, g.noise, mix_seed(seed, ++calls), spec);
  };
  nav::EpisodeOptions o;
  o.family = family;
  o.initial = pr.progressive_physical(spec);
  o.max_time = scene::kRatingPeriod * g.records_per_sequence - 0.5 * sim::kControlPeriod;
  o.seed = seed;
  const nav::Episode ep = nav::run_episode(s, expert, o);
  SequenceRecord rec{id, family, base.name, {}};
  for (const auto& r : ep.ratings) rec.records.push_back({r.time, r.rating, r.applied, r.snapshot});
  rec.validate();
  return rec;
}

struct GeneratedData {
  Dataset dataset;
  DatasetSplit split;
};

inline GeneratedData generate_dataset(const std::vector<sim::Scenario>& scenarios, PlannerFamily family,
                                      std::size_t count, std::size_t n_val, std::uint64_t seed,
                                      const GenerationOptions& g = {}) {
  if (scenarios.empty()) throw ConfigError("generate_dataset: no scenarios");
  GeneratedData out;
  out.dataset.family = family;
  out.dataset.seed = seed;
  nlohmann::json cfg{{"family", std::string(to_string(family))}, {"count", count}, {"n_val", n_val},
                     {"records", g.records_per_sequence}, {"noise", g.noise},
                     {"start_fraction", g.max_start_fraction}, {"time_shift", g.max_time_shift}};
  for (const auto& s : scenarios) cfg["scenarios"].push_back(s.name);
  out.dataset.config_hash = fnv1a(cfg.dump());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& sc = scenarios[i % scenarios.size()];
    std::ostringstream id;
    id << to_string(family) << '-' << (i < 10 ? "00" : i < 100 ? "0" : "") << i;
    out.dataset.sequences.push_back(record_sequence(sc, family, id.str(), mix_seed(seed, 1000 + i), g, ExpertPresets::defaults(family)));
  }
  out.split = split_dataset(out.dataset, n_val, seed);
  return out;
}

// Indices (sequence, record) whose logged rating differs from a fresh ground-truth rating of the snapshot.
inline std::vector<std::pair<std::size_t, std::size_t>> replay_mismatches(const Dataset& d,
                                                                          const std::vector<sim::Scenario>& scenarios,
                                                                          const scene::RaterConfig& rc = {}) {
  std::map<std::string, const sim::Scenario*> by_name;
  for (const auto& s : scenarios) by_name[s.name] = &s;
  std::vector<std::pair<std::size_t, std::size_t>> bad;
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    const auto& seq = d.sequences[i];
    const auto it = by_name.find(seq.scenario);
    if (it == by_name.end()) throw ConfigError("unknown scenario " + seq.scenario);
    for (std::size_t k = 0; k < seq.records.size(); ++k) {
      const auto& e = seq.records[k];
      if (!e.snapshot || scene::rate_ground_truth(nav::restore(*it->second, *e.snapshot), rc).dims != e.rating.dims)
        bad.emplace_back(i, k);
    }
  }
  return bad;
}

}  // namespace lenav::dataio
