#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/core/random.hpp"
#include "lenav/cvae/model.hpp"

namespace lenav::cvae {

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-3;
  int batch_size = 16;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  // Validation windows get the same random loss as training (p_train), with a fixed seed.
  bool val_random_loss = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"lr", c.lr},       {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay}, {"seed", c.seed}, {"val_random_loss", c.val_random_loss}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.val_random_loss = j.value("val_random_loss", c.val_random_loss);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

class AdamW {
 public:
  AdamW(std::size_t n, const TrainConfig& c) : c_(c), m_(n, 0.0), v_(n, 0.0) {}

  // Decoupled weight decay on weight matrices only; biases and norm parameters are not decayed.
  void step(ModelParams& p, const std::vector<double>& g) {
    ++t_;
    const double b1t = 1.0 - std::pow(c_.beta1, t_), b2t = 1.0 - std::pow(c_.beta2, t_);
    for (const auto& s : p.layout.specs) {
      const bool decay = s.rows > 1;
      for (std::size_t k = s.offset; k < s.offset + s.size(); ++k) {
        m_[k] = c_.beta1 * m_[k] + (1.0 - c_.beta1) * g[k];
        v_[k] = c_.beta2 * v_[k] + (1.0 - c_.beta2) * g[k] * g[k];
        double upd = (m_[k] / b1t) / (std::sqrt(v_[k] / b2t) + c_.adam_eps);
        if (decay) upd += c_.weight_decay * p.values[k];
        p.values[k] -= c_.lr * upd;
      }
    }
  }

 private:
  TrainConfig c_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_kl = 0.0;
  double train_rec = 0.0;
  double val_loss = 0.0;
  double val_kl = 0.0;
  double val_rec = 0.0;
};

struct TrainResult {
  ModelParams params;  // best validation epoch
  int best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<EpochStats> curve;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, ModelParams last_good) : Error(what), last_good_(std::move(last_good)) {}
  const ModelParams& last_good() const { return last_good_; }

 private:
  ModelParams last_good_;
};

namespace detail {
inline std::vector<const Example*> pointers(const std::vector<Example>& v) {
  std::vector<const Example*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

inline LossValue accumulate(LossValue a, const LossValue& b, double w) {
  a.loss += w * b.loss;
  a.kl += w * b.kl;
  a.reconstruction += w * b.reconstruction;
  return a;
}
}  // namespace detail

// Windows with the training-time random loss applied, one seeded stream per pass.
inline std::vector<Example> with_random_loss(const std::vector<Example>& set, double p, std::uint64_t seed) {
  std::vector<Example> out = set;
  if (p <= 0.0) return out;
  Rng rng(seed);
  for (auto& e : out) e.window = scene::apply_loss(e.window, scene::LossMode::random(p), rng);
  return out;
}

inline LossValue dataset_loss(const ModelParams& p, const std::vector<Example>& set, std::uint64_t seed) {
  if (set.empty()) return {};
  Rng rng(seed);
  const auto ptrs = detail::pointers(set);
  return evaluate_loss(p, ptrs, draw_eps(rng, static_cast<int>(ptrs.size()), p.config));
}

inline TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& val_set, ModelParams init,
                         const TrainConfig& tc) {
  tc.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  TrainResult res;
  ModelParams p = std::move(init);
  AdamW opt(p.values.size(), tc);
  Rng rng(mix_seed(tc.seed, 0x7a11));
  const double p_train = p.config.p_train;
  const std::uint64_t val_seed = mix_seed(tc.seed, 0x5a1);
  const std::vector<Example> val_view =
      tc.val_random_loss ? with_random_loss(val_set, p_train, mix_seed(val_seed, 1)) : val_set;
  std::vector<double> grad;
  res.params = p;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const std::vector<Example> aug = with_random_loss(train_set, p_train, rng.next_u64());
    std::vector<std::size_t> order(aug.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    LossValue tr;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      std::vector<const Example*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&aug[order[k]]);
      const auto eps = draw_eps(rng, static_cast<int>(batch.size()), p.config);
      const LossValue lv = evaluate_loss(p, batch, eps, &grad);
      if (!std::isfinite(lv.loss)) throw TrainingError("loss diverged at epoch " + std::to_string(epoch), res.params);
      for (double g : grad)
        if (!std::isfinite(g)) throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch), res.params);
      tr = detail::accumulate(tr, lv, static_cast<double>(batch.size()) / static_cast<double>(aug.size()));
      opt.step(p, grad);
    }
    EpochStats st{epoch, tr.loss, tr.kl, tr.reconstruction, 0.0, 0.0, 0.0};
    if (!val_view.empty()) {
      const LossValue v = dataset_loss(p, val_view, mix_seed(val_seed, 2));
      st.val_loss = v.loss;
      st.val_kl = v.kl;
      st.val_rec = v.reconstruction;
    } else {
      st.val_loss = tr.loss;
    }
    res.curve.push_back(st);
    if (st.val_loss < res.best_val) {
      res.best_val = st.val_loss;
      res.best_epoch = epoch;
      res.params = p;
    }
  }
  return res;
}

inline void write_curve_csv(const std::vector<EpochStats>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(10);
  out << "epoch,train_loss,train_kl,train_rec,val_loss,val_kl,val_rec\n";
  for (const auto& s : curve)
    out << s.epoch << ',' << s.train_loss << ',' << s.train_kl << ',' << s.train_rec << ',' << s.val_loss << ','
        << s.val_kl << ',' << s.val_rec << '\n';
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// Central differences against the tape gradient on a fixed batch and noise draw.
// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(const ModelParams& p, const std::vector<Example>& batch, std::uint64_t seed,
                                  double step = 1e-5, double floor = 1e-4, std::size_t stride = 1) {
  Rng rng(seed);
  const auto ptrs = detail::pointers(batch);
  const auto eps = draw_eps(rng, static_cast<int>(ptrs.size()), p.config);
  std::vector<double> g;
  evaluate_loss(p, ptrs, eps, &g);
  ModelParams q = p;
  GradCheckResult r;
  for (std::size_t i = 0; i < q.values.size(); i += stride) {
    const double x = q.values[i];
    q.values[i] = x + step;
    const double fp = evaluate_loss(q, ptrs, eps).loss;
    q.values[i] = x - step;
    const double fm = evaluate_loss(q, ptrs, eps).loss;
    q.values[i] = x;
    const double num = (fp - fm) / (2.0 * step);
    const double rel = std::abs(g[i] - num) / std::max({std::abs(g[i]), std::abs(num), floor});
    ++r.checked;
    if (r.checked == 1 || rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
      r.worst_analytic = g[i];
      r.worst_numeric = num;
    }
  }
  return r;
}

}  // namespace lenav::cvae
