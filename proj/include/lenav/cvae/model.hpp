#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenav/core/error.hpp"
#include "lenav/core/hyperparams.hpp"
#include "lenav/core/random.hpp"
#include "lenav/cvae/tape.hpp"
#include "lenav/scene/rating.hpp"

namespace lenav::cvae {

inline constexpr int kSlotFeatures = 2 * static_cast<int>(scene::kNumDims);
inline constexpr int kTargetDim = static_cast<int>(kNumHyperparams);

// Raised when a window has no valid slot; the caller holds its last hyperparameters.
class EmptyWindowError : public Error {
 public:
  EmptyWindowError() : Error("condition window has no valid slot") {}
};

struct ModelConfig {
  int latent_dim = 8;
  int embed_dim = 32;
  int heads = 2;
  int layers = 2;
  int ffn_hidden = 64;
  std::vector<int> hidden{64, 64};
  int slots = 5;
  double gamma = 100.0;
  double p_train = 0.2;
  int n_samples = 1;
  std::uint64_t seed = 1;

  void validate() const {
    if (latent_dim <= 0 || embed_dim <= 0 || heads <= 0 || layers <= 0 || ffn_hidden <= 0 || slots <= 0 || n_samples <= 0)
      throw ConfigError("model sizes must be positive");
    if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
    if (hidden.empty()) throw ConfigError("need at least one hidden layer");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("hidden widths must be positive");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
    if (!(p_train >= 0.0 && p_train <= 1.0)) throw ConfigError("p_train must be in [0, 1]");
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"latent_dim", c.latent_dim}, {"embed_dim", c.embed_dim}, {"heads", c.heads},     {"layers", c.layers},
          {"ffn_hidden", c.ffn_hidden}, {"hidden", c.hidden},       {"slots", c.slots},     {"gamma", c.gamma},
          {"p_train", c.p_train},       {"n_samples", c.n_samples}, {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.hidden = j.value("hidden", c.hidden);
    c.slots = j.value("slots", c.slots);
    c.gamma = j.value("gamma", c.gamma);
    c.p_train = j.value("p_train", c.p_train);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

// Named tensors packed into one flat vector.
struct ParamLayout {
  std::vector<ParamSpec> specs;
  std::size_t total = 0;

  std::size_t add(std::string name, int rows, int cols) {
    specs.push_back({std::move(name), rows, cols, total});
    total += specs.back().size();
    return specs.size() - 1;
  }
};

// Indices into ParamLayout::specs for each block.
struct ModelIndex {
  std::size_t embed_w = 0, embed_b = 0;
  struct Layer {
    std::size_t qkv_w, qkv_b, out_w, out_b, ln1_g, ln1_b, ff1_w, ff1_b, ff2_w, ff2_b, ln2_g, ln2_b;
  };
  std::vector<Layer> layers;
  std::vector<std::size_t> post_w, post_b;  // hidden stack then the (mu | logvar) head
  std::vector<std::size_t> dec_w, dec_b;    // hidden stack then the output head
};

inline ModelIndex build_layout(const ModelConfig& c, ParamLayout& L) {
  ModelIndex ix;
  const int d = c.embed_dim;
  ix.embed_w = L.add("cond.embed.w", kSlotFeatures, d);
  ix.embed_b = L.add("cond.embed.b", 1, d);
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "cond.layer" + std::to_string(l) + ".";
    ModelIndex::Layer ly{};
    ly.qkv_w = L.add(p + "qkv.w", d, 3 * d);
    ly.qkv_b = L.add(p + "qkv.b", 1, 3 * d);
    ly.out_w = L.add(p + "out.w", d, d);
    ly.out_b = L.add(p + "out.b", 1, d);
    ly.ln1_g = L.add(p + "ln1.g", 1, d);
    ly.ln1_b = L.add(p + "ln1.b", 1, d);
    ly.ff1_w = L.add(p + "ff1.w", d, c.ffn_hidden);
    ly.ff1_b = L.add(p + "ff1.b", 1, c.ffn_hidden);
    ly.ff2_w = L.add(p + "ff2.w", c.ffn_hidden, d);
    ly.ff2_b = L.add(p + "ff2.b", 1, d);
    ly.ln2_g = L.add(p + "ln2.g", 1, d);
    ly.ln2_b = L.add(p + "ln2.b", 1, d);
    ix.layers.push_back(ly);
  }
  int in = d + kTargetDim;
  for (std::size_t k = 0; k < c.hidden.size(); ++k) {
    ix.post_w.push_back(L.add("post.h" + std::to_string(k) + ".w", in, c.hidden[k]));
    ix.post_b.push_back(L.add("post.h" + std::to_string(k) + ".b", 1, c.hidden[k]));
    in = c.hidden[k];
  }
  ix.post_w.push_back(L.add("post.head.w", in, 2 * c.latent_dim));
  ix.post_b.push_back(L.add("post.head.b", 1, 2 * c.latent_dim));
  in = d + c.latent_dim;
  for (std::size_t k = 0; k < c.hidden.size(); ++k) {
    ix.dec_w.push_back(L.add("dec.h" + std::to_string(k) + ".w", in, c.hidden[k]));
    ix.dec_b.push_back(L.add("dec.h" + std::to_string(k) + ".b", 1, c.hidden[k]));
    in = c.hidden[k];
  }
  ix.dec_w.push_back(L.add("dec.out.w", in, kTargetDim));
  ix.dec_b.push_back(L.add("dec.out.b", 1, kTargetDim));
  return ix;
}

struct ModelParams {
  ModelConfig config;
  ParamLayout layout;
  ModelIndex index;
  std::vector<double> values;

  const ParamSpec& spec(std::size_t i) const { return layout.specs[i]; }
  Matrix tensor(std::size_t i) const {
    const auto& s = layout.specs[i];
    Matrix m(s.rows, s.cols);
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(s.offset),
              values.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size()), m.data.begin());
    return m;
  }
};

inline ModelParams make_params(const ModelConfig& c) {
  c.validate();
  ModelParams p;
  p.config = c;
  p.index = build_layout(c, p.layout);
  p.values.assign(p.layout.total, 0.0);
  return p;
}

// Glorot-uniform weights, zero biases, unit layer-norm gains.
inline ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
  ModelParams p = make_params(c);
  Rng rng(mix_seed(seed, 0x1417));
  for (const auto& s : p.layout.specs) {
    const bool gain = s.name.size() > 2 && s.name.compare(s.name.size() - 2, 2, ".g") == 0;
    const bool bias = s.name.size() > 2 && s.name.compare(s.name.size() - 2, 2, ".b") == 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      double v = 0.0;
      if (gain)
        v = 1.0;
      else if (!bias) {
        const double a = std::sqrt(6.0 / (s.rows + s.cols));
        v = rng.uniform(-a, a);
      }
      p.values[s.offset + k] = v;
    }
  }
  return p;
}

// One (window, target) pair; targets are normalized hyperparameters.
struct Example {
  scene::ConditionWindow window;
  std::array<double, kNumHyperparams> target{};
};

// Per-slot input features: ratings scaled to [0.2, 1] and confidences; zero for invalid slots.
inline void slot_features(const scene::ConditionWindow& w, double* out) {
  for (std::size_t s = 0; s < w.size(); ++s) {
    double* f = out + s * kSlotFeatures;
    if (!w.valid[s]) {
      std::fill(f, f + kSlotFeatures, 0.0);
      continue;
    }
    for (std::size_t d = 0; d < scene::kNumDims; ++d) {
      f[d] = w.ratings[s].dims[d] / 5.0;
      f[scene::kNumDims + d] = w.ratings[s].confidence[d];
    }
  }
}

inline Matrix positional_encoding(int slots, int d) {
  Matrix pe(slots, d);
  for (int s = 0; s < slots; ++s)
    for (int j = 0; j < d; ++j) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / d);
      pe(s, j) = (j % 2 == 0) ? std::sin(s * freq) : std::cos(s * freq);
    }
  return pe;
}

// Tape variables for every parameter tensor.
struct ParamVars {
  std::vector<Tape::Var> v;
  Tape::Var operator[](std::size_t i) const { return v[i]; }
};

inline ParamVars load_params(Tape& t, const ModelParams& p, bool trainable) {
  ParamVars pv;
  for (std::size_t i = 0; i < p.layout.specs.size(); ++i)
    pv.v.push_back(trainable ? t.variable(p.tensor(i)) : t.constant(p.tensor(i)));
  return pv;
}

// Condition vectors [B x d] for a batch of windows.
inline Tape::Var encode_condition(Tape& t, const ModelParams& p, const ParamVars& pv,
                                  const std::vector<const scene::ConditionWindow*>& windows) {
  const ModelConfig& c = p.config;
  const int S = c.slots, B = static_cast<int>(windows.size()), d = c.embed_dim;
  Matrix feats(B * S, kSlotFeatures);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(B * S));
  for (int b = 0; b < B; ++b) {
    const auto& w = *windows[static_cast<std::size_t>(b)];
    if (static_cast<int>(w.size()) != S || w.valid.size() != w.ratings.size())
      throw SchemaError("condition window has " + std::to_string(w.size()) + " slots, model expects " + std::to_string(S));
    if (w.valid_count() == 0) throw EmptyWindowError();
    slot_features(w, feats.row(b * S));
    for (int s = 0; s < S; ++s) mask[static_cast<std::size_t>(b * S + s)] = w.valid[static_cast<std::size_t>(s)] ? 1 : 0;
  }
  const Matrix pe1 = positional_encoding(S, d);
  Matrix pe(B * S, d);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < S; ++s)
      for (int j = 0; j < d; ++j) pe(b * S + s, j) = pe1(s, j);

  const auto& ix = p.index;
  auto x = t.add(t.linear(t.constant(std::move(feats)), pv[ix.embed_w], pv[ix.embed_b]), t.constant(std::move(pe)));
  for (const auto& ly : ix.layers) {
    auto qkv = t.linear(x, pv[ly.qkv_w], pv[ly.qkv_b]);
    auto att = t.linear(t.masked_attention(qkv, mask, S, c.heads), pv[ly.out_w], pv[ly.out_b]);
    x = t.layernorm(t.add(x, att), pv[ly.ln1_g], pv[ly.ln1_b]);
    auto ff = t.linear(t.tanh(t.linear(x, pv[ly.ff1_w], pv[ly.ff1_b])), pv[ly.ff2_w], pv[ly.ff2_b]);
    x = t.layernorm(t.add(x, ff), pv[ly.ln2_g], pv[ly.ln2_b]);
  }
  return t.masked_mean(x, mask, S);
}

inline Tape::Var mlp(Tape& t, Tape::Var x, const ParamVars& pv, const std::vector<std::size_t>& w,
                     const std::vector<std::size_t>& b) {
  for (std::size_t k = 0; k + 1 < w.size(); ++k) x = t.tanh(t.linear(x, pv[w[k]], pv[b[k]]));
  return t.linear(x, pv[w.back()], pv[b.back()]);
}

inline Tape::Var decode(Tape& t, const ModelParams& p, const ParamVars& pv, Tape::Var cond, Tape::Var z) {
  return t.sigmoid(mlp(t, t.concat_cols(cond, z), pv, p.index.dec_w, p.index.dec_b));
}

struct Posterior {
  Tape::Var mu;
  Tape::Var logvar;
};

inline Posterior posterior(Tape& t, const ModelParams& p, const ParamVars& pv, Tape::Var cond, Tape::Var target) {
  auto h = mlp(t, t.concat_cols(cond, target), pv, p.index.post_w, p.index.post_b);
  return {t.slice_cols(h, 0, p.config.latent_dim), t.slice_cols(h, p.config.latent_dim, p.config.latent_dim)};
}

// z = mu + exp(logvar / 2) * eps
inline Tape::Var reparameterize(Tape& t, Tape::Var mu, Tape::Var logvar, Matrix eps) {
  return t.add(mu, t.mul(t.exp(t.scale(logvar, 0.5)), t.constant(std::move(eps))));
}

// Batch-mean of 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar).
inline Tape::Var kl_divergence(Tape& t, Tape::Var mu, Tape::Var logvar) {
  const Matrix& m = t.value(mu);
  const double rows = m.rows, count = static_cast<double>(m.size());
  auto s = t.add(t.sub(t.add(t.sum(t.square(mu)), t.sum(t.exp(logvar))), t.sum(logvar)),
                 t.constant(Matrix(1, 1, -count)));
  return t.scale(s, 0.5 / rows);
}

struct LossVars {
  Tape::Var loss;
  Tape::Var kl;
  Tape::Var reconstruction;  // batch-mean of (1/n) sum_k ||dec_k - H||^2
  Tape::Var mu;
  Tape::Var logvar;
  std::vector<Tape::Var> decoded;
};

// eps holds n_samples matrices of shape [B x latent_dim].
inline LossVars build_loss(Tape& t, const ModelParams& p, const ParamVars& pv, const std::vector<const Example*>& batch,
                           const std::vector<Matrix>& eps) {
  const int B = static_cast<int>(batch.size());
  std::vector<const scene::ConditionWindow*> windows;
  Matrix target(B, kTargetDim);
  for (int b = 0; b < B; ++b) {
    windows.push_back(&batch[static_cast<std::size_t>(b)]->window);
    for (int j = 0; j < kTargetDim; ++j) target(b, j) = batch[static_cast<std::size_t>(b)]->target[static_cast<std::size_t>(j)];
  }
  auto cond = encode_condition(t, p, pv, windows);
  auto H = t.constant(std::move(target));
  auto post = posterior(t, p, pv, cond, H);
  LossVars lv;
  lv.mu = post.mu;
  lv.logvar = post.logvar;
  lv.kl = kl_divergence(t, post.mu, post.logvar);
  const int n = static_cast<int>(eps.size());
  Tape::Var rec{};
  for (int k = 0; k < n; ++k) {
    auto z = reparameterize(t, post.mu, post.logvar, eps[static_cast<std::size_t>(k)]);
    auto dec = decode(t, p, pv, cond, z);
    lv.decoded.push_back(dec);
    auto e = t.sum(t.square(t.sub(dec, H)));
    rec = k == 0 ? e : t.add(rec, e);
  }
  lv.reconstruction = t.scale(rec, 1.0 / (static_cast<double>(n) * B));
  lv.loss = t.add(lv.kl, t.scale(lv.reconstruction, p.config.gamma));
  return lv;
}

inline std::vector<Matrix> draw_eps(Rng& rng, int batch, const ModelConfig& c) {
  std::vector<Matrix> eps;
  for (int k = 0; k < c.n_samples; ++k) {
    Matrix e(batch, c.latent_dim);
    for (double& v : e.data) v = rng.normal();
    eps.push_back(std::move(e));
  }
  return eps;
}

struct LossValue {
  double loss = 0.0;
  double kl = 0.0;
  double reconstruction = 0.0;
};

// Loss and, if `grad` is non-null, its gradient in the flat parameter layout.
inline LossValue evaluate_loss(const ModelParams& p, const std::vector<const Example*>& batch,
                               const std::vector<Matrix>& eps, std::vector<double>* grad = nullptr) {
  Tape t;
  const ParamVars pv = load_params(t, p, grad != nullptr);
  const LossVars lv = build_loss(t, p, pv, batch, eps);
  LossValue out{t.value(lv.loss).data[0], t.value(lv.kl).data[0], t.value(lv.reconstruction).data[0]};
  if (grad) {
    t.backward(lv.loss);
    grad->assign(p.values.size(), 0.0);
    for (std::size_t i = 0; i < p.layout.specs.size(); ++i) {
      const auto& s = p.layout.specs[i];
      const Matrix& g = t.grad(pv[i]);
      if (g.size() == 0) continue;  // unreachable from the loss
      std::copy(g.data.begin(), g.data.end(), grad->begin() + static_cast<std::ptrdiff_t>(s.offset));
    }
  }
  return out;
}

// Condition vector for one window.
inline std::vector<double> encode_condition(const ModelParams& p, const scene::ConditionWindow& w) {
  Tape t;
  const ParamVars pv = load_params(t, p, false);
  const auto c = encode_condition(t, p, pv, {&w});
  return t.value(c).data;
}

// k hyperparameter sets decoded from prior latents; deterministic given seed.
inline std::vector<NormalizedHyperparams> generate(const ModelParams& p, const scene::ConditionWindow& w, int k,
                                                   std::uint64_t seed, PlannerFamily family) {
  if (k < 1) throw RangeError("generate: k must be >= 1");
  Tape t;
  const ParamVars pv = load_params(t, p, false);
  auto cond = t.repeat_rows(encode_condition(t, p, pv, {&w}), k);
  Rng rng(seed);
  Matrix z(k, p.config.latent_dim);
  for (double& v : z.data) v = rng.normal();
  const Matrix& out = t.value(decode(t, p, pv, cond, t.constant(std::move(z))));
  std::vector<NormalizedHyperparams> res;
  for (int i = 0; i < k; ++i) {
    NormalizedHyperparams u{family, {}};
    for (int j = 0; j < kTargetDim; ++j) u.u[static_cast<std::size_t>(j)] = out(i, j);
    res.push_back(u);
  }
  return res;
}

inline std::uint64_t params_checksum(const ModelParams& p) {
  std::string bytes(reinterpret_cast<const char*>(p.values.data()), p.values.size() * sizeof(double));
  return fnv1a(bytes);
}

}  // namespace lenav::cvae
