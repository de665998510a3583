#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <functional>

#include "lenav/cvae/checkpoint.hpp"
#include "lenav/cvae/model.hpp"
#include "lenav/cvae/train.hpp"

namespace lenav::cvae {
namespace {

scene::SceneRating random_rating(Rng& rng) {
  scene::SceneRating r;
  r.dims[scene::pedestrian_presence] = rng.bernoulli(0.7) ? 5 : 1;
  for (std::size_t d = 1; d < scene::kNumDims; ++d)
    r.dims[d] = (d != scene::background_difficulty && r.dims[0] == 1) ? 1 : 1 + static_cast<int>(rng.below(5));
  for (double& c : r.confidence) c = rng.uniform(0.3, 1.0);
  return r;
}

scene::ConditionWindow random_window(Rng& rng, int slots = 5) {
  scene::ConditionWindow w;
  for (int s = 0; s < slots; ++s) w.ratings.push_back(random_rating(rng));
  w.valid.assign(static_cast<std::size_t>(slots), 1);
  return w;
}

std::vector<Example> random_examples(std::uint64_t seed, int n) {
  Rng rng(seed);
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    Example e;
    e.window = random_window(rng);
    if (i % 3 == 1) e.window = scene::apply_loss(e.window, scene::LossMode::random(0.4), rng);
    for (double& t : e.target) t = rng.uniform(0.1, 0.9);
    out.push_back(e);
  }
  return out;
}

ModelConfig small_config() {
  ModelConfig c;
  c.embed_dim = 8;
  c.ffn_hidden = 8;
  c.hidden = {8};
  c.latent_dim = 3;
  c.layers = 1;
  return c;
}

// Finite-difference check of a scalar function of one input matrix built on the tape.
double op_grad_error(Matrix x, const std::function<Tape::Var(Tape&, Tape::Var)>& f) {
  Tape t;
  auto v = t.variable(x);
  auto out = f(t, v);
  t.backward(out);
  const Matrix g = t.grad(v);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    Tape tp, tm;
    const double fp = tp.value(f(tp, tp.constant(xp))).data[0];
    const double fm = tm.value(f(tm, tm.constant(xm))).data[0];
    const double num = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(num - g.data[i]) / std::max({std::abs(num), std::abs(g.data[i]), 1e-6}));
  }
  return worst;
}

Matrix random_matrix(Rng& rng, int r, int c) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

TEST(Tape, OpGradientsMatchFiniteDifferences) {
  Rng rng(11);
  const Matrix w = random_matrix(rng, 4, 3), gain = random_matrix(rng, 1, 4), bias = random_matrix(rng, 1, 4);
  // Weighted sums make each output coordinate matter.
  auto weigh = [&](Tape& t, Tape::Var y) {
    Matrix c(t.value(y).rows, t.value(y).cols);
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = std::sin(1.0 + static_cast<double>(i));
    return t.sum(t.mul(y, t.constant(c)));
  };
  EXPECT_LT(op_grad_error(random_matrix(rng, 2, 4), [&](Tape& t, Tape::Var x) { return weigh(t, t.matmul(x, t.constant(w))); }), 1e-6);
  EXPECT_LT(op_grad_error(random_matrix(rng, 2, 4), [&](Tape& t, Tape::Var x) { return weigh(t, t.tanh(x)); }), 1e-6);
  EXPECT_LT(op_grad_error(random_matrix(rng, 2, 4), [&](Tape& t, Tape::Var x) { return weigh(t, t.sigmoid(x)); }), 1e-6);
  EXPECT_LT(op_grad_error(random_matrix(rng, 2, 4), [&](Tape& t, Tape::Var x) { return weigh(t, t.exp(x)); }), 1e-6);
  EXPECT_LT(op_grad_error(random_matrix(rng, 3, 4),
                          [&](Tape& t, Tape::Var x) { return weigh(t, t.layernorm(x, t.constant(gain), t.constant(bias))); }),
            1e-5);
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 1, 0, 1};
  EXPECT_LT(op_grad_error(random_matrix(rng, 8, 12),
                          [&](Tape& t, Tape::Var x) { return weigh(t, t.masked_attention(x, mask, 4, 2)); }),
            1e-5);
  EXPECT_LT(op_grad_error(random_matrix(rng, 8, 3), [&](Tape& t, Tape::Var x) { return weigh(t, t.masked_mean(x, mask, 4)); }),
            1e-6);
  EXPECT_LT(op_grad_error(random_matrix(rng, 2, 5),
                          [&](Tape& t, Tape::Var x) {
                            return weigh(t, t.concat_cols(t.slice_cols(x, 1, 3), t.sum_rows(x)));
                          }),
            1e-6);
  EXPECT_LT(op_grad_error(random_matrix(rng, 2, 3), [&](Tape& t, Tape::Var x) { return weigh(t, t.repeat_rows(x, 3)); }),
            1e-6);
}

TEST(Tape, AttentionWithNoValidKeyThrows) {
  Tape t;
  auto x = t.constant(Matrix(2, 6, 0.1));
  EXPECT_THROW(t.masked_attention(x, {0, 0}, 2, 1), Error);
}

TEST(Loss, KlExamples) {
  Tape t;
  EXPECT_DOUBLE_EQ(t.value(kl_divergence(t, t.constant(Matrix(1, 4, 0.0)), t.constant(Matrix(1, 4, 0.0)))).data[0], 0.0);
  Matrix mu(1, 1, 1.0);
  EXPECT_DOUBLE_EQ(t.value(kl_divergence(t, t.constant(mu), t.constant(Matrix(1, 1, 0.0)))).data[0], 0.5);
  // sigma^2 = e: 0.5 * (e - 1 - 1)
  EXPECT_NEAR(t.value(kl_divergence(t, t.constant(Matrix(1, 1, 0.0)), t.constant(Matrix(1, 1, 1.0)))).data[0],
              0.5 * (std::exp(1.0) - 2.0), 1e-15);
}

TEST(Loss, ZeroNoiseReparameterizationIsMean) {
  Tape t;
  Rng rng(2);
  const Matrix mu = random_matrix(rng, 2, 3), lv = random_matrix(rng, 2, 3);
  const auto z = reparameterize(t, t.constant(mu), t.constant(lv), Matrix(2, 3, 0.0));
  EXPECT_EQ(t.value(z).data, mu.data);
}

TEST(Loss, ZeroDecoderHeadGivesClosedFormGradient) {
  auto p = init_params(small_config(), 4);
  const auto& head_w = p.spec(p.index.dec_w.back());
  const auto& head_b = p.spec(p.index.dec_b.back());
  std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(head_w.offset), head_w.size(), 0.0);
  const auto ex = random_examples(5, 3);
  const auto ptrs = detail::pointers(ex);
  Rng rng(1);
  const auto eps = draw_eps(rng, 3, p.config);
  std::vector<double> g;
  const auto lv = evaluate_loss(p, ptrs, eps, &g);
  double rec = 0.0;
  for (const auto& e : ex)
    for (double h : e.target) rec += (0.5 - h) * (0.5 - h);
  EXPECT_NEAR(lv.reconstruction, rec / 3.0, 1e-12);
  for (std::size_t j = 0; j < kNumHyperparams; ++j) {
    double expect = 0.0;
    for (const auto& e : ex) expect += p.config.gamma / 3.0 * 2.0 * (0.5 - e.target[j]) * 0.25;
    EXPECT_NEAR(g[head_b.offset + j], expect, 1e-10);
  }
}

TEST(Loss, ZeroGammaLeavesDecoderUntouched) {
  auto c = small_config();
  c.gamma = 0.0;
  const auto p = init_params(c, 4);
  const auto ex = random_examples(6, 4);
  Rng rng(1);
  std::vector<double> g;
  evaluate_loss(p, detail::pointers(ex), draw_eps(rng, 4, c), &g);
  for (std::size_t i = 0; i < p.layout.specs.size(); ++i) {
    const auto& s = p.spec(i);
    if (s.name.rfind("dec.", 0) != 0) continue;
    for (std::size_t k = s.offset; k < s.offset + s.size(); ++k) EXPECT_EQ(g[k], 0.0) << s.name;
  }
}

TEST(Loss, PerfectReconstructionIsZero) {
  Tape t;
  Rng rng(8);
  const Matrix h = random_matrix(rng, 2, 9);
  const auto e = t.sum(t.square(t.sub(t.constant(h), t.constant(h))));
  EXPECT_EQ(t.value(e).data[0], 0.0);
}

TEST(GradCheck, DefaultModelSubsetWithinTolerance) {
  const auto ex = random_examples(9, 2);
  for (std::uint64_t seed : {1u, 2u}) {
    const auto p = init_params(ModelConfig{}, seed);
    const auto r = grad_check(p, ex, seed + 100, 1e-5, 1e-4, 53);
    EXPECT_LE(r.max_rel_error, 1e-4) << "index " << r.worst_index << " analytic " << r.worst_analytic << " numeric "
                                     << r.worst_numeric;
    EXPECT_GT(r.checked, 600u);
  }
}

TEST(GradCheck, SmallModelAllParameters) {
  const auto p = init_params(small_config(), 3);
  const auto r = grad_check(p, random_examples(10, 3), 5);
  EXPECT_EQ(r.checked, p.values.size());
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(Condition, InvalidSlotContentsAreIgnored) {
  const auto p = init_params(ModelConfig{}, 12);
  Rng rng(13);
  for (const auto& mode :
       {scene::LossMode::random(0.5), scene::LossMode::latest(), scene::LossMode::latest_two()}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto w = scene::apply_loss(random_window(rng), mode, rng);
      auto perturbed = w;
      for (std::size_t s = 0; s < w.size(); ++s)
        if (!w.valid[s]) perturbed.ratings[s] = random_rating(rng);
      EXPECT_EQ(encode_condition(p, w), encode_condition(p, perturbed));
      const auto a = generate(p, w, 4, 99, PlannerFamily::DWA);
      const auto b = generate(p, perturbed, 4, 99, PlannerFamily::DWA);
      EXPECT_EQ(a, b);
    }
  }
}

TEST(Condition, SlotOrderMatters) {
  const auto p = init_params(ModelConfig{}, 12);
  Rng rng(14);
  auto w = random_window(rng);
  w.ratings[0].dims = {5, 5, 5, 5, 5};
  w.ratings[4].dims = {1, 1, 1, 1, 1};
  auto swapped = w;
  std::swap(swapped.ratings[0], swapped.ratings[4]);
  EXPECT_NE(encode_condition(p, w), encode_condition(p, swapped));
}

TEST(Condition, SingleValidSlotWorksAndEmptyThrows) {
  const auto p = init_params(ModelConfig{}, 12);
  Rng rng(15);
  auto w = random_window(rng);
  w.valid = {0, 0, 1, 0, 0};
  const auto c = encode_condition(p, w);
  EXPECT_EQ(c.size(), 32u);
  for (double v : c) EXPECT_TRUE(std::isfinite(v));
  w.valid.assign(5, 0);
  EXPECT_THROW(encode_condition(p, w), EmptyWindowError);
  EXPECT_THROW(generate(p, w, 1, 1, PlannerFamily::TEB), EmptyWindowError);
}

TEST(Condition, WrongSlotCountIsSchemaError) {
  const auto p = init_params(ModelConfig{}, 12);
  Rng rng(16);
  EXPECT_THROW(encode_condition(p, random_window(rng, 4)), SchemaError);
}

TEST(Generate, OutputsInsideUnitIntervalAndSeeded) {
  const auto p = init_params(ModelConfig{}, 17);
  Rng rng(18);
  const auto w = random_window(rng);
  const auto a = generate(p, w, 1000, 5, PlannerFamily::TEB);
  ASSERT_EQ(a.size(), 1000u);
  for (const auto& u : a)
    for (double x : u.u) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
  EXPECT_EQ(a, generate(p, w, 1000, 5, PlannerFamily::TEB));
  EXPECT_NE(a, generate(p, w, 1000, 6, PlannerFamily::TEB));
  EXPECT_THROW(generate(p, w, 0, 5, PlannerFamily::TEB), RangeError);
}

TEST(Config, RejectsBadValues) {
  ModelConfig c;
  c.embed_dim = 30;
  c.heads = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.p_train = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(model_config_from_json(nlohmann::json{{"latent_dim", "eight"}}), ConfigError);
  EXPECT_EQ(to_json(model_config_from_json(to_json(ModelConfig{}))), to_json(ModelConfig{}));
}

TEST(Train, MemorizesSingleExample) {
  auto c = small_config();
  c.p_train = 0.0;
  const auto ex = random_examples(20, 1);
  TrainConfig tc;
  tc.epochs = 500;
  tc.lr = 1e-2;
  tc.weight_decay = 0.0;
  const auto res = train(ex, {}, init_params(c, 1), tc);
  const auto out = generate(res.params, ex[0].window, 8, 3, PlannerFamily::DWA);
  double mse = 0.0;
  for (const auto& u : out)
    for (std::size_t j = 0; j < kNumHyperparams; ++j) mse += std::pow(u.u[j] - ex[0].target[j], 2) / (9.0 * 8.0);
  EXPECT_LT(mse, 1e-4);
}

TEST(Train, SameSeedSameParameters) {
  const auto ex = random_examples(21, 24);
  const auto val = random_examples(22, 6);
  TrainConfig tc;
  tc.epochs = 3;
  const auto a = train(ex, val, init_params(small_config(), 1), tc);
  const auto b = train(ex, val, init_params(small_config(), 1), tc);
  EXPECT_EQ(params_checksum(a.params), params_checksum(b.params));
  ASSERT_EQ(a.curve.size(), 3u);
  EXPECT_EQ(a.curve.back().val_loss, b.curve.back().val_loss);
  tc.seed = 2;
  EXPECT_NE(params_checksum(train(ex, val, init_params(small_config(), 1), tc).params), params_checksum(a.params));
}

TEST(Train, ReturnsBestValidationEpoch) {
  const auto ex = random_examples(23, 32);
  const auto val = random_examples(24, 8);
  TrainConfig tc;
  tc.epochs = 20;
  const auto res = train(ex, val, init_params(small_config(), 1), tc);
  double best = INFINITY;
  int best_epoch = 0;
  for (const auto& s : res.curve)
    if (s.val_loss < best) {
      best = s.val_loss;
      best_epoch = s.epoch;
    }
  EXPECT_EQ(res.best_epoch, best_epoch);
  EXPECT_EQ(res.best_val, best);
  EXPECT_LT(res.curve.back().train_loss, res.curve.front().train_loss);
}

TEST(Train, EmptyTrainingSetIsConfigError) {
  EXPECT_THROW(train({}, {}, init_params(small_config(), 1), TrainConfig{}), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto p = init_params(ModelConfig{}, 31);
  CheckpointInfo info;
  const auto q = deserialize_checkpoint(serialize_checkpoint(p, 77, 12), &info);
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(info.seed, 77u);
  EXPECT_EQ(info.epoch, 12u);
  EXPECT_EQ(info.config_hash, config_hash(p.config));
  EXPECT_EQ(serialize_checkpoint(q, 77, 12), serialize_checkpoint(p, 77, 12));
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  const auto bytes = serialize_checkpoint(init_params(small_config(), 1), 1, 1);
  EXPECT_THROW(deserialize_checkpoint("NOTACKPT" + bytes.substr(8)), ParseError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), ParseError);
  auto bad_hash = bytes;
  bad_hash[12] ^= 0x1;
  EXPECT_THROW(deserialize_checkpoint(bad_hash), SchemaError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), ConfigError);
}

}  // namespace
}  // namespace lenav::cvae
