#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "lenav/core/hyperparams.hpp"
#include "lenav/core/random.hpp"

namespace lenav {
namespace {

struct CaptureWarnings {
  std::vector<std::string> messages;
  WarningSink saved;
  CaptureWarnings() : saved(warning_sink()) {
    warning_sink() = [this](const std::string& m) { messages.push_back(m); };
  }
  ~CaptureWarnings() { warning_sink() = saved; }
};

HyperparamVector random_vector(PlannerFamily f, const NormalizationSpec& spec, Rng& rng) {
  HyperparamVector h{f, {}};
  for (std::size_t i = 0; i < kNumHyperparams; ++i) h[i] = rng.uniform(spec[i].lo, spec[i].hi);
  return h;
}

TEST(Normalize, MidpointAndBoundaries) {
  std::array<Bounds, kNumHyperparams> b{};
  b.fill({0.0, 1.0});
  b[hp::max_vel_x] = {0.2, 1.0};
  const NormalizationSpec spec(PlannerFamily::DWA, b);
  HyperparamVector h{PlannerFamily::DWA, {}};
  h.values.fill(0.5);
  h[hp::max_vel_x] = 0.6;
  EXPECT_DOUBLE_EQ(normalize(h, spec)[hp::max_vel_x], 0.5);
  h[hp::max_vel_x] = 0.2;
  EXPECT_EQ(normalize(h, spec)[hp::max_vel_x], 0.0);
  h[hp::max_vel_x] = 1.0;
  EXPECT_EQ(normalize(h, spec)[hp::max_vel_x], 1.0);
}

TEST(Normalize, RoundTripRandomVectors) {
  Rng rng(11);
  for (auto f : {PlannerFamily::DWA, PlannerFamily::TEB}) {
    const auto spec = NormalizationSpec::defaults(f);
    for (int k = 0; k < 100; ++k) {
      const auto h = random_vector(f, spec, rng);
      const auto back = denormalize(normalize(h, spec), spec);
      for (std::size_t i = 0; i < kNumHyperparams; ++i) EXPECT_NEAR(back[i], h[i], 1e-12);
    }
  }
}

TEST(Normalize, StrictlyMonotonePerDimension) {
  const auto spec = NormalizationSpec::defaults(PlannerFamily::TEB);
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    auto a = random_vector(PlannerFamily::TEB, spec, rng);
    for (std::size_t i = 0; i < kNumHyperparams; ++i) {
      auto b = a;
      b[i] = a[i] + 0.25 * (spec[i].hi - a[i]);
      if (b[i] == a[i]) continue;
      EXPECT_LT(normalize(a, spec)[i], normalize(b, spec)[i]);
    }
  }
}

TEST(Normalize, ClampsOutOfRangeWithWarning) {
  CaptureWarnings cap;
  const auto spec = NormalizationSpec::defaults(PlannerFamily::DWA);
  HyperparamVector h{PlannerFamily::DWA, {}};
  for (std::size_t i = 0; i < kNumHyperparams; ++i) h[i] = spec[i].lo;
  h[hp::max_vel_x] = 5.0;
  const auto u = normalize(h, spec);
  EXPECT_EQ(u[hp::max_vel_x], 1.0);
  ASSERT_EQ(cap.messages.size(), 1u);
  EXPECT_NE(cap.messages[0].find("max_vel_x"), std::string::npos);
}

TEST(Normalize, FamilyMismatchIsSchemaError) {
  HyperparamVector h{PlannerFamily::TEB, {}};
  EXPECT_THROW(normalize(h, NormalizationSpec::defaults(PlannerFamily::DWA)), SchemaError);
  NormalizedHyperparams u{PlannerFamily::DWA, {}};
  EXPECT_THROW(denormalize(u, NormalizationSpec::defaults(PlannerFamily::TEB)), SchemaError);
}

TEST(Denormalize, EndpointsAndMidpoint) {
  const auto spec = NormalizationSpec::defaults(PlannerFamily::TEB);
  NormalizedHyperparams u{PlannerFamily::TEB, {}};
  auto lo = denormalize(u, spec);
  u.u.fill(1.0);
  auto hi = denormalize(u, spec);
  for (std::size_t i = 0; i < kNumHyperparams; ++i) {
    EXPECT_EQ(lo[i], spec[i].lo);
    EXPECT_EQ(hi[i], spec[i].hi);
  }
  std::array<Bounds, kNumHyperparams> b{};
  b.fill({0.0, 2.0});
  u.u.fill(0.5);
  for (double x : denormalize(u, NormalizationSpec(PlannerFamily::TEB, b)).values) EXPECT_EQ(x, 1.0);
}

TEST(Denormalize, RejectsOutOfRange) {
  const auto spec = NormalizationSpec::defaults(PlannerFamily::DWA);
  NormalizedHyperparams u{PlannerFamily::DWA, {}};
  u[3] = 1.0 + 1e-10;  // within tolerance
  EXPECT_NO_THROW(denormalize(u, spec));
  u[3] = 1.0 + 1e-6;
  EXPECT_THROW(denormalize(u, spec), RangeError);
  u[3] = -0.01;
  EXPECT_THROW(denormalize(u, spec), RangeError);
}

TEST(UserRemap, UsesUserBoundsOnlyWhereSet) {
  const auto spec = NormalizationSpec::defaults(PlannerFamily::DWA);
  NormalizedHyperparams u{PlannerFamily::DWA, {}};
  u.u.fill(1.0);
  UserBounds user{};
  user[hp::max_vel_x] = Bounds{0.1, 0.5};
  const auto h = user_remap(u, spec, user);
  EXPECT_EQ(h[hp::max_vel_x], 0.5);
  EXPECT_EQ(h[hp::acc_lim_x], spec[hp::acc_lim_x].hi);
  u.u.fill(0.0);
  EXPECT_EQ(user_remap(u, spec, user)[hp::max_vel_x], 0.1);
}

TEST(UserRemap, OrderedLikeTheBounds) {
  const auto spec = NormalizationSpec::defaults(PlannerFamily::TEB);
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    NormalizedHyperparams u{PlannerFamily::TEB, {}};
    for (auto& x : u.u) x = rng.uniform();
    UserBounds slow{}, fast{};
    slow[hp::max_vel_x] = Bounds{0.2, 0.5};
    fast[hp::max_vel_x] = Bounds{0.4, 0.9};
    EXPECT_LT(user_remap(u, spec, slow)[hp::max_vel_x], user_remap(u, spec, fast)[hp::max_vel_x]);
  }
  NormalizedHyperparams u{PlannerFamily::TEB, {}};
  UserBounds bad{};
  bad[0] = Bounds{1.0, 0.5};
  EXPECT_THROW(user_remap(u, spec, bad), SchemaError);
}

TEST(NormalizationSpec, JsonOverridesByName) {
  const auto j = nlohmann::json::parse(R"({"max_vel_x": [0.3, 0.9], "occdist_scale": [0.01, 0.2]})");
  const auto spec = NormalizationSpec::from_json(PlannerFamily::DWA, j);
  EXPECT_EQ(spec[hp::max_vel_x].lo, 0.3);
  EXPECT_EQ(spec[hp::dwa::occdist_scale].hi, 0.2);
  EXPECT_EQ(spec[hp::inflation_radius], NormalizationSpec::defaults(PlannerFamily::DWA)[hp::inflation_radius]);
  EXPECT_THROW(NormalizationSpec::from_json(PlannerFamily::TEB, j), SchemaError);  // occdist_scale is DWA-only
  EXPECT_THROW(NormalizationSpec::from_json(PlannerFamily::DWA, nlohmann::json::parse(R"({"max_vel_x": [1, 0.5]})")),
               SchemaError);
  const auto back = NormalizationSpec::from_json(PlannerFamily::DWA, spec.to_json());
  EXPECT_EQ(back.bounds(), spec.bounds());
}

TEST(HyperparamVector, Validity) {
  const auto spec = NormalizationSpec::defaults(PlannerFamily::TEB);
  HyperparamVector h{PlannerFamily::TEB, {}};
  for (std::size_t i = 0; i < kNumHyperparams; ++i) h[i] = spec[i].lo;
  EXPECT_TRUE(is_valid(h));
  h[hp::inflation_radius] = 0.0;
  EXPECT_FALSE(is_valid(h));
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
}

}  // namespace
}  // namespace lenav
