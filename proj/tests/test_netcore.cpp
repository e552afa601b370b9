/* Copyright 2026 The et-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include "et/netcore.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace et;
using namespace et::testing;

namespace {

StackSpec one_by_one(int ch, Activation act) { return {"id", {{ch, ch, 1, 1, act}}}; }

}  // namespace

TEST(Conv, ZeroWeightsGiveZeroOutput) {
  StackSpec spec{"z", {{3, 4, 3, 2, Activation::kNone}}};
  ParamSet<double> p;
  add_zero_params(spec, p);
  Tensor<double> x({3, 8, 8});
  x.data().setRandom();
  const auto rec = forward(p, spec, x);
  EXPECT_EQ(rec.output().shape(), (Shape{4, 4, 4}));
  EXPECT_EQ(rec.output().data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Conv, IdentityOneByOne) {
  const StackSpec spec = one_by_one(3, Activation::kNone);
  ParamSet<double> p;
  add_zero_params(spec, p);
  auto& w = p.at(spec.weight_name(0));
  for (int c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  Tensor<double> x({3, 5, 5});
  x.data().setRandom();
  EXPECT_EQ(forward(p, spec, x).output().data(), x.data());
}

TEST(Conv, DeterministicAcrossRuns) {
  StackSpec spec{"d", {{3, 6, 3, 2, Activation::kLeakyRelu}, {6, 4, 3, 1, Activation::kLeakyRelu}}};
  auto run = [&] {
    std::mt19937_64 rng(77);
    ParamSet<double> p;
    init_params(spec, p, rng);
    Tensor<double> x({3, 11, 11});
    for (Index i = 0; i < x.size(); ++i) x[i] = uniform(rng, -1, 1);
    return forward(p, spec, x).output().data();
  };
  EXPECT_EQ(run(), run());
}

TEST(Conv, ShapeMismatchIsConfigError) {
  const StackSpec spec = one_by_one(3, Activation::kNone);
  ParamSet<double> p;
  add_zero_params(spec, p);
  EXPECT_THROW(forward(p, spec, Tensor<double>({2, 4, 4})), ConfigError);
}

TEST(Conv, BackwardTwiceIsUsageError) {
  const StackSpec spec = one_by_one(2, Activation::kLeakyRelu);
  ParamSet<double> p;
  add_zero_params(spec, p);
  auto rec = forward(p, spec, Tensor<double>({2, 3, 3}));
  const Tensor<double> up({2, 3, 3});
  backward(rec, p, spec, up);
  EXPECT_THROW(backward(rec, p, spec, up), UsageError);
}

TEST(Conv, BiasGradientIsSummedUpstream) {
  const StackSpec spec = one_by_one(2, Activation::kNone);
  std::mt19937_64 rng(2);
  ParamSet<double> p;
  init_params(spec, p, rng);
  Tensor<double> x({2, 3, 3});
  x.data().setRandom();
  auto rec = forward(p, spec, x);
  Tensor<double> up({2, 3, 3});
  up.data().setRandom();
  const auto g = backward(rec, p, spec, up);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(g.params.at(spec.bias_name(0))[c], up.data().segment(c * 9, 9).sum(), 1e-12);
}

TEST(Conv, ConstantBranchHasZeroGradient) {
  const StackSpec spec = one_by_one(2, Activation::kLeakyRelu);
  std::mt19937_64 rng(2);
  ParamSet<double> p;
  init_params(spec, p, rng);
  auto rec = forward(p, spec, Tensor<double>({2, 3, 3}));
  const auto g = backward(rec, p, spec, Tensor<double>({2, 3, 3}));
  for (const auto& [name, t] : g.params) EXPECT_EQ(t.data().cwiseAbs().maxCoeff(), 0.0) << name;
}

TEST(Dense, BiasGradientEqualsUpstream) {
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(3, 2);
  const Eigen::VectorXd x = Eigen::VectorXd::Random(2), up = Eigen::VectorXd::Random(3);
  EXPECT_EQ(dense_backward<double>(w, x, up).bias, up);
}

TEST(Gradients, FiniteDifferenceSuite) {
  for (const auto& r : gradient_suite(3, 101)) EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
}

TEST(Grl, ForwardIdentityBackwardReversed) {
  Tensor<double> g({2, 3, 3});
  g.data().setRandom();
  EXPECT_EQ(&grl_forward(grl_forward(g)), &g);
  EXPECT_EQ(grl_backward(g, 1.0).data(), -g.data());
  const auto s = grl_backward(g, 0.1);
  for (Index i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(s[i], -0.1 * g[i]);
  Tensor<double> h({2, 3, 3});
  h.data().setRandom();
  const Tensor<double> sum(g.shape(), g.data() + h.data());
  EXPECT_TRUE(grl_backward(sum, 0.3).data().isApprox(grl_backward(g, 0.3).data() + grl_backward(h, 0.3).data()));
}

TEST(Ema, EndpointsAndDecay) {
  ParamSet<double> s{{"w", Tensor<double>({4}, Eigen::VectorXd::Random(4))}};
  ParamSet<double> t{{"w", Tensor<double>({4}, Eigen::VectorXd::Random(4))}};
  EXPECT_EQ(ema_update(t, s, 0.0).at("w").data(), s.at("w").data());
  EXPECT_EQ(ema_update(t, s, 1.0).at("w").data(), t.at("w").data());
  const auto r = grl_ema_suite(5);
  EXPECT_EQ(r.grl_max_abs_error, 0.0);
  EXPECT_LE(r.decay_max_step_error, 1e-12);
  EXPECT_GE(r.shrink_factor, 1e4);
}

TEST(Ema, StructureMismatchRejected) {
  ParamSet<double> s{{"w", Tensor<double>({4})}};
  ParamSet<double> t{{"w", Tensor<double>({5})}};
  ParamSet<double> u{{"v", Tensor<double>({4})}};
  EXPECT_THROW(ema_update(t, s, 0.5), ConfigError);
  EXPECT_THROW(ema_update(u, s, 0.5), ConfigError);
  EXPECT_THROW(ema_update(s, s, 1.5), ConfigError);
}

TEST(Sgd, MomentumAndDecayOnWeightsOnly) {
  ParamSet<double> p{{"a.weight", Tensor<double>({1}, Eigen::VectorXd::Constant(1, 2.0))},
                     {"a.bias", Tensor<double>({1}, Eigen::VectorXd::Constant(1, 2.0))}};
  ParamSet<double> g{{"a.weight", Tensor<double>({1}, Eigen::VectorXd::Constant(1, 1.0))},
                     {"a.bias", Tensor<double>({1}, Eigen::VectorXd::Constant(1, 1.0))}};
  Sgd<double> opt({0.1, 0.5, 0.01});
  opt.step(p, g);
  EXPECT_NEAR(p.at("a.weight")[0], 2.0 - 0.1 * (1.0 + 0.02), 1e-15);
  EXPECT_NEAR(p.at("a.bias")[0], 2.0 - 0.1, 1e-15);
  opt.step(p, g);
  const double v = 0.5 * 1.02 + 1.0 + 0.01 * (2.0 - 0.102);
  EXPECT_NEAR(p.at("a.weight")[0], 2.0 - 0.102 - 0.1 * v, 1e-15);
}

TEST(Sgd, ClipGradNormScalesOnlyAboveCap) {
  ParamSet<double> g{{"a.weight", Tensor<double>({2}, Eigen::Vector2d(3.0, 0.0))},
                     {"a.bias", Tensor<double>({1}, Eigen::VectorXd::Constant(1, 4.0))}};
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(g.at("a.bias")[0], 4.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 0.0), 5.0);
  EXPECT_DOUBLE_EQ(g.at("a.weight")[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.at("a.weight")[0], 0.6, 1e-15);
  EXPECT_NEAR(g.at("a.bias")[0], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm(g, 0.0), 1.0, 1e-15);
}

TEST(Tensor, NonFiniteDetected) {
  Tensor<double> t({2});
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(t.check_finite("t"), NumericError);
  EXPECT_THROW(Tensor<double>({2, 2}, Eigen::VectorXd::Zero(3)), ConfigError);
}
