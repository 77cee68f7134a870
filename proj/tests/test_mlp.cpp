#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rtg/io.hpp"
#include "rtg/mlp.hpp"
#include "rtg/regions.hpp"
#include "test_util.hpp"

namespace rtg {
namespace {

using testing_util::quadrant_net;
using testing_util::zero_net;
using testing_util::fd_gradient;
using testing_util::flatten;
using testing_util::min_abs_preactivation;

TEST(InitMlp, ShapesForSmallNet) {
  const auto p = init_mlp({2, 1, 2, 1, std::sqrt(2.0), 7});
  ASSERT_EQ(p.weights.size(), 2u);
  EXPECT_EQ(p.weights[0].rows(), 2);
  EXPECT_EQ(p.weights[0].cols(), 2);
  EXPECT_EQ(p.weights[1].rows(), 1);
  EXPECT_EQ(p.weights[1].cols(), 2);
  EXPECT_EQ(p.biases[0].size(), 2);
  EXPECT_EQ(p.biases[1].size(), 1);
}

TEST(InitMlp, DeterministicPerSeed) {
  const MlpConfig cfg{2, 3, 16, 2, std::sqrt(2.0), 99};
  EXPECT_EQ(init_mlp(cfg), init_mlp(cfg));
  auto other = cfg;
  other.seed = 100;
  EXPECT_FALSE(init_mlp(cfg) == init_mlp(other));
}

TEST(InitMlp, HiddenUnitCount) {
  const auto p = init_mlp({2, 4, 64, 2, std::sqrt(2.0), 1});
  EXPECT_EQ(p.config.hidden_units(), 256u);
  EXPECT_EQ(forward(p, Eigen::Vector2d(0.1, 0.2)).pattern.size(), 256u);
}

TEST(InitMlp, ScaleFollowsFanIn) {
  const auto p = init_mlp({2, 1, 400, 1, 2.0, 5});
  const auto& w = p.weights[0];
  const double var = w.squaredNorm() / static_cast<double>(w.size());
  EXPECT_NEAR(std::sqrt(var), 2.0 / std::sqrt(2.0), 0.05);
  const auto& b = p.biases[0];
  EXPECT_NEAR(std::sqrt(b.squaredNorm() / static_cast<double>(b.size())), 2.0, 0.2);
}

TEST(InitMlp, RejectsDegenerateConfigs) {
  EXPECT_THROW(init_mlp({2, 0, 4, 1, 1.0, 0}), InvalidArgument);
  EXPECT_THROW(init_mlp({2, 2, 0, 1, 1.0, 0}), InvalidArgument);
  EXPECT_THROW(init_mlp({0, 2, 4, 1, 1.0, 0}), InvalidArgument);
  EXPECT_THROW(init_mlp({2, 2, 4, 1, 0.0, 0}), InvalidArgument);
}

TEST(Forward, ZeroNetworkGivesZeroOutputAndInactivePattern) {
  const auto p = zero_net(2, 3, 4, 2);
  const auto r = forward(p, Eigen::Vector2d(0.3, -0.9));
  EXPECT_TRUE(r.output.isZero(0.0));
  EXPECT_EQ(r.pattern.popcount(), 0u);
}

TEST(Forward, HandEvaluatedQuadrantNet) {
  const auto p = quadrant_net();
  const auto r = forward(p, Eigen::Vector2d(0.5, -0.5));
  EXPECT_DOUBLE_EQ(r.output(0), 0.5);
  EXPECT_TRUE(r.pattern.test(0));
  EXPECT_FALSE(r.pattern.test(1));
}

TEST(Forward, BoundaryCountsAsInactive) {
  const auto r = forward(quadrant_net(), Eigen::Vector2d(0.0, 0.3));
  EXPECT_FALSE(r.pattern.test(0));
  EXPECT_TRUE(r.pattern.test(1));
}

TEST(Forward, LayerMajorBitOrder) {
  // Layer 1 units all active, layer 2 unit 1 active only.
  auto p = zero_net(2, 2, 3, 1);
  p.biases[0].setOnes();
  p.biases[1] << -1.0, 1.0, -1.0;
  const auto r = forward(p, Eigen::Vector2d(0.0, 0.0));
  for (std::size_t u = 0; u < 3; ++u) EXPECT_TRUE(r.pattern.test(u));
  EXPECT_FALSE(r.pattern.test(3));
  EXPECT_TRUE(r.pattern.test(4));
  EXPECT_FALSE(r.pattern.test(5));
}

TEST(Forward, NonFiniteIntermediateNamesLayer) {
  auto p = zero_net(2, 2, 2, 1);
  p.weights[0].setConstant(1e300);
  p.weights[1].setConstant(1e300);
  try {
    forward(p, Eigen::Vector2d(1.0, 1.0));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
}

TEST(ForwardBatch, EmptySingleAndGrid) {
  const auto p = init_mlp({2, 4, 64, 1, std::sqrt(2.0), 3});
  EXPECT_EQ(forward_batch(p, Eigen::MatrixXd(2, 0)).size(), 0u);

  const Eigen::Vector2d x(0.25, -0.75);
  const auto one = forward_batch(p, Eigen::MatrixXd(x));
  const auto single = forward(p, x);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.patterns[0], single.pattern);
  EXPECT_EQ(Eigen::VectorXd(one.outputs.col(0)), single.output);

  const auto grid = make_grid(100, -1, 1);
  const auto all = forward_batch(p, grid.points);
  EXPECT_EQ(all.size(), 10000u);
  for (int i : {0, 1023, 1024, 5000, 9999}) {
    const auto r = forward(p, grid.points.col(i));
    EXPECT_EQ(all.patterns[static_cast<std::size_t>(i)], r.pattern);
    // Blocked matrix products may differ from the single-point path in the last ulp.
    EXPECT_LE((all.outputs.col(i) - r.output).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + r.output.cwiseAbs().maxCoeff()));
  }
}

TEST(ForwardBatch, FirstBadPointIsReported) {
  const auto p = init_mlp({2, 1, 3, 1, 1.0, 0});
  Eigen::MatrixXd xs = Eigen::MatrixXd::Zero(2, 6);
  xs(1, 3) = NAN;
  xs(0, 5) = INFINITY;
  try {
    forward_batch(p, xs);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("point 3"), std::string::npos) << e.what();
  }
}

TEST(Forward, PiecewiseLinearWithinARegion) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  int checked = 0;
  for (int trial = 0; trial < 3000 && checked < 200; ++trial) {
    const auto p = init_mlp({2, 1 + rng() % 3, 2 + rng() % 6, 2, std::sqrt(2.0), rng()});
    const Eigen::Vector2d x(u(rng), u(rng));
    const Eigen::Vector2d y = x + 0.05 * Eigen::Vector2d(u(rng), u(rng));
    const auto fx = forward(p, x), fy = forward(p, y);
    if (!(fx.pattern == fy.pattern)) continue;
    bool shared = true;
    std::vector<Eigen::VectorXd> mids;
    for (double a : {0.25, 0.5, 0.75}) {
      const auto fm = forward(p, a * x + (1 - a) * y);
      shared = shared && fm.pattern == fx.pattern;
      mids.push_back(fm.output);
      if (shared) {
        EXPECT_LE((fm.output - (a * fx.output + (1 - a) * fy.output)).cwiseAbs().maxCoeff(), 1e-9);
      }
    }
    if (shared) ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(Forward, BitFlipCrossesAZeroOfThatUnit) {
  // Between two points whose patterns differ in one bit, bisection finds a
  // point where that unit's pre-activation vanishes.
  const auto p = init_mlp({2, 2, 5, 1, std::sqrt(2.0), 12});
  const auto grid = make_grid(60, -1, 1);
  const auto batch = forward_batch(p, grid.points);
  auto preact = [&](const Eigen::Vector2d& x, std::size_t unit) {
    Eigen::VectorXd act = x;
    const std::size_t layer = unit / p.config.width;
    for (std::size_t l = 0;; ++l) {
      Eigen::VectorXd z = p.weights[l] * act + p.biases[l];
      if (l == layer) return z(static_cast<Eigen::Index>(unit % p.config.width));
      act = z.cwiseMax(0.0);
    }
  };
  int checked = 0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (i % 60 == 59) continue;
    const auto& a = batch.patterns[i];
    const auto& b = batch.patterns[i + 1];
    if (hamming_distance(a, b) != 1) continue;
    std::size_t bit = 0;
    while (a.test(bit) == b.test(bit)) ++bit;
    Eigen::Vector2d lo = grid.points.col(static_cast<Eigen::Index>(i));
    Eigen::Vector2d hi = grid.points.col(static_cast<Eigen::Index>(i + 1));
    const bool lo_bit = a.test(bit);
    for (int it = 0; it < 60; ++it) {
      const Eigen::Vector2d mid = 0.5 * (lo + hi);
      (forward(p, mid).pattern.test(bit) == lo_bit ? lo : hi) = mid;
    }
    EXPECT_NEAR(preact(lo, bit), 0.0, 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(Gradient, MatchesCentralDifferencesOnRandomNets) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1);
  int nets = 0;
  while (nets < 20) {
    const MlpConfig cfg{2, 1 + rng() % 3, 1 + rng() % 8, 2 + rng() % 2, std::sqrt(2.0), rng()};
    const auto p = init_mlp(cfg);
    Eigen::MatrixXd xs(2, 6);
    std::vector<int> ys(6);
    for (int c = 0; c < 6; ++c) {
      xs.col(c) << u(rng), u(rng);
      ys[static_cast<std::size_t>(c)] = static_cast<int>(rng() % cfg.output_dim);
    }
    if (min_abs_preactivation(p, xs) < 1e-3) continue;
    const auto analytic = flatten(loss_and_gradient(p, xs, ys).second);
    const auto numeric = fd_gradient(p, xs, ys);
    ASSERT_EQ(analytic.size(), numeric.size());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-5});
      EXPECT_LE(std::abs(analytic[i] - numeric[i]) / scale, 1e-4) << "net " << nets << " coord " << i;
    }
    ++nets;
  }
}

TEST(Gradient, LossMatchesStandaloneCrossEntropy) {
  const auto p = init_mlp({2, 2, 6, 3, std::sqrt(2.0), 4});
  Eigen::MatrixXd xs(2, 3);
  xs << 0.1, -0.4, 0.9, 0.3, 0.2, -0.8;
  const std::vector<int> ys{0, 2, 1};
  EXPECT_NEAR(loss_and_gradient(p, xs, ys).first, cross_entropy_loss(p, xs, ys), 1e-14);
}

LabeledDataset five_train_points() {
  LabeledDataset d;
  d.inputs.resize(2, 6);
  d.inputs << 0.1, -0.5, 0.7, -0.2, 0.4, 0.0, 0.3, 0.6, -0.8, -0.1, 0.9, 0.0;
  d.labels = {0, 1, 1, 0, 1, 0};
  d.split = 0.9;  // floor(5.4) = 5 training points
  return d;
}

TEST(Train, SingleSgdStepMatchesFiniteDifferenceStep) {
  const auto data = five_train_points();
  ASSERT_EQ(data.train_count(), 5u);
  MlpParams p = init_mlp({2, 2, 4, 2, std::sqrt(2.0), 31});
  ASSERT_GT(min_abs_preactivation(p, data.train_inputs()), 1e-3);
  TrainConfig tc;
  tc.optimizer = Optimizer::sgd;
  tc.learning_rate = 0.1;
  tc.epochs = 1;
  tc.batch_size = 5;
  tc.early_stop_accuracy.reset();
  const auto trained = train(p, data, tc).params;

  const auto grad = fd_gradient(p, data.train_inputs(), data.train_labels());
  std::size_t k = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i, ++k) {
      const double expected = p.weights[l].data()[i] - tc.learning_rate * grad[k];
      EXPECT_NEAR(trained.weights[l].data()[i], expected, 1e-4 * std::max(1.0, std::abs(expected)));
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i, ++k) {
      const double expected = p.biases[l](i) - tc.learning_rate * grad[k];
      EXPECT_NEAR(trained.biases[l](i), expected, 1e-4 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST(Train, ZeroLearningRateLeavesParamsUnchanged) {
  const auto data = make_circle_dataset(200, default_circle_radius(), 1);
  const auto p = init_mlp({2, 2, 8, 2, std::sqrt(2.0), 2});
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 4;
  tc.batch_size = 32;
  tc.early_stop_accuracy.reset();
  const auto res = train(p, data, tc);
  EXPECT_EQ(res.params, p);
  ASSERT_EQ(res.history.size(), 4u);
  for (const auto& h : res.history) {
    EXPECT_EQ(h.train_loss, res.history[0].train_loss);
    EXPECT_EQ(h.test_accuracy, res.history[0].test_accuracy);
  }
}

TEST(Train, DeterministicAndLearnsTheCircle) {
  const auto data = make_circle_dataset(1000, default_circle_radius(), 9);
  const auto p = init_mlp({2, 2, 32, 2, std::sqrt(2.0), 9});
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.epochs = 60;
  tc.batch_size = 64;
  tc.seed = 4;
  const auto a = train(p, data, tc);
  const auto b = train(p, data, tc);
  EXPECT_EQ(a.params, b.params);
  EXPECT_GT(a.history.back().train_accuracy, 0.95);
  EXPECT_LT(a.history.back().train_loss, a.history.front().train_loss);
}

TEST(Train, PreconditionsAndDivergence) {
  const auto data = make_circle_dataset(100, default_circle_radius(), 1);
  TrainConfig tc;
  tc.batch_size = 10;
  EXPECT_THROW(train(init_mlp({2, 1, 4, 1, 1.0, 0}), data, tc), InvalidArgument);
  tc.batch_size = 81;
  EXPECT_THROW(train(init_mlp({2, 1, 4, 2, 1.0, 0}), data, tc), InvalidArgument);

  tc.batch_size = 80;
  tc.optimizer = Optimizer::sgd;
  tc.learning_rate = 1e250;
  tc.epochs = 5;
  tc.early_stop_accuracy.reset();
  try {
    train(init_mlp({2, 2, 8, 2, 1.0, 0}), data, tc);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(Lipschitz, ZeroAndScaledIdentity) {
  EXPECT_EQ(estimate_lipschitz_upper(zero_net(2, 2, 3, 1)), 0.0);
  EXPECT_NEAR(spectral_norm(2.0 * Eigen::MatrixXd::Identity(3, 3)), 2.0, 1e-12);
  auto p = zero_net(2, 1, 2, 2);
  p.weights[0] = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  p.weights[1] = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_NEAR(estimate_lipschitz_upper(p), 2.0, 1e-12);
}

TEST(Lipschitz, MatchesDenseSvdOnRandomNets) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = init_mlp({2, 3, 10 + seed, 2, std::sqrt(2.0), seed});
    double product = 1.0;
    for (const auto& w : p.weights) product *= Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0);
    EXPECT_NEAR(estimate_lipschitz_upper(p), product, 1e-5 * product);
  }
}

TEST(Lipschitz, BoundsObservedSlopes) {
  const auto p = init_mlp({2, 3, 12, 2, std::sqrt(2.0), 77});
  const double bound = estimate_lipschitz_upper(p);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector2d x(u(rng), u(rng)), y(u(rng), u(rng));
    EXPECT_LE((forward(p, x).output - forward(p, y).output).norm(), bound * (x - y).norm() * (1 + 1e-12));
  }
}

TEST(Datasets, CircleLabels) {
  const auto d = make_circle_dataset(10000, default_circle_radius(), 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = d.inputs.col(static_cast<Eigen::Index>(i)).norm();
    EXPECT_EQ(d.labels[i], r < default_circle_radius() ? 1 : 0);
  }
  double ones = 0;
  for (int y : d.labels) ones += y;
  EXPECT_GE(ones / 10000.0, 0.48);
  EXPECT_LE(ones / 10000.0, 0.52);
  EXPECT_EQ(d.train_count(), 8000u);
  EXPECT_LE(d.inputs.cwiseAbs().maxCoeff(), 1.0);

  // Origin is inside any circle, the corner outside any admissible radius.
  LabeledDataset tiny = make_circle_dataset(10, 0.5, 0);
  EXPECT_LT(Eigen::Vector2d(0, 0).norm(), 0.5);
  EXPECT_GE(Eigen::Vector2d(1, 1).norm(), std::sqrt(2.0) - 1e-15);
  EXPECT_EQ(tiny.size(), 10u);
}

TEST(Datasets, CirclePreconditions) {
  EXPECT_THROW(make_circle_dataset(9, 0.5, 0), InvalidArgument);
  EXPECT_THROW(make_circle_dataset(100, 0.0, 0), InvalidArgument);
  EXPECT_THROW(make_circle_dataset(100, std::sqrt(2.0), 0), InvalidArgument);
}

TEST(Datasets, RandomLabels) {
  const auto d = make_random_label_dataset(1000, 2, 5);
  double ones = 0;
  for (int y : d.labels) ones += y;
  EXPECT_GE(ones / 1000.0, 0.44);
  EXPECT_LE(ones / 1000.0, 0.56);

  const auto again = make_random_label_dataset(1000, 2, 5);
  EXPECT_EQ(again.labels, d.labels);
  EXPECT_EQ(again.inputs, d.inputs);

  const auto two = make_random_label_dataset(2, 2, 1);
  EXPECT_EQ(two.size(), 2u);
  for (int y : two.labels) EXPECT_TRUE(y == 0 || y == 1);
  EXPECT_THROW(make_random_label_dataset(10, 1, 0), InvalidArgument);
}

TEST(MlpJson, RoundTripIsBitExact) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 10; ++i) {
    const auto p = init_mlp({2, 1 + rng() % 4, 1 + rng() % 20, 1 + rng() % 3, 0.5 + (rng() % 100) / 50.0, rng()});
    const auto doc = to_json(p);
    EXPECT_EQ(doc["version"], 1);
    EXPECT_EQ(mlp_from_json(json::parse(doc.dump())), p);
  }
}

TEST(MlpJson, WeightsAreRowMajor) {
  auto p = zero_net(2, 1, 2, 1);
  p.weights[0] << 1, 2, 3, 4;
  EXPECT_EQ(to_json(p)["weights"][0], json({1.0, 2.0, 3.0, 4.0}));
}

TEST(MlpJson, RejectsBadDocuments) {
  auto doc = to_json(quadrant_net());
  doc["version"] = 2;
  EXPECT_THROW(mlp_from_json(doc), VersionMismatch);
  doc = to_json(quadrant_net());
  doc["weights"][0].push_back(1.0);
  EXPECT_THROW(mlp_from_json(doc), MalformedFile);
  doc = to_json(quadrant_net());
  doc.erase("config");
  EXPECT_THROW(mlp_from_json(doc), MalformedFile);
}

}  // namespace
}  // namespace rtg
