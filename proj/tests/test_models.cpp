#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "specshape/error.hpp"
#include "specshape/linalg.hpp"
#include "specshape/mode_model.hpp"
#include "specshape/models.hpp"
#include "specshape/optimizers.hpp"
#include "test_util.hpp"

using namespace specshape;
using test::kind_of;

namespace {

QuadraticProblem identity_problem(const Matrix& w_star) {
  QuadraticProblem p;
  p.h = Matrix::identity(w_star.rows());
  p.w_star = w_star;
  return p;
}

// Reference softmax / CE / Brier on one row of logits.
struct RowLoss {
  double ce;
  double brier;
};

RowLoss reference_loss(std::span<const double> z, std::size_t label) {
  long double m = *std::max_element(z.begin(), z.end());
  long double sum = 0.0L;
  for (double v : z) sum += std::exp(static_cast<long double>(v) - m);
  RowLoss out{0.0, 0.0};
  out.ce = static_cast<double>(std::log(sum) - (static_cast<long double>(z[label]) - m));
  for (std::size_t j = 0; j < z.size(); ++j) {
    const long double p = std::exp(static_cast<long double>(z[j]) - m) / sum;
    const long double r = p - (j == label ? 1.0L : 0.0L);
    out.brier += static_cast<double>(r * r);
  }
  return out;
}

}  // namespace

TEST(Quadratic, OptimumHasZeroLossAndGradient) {
  QuadraticSpectrumParams params;
  params.rows = 6;
  params.cols = 4;
  const QuadraticInstance inst = make_quadratic(params, 1);
  const LossGrad lg = quadratic_loss_grad(inst.problem, inst.problem.w_star);
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(max_abs(lg.grad), 0.0);
}

TEST(Quadratic, IdentityExample) {
  const QuadraticProblem p = identity_problem(Matrix{{0.0}});
  const LossGrad lg = quadratic_loss_grad(p, Matrix{{2.0}});
  EXPECT_EQ(lg.loss, 2.0);
  EXPECT_EQ(lg.grad, Matrix{{2.0}});
}

TEST(Quadratic, DirectionalDerivativeMatchesFiniteDifference) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    QuadraticSpectrumParams params;
    params.rows = 3 + seed % 5;
    params.cols = 2 + seed % 4;
    params.h_min = 1e-2;
    params.kappa = 0.5 + static_cast<double>(seed % 3);
    const QuadraticInstance inst = make_quadratic(params, seed);
    const Matrix w = test::random_matrix(params.rows, params.cols, 1000 + seed);
    const Matrix dir = test::random_matrix(params.rows, params.cols, 2000 + seed);
    const double h = 1e-5;
    Matrix up = w, down = w;
    add_scaled(up, h, dir);
    add_scaled(down, -h, dir);
    const double fd = (quadratic_loss(inst.problem, up) - quadratic_loss(inst.problem, down)) / (2.0 * h);
    const double an = frobenius_inner(quadratic_loss_grad(inst.problem, w).grad, dir);
    EXPECT_NEAR(fd, an, 1e-6 * std::max(1.0, std::abs(an))) << "seed " << seed;
  }
}

TEST(Quadratic, NoiseNeedsStreamAndHasRequestedVariance) {
  QuadraticProblem p = identity_problem(Matrix(40, 50));
  p.noise_std = 0.3;
  const Matrix w(40, 50);
  EXPECT_EQ(kind_of([&] { quadratic_loss_grad(p, w); }), ErrorKind::SeedRequired);
  Rng rng(3);
  const Matrix g = quadratic_loss_grad(p, w, &rng).grad;
  double sum = 0.0, sq = 0.0;
  for (double v : g.data()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(g.size());
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 0.09, 0.01);
}

TEST(Quadratic, ShapeMismatch) {
  const QuadraticProblem p = identity_problem(Matrix(2, 3));
  EXPECT_EQ(kind_of([&] { quadratic_loss_grad(p, Matrix(3, 2)); }), ErrorKind::ShapeMismatch);
}

TEST(Quadratic, ValidationChecksSpectrum) {
  QuadraticProblem p = identity_problem(Matrix(2, 2));
  EXPECT_NO_THROW(validate(p));
  p.h = Matrix{{0.5, 0}, {0, 0.2}};
  EXPECT_EQ(kind_of([&] { validate(p); }), ErrorKind::InvalidParams);
  p.h = Matrix{{1, 0}, {0, -0.5}};
  EXPECT_EQ(kind_of([&] { validate(p); }), ErrorKind::InvalidParams);
  p.h = Matrix{{1, 0.5}, {0, 1}};
  EXPECT_EQ(kind_of([&] { validate(p); }), ErrorKind::NotSymmetric);
}

TEST(GenSynthetic, UnitFloorGivesIdentity) {
  QuadraticSpectrumParams params;
  params.rows = 5;
  params.cols = 3;
  params.h_min = 1.0;
  EXPECT_EQ(make_quadratic(params, 9).problem.h, Matrix::identity(5));
}

TEST(GenSynthetic, RequestedSpectrumRoundTrips) {
  QuadraticSpectrumParams params;
  params.spectrum = {1.0, 0.1, 0.01};
  params.cols = 4;
  const QuadraticInstance inst = make_quadratic(params, 10);
  validate(inst.problem);
  const SymEigResult eig = sym_eig(inst.problem.h);
  ASSERT_EQ(eig.eigenvalues.size(), 3u);
  EXPECT_NEAR(eig.eigenvalues[0], 1.0, 1e-10);
  EXPECT_NEAR(eig.eigenvalues[1], 0.1, 1e-10);
  EXPECT_NEAR(eig.eigenvalues[2], 0.01, 1e-10);
  for (std::size_t i = 0; i < 3; ++i) {
    const Matrix q(3, 1, inst.eigenvectors.column(i));
    EXPECT_LE(frobenius_norm(matmul(inst.problem.h, q) - inst.spectrum[i] * q), 1e-12);
  }
}

TEST(GenSynthetic, LogSpacedSpectrumAndSignalScale) {
  const auto h = log_spaced_spectrum(5, 1e-4);
  EXPECT_EQ(h.front(), 1.0);
  EXPECT_EQ(h.back(), 1e-4);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_NEAR(h[i] / h[i - 1], 0.1, 1e-12);

  QuadraticSpectrumParams params;
  params.rows = 8;
  params.cols = 6;
  params.signal_scale = 0.5;
  params.signal_tilt = 0.7;
  const QuadraticInstance inst = make_quadratic(params, 11);
  EXPECT_NEAR(frobenius_norm(inst.w0 - inst.problem.w_star), 0.5 * std::sqrt(48.0), 1e-12);
}

TEST(GenSynthetic, SeedDeterminesInstance) {
  QuadraticSpectrumParams params;
  params.rows = 6;
  params.cols = 5;
  const QuadraticInstance a = make_quadratic(params, 12);
  const QuadraticInstance b = make_quadratic(params, 12);
  const QuadraticInstance c = make_quadratic(params, 13);
  EXPECT_EQ(a.problem.h, b.problem.h);
  EXPECT_EQ(a.w0, b.w0);
  EXPECT_NE(a.w0, c.w0);
}

TEST(GenSynthetic, InvalidParams) {
  QuadraticSpectrumParams params;
  params.h_min = 0.0;
  EXPECT_EQ(kind_of([&] { make_quadratic(params, 0); }), ErrorKind::InvalidParams);
  params = QuadraticSpectrumParams{};
  params.spectrum = {0.5, 0.1};
  EXPECT_EQ(kind_of([&] { make_quadratic(params, 0); }), ErrorKind::InvalidParams);
  params = QuadraticSpectrumParams{};
  params.cols = 0;
  EXPECT_EQ(kind_of([&] { make_quadratic(params, 0); }), ErrorKind::InvalidParams);
  ClusterParams cp;
  cp.classes = 1;
  EXPECT_EQ(kind_of([&] { ClusterData(cp, 0); }), ErrorKind::InvalidParams);
}

TEST(GenSynthetic, SeparatedClustersAreLinearlySeparable) {
  ClusterParams cp;
  cp.classes = 2;
  cp.dim = 8;
  cp.margin = 10.0;
  const ClusterData data(cp, 14);
  Rng rng(15);
  const Batch b = data.sample(1000, rng);
  Eigen::MatrixXd x(1000, 9);
  Eigen::VectorXd y(1000);
  for (int i = 0; i < 1000; ++i) {
    for (int d = 0; d < 8; ++d) x(i, d) = b.x(i, d);
    x(i, 8) = 1.0;
    y(i) = b.labels[i] == 1 ? 1.0 : -1.0;
  }
  const Eigen::VectorXd coef = x.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd pred = x * coef;
  int correct = 0;
  for (int i = 0; i < 1000; ++i) correct += (pred(i) > 0.0) == (y(i) > 0.0);
  EXPECT_GT(correct, 990);
}

TEST(GenSynthetic, ClusterCentresHaveRequestedMargin) {
  ClusterParams cp;
  const ClusterData data(cp, 16);
  for (std::size_t c = 0; c < cp.classes; ++c) {
    double n = 0.0;
    for (double v : data.centers().row(c)) n += v * v;
    EXPECT_NEAR(std::sqrt(n), cp.margin, 1e-12);
  }
  Rng a(17), b(17);
  EXPECT_EQ(data.sample(10, a).x, data.sample(10, b).x);
}

TEST(Mlp, LossEndpointsMatchReference) {
  auto [model, batch] = test::random_mlp_instance(20);
  const Matrix logits = mlp_logits(model, batch.x);
  double ce = 0.0, brier = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const RowLoss r = reference_loss(logits.row(i), batch.labels[i]);
    ce += r.ce;
    brier += r.brier;
  }
  const double n = static_cast<double>(logits.rows());
  EXPECT_NEAR(mlp_loss(model, batch, {0.0}), ce / n, 1e-12);
  EXPECT_NEAR(mlp_loss(model, batch, {1.0}), brier / n, 1e-12);
}

TEST(Mlp, PerfectPredictionHasZeroLoss) {
  MlpModel model;
  model.w1 = 30.0 * Matrix::identity(3);
  model.w2 = Matrix::identity(3);
  Batch batch;
  batch.x = Matrix::identity(3);
  batch.labels = {0, 1, 2};
  for (double lambda : {0.0, 0.3, 1.0}) EXPECT_EQ(mlp_loss(model, batch, {lambda}), 0.0);
  EXPECT_EQ(accuracy(mlp_logits(model, batch.x), batch.labels), 1.0);
}

TEST(Mlp, LossIsAffineInLambda) {
  for (std::uint64_t seed = 30; seed < 40; ++seed) {
    auto [model, batch] = test::random_mlp_instance(seed);
    const double l0 = mlp_loss(model, batch, {0.0});
    const double l1 = mlp_loss(model, batch, {1.0});
    for (double lambda : {0.1, 0.5, 0.9}) {
      EXPECT_NEAR(mlp_loss(model, batch, {lambda}), (1.0 - lambda) * l0 + lambda * l1, 1e-12);
    }
  }
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [model, batch] = test::random_mlp_instance(seed);
    for (double lambda : {0.0, 0.5, 1.0}) {
      const test::MlpGradientCheck gap = test::check_mlp_gradients(model, batch, {lambda});
      EXPECT_LE(gap.w1, 1e-5) << "seed " << seed << " lambda " << lambda;
      EXPECT_LE(gap.w2, 1e-5) << "seed " << seed << " lambda " << lambda;
    }
  }
}

TEST(Mlp, ForwardBackwardLossEqualsLoss) {
  auto [model, batch] = test::random_mlp_instance(50);
  EXPECT_EQ(mlp_forward_backward(model, batch, {0.4}).loss, mlp_loss(model, batch, {0.4}));
}

TEST(Mlp, Errors) {
  auto [model, batch] = test::random_mlp_instance(51);
  Batch bad = batch;
  bad.labels[0] = model.w2.cols();
  EXPECT_EQ(kind_of([&] { mlp_forward_backward(model, bad, {0.0}); }), ErrorKind::LabelOutOfRange);
  bad = batch;
  bad.labels.pop_back();
  EXPECT_EQ(kind_of([&] { mlp_forward_backward(model, bad, {0.0}); }), ErrorKind::ShapeMismatch);
  bad = batch;
  bad.x = Matrix(batch.x.rows(), batch.x.cols() + 1);
  EXPECT_EQ(kind_of([&] { mlp_forward_backward(model, bad, {0.0}); }), ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([&] { mlp_loss(model, batch, {1.5}); }), ErrorKind::InvalidParams);
}

TEST(Bridge, RawSgdOnQuadraticMatchesClosedFormModeModel) {
  // Noiseless SGD with beta = 0 and constant lr is the p = 1 mode model in
  // H's eigenbasis: each row of Q^T (W - W*) contracts by 1 - eta kappa h_i.
  QuadraticSpectrumParams params;
  params.rows = 6;
  params.cols = 4;
  params.h_min = 1e-2;
  params.kappa = 2.0;
  const QuadraticInstance inst = make_quadratic(params, 60);

  OptimizerState state;
  state.hyper.base_lr = 0.1;
  state.hyper.momentum_beta = 0.0;
  state.hyper.weight_decay = 0.0;
  ParamMap p{{"w", inst.w0}};

  auto mode_energy = [&](const Matrix& w) {
    const Matrix proj = transposed_matmul(inst.eigenvectors, w - inst.problem.w_star);
    std::vector<double> e(proj.rows(), 0.0);
    for (std::size_t i = 0; i < proj.rows(); ++i)
      for (double v : proj.row(i)) e[i] += v * v;
    return e;
  };

  ModeModelConfig cfg;
  cfg.curvatures = inst.spectrum;
  cfg.noise_levels.assign(inst.spectrum.size(), 0.0);
  for (double e : mode_energy(inst.w0)) cfg.initial_residuals.push_back(std::sqrt(e));
  cfg.kappa = params.kappa;
  cfg.eta = 0.1;
  cfg.exponent = 1.0;
  cfg.steps = 60;
  const ModeTrajectory traj = simulate_trajectory(cfg, SimulationMode::ClosedForm);

  for (std::size_t t = 0; t < cfg.steps; ++t) {
    sgd_step(state, p, {{"w", quadratic_loss_grad(inst.problem, p.at("w")).grad}}, t);
    const auto e = mode_energy(p.at("w"));
    for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(e[i], traj.values[t + 1][i], 1e-10) << "t=" << t;
  }
}
