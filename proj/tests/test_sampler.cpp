#include <doctest.h>

#include <cmath>
#include <numeric>

#include "micas/error.hpp"
#include "micas/sampler.hpp"
#include "oracles.hpp"

using namespace micas;
using micas::ad::Var;

namespace {

SamplerConfig tiny() {
  SamplerConfig c;
  c.d1 = 8;
  c.d2 = 8;
  c.hidden = 8;
  c.num_centers = 4;
  return c;
}

ad::ParamStore tiny_params(std::uint64_t seed) {
  ad::ParamStore p;
  Rng rng(seed);
  init_sampler(p, tiny(), rng);
  return p;
}

Matrix permutation_rows(const Matrix& m, const std::vector<Index>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<Index> shuffled(Index n, Rng& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

TEST_CASE("gumbel inversion and mean") {
  CHECK(gumbel_from_uniform(std::exp(-1.0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(gumbel_from_uniform(std::exp(-std::exp(1.0))) == doctest::Approx(-1.0).epsilon(1e-14));
  Rng rng(2024);
  const Matrix g = gumbel_noise(1000, 1000, rng);
  CHECK(std::abs(g.mean() - 0.5772156649) <= 0.005);
  Rng a(5), b(5);
  CHECK(gumbel_noise(4, 3, a) == gumbel_noise(4, 3, b));
}

TEST_CASE("sampling weights: zero projection and dense oracle") {
  ad::ParamStore p = tiny_params(1);
  Rng rng(3);
  const Matrix enhanced = oracle::random_points(5, rng).replicate(1, 6).leftCols(16);
  p.at(kSelectionWeightName).value.setZero();
  {
    ad::Tape t;
    const Matrix sw = sampling_weights(t, p, t.constant(enhanced)).value();
    CHECK((sw.array() - (std::log(2.0) + 1e-6)).abs().maxCoeff() <= 1e-15);
  }
  Matrix w(16, 4);
  for (Index i = 0; i < 16; ++i)
    for (Index j = 0; j < 4; ++j) w(i, j) = uniform(rng, -3.0, 3.0);
  p.at(kSelectionWeightName).value = w;
  ad::Tape t;
  const Matrix sw = sampling_weights(t, p, t.constant(enhanced)).value();
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 4; ++j) {
      double raw = 0.0;
      for (Index k = 0; k < 16; ++k) raw += enhanced(i, k) * w(k, j);
      CHECK(std::abs(sw(i, j) - (std::log1p(std::exp(raw)) + 1e-6)) <= 1e-12);
      CHECK(sw(i, j) > 0.0);
    }
}

TEST_CASE("gumbel softmax: uniform, limits, hardening") {
  ad::Tape t;
  Var uniform_sw = t.constant(Matrix::Constant(6, 3, 0.4));
  for (double tau : {0.05, 1.0, 7.0}) {
    const Matrix s = gumbel_softmax(uniform_sw, Matrix::Zero(6, 3), tau).value();
    CHECK((s.array() - 1.0 / 6.0).abs().maxCoeff() <= 1e-15);
  }
  Rng rng(8);
  Matrix sw(8, 2);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 2; ++j) sw(i, j) = uniform(rng, 0.1, 2.0);
  const Matrix g = gumbel_noise(8, 2, rng);
  Var swv = t.constant(sw);
  const Matrix cold = gumbel_softmax(swv, g, 1e-4).value();
  for (Index j = 0; j < 2; ++j) {
    Index best;
    (sw.col(j).array().log() + g.col(j).array()).maxCoeff(&best);
    CHECK(cold(best, j) == doctest::Approx(1.0).epsilon(1e-9));
  }
  double prev = 0.0;
  for (double tau : {1.0, 0.5, 0.1, 0.01}) {
    const Matrix s = gumbel_softmax(swv, g, tau).value();
    for (Index j = 0; j < 2; ++j) CHECK(std::abs(s.col(j).sum() - 1.0) <= 1e-12);
    const double colmax = s.colwise().maxCoeff().minCoeff();
    CHECK(colmax >= prev);
    prev = colmax;
  }
  CHECK_THROWS_AS(gumbel_softmax(swv, g, 0.0), Error);
}

TEST_CASE("gumbel-max frequencies follow softmax of log weights") {
  Rng rng(77);
  Matrix sw(8, 1);
  for (Index i = 0; i < 8; ++i) sw(i, 0) = uniform(rng, 0.05, 3.0);
  const Eigen::VectorXd expected = sw.col(0) / sw.col(0).sum();
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(8);
  const int draws = 100000;
  for (int d = 0; d < draws; ++d) {
    const Matrix g = gumbel_noise(8, 1, rng);
    ad::Tape t;
    const Matrix s = gumbel_softmax(t.constant(sw), g, 0.5).value();
    Index best;
    s.col(0).maxCoeff(&best);
    counts(best) += 1.0;
  }
  CHECK((counts / draws - expected).cwiseAbs().maxCoeff() <= 0.01);
}

TEST_CASE("project centers: one-hot, uniform, dense oracle, bounds") {
  Rng rng(4);
  const Matrix x = oracle::random_points(8, rng);
  ad::Tape t;
  Matrix onehot = Matrix::Zero(8, 2);
  onehot(5, 0) = 1.0;
  onehot(2, 1) = 1.0;
  const Matrix c = project_centers(t.constant(onehot), t.constant(x)).value();
  CHECK(c.row(0) == x.row(5));
  CHECK(c.row(1) == x.row(2));
  const Matrix u = project_centers(t.constant(Matrix::Constant(8, 1, 1.0 / 8.0)), t.constant(x)).value();
  CHECK((u - x.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-15);

  Matrix w(8, 3);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 3; ++j) w(i, j) = uniform_open01(rng);
  for (Index j = 0; j < 3; ++j) w.col(j) /= w.col(j).sum();
  const Matrix cw = project_centers(t.constant(w), t.constant(x)).value();
  for (Index j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      double s = 0.0;
      for (Index i = 0; i < 8; ++i) s += w(i, j) * x(i, k);
      CHECK(std::abs(cw(j, k) - s) <= 1e-12);
    }
  const auto [lo, hi] = bounding_box(x);
  for (Index j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      CHECK(cw(j, k) >= lo(k));
      CHECK(cw(j, k) <= hi(k));
    }
  CHECK_THROWS_AS(project_centers(t.constant(Matrix::Ones(7, 2)), t.constant(x)), Error);
}

TEST_CASE("sampling loss: reductions and hand-built case") {
  ad::Tape t;
  Matrix p1(2, 3), p2(2, 3), g1(2, 3), g2(2, 3), c(2, 3), x(4, 3);
  p1 << 0, 0, 0, 1, 0, 0;
  p2 << 0, 1, 0, 0, 2, 0;
  g1 << 0, 0, 0.5, 1, 0, 0;
  g2 << 0, 1, 0, 0, 1, 1;
  x << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 2, 0;
  c << 0.5, 0, 0, 0, 1.5, 0;
  std::vector<Var> pred{t.constant(p1), t.constant(p2)}, truth{t.constant(g1), t.constant(g2)};
  const double patches = (oracle::chamfer(p1, g1) + oracle::chamfer(p2, g2)) / 2.0;
  CHECK(sampling_loss(pred, truth, t.constant(c), t.constant(x), 0.0).scalar() ==
        doctest::Approx(patches).epsilon(1e-14));
  CHECK(sampling_loss(pred, truth, t.constant(c), t.constant(x), 0.5).scalar() ==
        doctest::Approx(patches + 0.5 * oracle::chamfer(c, x)).epsilon(1e-14));
  CHECK(sampling_loss(pred, pred, t.constant(x), t.constant(x), 0.5).scalar() == 0.0);
  std::vector<Var> one{t.constant(p1)};
  CHECK_THROWS_AS(sampling_loss(one, truth, t.constant(c), t.constant(x), 0.5), Error);
}

TEST_CASE("enhance layout") {
  ad::Tape t;
  Matrix pts(3, 2);
  pts << 1, 2, 3, 4, 5, 6;
  const Matrix e = enhance(t.constant(Matrix::Zero(1, 2)), t.constant(pts)).value();
  CHECK(e.leftCols(2).isZero(0.0));
  CHECK(e.rightCols(2) == pts);
  const Matrix one = enhance(t.constant(Matrix::Ones(1, 3)), t.constant(pts.topRows(1))).value();
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 5);
  const Matrix other = enhance(t.constant(Matrix::Constant(1, 3, 2.0)), t.constant(pts.topRows(1))).value();
  CHECK(one != other);
}

TEST_CASE("encoders: invariance, equivariance, zero parameters") {
  ad::ParamStore p = tiny_params(6);
  Rng rng(10);
  PointCloud xp(oracle::random_points(12, rng)), yp(oracle::random_points(12, rng));
  const auto perm = shuffled(12, rng);
  ad::Tape t;
  const Matrix f = encode_task(t, p, tiny(), xp, yp).value();
  const Matrix fp = encode_task(t, p, tiny(), PointCloud(permutation_rows(xp.points, perm)),
                                PointCloud(permutation_rows(yp.points, perm))).value();
  CHECK((f - fp).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(f.cols() == 8);

  const Matrix pf = encode_points(t, p, tiny(), xp).value();
  const Matrix pfp = encode_points(t, p, tiny(), PointCloud(permutation_rows(xp.points, perm))).value();
  CHECK((permutation_rows(pf, perm) - pfp).cwiseAbs().maxCoeff() <= 1e-12);

  Matrix dup = xp.points;
  dup.row(3) = dup.row(7);
  const Matrix df = encode_points(t, p, tiny(), PointCloud(dup)).value();
  CHECK(df.row(3) == df.row(7));

  for (auto& [name, e] : p) e.value.setZero();
  CHECK(encode_task(t, p, tiny(), xp, yp).value().isZero(0.0));
  CHECK_THROWS_AS(encode_points(t, p, tiny(), PointCloud()), Error);
}

TEST_CASE("point encoder gradient matches central differences") {
  ad::ParamStore p = tiny_params(13);
  Rng rng(14);
  PointCloud x(oracle::random_points(10, rng));
  const auto r = ad::finite_diff_check(
      [&](ad::Tape& t, ad::ParamStore& s) { return ad::sum(ad::tanh(encode_points(t, s, tiny(), x))); }, p);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("sample: determinism, stochastic columns, permutation consistency") {
  ad::ParamStore p = tiny_params(21);
  Rng rng(22);
  PointCloud q(oracle::random_points(16, rng)), xp(oracle::random_points(16, rng)), yp(oracle::random_points(16, rng));
  const Matrix gq = gumbel_noise(16, 4, rng), gp = gumbel_noise(16, 4, rng);
  ad::Tape t1, t2;
  const auto a = sample(t1, p, tiny(), q, xp, yp, 0.7, gq, gp);
  const auto b = sample(t2, p, tiny(), q, xp, yp, 0.7, gq, gp);
  CHECK(a.centers_q.value() == b.centers_q.value());
  CHECK(a.centers_p.value() == b.centers_p.value());
  for (Index j = 0; j < 4; ++j) {
    CHECK(std::abs(a.soft_q.value().col(j).sum() - 1.0) <= 1e-12);
    CHECK(std::abs(a.soft_p.value().col(j).sum() - 1.0) <= 1e-12);
  }

  const auto perm = shuffled(16, rng);
  ad::Tape t3, t4;
  const Matrix zero = Matrix::Zero(16, 4);
  const Matrix base = sample(t3, p, tiny(), q, xp, yp, 0.1, zero, zero).centers_q.value();
  const Matrix moved =
      sample(t4, p, tiny(), PointCloud(permutation_rows(q.points, perm)), xp, yp, 0.1, zero, zero).centers_q.value();
  CHECK((base - moved).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("sample: low temperature gives near-hard columns") {
  ad::ParamStore p = tiny_params(31);
  Rng rng(32);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud q(oracle::random_points(16, rng)), xp(oracle::random_points(16, rng)), yp(oracle::random_points(16, rng));
    ad::Tape t;
    const auto s = sample(t, p, tiny(), q, xp, yp, 0.01, &rng);
    CHECK(s.soft_q.value().colwise().maxCoeff().minCoeff() >= 0.99);
  }
}

TEST_CASE("temperature schedule") {
  CHECK(tau_at_epoch(0, 10, 1.0, 0.1) == 1.0);
  CHECK(tau_at_epoch(9, 10, 1.0, 0.1) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(tau_at_epoch(3, 7, 1.0, 0.1) == doctest::Approx(0.55).epsilon(1e-15));
}
