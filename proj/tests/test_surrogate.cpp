#include <doctest.h>

#include <set>

#include "micas/error.hpp"
#include "micas/surrogate.hpp"
#include "oracles.hpp"

using namespace micas;

namespace {

PatchSet make_patches(Index n, Index m, Rng& rng) {
  PatchSet ps;
  ps.centers = oracle::random_points(n, rng);
  for (Index i = 0; i < n; ++i) ps.patches.push_back(oracle::random_points(m, rng));
  return ps;
}

SurrogateConfig small() {
  SurrogateConfig c;
  c.task_width = 5;
  c.hidden = 7;
  c.patch_size = 4;
  return c;
}

}  // namespace

TEST_CASE("mask counts and determinism") {
  Rng rng(1);
  const PatchSet ps = make_patches(10, 3, rng);
  Rng a(9);
  CHECK(mask_patches(ps, 0.0, a).second.masked.empty());
  CHECK(mask_patches(ps, 1.0, a).second.masked.size() == 10);
  const auto [masked, pattern] = mask_patches(ps, 0.6, a);
  CHECK(pattern.masked.size() == 6);
  CHECK(std::set<Index>(pattern.masked.begin(), pattern.masked.end()).size() == 6);
  for (Index i : pattern.masked) CHECK(masked.patches[static_cast<std::size_t>(i)].isZero(0.0));
  Rng b(4), c(4);
  CHECK(mask_patches(ps, 0.5, b).second.masked == mask_patches(ps, 0.5, c).second.masked);
  CHECK_THROWS_AS(mask_patches(ps, 1.5, b), Error);
}

TEST_CASE("visible centroid mean") {
  PatchSet ps;
  ps.centers = Matrix::Zero(2, 3);
  ps.patches = {Matrix::Constant(2, 3, 1.0), Matrix::Constant(2, 3, 3.0)};
  MaskPattern none;
  CHECK(visible_centroid_mean(ps, none).isApprox(Vec3::Constant(2.0)));
  MaskPattern first{{0}, 0.5};
  CHECK(visible_centroid_mean(ps, first) == Vec3::Constant(3.0));
  MaskPattern all{{0, 1}, 1.0};
  CHECK(visible_centroid_mean(ps, all) == Vec3::Zero());
}

TEST_CASE("surrogate: zero parameters copy centers, translation, shapes") {
  ad::ParamStore p;
  Rng rng(2);
  init_surrogate(p, small(), rng);
  for (auto& [name, e] : p) e.value.setZero();
  const Matrix centers = oracle::random_points(5, rng);
  const MaskPattern mask{{1, 3, 4}, 0.6};
  ad::Tape t;
  const auto out = surrogate_predict(t, p, small(), t.constant(Matrix::Ones(1, 5)), t.constant(centers), mask,
                                     Vec3(0.1, 0.2, 0.3));
  REQUIRE(out.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(out[k].rows() == 4);
    CHECK(out[k].cols() == 3);
    for (Index r = 0; r < 4; ++r) CHECK(out[k].value().row(r) == centers.row(mask.masked[k]));
  }
  const Vec3 shift(0.5, -1.0, 2.0);
  const Matrix moved = centers.rowwise() + shift.transpose();
  const auto out2 = surrogate_predict(t, p, small(), t.constant(Matrix::Ones(1, 5)), t.constant(moved), mask,
                                      Vec3(0.1, 0.2, 0.3));
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(((out2[k].value() - out[k].value()).rowwise() - shift.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(surrogate_predict(t, p, small(), t.constant(Matrix::Ones(1, 4)), t.constant(centers), mask,
                                    Vec3::Zero()),
                  Error);
}

TEST_CASE("surrogate: gradient with respect to centers and task feature") {
  ad::ParamStore p;
  Rng rng(3);
  init_surrogate(p, small(), rng);
  p.add("centers", oracle::random_points(5, rng));
  p.add("task", oracle::random_points(1, rng).replicate(1, 2).leftCols(5));
  const MaskPattern mask{{0, 2}, 0.4};
  const std::vector<Matrix> truth{oracle::random_points(4, rng), oracle::random_points(4, rng)};
  const auto r = ad::finite_diff_check(
      [&](ad::Tape& t, ad::ParamStore& s) {
        const auto pred = surrogate_predict(t, s, small(), t.param(s, "task"), t.param(s, "centers"), mask,
                                            Vec3(0.2, 0.1, 0.0));
        return ad::add(ad::chamfer(pred[0], t.constant(truth[0])), ad::chamfer(pred[1], t.constant(truth[1])));
      },
      p);
  CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("oracle: sigma formula, purity, monotonicity") {
  Rng rng(5);
  PointCloud xq(oracle::random_points(32, rng)), yq(oracle::random_points(32, rng));
  PointCloud xp(oracle::random_points(32, rng)), yp(oracle::random_points(32, rng));
  const OracleModel model;
  CHECK(model.effective_sigma(xq.points, xq, xq) == OracleModel::kSigma0);

  const Matrix centers = xq.points.topRows(4);
  const double expected =
      0.01 * (1.0 + 5.0 * oracle::chamfer(centers, xq.points) + oracle::chamfer(xp.points, xq.points));
  CHECK(model.effective_sigma(centers, xq, xp) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(model.effective_sigma(xq.points.topRows(2), xq, xp) >= model.effective_sigma(centers, xq, xp));

  const IclQuery q{xq, yq, xp, yp, centers, 99};
  const PointCloud a = model.predict(q), b = model.predict(q);
  CHECK(a.points == b.points);
  CHECK(a.points != yq.points);

  const OracleModel silent(0.0, 5.0, 1.0);
  CHECK(silent.predict(q).points == yq.points);
  CHECK_FALSE(model.differentiable());
}

TEST_CASE("oracle: error ordering follows sigma over many seeds") {
  Rng rng(6);
  PointCloud xq(oracle::random_points(32, rng)), yq(oracle::random_points(32, rng));
  PointCloud near = xq;
  near.points.array() += 0.01;
  PointCloud far(oracle::random_points(32, rng));
  PointCloud yp(oracle::random_points(32, rng));
  const Matrix centers = xq.points.topRows(8);
  const OracleModel model;
  REQUIRE(model.effective_sigma(centers, xq, near) < model.effective_sigma(centers, xq, far));
  double sum_near = 0.0, sum_far = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    sum_near += oracle::chamfer(model.predict({xq, yq, near, yp, centers, seed}).points, yq.points);
    sum_far += oracle::chamfer(model.predict({xq, yq, far, yp, centers, seed}).points, yq.points);
  }
  CHECK(sum_near < sum_far);
}
