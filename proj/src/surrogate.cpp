#include "micas/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "micas/error.hpp"

namespace micas {

std::pair<PatchSet, MaskPattern> mask_patches(const PatchSet& patches, double ratio, Rng& rng) {
  require_domain(ratio >= 0.0 && ratio <= 1.0, "mask ratio must lie in [0, 1]");
  const Index n = patches.count();
  const auto k = static_cast<Index>(std::llround(ratio * static_cast<double>(n)));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);

  MaskPattern mask;
  mask.ratio = ratio;
  mask.masked.assign(order.begin(), order.begin() + k);
  std::sort(mask.masked.begin(), mask.masked.end());

  PatchSet out = patches;
  for (Index i : mask.masked) out.patches[static_cast<std::size_t>(i)].setZero();
  return {std::move(out), std::move(mask)};
}

Vec3 visible_centroid_mean(const PatchSet& patches, const MaskPattern& mask) {
  Vec3 acc = Vec3::Zero();
  Index visible = 0;
  for (Index i = 0; i < patches.count(); ++i) {
    if (std::binary_search(mask.masked.begin(), mask.masked.end(), i)) continue;
    acc += patches.patches[static_cast<std::size_t>(i)].colwise().mean().transpose();
    ++visible;
  }
  return visible == 0 ? Vec3::Zero() : Vec3(acc / static_cast<double>(visible));
}

ad::MlpSpec surrogate_spec(const SurrogateConfig& cfg) {
  return {"surrogate", {3 + cfg.task_width + 3, cfg.hidden, 3 * cfg.patch_size},
          ad::Activation::Relu, false};
}

void init_surrogate(ad::ParamStore& params, const SurrogateConfig& cfg, Rng& rng) {
  ad::init_mlp(params, surrogate_spec(cfg), rng);
  // start near "every point at its center" so early losses stay bounded
  auto& out_w = params.at(surrogate_spec(cfg).weight_name(1)).value;
  out_w *= 0.1;
}

std::vector<ad::Var> surrogate_predict(ad::Tape& tape, ad::ParamStore& params,
                                       const SurrogateConfig& cfg, ad::Var task_feature,
                                       ad::Var centers, const MaskPattern& mask,
                                       const Vec3& visible_mean) {
  require_domain(centers.cols() == 3, "surrogate: centers must have 3 columns");
  require_domain(centers.value().allFinite(), "surrogate: non-finite centers");
  require_domain(task_feature.rows() == 1 && task_feature.cols() == cfg.task_width,
                 "surrogate: task feature width mismatch");
  std::vector<ad::Var> out;
  if (mask.masked.empty()) return out;
  for (Index i : mask.masked) require_domain(i >= 0 && i < centers.rows(), "surrogate: mask index out of range");

  const auto rows = static_cast<Index>(mask.masked.size());
  ad::Var picked = ad::select_rows(centers, mask.masked);
  ad::Var context = tape.constant(visible_mean.transpose().replicate(rows, 1));
  ad::Var input = ad::concat_cols(ad::concat_cols(picked, ad::broadcast_rows(task_feature, rows)), context);
  ad::Var offsets = ad::forward_mlp(tape, params, surrogate_spec(cfg), input);

  out.reserve(mask.masked.size());
  for (Index k = 0; k < rows; ++k) {
    const Index row[] = {k};
    ad::Var patch_offsets = ad::reshape(ad::select_rows(offsets, row), cfg.patch_size, 3);
    ad::Var center = ad::broadcast_rows(ad::select_rows(picked, row), cfg.patch_size);
    out.push_back(ad::add(patch_offsets, center));
  }
  return out;
}

double OracleModel::effective_sigma(const Matrix& centers, const PointCloud& query_input,
                                    const PointCloud& prompt_input) const {
  const double coverage = chamfer_distance(centers, query_input.points);
  const double match = chamfer_distance(prompt_input.points, query_input.points);
  return sigma0_ * (1.0 + coverage_gain_ * coverage + prompt_gain_ * match);
}

PointCloud OracleModel::predict(const IclQuery& q) const {
  const double sigma = effective_sigma(q.centers, q.query_input, q.prompt_input);
  Rng rng(q.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointCloud out = q.query_target;
  for (Index i = 0; i < out.size(); ++i)
    for (Index d = 0; d < 3; ++d) out.points(i, d) += sigma * gauss(rng);
  return out;
}

}  // namespace micas
