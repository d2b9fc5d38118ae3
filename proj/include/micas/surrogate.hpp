#pragma once

#include <cstdint>
#include <vector>

#include "micas/autodiff.hpp"
#include "micas/nn.hpp"
#include "micas/pointcloud.hpp"

// Stand-ins for a pretrained point-cloud in-context model: a shallow
// differentiable head used while training the sampler, and an analytic
// oracle whose prediction error tracks center coverage and prompt match.
namespace micas {

struct MaskPattern {
  std::vector<Index> masked;  // ascending patch indices
  double ratio = 0.0;
};

/// Replaces round(ratio * N) patches, chosen uniformly without replacement,
/// by an all-zero placeholder patch.
std::pair<PatchSet, MaskPattern> mask_patches(const PatchSet& patches, double ratio, Rng& rng);

/// Mean of the centroids of unmasked patches (zero when every patch is masked).
Vec3 visible_centroid_mean(const PatchSet& patches, const MaskPattern& mask);

struct SurrogateConfig {
  Index task_width = 64;  // must equal the sampler's d1
  Index hidden = 64;
  Index patch_size = 16;  // M
};

ad::MlpSpec surrogate_spec(const SurrogateConfig& cfg);
void init_surrogate(ad::ParamStore& params, const SurrogateConfig& cfg, Rng& rng);

/// For each masked position k: an MLP of (center_k, task feature, visible
/// mean) yields M offsets that are added to center_k. Returns |mask| patches
/// of M x 3.
std::vector<ad::Var> surrogate_predict(ad::Tape& tape, ad::ParamStore& params,
                                       const SurrogateConfig& cfg, ad::Var task_feature,
                                       ad::Var centers, const MaskPattern& mask,
                                       const Vec3& visible_mean);

/// What an in-context model sees for one query under one prompt.
struct IclQuery {
  const PointCloud& query_input;
  const PointCloud& query_target;  // used only by oracle back-ends
  const PointCloud& prompt_input;
  const PointCloud& prompt_target;
  const Matrix& centers;  // N x 3 centers chosen on the query input
  std::uint64_t seed;
};

/// Boundary behind which any in-context back-end plugs in.
class IclModel {
 public:
  virtual ~IclModel() = default;
  virtual bool differentiable() const = 0;
  /// Predicted query target, one point per query-target point.
  virtual PointCloud predict(const IclQuery& query) const = 0;
};

/// Returns the query target corrupted by N(0, sigma_eff^2) with
/// sigma_eff = sigma0 * (1 + c1 * CD(centers, X_q) + c2 * CD(X_p, X_q)).
class OracleModel final : public IclModel {
 public:
  static constexpr double kSigma0 = 0.01;
  static constexpr double kCoverageGain = 5.0;
  static constexpr double kPromptGain = 1.0;

  OracleModel() = default;
  OracleModel(double sigma0, double coverage_gain, double prompt_gain)
      : sigma0_(sigma0), coverage_gain_(coverage_gain), prompt_gain_(prompt_gain) {}

  bool differentiable() const override { return false; }
  PointCloud predict(const IclQuery& query) const override;
  double effective_sigma(const Matrix& centers, const PointCloud& query_input,
                         const PointCloud& prompt_input) const;

 private:
  double sigma0_ = kSigma0;
  double coverage_gain_ = kCoverageGain;
  double prompt_gain_ = kPromptGain;
};

}  // namespace micas
