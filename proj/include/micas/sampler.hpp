#pragma once

#include "micas/autodiff.hpp"
#include "micas/nn.hpp"
#include "micas/pointcloud.hpp"

// Task-adaptive point sampling: a prompt-conditioned, differentiable
// replacement for farthest-point center selection.
namespace micas {

struct SamplerConfig {
  Index d1 = 64;      // task feature width
  Index d2 = 64;      // point feature width
  Index hidden = 64;  // per-point MLP width
  Index num_centers = 16;
  ad::Activation activation = ad::Activation::Relu;
};

/// Floor added after softplus so log(SW) is always defined.
inline constexpr double kSamplingWeightFloor = 1e-6;

ad::MlpSpec task_encoder_spec(const SamplerConfig& cfg);
ad::MlpSpec point_local_spec(const SamplerConfig& cfg);
ad::MlpSpec point_projection_spec(const SamplerConfig& cfg);
inline constexpr const char* kSelectionWeightName = "sampler.select.w";

void init_sampler(ad::ParamStore& params, const SamplerConfig& cfg, Rng& rng);

/// Per-point MLP over the prompt's input and target stacked along the point
/// axis, max-pooled to a 1 x d1 task feature.
ad::Var encode_task(ad::Tape& tape, ad::ParamStore& params, const SamplerConfig& cfg,
                    const PointCloud& prompt_input, const PointCloud& prompt_target);

/// S x d2 features: each row sees its own point plus the cloud's pooled
/// global feature.
ad::Var encode_points(ad::Tape& tape, ad::ParamStore& params, const SamplerConfig& cfg,
                      const PointCloud& cloud);

/// Row i = task feature followed by point feature i.
ad::Var enhance(ad::Var task_feature, ad::Var point_features);

/// softplus(enhanced * W) + floor, an S x N strictly positive matrix.
ad::Var sampling_weights(ad::Tape& tape, ad::ParamStore& params, ad::Var enhanced);

double gumbel_from_uniform(double u);
Matrix gumbel_noise(Index rows, Index cols, Rng& rng);

/// Column-wise softmax of (log(sw) + g) / tau over the point axis.
ad::Var gumbel_softmax(ad::Var sw, const Matrix& noise, double tau);

/// soft^T * points: N convex combinations of cloud points.
ad::Var project_centers(ad::Var soft, ad::Var points);

struct SampleOutput {
  ad::Var task_feature;
  ad::Var weights_q;  // SW for the query input
  ad::Var soft_q;     // SW_gs for the query input
  ad::Var soft_p;
  ad::Var centers_q;
  ad::Var centers_p;
};

/// Full prompt-conditioned sampling for the query input and the prompt
/// input. `noise_q`/`noise_p` are S x N Gumbel draws (zero for inference).
SampleOutput sample(ad::Tape& tape, ad::ParamStore& params, const SamplerConfig& cfg,
                    const PointCloud& query_input, const PointCloud& prompt_input,
                    const PointCloud& prompt_target, double tau, const Matrix& noise_q,
                    const Matrix& noise_p);

/// Same, drawing fresh noise from `rng`, or using zero noise when rng is null.
SampleOutput sample(ad::Tape& tape, ad::ParamStore& params, const SamplerConfig& cfg,
                    const PointCloud& query_input, const PointCloud& prompt_input,
                    const PointCloud& prompt_target, double tau, Rng* rng);

/// mean_i CD(predicted_i, truth_i) + alpha * CD(centers, cloud).
ad::Var sampling_loss(std::span<const ad::Var> predicted, std::span<const ad::Var> truth,
                      ad::Var centers, ad::Var cloud, double alpha);

/// Linear annealing from tau_start at epoch 0 to tau_end at the last epoch.
double tau_at_epoch(Index epoch, Index epochs, double tau_start, double tau_end);

}  // namespace micas
