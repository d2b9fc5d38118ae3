#include "micas/sampler.hpp"

#include <cmath>

#include "micas/error.hpp"

namespace micas {

using ad::Var;

ad::MlpSpec task_encoder_spec(const SamplerConfig& cfg) {
  return {"sampler.task", {3, cfg.hidden, cfg.hidden, cfg.d1}, cfg.activation, false};
}

ad::MlpSpec point_local_spec(const SamplerConfig& cfg) {
  return {"sampler.point_local", {3, cfg.hidden, cfg.hidden}, cfg.activation, true};
}

ad::MlpSpec point_projection_spec(const SamplerConfig& cfg) {
  return {"sampler.point_proj", {2 * cfg.hidden, cfg.d2}, cfg.activation, false};
}

void init_sampler(ad::ParamStore& params, const SamplerConfig& cfg, Rng& rng) {
  require_domain(cfg.d1 >= 1 && cfg.d2 >= 1 && cfg.hidden >= 1 && cfg.num_centers >= 1,
                 "sampler dimensions must be positive");
  ad::init_mlp(params, task_encoder_spec(cfg), rng);
  ad::init_mlp(params, point_local_spec(cfg), rng);
  ad::init_mlp(params, point_projection_spec(cfg), rng);
  const Index in = cfg.d1 + cfg.d2;
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  Matrix w(in, cfg.num_centers);
  for (Index r = 0; r < in; ++r)
    for (Index c = 0; c < cfg.num_centers; ++c) w(r, c) = uniform(rng, -bound, bound);
  params.add(kSelectionWeightName, std::move(w));
}

Var encode_task(ad::Tape& tape, ad::ParamStore& params, const SamplerConfig& cfg,
                const PointCloud& prompt_input, const PointCloud& prompt_target) {
  prompt_input.validate();
  prompt_target.validate();
  Matrix stacked(prompt_input.size() + prompt_target.size(), 3);
  stacked << prompt_input.points, prompt_target.points;
  Var per_point = ad::forward_mlp(tape, params, task_encoder_spec(cfg), tape.constant(std::move(stacked)));
  return ad::max_pool_rows(per_point);
}

Var encode_points(ad::Tape& tape, ad::ParamStore& params, const SamplerConfig& cfg,
                  const PointCloud& cloud) {
  cloud.validate();
  Var local = ad::forward_mlp(tape, params, point_local_spec(cfg), tape.constant(cloud.points));
  Var global = ad::broadcast_rows(ad::max_pool_rows(local), cloud.size());
  return ad::forward_mlp(tape, params, point_projection_spec(cfg), ad::concat_cols(local, global));
}

Var enhance(Var task_feature, Var point_features) {
  require_domain(task_feature.rows() == 1, "task feature must be a single row");
  return ad::concat_cols(ad::broadcast_rows(task_feature, point_features.rows()), point_features);
}

Var sampling_weights(ad::Tape& tape, ad::ParamStore& params, Var enhanced) {
  Var w = tape.param(params, kSelectionWeightName);
  require_domain(enhanced.cols() == w.rows(), "enhanced feature width does not match W");
  Var sw = ad::add_scalar(ad::softplus(ad::matmul(enhanced, w)), kSamplingWeightFloor);
  require(sw.value().allFinite(), ErrorKind::Numeric, "sampling weights are not finite");
  return sw;
}

double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

Matrix gumbel_noise(Index rows, Index cols, Rng& rng) {
  Matrix g(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) g(r, c) = gumbel_from_uniform(uniform_open01(rng));
  return g;
}

Var gumbel_softmax(Var sw, const Matrix& noise, double tau) {
  require_domain(tau > 0.0, "gumbel_softmax: temperature must be positive");
  require_domain(noise.rows() == sw.rows() && noise.cols() == sw.cols(),
                 "gumbel_softmax: noise shape mismatch");
  ad::Tape& tape = *sw.tape();
  Var logits = ad::add(ad::log(sw), tape.constant(noise));
  return ad::softmax_cols(ad::scale(logits, 1.0 / tau));
}

Var project_centers(Var soft, Var points) {
  require_domain(soft.rows() == points.rows(), "project_centers: row count mismatch");
  return ad::matmul_tn(soft, points);
}

SampleOutput sample(ad::Tape& tape, ad::ParamStore& params, const SamplerConfig& cfg,
                    const PointCloud& query_input, const PointCloud& prompt_input,
                    const PointCloud& prompt_target, double tau, const Matrix& noise_q,
                    const Matrix& noise_p) {
  SampleOutput out;
  out.task_feature = encode_task(tape, params, cfg, prompt_input, prompt_target);

  Var feat_q = encode_points(tape, params, cfg, query_input);
  out.weights_q = sampling_weights(tape, params, enhance(out.task_feature, feat_q));
  out.soft_q = gumbel_softmax(out.weights_q, noise_q, tau);
  out.centers_q = project_centers(out.soft_q, tape.constant(query_input.points));

  Var feat_p = encode_points(tape, params, cfg, prompt_input);
  Var weights_p = sampling_weights(tape, params, enhance(out.task_feature, feat_p));
  out.soft_p = gumbel_softmax(weights_p, noise_p, tau);
  out.centers_p = project_centers(out.soft_p, tape.constant(prompt_input.points));
  return out;
}

SampleOutput sample(ad::Tape& tape, ad::ParamStore& params, const SamplerConfig& cfg,
                    const PointCloud& query_input, const PointCloud& prompt_input,
                    const PointCloud& prompt_target, double tau, Rng* rng) {
  const Index n = cfg.num_centers;
  if (rng == nullptr) {
    return sample(tape, params, cfg, query_input, prompt_input, prompt_target, tau,
                  Matrix::Zero(query_input.size(), n), Matrix::Zero(prompt_input.size(), n));
  }
  Matrix gq = gumbel_noise(query_input.size(), n, *rng);
  Matrix gp = gumbel_noise(prompt_input.size(), n, *rng);
  return sample(tape, params, cfg, query_input, prompt_input, prompt_target, tau, gq, gp);
}

Var sampling_loss(std::span<const Var> predicted, std::span<const Var> truth, Var centers,
                  Var cloud, double alpha) {
  require_domain(predicted.size() == truth.size(), "sampling_loss: patch count mismatch");
  require_domain(alpha >= 0.0, "sampling_loss: alpha must be nonnegative");
  Var coverage = ad::chamfer(centers, cloud);
  Var total = ad::scale(coverage, alpha);
  if (!predicted.empty()) {
    Var patch_sum = ad::chamfer(predicted[0], truth[0]);
    for (std::size_t i = 1; i < predicted.size(); ++i)
      patch_sum = ad::add(patch_sum, ad::chamfer(predicted[i], truth[i]));
    total = ad::add(ad::scale(patch_sum, 1.0 / static_cast<double>(predicted.size())), total);
  }
  return total;
}

double tau_at_epoch(Index epoch, Index epochs, double tau_start, double tau_end) {
  require_domain(epochs >= 1 && epoch >= 0 && epoch < epochs, "epoch outside the schedule");
  require_domain(tau_start > 0.0 && tau_end > 0.0, "temperatures must be positive");
  if (epochs == 1) return tau_start;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return tau_start + (tau_end - tau_start) * t;
}

}  // namespace micas
