#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "micas/config.hpp"
#include "micas/ranker.hpp"
#include "micas/sampler.hpp"
#include "micas/surrogate.hpp"
#include "micas/tasks.hpp"

// In-memory training and evaluation loops. The command layer (pipeline.hpp)
// wraps these with file handling.
namespace micas {

// ---------------------------------------------------------------------------
// Sampler stage

/// Fresh sampler + surrogate parameters, seeded from the run seed.
ad::ParamStore init_sampler_store(const RunConfig& cfg);

/// Sampling loss for one (query, prompt) example with frozen randomness:
/// adaptive centers on the query input, soft joint sampling onto the query
/// target, KNN target patches, masking, surrogate prediction anchored at the
/// input-side centers, and the composite Chamfer objective.
ad::Var sampler_example_loss(ad::Tape& tape, ad::ParamStore& params, const RunConfig& cfg,
                             const TaskPair& query, const TaskPair& prompt, double tau,
                             const Matrix& noise_q, const Matrix& noise_p,
                             std::uint64_t mask_seed, SampleOutput* sampled = nullptr);

struct SamplerStepInfo {
  Index epoch;
  Index step;
  double loss;
  double tau;
  const SampleOutput& sampled;
  const TaskPair& query;
  const TaskPair& prompt;
};

struct EpochRecord {
  Index epoch;
  double lr;
  double tau;
  double mean_loss;
};

using SamplerObserver = std::function<void(const SamplerStepInfo&)>;

/// Trains the sampler (and the surrogate head it is scored through) with
/// the configured optimizer under the cosine schedule. Throws a numeric error naming the query
/// seed if the loss stops being finite.
ad::ParamStore train_sampler(const RunConfig& cfg, const std::vector<TaskPair>& train,
                             const PromptBank& bank, std::vector<EpochRecord>* log = nullptr,
                             const SamplerObserver& observer = {});

struct InferenceSample {
  Matrix centers;  // N x 3
  Matrix soft;     // S x N
};

/// Deterministic inference: tau = tau_infer and no Gumbel noise.
InferenceSample adaptive_centers(ad::ParamStore& params, const RunConfig& cfg,
                                 const PointCloud& query_input, const TaskPair& prompt);

Matrix fps_centers(const PointCloud& cloud, Index count);

/// Centers whose selection column has max >= threshold, and how many of those
/// put their mass on a noise-flagged point.
struct OutlierStats {
  Index near_hard = 0;
  Index on_noise = 0;
  double rate() const { return near_hard == 0 ? 0.0 : static_cast<double>(on_noise) / near_hard; }
};
OutlierStats soft_outlier_stats(const Matrix& soft, const PointCloud& cloud, double threshold = 0.9);
OutlierStats fps_outlier_stats(const PointCloud& cloud, Index count);

// ---------------------------------------------------------------------------
// Ranker stage

/// Candidate pool for a query, seeded by (run seed, query seed).
CandidateSet candidates_for(const RunConfig& cfg, const PromptBank& bank, const TaskPair& query);

/// Per-query seed for the oracle, shared by every candidate of the query.
std::uint64_t oracle_seed(const RunConfig& cfg, const TaskPair& query);

/// Raw metric of the model under one prompt with adaptive centers.
double raw_candidate_performance(ad::ParamStore& sampler, const RunConfig& cfg,
                                 const IclModel& model, const TaskPair& query,
                                 const TaskPair& prompt);

struct LabelTable {
  std::uint64_t config_hash = 0;
  TaskNormalizer normalizer;
  /// (query seed, prompt index within its task bank) -> pseudo-label
  std::map<std::pair<std::uint64_t, std::uint64_t>, double> labels;

  double at(std::uint64_t query, std::uint64_t prompt) const;
};

LabelTable build_label_table(ad::ParamStore& sampler, const RunConfig& cfg,
                             const IclModel& model, const std::vector<TaskPair>& queries,
                             const PromptBank& bank, unsigned threads = 1);

/// Pseudo-labels for queries outside the table, normalised with its bounds.
std::vector<double> labels_for(ad::ParamStore& sampler, const RunConfig& cfg,
                               const IclModel& model, const TaskPair& query,
                               const CandidateSet& set, const PromptBank& bank,
                               const TaskNormalizer& norm);

ad::ParamStore init_ranker_store(const RunConfig& cfg);

ad::ParamStore train_ranker(const RunConfig& cfg, const std::vector<TaskPair>& queries,
                            const PromptBank& bank, const LabelTable& labels,
                            std::vector<EpochRecord>* log = nullptr);

// ---------------------------------------------------------------------------
// Evaluation

enum class SamplerVariant { Fps, Adaptive };
enum class PromptVariant { Random, Ranked };

std::string_view variant_name(SamplerVariant v);
std::string_view variant_name(PromptVariant v);

struct MetricEntry {
  TaskKind task;
  int level;
  SamplerVariant sampler;
  PromptVariant prompt;
  std::string metric;  // "cd_x1000" or "miou"
  double value = 0.0;
  Index queries = 0;
  Index near_hard_centers = 0;  // denoising only
  Index outlier_centers = 0;    // denoising only
};

struct MetricReport {
  std::string profile;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  std::vector<MetricEntry> entries;
};

struct EvalVariant {
  SamplerVariant sampler;
  PromptVariant prompt;
};

/// Runs every test query through each requested variant and aggregates per
/// task x level. `sampler` / `ranker` may be null when no variant needs them.
MetricReport evaluate(const RunConfig& cfg, const std::vector<TaskPair>& test,
                      const PromptBank& bank, ad::ParamStore* sampler, ad::ParamStore* ranker,
                      const std::vector<EvalVariant>& variants, unsigned threads = 1);

/// Evaluation parallelism: MICAS_THREADS if set, else hardware concurrency.
unsigned eval_threads();

}  // namespace micas
