#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "micas/autodiff.hpp"
#include "micas/nn.hpp"
#include "micas/pointcloud.hpp"
#include "micas/surrogate.hpp"
#include "micas/tasks.hpp"

// Query-specific prompt selection: score every candidate prompt against the
// query and train the scorer with a pairwise-weighted list-wise loss.
namespace micas {

enum class Segment : std::uint8_t { Query = 0, PromptInput = 1, PromptTarget = 2 };

/// Query input, prompt input and prompt target stacked in that order.
struct FusedCloud {
  Matrix points;                  // 3S x 3
  std::vector<Segment> segments;  // one tag per row
  Index segment_size = 0;         // S

  std::array<PointCloud, 3> split() const;
};

FusedCloud fuse(const PointCloud& query_input, const PointCloud& prompt_input,
                const PointCloud& prompt_target);

struct TaskBounds {
  double lo = 0.0;
  double hi = 1.0;
  bool lower_is_better = true;
};

/// Frozen per-task min/max of raw performance, oriented so 1 = best.
class TaskNormalizer {
 public:
  void set(TaskKind task, TaskBounds bounds);
  bool has(TaskKind task) const;
  const TaskBounds& at(TaskKind task) const;
  double normalize(TaskKind task, double raw) const;

  /// Bounds from observed raw values; a degenerate range is widened by 1e-12.
  static TaskNormalizer fit(std::span<const std::pair<TaskKind, double>> observations);

 private:
  std::array<std::optional<TaskBounds>, 4> bounds_{};
};

bool lower_is_better(TaskKind task);

/// Chamfer distance for geometric tasks, mIOU of anchor-decoded labels for
/// part segmentation.
double raw_performance(TaskKind task, const PointCloud& predicted, const PointCloud& truth);

/// Runs the model and normalises its performance into [0, 1] (1 = best).
double pseudo_label(const IclModel& model, const IclQuery& query, TaskKind task,
                    const TaskNormalizer& norm);

struct RankerConfig {
  Index hidden = 64;
  ad::Activation activation = ad::Activation::Relu;
};

void init_ranker(ad::ParamStore& params, const RankerConfig& cfg, Rng& rng);

/// PointNet-style scorer over a fused cloud; returns an unbounded 1 x 1 score.
ad::Var predict_score(ad::Tape& tape, ad::ParamStore& params, const RankerConfig& cfg,
                      const FusedCloud& fused);

/// 1 = best; equal labels share the smallest rank of their group.
std::vector<int> rank_labels(std::span<const double> labels);

/// coeff(i, j) = max(0, 1/r_i - 1/r_j).
Matrix rank_coefficients(std::span<const double> labels);

/// Sum over pairs of max(0, 1/r_i - 1/r_j) * log(1 + exp(s_j - s_i)).
ad::Var listwise_rank_loss(ad::Var scores, std::span<const double> labels);

struct CandidateSet {
  std::vector<std::size_t> prompt_ids;  // indices into the task's prompt bank
  std::vector<double> scores;
  std::vector<double> labels;

  std::size_t size() const { return prompt_ids.size(); }
};

/// K distinct same-task prompts drawn uniformly without replacement.
CandidateSet build_candidate_pool(TaskKind task, const PromptBank& bank, std::size_t k, Rng& rng);

/// Index of the highest-scoring candidate; ties go to the lowest index.
/// Fills candidates.scores.
std::size_t select_prompt(ad::ParamStore& params, const RankerConfig& cfg,
                          const PointCloud& query_input, CandidateSet& candidates,
                          const std::vector<TaskPair>& bank);

/// Mean-rank Spearman correlation (ties get averaged ranks). NaN when either
/// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace micas
