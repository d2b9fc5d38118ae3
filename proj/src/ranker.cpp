#include "micas/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "micas/error.hpp"

namespace micas {

std::array<PointCloud, 3> FusedCloud::split() const {
  const Index s = segment_size;
  return {PointCloud(points.topRows(s)), PointCloud(points.middleRows(s, s)),
          PointCloud(points.bottomRows(s))};
}

FusedCloud fuse(const PointCloud& query_input, const PointCloud& prompt_input,
                const PointCloud& prompt_target) {
  query_input.validate();
  prompt_input.validate();
  prompt_target.validate();
  const Index s = query_input.size();
  require_domain(prompt_input.size() == s && prompt_target.size() == s,
                 "fuse: all three clouds must have the same point count");
  FusedCloud f;
  f.segment_size = s;
  f.points.resize(3 * s, 3);
  f.points << query_input.points, prompt_input.points, prompt_target.points;
  f.segments.reserve(static_cast<std::size_t>(3 * s));
  for (auto seg : {Segment::Query, Segment::PromptInput, Segment::PromptTarget})
    f.segments.insert(f.segments.end(), static_cast<std::size_t>(s), seg);
  return f;
}

bool lower_is_better(TaskKind task) { return task != TaskKind::PartSeg; }

void TaskNormalizer::set(TaskKind task, TaskBounds bounds) {
  require_domain(bounds.hi > bounds.lo, "normalizer bounds need hi > lo");
  bounds_[static_cast<std::size_t>(task)] = bounds;
}

bool TaskNormalizer::has(TaskKind task) const {
  return bounds_[static_cast<std::size_t>(task)].has_value();
}

const TaskBounds& TaskNormalizer::at(TaskKind task) const {
  const auto& b = bounds_[static_cast<std::size_t>(task)];
  if (!b) fail(ErrorKind::Configuration, "no normalizer bounds for task " + std::string(task_name(task)));
  return *b;
}

double TaskNormalizer::normalize(TaskKind task, double raw) const {
  const auto& b = at(task);
  const double x = minmax_normalize(raw, b.lo, b.hi);
  return b.lower_is_better ? 1.0 - x : x;
}

TaskNormalizer TaskNormalizer::fit(std::span<const std::pair<TaskKind, double>> observations) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::array<double, 4> lo, hi;
  lo.fill(inf);
  hi.fill(-inf);
  for (const auto& [task, raw] : observations) {
    const auto t = static_cast<std::size_t>(task);
    lo[t] = std::min(lo[t], raw);
    hi[t] = std::max(hi[t], raw);
  }
  TaskNormalizer norm;
  for (auto task : kAllTasks) {
    const auto t = static_cast<std::size_t>(task);
    if (lo[t] == inf) continue;
    const double top = hi[t] > lo[t] ? hi[t] : lo[t] + 1e-12;
    norm.set(task, {lo[t], top, lower_is_better(task)});
  }
  return norm;
}

double raw_performance(TaskKind task, const PointCloud& predicted, const PointCloud& truth) {
  if (task != TaskKind::PartSeg) return chamfer_distance(predicted.points, truth.points);

  require_domain(truth.labels.has_value(), "part segmentation truth carries no labels");
  std::vector<std::uint16_t> pred;
  if (predicted.size() == truth.size()) {
    pred = decode_part_labels(predicted.points);
  } else {
    // no correspondence: label each truth point by its nearest prediction
    const auto decoded = decode_part_labels(predicted.points);
    pred.resize(static_cast<std::size_t>(truth.size()));
    for (Index i = 0; i < truth.size(); ++i) {
      Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < predicted.size(); ++j) {
        const double d = (truth.points.row(i) - predicted.points.row(j)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      pred[static_cast<std::size_t>(i)] = decoded[static_cast<std::size_t>(best)];
    }
  }
  return miou(pred, *truth.labels, static_cast<int>(part_anchors().size()));
}

double pseudo_label(const IclModel& model, const IclQuery& query, TaskKind task,
                    const TaskNormalizer& norm) {
  if (!norm.has(task))
    fail(ErrorKind::Configuration, "no normalizer bounds for task " + std::string(task_name(task)));
  const PointCloud predicted = model.predict(query);
  return norm.normalize(task, raw_performance(task, predicted, query.query_target));
}

namespace {

ad::MlpSpec ranker_point_spec(const RankerConfig& cfg) {
  return {"ranker.point", {3, cfg.hidden, cfg.hidden}, cfg.activation, true};
}

ad::MlpSpec ranker_head_spec(const RankerConfig& cfg) {
  return {"ranker.head", {cfg.hidden, cfg.hidden, 1}, cfg.activation, false};
}

constexpr const char* kEmbedName = "ranker.segment_embed";

}  // namespace

void init_ranker(ad::ParamStore& params, const RankerConfig& cfg, Rng& rng) {
  require_domain(cfg.hidden >= 1, "ranker width must be positive");
  ad::init_mlp(params, ranker_point_spec(cfg), rng);
  ad::init_mlp(params, ranker_head_spec(cfg), rng);
  Matrix embed(3, cfg.hidden);
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < cfg.hidden; ++c) embed(r, c) = uniform(rng, -0.5, 0.5);
  params.add(kEmbedName, std::move(embed));
}

ad::Var predict_score(ad::Tape& tape, ad::ParamStore& params, const RankerConfig& cfg,
                      const FusedCloud& fused) {
  require_domain(fused.points.rows() == static_cast<Index>(fused.segments.size()),
                 "fused cloud has inconsistent segment tags");
  const auto spec = ranker_point_spec(cfg);

  Matrix onehot = Matrix::Zero(fused.points.rows(), 3);
  for (std::size_t i = 0; i < fused.segments.size(); ++i)
    onehot(static_cast<Index>(i), static_cast<Index>(fused.segments[i])) = 1.0;

  // first layer: x W0 + b0 + onehot(tag) E
  ad::Var x = tape.constant(fused.points);
  ad::Var h = ad::add_row(ad::matmul(x, tape.param(params, spec.weight_name(0))),
                          tape.param(params, spec.bias_name(0)));
  h = ad::add(h, ad::matmul(tape.constant(std::move(onehot)), tape.param(params, kEmbedName)));
  h = ad::activate(h, cfg.activation);
  for (std::size_t l = 1; l < spec.layers(); ++l) {
    h = ad::add_row(ad::matmul(h, tape.param(params, spec.weight_name(l))),
                    tape.param(params, spec.bias_name(l)));
    h = ad::activate(h, cfg.activation);
  }
  return ad::forward_mlp(tape, params, ranker_head_spec(cfg), ad::max_pool_rows(h));
}

std::vector<int> rank_labels(std::span<const double> labels) {
  std::vector<int> ranks(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int better = 0;
    for (double other : labels)
      if (other > labels[i]) ++better;
    ranks[i] = better + 1;
  }
  return ranks;
}

Matrix rank_coefficients(std::span<const double> labels) {
  const auto ranks = rank_labels(labels);
  const auto k = static_cast<Index>(labels.size());
  Matrix coeff(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      coeff(i, j) = std::max(0.0, 1.0 / ranks[static_cast<std::size_t>(i)] -
                                      1.0 / ranks[static_cast<std::size_t>(j)]);
  return coeff;
}

ad::Var listwise_rank_loss(ad::Var scores, std::span<const double> labels) {
  require_domain(labels.size() >= 2, "ranking loss needs at least two candidates");
  require_domain(scores.rows() == static_cast<Index>(labels.size()) && scores.cols() == 1,
                 "ranking loss: one score per label expected");
  return ad::pairwise_logistic(scores, rank_coefficients(labels));
}

CandidateSet build_candidate_pool(TaskKind task, const PromptBank& bank, std::size_t k, Rng& rng) {
  const auto& pool = bank.of(task);
  require_domain(k >= 1, "candidate pool size must be positive");
  require_domain(pool.size() >= k, "prompt bank holds fewer prompts than requested");
  std::vector<std::size_t> ids(pool.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  // partial Fisher-Yates: the first k slots are a uniform draw without replacement
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  CandidateSet set;
  set.prompt_ids = std::move(ids);
  return set;
}

std::size_t select_prompt(ad::ParamStore& params, const RankerConfig& cfg,
                          const PointCloud& query_input, CandidateSet& candidates,
                          const std::vector<TaskPair>& bank) {
  require_domain(candidates.size() >= 1, "select_prompt: no candidates");
  candidates.scores.assign(candidates.size(), 0.0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto id = candidates.prompt_ids[i];
    require_domain(id < bank.size(), "select_prompt: candidate id outside the bank");
    ad::Tape tape;
    const auto& prompt = bank[id];
    candidates.scores[i] =
        predict_score(tape, params, cfg, fuse(query_input, prompt.input, prompt.target)).scalar();
    if (candidates.scores[i] > candidates.scores[best]) best = i;
  }
  return best;
}

namespace {
std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}
}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  require_domain(a.size() == b.size() && a.size() >= 2, "spearman: need two equal-length series");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return cov / std::sqrt(va * vb);
}

}  // namespace micas
