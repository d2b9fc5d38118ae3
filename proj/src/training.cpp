#include "micas/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "micas/error.hpp"

namespace micas {

namespace {

// Seed-stream tags; arbitrary but fixed so every stream is reproducible.
enum SeedTag : std::uint64_t {
  kSamplerInit = 0x5a01,
  kSamplerEpoch = 0x5a02,
  kRankerInit = 0x5a03,
  kRankerEpoch = 0x5a04,
  kPool = 0x5a05,
  kOracle = 0x5a06,
  kRandomPrompt = 0x5a07,
};

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

const TaskPair& pick_prompt(const PromptBank& bank, TaskKind task, Rng& rng) {
  const auto& pool = bank.of(task);
  require(!pool.empty(), ErrorKind::Configuration,
          "prompt bank has no prompts for a training task");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

}  // namespace

// ---------------------------------------------------------------------------
// Sampler stage

ad::ParamStore init_sampler_store(const RunConfig& cfg) {
  ad::ParamStore params;
  Rng rng(derive_seed(cfg.seed, kSamplerInit));
  init_sampler(params, cfg.sampler(), rng);
  init_surrogate(params, cfg.surrogate(), rng);
  return params;
}

namespace {

// Eq. 8 for one side of the example: soft joint sampling onto the target,
// KNN target patches, masking, and the surrogate anchored at the input-side
// centers.
ad::Var side_loss(ad::Tape& tape, ad::ParamStore& params, const RunConfig& cfg, ad::Var task_feature,
                  ad::Var soft, ad::Var input_centers, const PointCloud& target, Rng& mask_rng) {
  ad::Var target_centers = project_centers(soft, tape.constant(target.points));
  const PatchSet truth = knn_patches(target, target_centers.value(), cfg.patch_size);
  const auto [masked, pattern] = mask_patches(truth, cfg.mask_ratio, mask_rng);
  const Vec3 context = visible_centroid_mean(masked, pattern);

  const auto predicted = surrogate_predict(tape, params, cfg.surrogate(), task_feature, input_centers,
                                           pattern, context);
  std::vector<ad::Var> truth_vars;
  truth_vars.reserve(pattern.masked.size());
  for (Index i : pattern.masked) truth_vars.push_back(tape.constant(truth.patches[static_cast<std::size_t>(i)]));
  return sampling_loss(predicted, truth_vars, target_centers, tape.constant(target.points), cfg.alpha);
}

}  // namespace

ad::Var sampler_example_loss(ad::Tape& tape, ad::ParamStore& params, const RunConfig& cfg,
                             const TaskPair& query, const TaskPair& prompt, double tau,
                             const Matrix& noise_q, const Matrix& noise_p,
                             std::uint64_t mask_seed, SampleOutput* sampled) {
  const SampleOutput s = sample(tape, params, cfg.sampler(), query.input, prompt.input,
                                prompt.target, tau, noise_q, noise_p);
  if (sampled) *sampled = s;

  Rng mask_rng(mask_seed);
  ad::Var lq = side_loss(tape, params, cfg, s.task_feature, s.soft_q, s.centers_q, query.target, mask_rng);
  ad::Var lp = side_loss(tape, params, cfg, s.task_feature, s.soft_p, s.centers_p, prompt.target, mask_rng);
  return ad::scale(ad::add(lq, lp), 0.5);
}

ad::ParamStore train_sampler(const RunConfig& cfg, const std::vector<TaskPair>& train,
                             const PromptBank& bank, std::vector<EpochRecord>* log,
                             const SamplerObserver& observer) {
  cfg.validate();
  require(!train.empty(), ErrorKind::Configuration, "no training pairs for the sampler");
  ad::ParamStore params = init_sampler_store(cfg);
  ad::Optimizer opt(cfg.optimizer);
  const Index n = cfg.centers;

  std::vector<std::size_t> order(train.size());
  Index step = 0;
  for (Index epoch = 0; epoch < cfg.sampler_epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, kSamplerEpoch, static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const double tau = tau_at_epoch(epoch, cfg.sampler_epochs, cfg.tau_start, cfg.tau_end);
    double lr = 0.0;
    double loss_sum = 0.0;

    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.sampler_batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.sampler_batch));
      const double weight = 1.0 / static_cast<double>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const TaskPair& query = train[order[k]];
        const TaskPair& prompt = pick_prompt(bank, query.task, rng);
        const Matrix gq = gumbel_noise(query.input.size(), n, rng);
        const Matrix gp = gumbel_noise(prompt.input.size(), n, rng);
        const std::uint64_t mask_seed = rng();

        ad::Tape tape;
        SampleOutput sampled;
        ad::Var loss = sampler_example_loss(tape, params, cfg, query, prompt, tau, gq, gp,
                                            mask_seed, &sampled);
        const double value = loss.scalar();
        if (!std::isfinite(value)) {
          fail(ErrorKind::Numeric, "non-finite sampler loss at epoch " + std::to_string(epoch) +
                                       ", query seed " + std::to_string(query.seed) +
                                       ", prompt seed " + std::to_string(prompt.seed));
        }
        tape.backward(loss, weight);
        loss_sum += value;
        if (observer) observer({epoch, step, value, tau, sampled, query, prompt});
        ++step;
      }
      lr = opt.step(params, epoch, cfg.sampler_epochs, cfg.sampler_lr0, cfg.sampler_lr_min);
    }
    if (log) log->push_back({epoch, lr, tau, loss_sum / static_cast<double>(train.size())});
  }
  return params;
}

InferenceSample adaptive_centers(ad::ParamStore& params, const RunConfig& cfg,
                                 const PointCloud& query_input, const TaskPair& prompt) {
  ad::Tape tape;
  const SampleOutput s = sample(tape, params, cfg.sampler(), query_input, prompt.input,
                                prompt.target, cfg.tau_infer, nullptr);
  return {s.centers_q.value(), s.soft_q.value()};
}

Matrix fps_centers(const PointCloud& cloud, Index count) {
  const auto idx = fps_select(cloud, count, 0);
  return joint_sample_hard(cloud, idx);
}

OutlierStats soft_outlier_stats(const Matrix& soft, const PointCloud& cloud, double threshold) {
  require_domain(soft.rows() == cloud.size(), "outlier stats: weight rows differ from point count");
  OutlierStats stats;
  for (Index c = 0; c < soft.cols(); ++c) {
    Index arg = 0;
    const double mx = soft.col(c).maxCoeff(&arg);
    if (mx < threshold) continue;
    ++stats.near_hard;
    if (cloud.noise_mask && (*cloud.noise_mask)[static_cast<std::size_t>(arg)]) ++stats.on_noise;
  }
  return stats;
}

OutlierStats fps_outlier_stats(const PointCloud& cloud, Index count) {
  OutlierStats stats;
  for (Index i : fps_select(cloud, count, 0)) {
    ++stats.near_hard;
    if (cloud.noise_mask && (*cloud.noise_mask)[static_cast<std::size_t>(i)]) ++stats.on_noise;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Ranker stage

CandidateSet candidates_for(const RunConfig& cfg, const PromptBank& bank, const TaskPair& query) {
  Rng rng(derive_seed(cfg.seed, kPool, query.seed));
  return build_candidate_pool(query.task, bank, static_cast<std::size_t>(cfg.candidates), rng);
}

std::uint64_t oracle_seed(const RunConfig& cfg, const TaskPair& query) {
  return derive_seed(cfg.seed, kOracle, query.seed);
}

double raw_candidate_performance(ad::ParamStore& sampler, const RunConfig& cfg,
                                 const IclModel& model, const TaskPair& query,
                                 const TaskPair& prompt) {
  const InferenceSample s = adaptive_centers(sampler, cfg, query.input, prompt);
  const IclQuery q{query.input, query.target, prompt.input, prompt.target, s.centers,
                   oracle_seed(cfg, query)};
  return raw_performance(query.task, model.predict(q), query.target);
}

double LabelTable::at(std::uint64_t query, std::uint64_t prompt) const {
  auto it = labels.find({query, prompt});
  if (it == labels.end()) fail(ErrorKind::Configuration, "label cache misses a (query, prompt) pair");
  return it->second;
}

LabelTable build_label_table(ad::ParamStore& sampler, const RunConfig& cfg,
                             const IclModel& model, const std::vector<TaskPair>& queries,
                             const PromptBank& bank, unsigned threads) {
  std::vector<CandidateSet> pools;
  pools.reserve(queries.size());
  for (const auto& q : queries) pools.push_back(candidates_for(cfg, bank, q));

  std::vector<std::vector<double>> raw(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    const auto& q = queries[i];
    const auto& prompts = bank.of(q.task);
    for (auto id : pools[i].prompt_ids)
      raw[i].push_back(raw_candidate_performance(sampler, cfg, model, q, prompts[id]));
  });

  std::vector<std::pair<TaskKind, double>> observations;
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (double r : raw[i]) observations.emplace_back(queries[i].task, r);

  LabelTable table;
  table.config_hash = cfg.hash();
  table.normalizer = TaskNormalizer::fit(observations);
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t k = 0; k < pools[i].size(); ++k)
      table.labels[{queries[i].seed, pools[i].prompt_ids[k]}] =
          table.normalizer.normalize(queries[i].task, raw[i][k]);
  return table;
}

std::vector<double> labels_for(ad::ParamStore& sampler, const RunConfig& cfg,
                               const IclModel& model, const TaskPair& query,
                               const CandidateSet& set, const PromptBank& bank,
                               const TaskNormalizer& norm) {
  std::vector<double> out;
  out.reserve(set.size());
  const auto& prompts = bank.of(query.task);
  for (auto id : set.prompt_ids)
    out.push_back(norm.normalize(query.task,
                                 raw_candidate_performance(sampler, cfg, model, query, prompts[id])));
  return out;
}

ad::ParamStore init_ranker_store(const RunConfig& cfg) {
  ad::ParamStore params;
  Rng rng(derive_seed(cfg.seed, kRankerInit));
  init_ranker(params, cfg.ranker(), rng);
  return params;
}

ad::ParamStore train_ranker(const RunConfig& cfg, const std::vector<TaskPair>& queries,
                            const PromptBank& bank, const LabelTable& labels,
                            std::vector<EpochRecord>* log) {
  cfg.validate();
  require(cfg.candidates >= 2, ErrorKind::Configuration, "ranker training needs at least two candidates");
  require(!queries.empty(), ErrorKind::Configuration, "no training queries for the ranker");
  ad::ParamStore params = init_ranker_store(cfg);
  ad::Optimizer opt(cfg.optimizer);
  const RankerConfig rcfg = cfg.ranker();

  // pools and fused inputs are fixed across epochs
  struct Item {
    std::vector<FusedCloud> fused;
    std::vector<double> labels;
  };
  std::vector<Item> items;
  items.reserve(queries.size());
  for (const auto& q : queries) {
    const CandidateSet set = candidates_for(cfg, bank, q);
    Item item;
    const auto& prompts = bank.of(q.task);
    for (auto id : set.prompt_ids) {
      item.fused.push_back(fuse(q.input, prompts[id].input, prompts[id].target));
      item.labels.push_back(labels.at(q.seed, id));
    }
    items.push_back(std::move(item));
  }

  std::vector<std::size_t> order(items.size());
  for (Index epoch = 0; epoch < cfg.ranker_epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, kRankerEpoch, static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double lr = 0.0;
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.ranker_batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.ranker_batch));
      const double weight = 1.0 / static_cast<double>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const Item& item = items[order[k]];
        ad::Tape tape;
        ad::Var scores = predict_score(tape, params, rcfg, item.fused.front());
        for (std::size_t c = 1; c < item.fused.size(); ++c)
          scores = ad::concat_rows(scores, predict_score(tape, params, rcfg, item.fused[c]));
        ad::Var loss = listwise_rank_loss(scores, item.labels);
        const double value = loss.scalar();
        require(std::isfinite(value), ErrorKind::Numeric, "non-finite ranker loss");
        tape.backward(loss, weight);
        loss_sum += value;
      }
      lr = opt.step(params, epoch, cfg.ranker_epochs, cfg.ranker_lr0, cfg.ranker_lr_min);
    }
    if (log) log->push_back({epoch, lr, 0.0, loss_sum / static_cast<double>(items.size())});
  }
  return params;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view variant_name(SamplerVariant v) {
  return v == SamplerVariant::Fps ? "fps" : "adaptive";
}

std::string_view variant_name(PromptVariant v) {
  return v == PromptVariant::Random ? "random" : "ranked";
}

unsigned eval_threads() {
  if (const char* env = std::getenv("MICAS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

MetricReport evaluate(const RunConfig& cfg, const std::vector<TaskPair>& test,
                      const PromptBank& bank, ad::ParamStore* sampler, ad::ParamStore* ranker,
                      const std::vector<EvalVariant>& variants, unsigned threads) {
  const auto started = std::chrono::steady_clock::now();
  for (const auto& v : variants) {
    if (v.sampler == SamplerVariant::Adaptive && sampler == nullptr)
      fail(ErrorKind::Configuration, "adaptive sampling requested without a sampler checkpoint");
    if (v.prompt == PromptVariant::Ranked && ranker == nullptr)
      fail(ErrorKind::Configuration, "ranked prompts requested without a ranker checkpoint");
  }

  const OracleModel model;
  const RankerConfig rcfg = cfg.ranker();

  struct QueryResult {
    double metric = 0.0;
    OutlierStats outliers;
  };
  std::vector<std::vector<QueryResult>> results(variants.size(), std::vector<QueryResult>(test.size()));

  parallel_for(test.size(), threads, [&](std::size_t qi) {
    const TaskPair& query = test[qi];
    const auto& prompts = bank.of(query.task);
    CandidateSet pool = candidates_for(cfg, bank, query);

    std::optional<std::size_t> ranked_choice;
    Rng pick_rng(derive_seed(cfg.seed, kRandomPrompt, query.seed));
    const std::size_t random_choice = static_cast<std::size_t>(pick_rng() % pool.size());

    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      const auto& v = variants[vi];
      std::size_t choice = random_choice;
      if (v.prompt == PromptVariant::Ranked) {
        if (!ranked_choice) ranked_choice = select_prompt(*ranker, rcfg, query.input, pool, prompts);
        choice = *ranked_choice;
      }
      const TaskPair& prompt = prompts[pool.prompt_ids[choice]];

      Matrix centers;
      QueryResult r;
      if (v.sampler == SamplerVariant::Fps) {
        centers = fps_centers(query.input, cfg.centers);
        r.outliers = fps_outlier_stats(query.input, cfg.centers);
      } else {
        InferenceSample s = adaptive_centers(*sampler, cfg, query.input, prompt);
        r.outliers = soft_outlier_stats(s.soft, query.input);
        centers = std::move(s.centers);
      }
      const IclQuery q{query.input, query.target, prompt.input, prompt.target, centers,
                       oracle_seed(cfg, query)};
      const double raw = raw_performance(query.task, model.predict(q), query.target);
      r.metric = query.task == TaskKind::PartSeg ? raw : 1000.0 * raw;
      results[vi][qi] = r;
    }
  });

  MetricReport report;
  report.profile = cfg.profile;
  report.config_hash = cfg.hash();
  report.seed = cfg.seed;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    for (auto task : kAllTasks) {
      for (int level = 1; level <= kLevels; ++level) {
        MetricEntry e{task, level, variants[vi].sampler, variants[vi].prompt,
                      task == TaskKind::PartSeg ? "miou" : "cd_x1000"};
        double sum = 0.0;
        for (std::size_t qi = 0; qi < test.size(); ++qi) {
          if (test[qi].task != task || test[qi].level != level) continue;
          sum += results[vi][qi].metric;
          ++e.queries;
          if (task == TaskKind::Denoising) {
            e.near_hard_centers += results[vi][qi].outliers.near_hard;
            e.outlier_centers += results[vi][qi].outliers.on_noise;
          }
        }
        if (e.queries == 0) continue;
        e.value = sum / static_cast<double>(e.queries);
        report.entries.push_back(e);
      }
    }
  }
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace micas
