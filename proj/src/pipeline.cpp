#include "micas/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "micas/binary_io.hpp"
#include "micas/error.hpp"
#include "micas/nn.hpp"

namespace micas {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum SplitTag : std::uint64_t { kTrainSplit = 0x7101, kTestSplit = 0x7102, kBankSplit = 0x7103 };

std::uint64_t pair_seed(const RunConfig& cfg, SplitTag tag, TaskKind task, int level, Index i) {
  return derive_seed(cfg.seed, tag, static_cast<std::uint64_t>(task) * 16 + static_cast<std::uint64_t>(level),
                     static_cast<std::uint64_t>(i));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  os << text;
  if (!os) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

json epochs_json(const std::vector<EpochRecord>& epochs) {
  json arr = json::array();
  for (const auto& e : epochs)
    arr.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"tau", e.tau}, {"loss", e.mean_loss}});
  return arr;
}

// Held-out pools restricted to tasks whose bank is populated.
double heldout_spearman(ad::ParamStore& sampler, ad::ParamStore& ranker, const RunConfig& cfg,
                        const std::vector<TaskPair>& test, const PromptBank& bank,
                        const TaskNormalizer& norm) {
  const OracleModel model;
  const RankerConfig rcfg = cfg.ranker();
  double sum = 0.0;
  Index used = 0;
  for (const auto& q : test) {
    if (!norm.has(q.task)) continue;
    const CandidateSet set = candidates_for(cfg, bank, q);
    const auto labels = labels_for(sampler, cfg, model, q, set, bank, norm);
    std::vector<double> scores;
    for (auto id : set.prompt_ids) {
      const auto& p = bank.of(q.task)[id];
      ad::Tape tape;
      scores.push_back(predict_score(tape, ranker, rcfg, fuse(q.input, p.input, p.target)).scalar());
    }
    const double rho = spearman(scores, labels);
    if (std::isnan(rho)) continue;
    sum += rho;
    ++used;
  }
  return used == 0 ? std::nan("") : sum / static_cast<double>(used);
}

}  // namespace

// ---------------------------------------------------------------------------

Splits generate_splits(const RunConfig& cfg) {
  cfg.validate();
  Splits s;
  for (auto task : cfg.tasks) {
    for (int level : cfg.levels) {
      for (Index i = 0; i < cfg.train_per_level; ++i)
        s.train.push_back(gen_pair(task, level, cfg.points, pair_seed(cfg, kTrainSplit, task, level, i)));
      for (Index i = 0; i < cfg.test_per_level; ++i)
        s.test.push_back(gen_pair(task, level, cfg.points, pair_seed(cfg, kTestSplit, task, level, i)));
    }
    for (Index i = 0; i < cfg.bank_per_task; ++i) {
      const int level = cfg.levels[static_cast<std::size_t>(i) % cfg.levels.size()];
      s.bank.per_task[static_cast<std::size_t>(task)].push_back(
          gen_pair(task, level, cfg.points, pair_seed(cfg, kBankSplit, task, level, i)));
    }
  }
  return s;
}

Splits load_splits(const RunLayout& run) {
  for (const auto& p : {run.train(), run.test(), run.bank()})
    if (!fs::exists(p)) fail(ErrorKind::Configuration, "missing dataset " + p.string() + " (run gen-data first)");
  Splits s;
  s.train = load_dataset(run.train());
  s.test = load_dataset(run.test());
  s.bank = PromptBank::from_pairs(load_dataset(run.bank()));
  return s;
}

void cmd_gen_data(const RunConfig& cfg, const RunLayout& run) {
  ensure_dir(run.dir);
  const Splits s = generate_splits(cfg);
  save_dataset(run.train(), s.train);
  save_dataset(run.test(), s.test);
  save_dataset(run.bank(), s.bank.flatten());
  write_text(run.config(), cfg.serialize());
}

ad::ParamStore load_checked(const fs::path& path, const ad::ParamStore& reference,
                            const std::string& what) {
  if (!fs::exists(path)) fail(ErrorKind::Configuration, "missing " + what + " checkpoint " + path.string());
  ad::ParamStore loaded = ad::load_params(path);
  bool same = loaded.size() == reference.size();
  for (const auto& [name, e] : reference) {
    if (!same) break;
    same = loaded.contains(name) && loaded.at(name).value.rows() == e.value.rows() &&
           loaded.at(name).value.cols() == e.value.cols();
  }
  if (!same) fail(ErrorKind::Configuration, what + " checkpoint does not match the configured network shapes");
  return loaded;
}

SamplerRun cmd_train_sampler(const RunConfig& cfg, const RunLayout& run) {
  const Splits s = load_splits(run);
  SamplerRun out;
  ad::ParamStore params = train_sampler(cfg, s.train, s.bank, &out.epochs);
  out.params_hash = params.hash();
  ad::save_params(run.sampler(), params);

  json meta = {{"d1", cfg.d1},
               {"d2", cfg.d2},
               {"N", cfg.centers},
               {"alpha", cfg.alpha},
               {"tau_schedule", {{"start", cfg.tau_start}, {"end", cfg.tau_end}, {"inference", cfg.tau_infer}}},
               {"optimizer", std::string(ad::optimizer_name(cfg.optimizer))},
               {"config_hash", hash_hex(cfg.hash())},
               {"params_hash", hash_hex(out.params_hash)},
               {"epochs", epochs_json(out.epochs)}};
  write_text(run.sampler_meta(), meta.dump(2) + "\n");
  return out;
}

void save_label_cache(const fs::path& path, const LabelTable& table, std::uint64_t sampler_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  binary::put_magic(os, "MICASLC1");
  binary::put<std::uint64_t>(os, table.config_hash);
  binary::put<std::uint64_t>(os, sampler_hash);
  for (auto task : kAllTasks) {
    const bool present = table.normalizer.has(task);
    binary::put<std::uint8_t>(os, present ? 1 : 0);
    const TaskBounds b = present ? table.normalizer.at(task) : TaskBounds{};
    binary::put<double>(os, b.lo);
    binary::put<double>(os, b.hi);
    binary::put<std::uint8_t>(os, b.lower_is_better ? 1 : 0);
  }
  binary::put<std::uint64_t>(os, table.labels.size());
  for (const auto& [key, label] : table.labels) {
    binary::put<std::uint64_t>(os, key.first);
    binary::put<std::uint64_t>(os, key.second);
    binary::put<double>(os, label);
  }
  if (!os) fail(ErrorKind::Io, "write failed: " + path.string());
}

LabelTable load_label_cache(const fs::path& path, std::uint64_t& sampler_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot read " + path.string());
  binary::expect_magic(is, "MICASLC1");
  LabelTable table;
  table.config_hash = binary::get<std::uint64_t>(is);
  sampler_hash = binary::get<std::uint64_t>(is);
  for (auto task : kAllTasks) {
    const bool present = binary::get<std::uint8_t>(is) != 0;
    TaskBounds b;
    b.lo = binary::get<double>(is);
    b.hi = binary::get<double>(is);
    b.lower_is_better = binary::get<std::uint8_t>(is) != 0;
    if (present) table.normalizer.set(task, b);
  }
  const auto count = binary::get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto q = binary::get<std::uint64_t>(is);
    const auto p = binary::get<std::uint64_t>(is);
    table.labels[{q, p}] = binary::get<double>(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Format, "trailing bytes in label cache");
  return table;
}

RankerRun cmd_train_ranker(const RunConfig& cfg, const RunLayout& run) {
  if (!fs::exists(run.sampler()))
    fail(ErrorKind::Configuration, "train-ranker needs a trained sampler: " + run.sampler().string() + " not found");
  const Splits s = load_splits(run);
  ad::ParamStore sampler = load_checked(run.sampler(), init_sampler_store(cfg), "sampler");

  RankerRun out;
  out.sampler_hash_before = sampler.hash();

  LabelTable labels;
  bool have = false;
  if (fs::exists(run.label_cache())) {
    std::uint64_t cached_sampler = 0;
    labels = load_label_cache(run.label_cache(), cached_sampler);
    have = labels.config_hash == cfg.hash() && cached_sampler == out.sampler_hash_before;
  }
  if (!have) {
    const OracleModel model;
    labels = build_label_table(sampler, cfg, model, s.train, s.bank, eval_threads());
    save_label_cache(run.label_cache(), labels, out.sampler_hash_before);
  }
  out.cache_reused = have;

  ad::ParamStore ranker = train_ranker(cfg, s.train, s.bank, labels, &out.epochs);
  out.params_hash = ranker.hash();
  out.heldout_spearman = heldout_spearman(sampler, ranker, cfg, s.test, s.bank, labels.normalizer);

  out.sampler_hash_after = sampler.hash();
  const std::uint64_t on_disk = ad::load_params(run.sampler()).hash();
  if (out.sampler_hash_after != out.sampler_hash_before || on_disk != out.sampler_hash_before)
    fail(ErrorKind::Contract, "sampler parameters changed during ranker training");

  ad::save_params(run.ranker(), ranker);
  json norm = json::object();
  for (auto task : kAllTasks) {
    if (!labels.normalizer.has(task)) continue;
    const auto& b = labels.normalizer.at(task);
    norm[std::string(task_name(task))] = {{"lo", b.lo}, {"hi", b.hi}, {"lower_is_better", b.lower_is_better}};
  }
  json meta = {{"K", cfg.candidates},
               {"normalizer", norm},
               {"optimizer", std::string(ad::optimizer_name(cfg.optimizer))},
               {"config_hash", hash_hex(cfg.hash())},
               {"sampler_hash", hash_hex(out.sampler_hash_before)},
               {"params_hash", hash_hex(out.params_hash)},
               {"label_cache_reused", out.cache_reused},
               {"heldout_spearman", std::isnan(out.heldout_spearman) ? json(nullptr) : json(out.heldout_spearman)},
               {"epochs", epochs_json(out.epochs)}};
  write_text(run.ranker_meta(), meta.dump(2) + "\n");
  return out;
}

std::vector<EvalVariant> parse_variants(const std::vector<std::string>& specs) {
  std::vector<EvalVariant> out;
  auto push = [&](EvalVariant v) {
    for (const auto& e : out)
      if (e.sampler == v.sampler && e.prompt == v.prompt) return;
    out.push_back(v);
  };
  for (const auto& spec : specs) {
    if (spec == "all") {
      for (auto sv : {SamplerVariant::Fps, SamplerVariant::Adaptive})
        for (auto pv : {PromptVariant::Random, PromptVariant::Ranked}) push({sv, pv});
      continue;
    }
    const auto comma = spec.find(',');
    if (comma == std::string::npos)
      fail(ErrorKind::Configuration, "ablation must look like fps|adaptive,random|ranked: " + spec);
    const std::string a = spec.substr(0, comma), b = spec.substr(comma + 1);
    EvalVariant v{};
    if (a == "fps") v.sampler = SamplerVariant::Fps;
    else if (a == "adaptive") v.sampler = SamplerVariant::Adaptive;
    else fail(ErrorKind::Configuration, "unknown sampler variant: " + a);
    if (b == "random") v.prompt = PromptVariant::Random;
    else if (b == "ranked") v.prompt = PromptVariant::Ranked;
    else fail(ErrorKind::Configuration, "unknown prompt variant: " + b);
    push(v);
  }
  if (out.empty()) push({SamplerVariant::Fps, PromptVariant::Random});
  return out;
}

MetricReport cmd_eval(const RunConfig& cfg, const RunLayout& run, const std::vector<EvalVariant>& variants) {
  const Splits s = load_splits(run);
  bool need_sampler = false, need_ranker = false;
  for (const auto& v : variants) {
    need_sampler |= v.sampler == SamplerVariant::Adaptive;
    need_ranker |= v.prompt == PromptVariant::Ranked;
  }
  std::optional<ad::ParamStore> sampler, ranker;
  if (need_sampler) sampler = load_checked(run.sampler(), init_sampler_store(cfg), "sampler");
  if (need_ranker) ranker = load_checked(run.ranker(), init_ranker_store(cfg), "ranker");

  MetricReport report = evaluate(cfg, s.test, s.bank, sampler ? &*sampler : nullptr,
                                 ranker ? &*ranker : nullptr, variants, eval_threads());
  write_text(run.report_json(), report_to_json(report));
  write_text(run.report_csv(), report_to_csv(report));
  return report;
}

// ---------------------------------------------------------------------------
// Reports

std::string report_to_json(const MetricReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    json j = {{"task", std::string(task_name(e.task))},
              {"level", e.level},
              {"sampler", std::string(variant_name(e.sampler))},
              {"prompt", std::string(variant_name(e.prompt))},
              {"metric", e.metric},
              {"value", e.value},
              {"queries", e.queries}};
    if (e.task == TaskKind::Denoising) {
      j["near_hard_centers"] = e.near_hard_centers;
      j["outlier_centers"] = e.outlier_centers;
    }
    entries.push_back(std::move(j));
  }
  json root = {{"profile", report.profile},
               {"config_hash", hash_hex(report.config_hash)},
               {"seed", report.seed},
               {"wall_time_s", report.wall_time_s},
               {"entries", entries}};
  return root.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
    MetricReport r;
    r.profile = root.at("profile").get<std::string>();
    r.config_hash = std::stoull(root.at("config_hash").get<std::string>(), nullptr, 16);
    r.seed = root.at("seed").get<std::uint64_t>();
    r.wall_time_s = root.at("wall_time_s").get<double>();
    for (const auto& j : root.at("entries")) {
      MetricEntry e{parse_task(j.at("task").get<std::string>()), j.at("level").get<int>(),
                    j.at("sampler").get<std::string>() == "fps" ? SamplerVariant::Fps : SamplerVariant::Adaptive,
                    j.at("prompt").get<std::string>() == "random" ? PromptVariant::Random : PromptVariant::Ranked,
                    j.at("metric").get<std::string>()};
      e.value = j.at("value").get<double>();
      e.queries = j.at("queries").get<Index>();
      e.near_hard_centers = j.value("near_hard_centers", Index{0});
      e.outlier_centers = j.value("outlier_centers", Index{0});
      r.entries.push_back(e);
    }
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed report: ") + e.what());
  }
}

std::string report_to_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "task,level,sampler,prompt,metric,value,queries,near_hard_centers,outlier_centers\n";
  os << std::setprecision(17);
  for (const auto& e : report.entries)
    os << task_name(e.task) << ',' << e.level << ',' << variant_name(e.sampler) << ','
       << variant_name(e.prompt) << ',' << e.metric << ',' << e.value << ',' << e.queries << ','
       << e.near_hard_centers << ',' << e.outlier_centers << '\n';
  return os.str();
}

std::string cmd_report(const RunLayout& run) {
  if (!fs::exists(run.report_json()))
    fail(ErrorKind::Configuration, "no report at " + run.report_json().string() + " (run eval first)");
  const MetricReport r = report_from_json(read_text(run.report_json()));

  std::ostringstream os;
  os << "profile " << r.profile << "  seed " << r.seed << "  config " << hash_hex(r.config_hash)
     << "  eval time " << std::fixed << std::setprecision(2) << r.wall_time_s << " s\n";
  for (auto task : kAllTasks) {
    std::map<std::pair<int, int>, std::map<int, double>> rows;
    std::map<std::pair<int, int>, std::pair<Index, Index>> outliers;
    std::string metric;
    for (const auto& e : r.entries) {
      if (e.task != task) continue;
      metric = e.metric;
      const auto key = std::make_pair(static_cast<int>(e.sampler), static_cast<int>(e.prompt));
      rows[key][e.level] = e.value;
      outliers[key].first += e.near_hard_centers;
      outliers[key].second += e.outlier_centers;
    }
    if (rows.empty()) continue;
    os << "\n" << task_name(task) << " (" << metric << ")\n";
    os << std::left << std::setw(18) << "variant";
    for (int l = 1; l <= kLevels; ++l) os << std::right << std::setw(9) << ("L" + std::to_string(l));
    os << std::setw(9) << "avg";
    if (task == TaskKind::Denoising) os << std::setw(14) << "outlier-rate";
    os << "\n";
    for (const auto& [key, levels] : rows) {
      const std::string name = std::string(variant_name(static_cast<SamplerVariant>(key.first))) + "+" +
                               std::string(variant_name(static_cast<PromptVariant>(key.second)));
      os << std::left << std::setw(18) << name << std::right << std::setprecision(metric == "miou" ? 4 : 3);
      double sum = 0.0;
      for (int l = 1; l <= kLevels; ++l) {
        auto it = levels.find(l);
        if (it == levels.end()) {
          os << std::setw(9) << "-";
        } else {
          os << std::setw(9) << it->second;
          sum += it->second;
        }
      }
      os << std::setw(9) << sum / static_cast<double>(levels.size());
      if (task == TaskKind::Denoising) {
        const auto [hard, noisy] = outliers[key];
        os << std::setw(14) << (hard == 0 ? 0.0 : static_cast<double>(noisy) / static_cast<double>(hard));
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace micas
