#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "micas/error.hpp"
#include "micas/pipeline.hpp"
#include "tiny_config.hpp"

using namespace micas;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("micas_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Contract;
}

}  // namespace

TEST_CASE("gen-data is deterministic and sized by the config") {
  TempDir a("gen_a"), b("gen_b");
  const RunConfig cfg = tiny_run_config();
  cmd_gen_data(cfg, RunLayout{a.path});
  cmd_gen_data(cfg, RunLayout{b.path});
  for (const char* f : {"train.micasds", "test.micasds", "bank.micasds", "config.txt"})
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  const Splits s = load_splits(RunLayout{a.path});
  CHECK(s.train.size() == cfg.tasks.size() * cfg.levels.size() * static_cast<std::size_t>(cfg.train_per_level));
  CHECK(s.bank.of(TaskKind::Denoising).size() == static_cast<std::size_t>(cfg.bank_per_task));
  CHECK(s.train.front().input.size() == cfg.points);
  CHECK(RunConfig::load(a.path / "config.txt").hash() == cfg.hash());
}

TEST_CASE("step-wise contract and label cache reuse") {
  TempDir d("stepwise");
  const RunLayout run{d.path};
  const RunConfig cfg = tiny_run_config();
  cmd_gen_data(cfg, run);
  CHECK(kind_of([&] { cmd_train_ranker(cfg, run); }) == ErrorKind::Configuration);

  const SamplerRun sr = cmd_train_sampler(cfg, run);
  CHECK(sr.epochs.size() == static_cast<std::size_t>(cfg.sampler_epochs));
  CHECK(ad::load_params(run.sampler()).hash() == sr.params_hash);
  CHECK(fs::exists(run.sampler_meta()));

  const RankerRun first = cmd_train_ranker(cfg, run);
  CHECK_FALSE(first.cache_reused);
  CHECK(first.sampler_hash_before == sr.params_hash);
  CHECK(first.sampler_hash_after == sr.params_hash);
  CHECK(ad::load_params(run.sampler()).hash() == sr.params_hash);

  const RankerRun second = cmd_train_ranker(cfg, run);
  CHECK(second.cache_reused);
  CHECK(second.params_hash == first.params_hash);

  RunConfig other = cfg;
  other.ranker_epochs = 4;
  CHECK_FALSE(cmd_train_ranker(other, run).cache_reused);
}

TEST_CASE("eval report: json round trip, csv, table, missing checkpoints") {
  TempDir d("eval");
  const RunLayout run{d.path};
  const RunConfig cfg = tiny_run_config();
  cmd_gen_data(cfg, run);
  CHECK(kind_of([&] { cmd_eval(cfg, run, parse_variants({"adaptive,random"})); }) == ErrorKind::Configuration);
  const MetricReport base = cmd_eval(cfg, run, parse_variants({"fps,random"}));
  CHECK(base.config_hash == cfg.hash());
  CHECK(base.seed == cfg.seed);

  cmd_train_sampler(cfg, run);
  CHECK(kind_of([&] { cmd_eval(cfg, run, parse_variants({"fps,ranked"})); }) == ErrorKind::Configuration);
  cmd_train_ranker(cfg, run);
  const MetricReport full = cmd_eval(cfg, run, parse_variants({"all"}));
  CHECK(full.entries.size() == 4 * cfg.tasks.size() * cfg.levels.size());

  const MetricReport back = report_from_json(slurp(run.report_json()));
  REQUIRE(back.entries.size() == full.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) CHECK(back.entries[i].value == full.entries[i].value);
  CHECK(back.config_hash == full.config_hash);

  const std::string csv = slurp(run.report_csv());
  CHECK(csv.find("task,level,sampler,prompt") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(full.entries.size()) + 1);

  const std::string table = cmd_report(run);
  CHECK(table.find("denoising") != std::string::npos);
  CHECK(table.find("adaptive+ranked") != std::string::npos);
  CHECK(kind_of([] { report_from_json("{\"entries\": 3}"); }) == ErrorKind::Format);
}

TEST_CASE("variant parsing") {
  CHECK(parse_variants({}).size() == 1);
  CHECK(parse_variants({"all"}).size() == 4);
  CHECK(parse_variants({"fps,random", "fps,random"}).size() == 1);
  CHECK(kind_of([] { parse_variants({"fps"}); }) == ErrorKind::Configuration);
  CHECK(kind_of([] { parse_variants({"best,random"}); }) == ErrorKind::Configuration);
}

TEST_CASE("label cache file format") {
  TempDir d("cache");
  LabelTable t;
  t.config_hash = 0x1234;
  t.normalizer.set(TaskKind::Registration, {0.5, 2.0, true});
  t.labels[{7, 1}] = 0.25;
  t.labels[{7, 3}] = 1.0;
  const fs::path p = d.path / "label_cache.bin";
  save_label_cache(p, t, 0xabcd);
  std::uint64_t sampler = 0;
  const LabelTable back = load_label_cache(p, sampler);
  CHECK(sampler == 0xabcd);
  CHECK(back.config_hash == 0x1234);
  CHECK(back.labels == t.labels);
  CHECK(back.normalizer.at(TaskKind::Registration).hi == 2.0);
  CHECK_FALSE(back.normalizer.has(TaskKind::PartSeg));
  CHECK(slurp(p).substr(0, 8) == "MICASLC1");

  std::ofstream(p, std::ios::app | std::ios::binary) << "x";
  CHECK(kind_of([&] { load_label_cache(p, sampler); }) == ErrorKind::Format);
}

TEST_CASE("checkpoint shape checks") {
  TempDir d("ckpt");
  const RunConfig cfg = tiny_run_config();
  const ad::ParamStore ref = init_sampler_store(cfg);
  ad::save_params(d.path / "s.micasnn", ref);
  CHECK(load_checked(d.path / "s.micasnn", ref, "sampler").hash() == ref.hash());
  RunConfig wider = cfg;
  wider.d1 = 9;
  CHECK(kind_of([&] { load_checked(d.path / "s.micasnn", init_sampler_store(wider), "sampler"); }) ==
        ErrorKind::Configuration);
  CHECK(kind_of([&] { load_checked(d.path / "missing.micasnn", ref, "sampler"); }) == ErrorKind::Configuration);
}
