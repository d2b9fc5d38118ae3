#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "micas/config.hpp"
#include "micas/training.hpp"

// File-level commands behind the CLI. Every command reads and writes inside
// one run directory.
namespace micas {

struct RunLayout {
  std::filesystem::path dir;

  std::filesystem::path train() const { return dir / "train.micasds"; }
  std::filesystem::path test() const { return dir / "test.micasds"; }
  std::filesystem::path bank() const { return dir / "bank.micasds"; }
  std::filesystem::path sampler() const { return dir / "sampler.micasnn"; }
  std::filesystem::path sampler_meta() const { return dir / "sampler.json"; }
  std::filesystem::path ranker() const { return dir / "ranker.micasnn"; }
  std::filesystem::path ranker_meta() const { return dir / "ranker.json"; }
  std::filesystem::path label_cache() const { return dir / "label_cache.bin"; }
  std::filesystem::path report_json() const { return dir / "report.json"; }
  std::filesystem::path report_csv() const { return dir / "report.csv"; }
  std::filesystem::path config() const { return dir / "config.txt"; }
};

struct Splits {
  std::vector<TaskPair> train;
  std::vector<TaskPair> test;
  PromptBank bank;
};

/// Pure generation of all three splits from the config.
Splits generate_splits(const RunConfig& cfg);
Splits load_splits(const RunLayout& run);

/// Also records the resolved configuration as config.txt in the run directory.
void cmd_gen_data(const RunConfig& cfg, const RunLayout& run);

struct SamplerRun {
  std::vector<EpochRecord> epochs;
  std::uint64_t params_hash = 0;
};
SamplerRun cmd_train_sampler(const RunConfig& cfg, const RunLayout& run);

struct RankerRun {
  std::vector<EpochRecord> epochs;
  std::uint64_t sampler_hash_before = 0;
  std::uint64_t sampler_hash_after = 0;
  std::uint64_t params_hash = 0;
  bool cache_reused = false;
  double heldout_spearman = 0.0;  // mean over held-out queries with non-constant labels
};
/// Requires the sampler checkpoint; fails with a configuration error if it is
/// missing or if its hash changes while the ranker trains.
RankerRun cmd_train_ranker(const RunConfig& cfg, const RunLayout& run);

/// Parses "fps,random" style pairs; "all" expands to the full grid.
std::vector<EvalVariant> parse_variants(const std::vector<std::string>& specs);

MetricReport cmd_eval(const RunConfig& cfg, const RunLayout& run,
                      const std::vector<EvalVariant>& variants);

/// Human-readable table of an existing report.json.
std::string cmd_report(const RunLayout& run);

std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text);
std::string report_to_csv(const MetricReport& report);

/// Label cache: "MICASLC1", u64 config hash, u64 sampler hash, normalizer
/// table (4 x (u8 present, f64 lo, f64 hi, u8 lower_is_better)), u64 entry
/// count, entries (u64 query seed, u64 prompt index, f64 label).
void save_label_cache(const std::filesystem::path& path, const LabelTable& table,
                      std::uint64_t sampler_hash);
LabelTable load_label_cache(const std::filesystem::path& path, std::uint64_t& sampler_hash);

/// Loads a checkpoint and checks names and shapes against a fresh store.
ad::ParamStore load_checked(const std::filesystem::path& path, const ad::ParamStore& reference,
                            const std::string& what);

}  // namespace micas
