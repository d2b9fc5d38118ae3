#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "micas/micas_c.h"

namespace {

struct ConfigDeleter {
  void operator()(micas_config* c) const { micas_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<micas_config, ConfigDeleter>;

int report_failure(micas_status status, const char* doing) {
  std::fprintf(stderr, "micas: %s failed (%s): %s\n", doing, micas_status_name(status), micas_last_error());
  return static_cast<int>(status);
}

void print_epoch(void* user, const micas_epoch* e) {
  const char* stage = static_cast<const char*>(user);
  std::printf("%s epoch %3ld  lr %.6g  tau %.3f  loss %.6f\n", stage, e->epoch, e->lr, e->tau, e->loss);
}

struct Options {
  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out = "run";
  std::vector<std::string> ablations;
};

micas_status build_config(const Options& opt, ConfigPtr& out) {
  micas_config* raw = nullptr;
  std::string path = opt.config_path;
  // later stages pick up the configuration recorded by gen-data
  if (path.empty() && opt.profile.empty() && std::filesystem::exists(std::filesystem::path(opt.out) / "config.txt"))
    path = (std::filesystem::path(opt.out) / "config.txt").string();
  micas_status st = path.empty() ? micas_config_create(opt.profile.empty() ? "desk" : opt.profile.c_str(), &raw)
                                            : micas_config_load(path.c_str(), &raw);
  if (st != MICAS_OK) return st;
  out.reset(raw);
  if (!opt.config_path.empty() && !opt.profile.empty()) {
    std::string current(16, '\0');
    size_t needed = 0;
    micas_config_get(raw, "profile", current.data(), current.size(), &needed);
    current.resize(std::min(needed, current.size() - 1));
    if (current != opt.profile) {
      std::fprintf(stderr, "micas: --profile %s conflicts with profile %s in %s\n", opt.profile.c_str(),
                   current.c_str(), opt.config_path.c_str());
      return MICAS_ERR_CONFIG;
    }
  }
  for (const auto& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "micas: --set expects key=value, got %s\n", kv.c_str());
      return MICAS_ERR_INVALID_ARGUMENT;
    }
    st = micas_config_set(raw, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != MICAS_OK) return st;
  }
  if (opt.seed) {
    st = micas_config_set(raw, "seed", std::to_string(*opt.seed).c_str());
    if (st != MICAS_OK) return st;
  }
  return micas_config_validate(raw);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MICAS: task-adaptive point sampling and prompt ranking for point-cloud in-context learning"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) {
      sub->add_option("--config", opt.config_path, "key = value config file")->check(CLI::ExistingFile);
      sub->add_option("--profile", opt.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
      sub->add_option("--seed", opt.seed, "run seed");
      sub->add_option("--set", opt.overrides, "override a config key (key=value), repeatable");
    }
    sub->add_option("--out", opt.out, "run directory")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-data", "generate train / test / prompt-bank datasets");
  auto* ts = app.add_subcommand("train-sampler", "train the task-adaptive point sampler");
  auto* tr = app.add_subcommand("train-ranker", "train the prompt ranker against the frozen sampler");
  auto* ev = app.add_subcommand("eval", "evaluate sampler / prompt variants and write report.json + report.csv");
  auto* rp = app.add_subcommand("report", "print the table in an existing report.json");
  for (auto* sub : {gen, ts, tr, ev}) add_common(sub, true);
  add_common(rp, false);
  ev->add_option("--ablation", opt.ablations, "fps|adaptive,random|ranked or all; repeatable");

  CLI11_PARSE(app, argc, argv);

  if (rp->parsed()) {
    size_t needed = 0;
    micas_status st = micas_report(opt.out.c_str(), nullptr, 0, &needed);
    if (st != MICAS_OK) return report_failure(st, "report");
    std::string text(needed + 1, '\0');
    st = micas_report(opt.out.c_str(), text.data(), text.size(), &needed);
    if (st != MICAS_OK) return report_failure(st, "report");
    std::fputs(text.c_str(), stdout);
    return 0;
  }

  ConfigPtr cfg;
  if (micas_status st = build_config(opt, cfg); st != MICAS_OK) return report_failure(st, "configuration");
  std::uint64_t cfg_hash = 0;
  micas_config_hash(cfg.get(), &cfg_hash);

  if (gen->parsed()) {
    if (micas_status st = micas_gen_data(cfg.get(), opt.out.c_str()); st != MICAS_OK) return report_failure(st, "gen-data");
    std::printf("datasets written to %s (config %016" PRIx64 ")\n", opt.out.c_str(), cfg_hash);
  } else if (ts->parsed()) {
    std::uint64_t hash = 0;
    char stage[] = "sampler";
    if (micas_status st = micas_train_sampler(cfg.get(), opt.out.c_str(), print_epoch, stage, &hash); st != MICAS_OK)
      return report_failure(st, "train-sampler");
    std::printf("sampler checkpoint %s/sampler.micasnn  hash %016" PRIx64 "\n", opt.out.c_str(), hash);
  } else if (tr->parsed()) {
    micas_ranker_summary summary{};
    char stage[] = "ranker";
    if (micas_status st = micas_train_ranker(cfg.get(), opt.out.c_str(), print_epoch, stage, &summary); st != MICAS_OK)
      return report_failure(st, "train-ranker");
    std::printf("label cache %s\n", summary.label_cache_reused ? "reused" : "rebuilt");
    std::printf("sampler hash %016" PRIx64 " unchanged\n", summary.sampler_hash_after);
    if (std::isnan(summary.heldout_spearman))
      std::printf("held-out spearman: undefined (constant labels)\n");
    else
      std::printf("held-out spearman %.4f\n", summary.heldout_spearman);
    std::printf("ranker checkpoint %s/ranker.micasnn  hash %016" PRIx64 "\n", opt.out.c_str(), summary.params_hash);
  } else if (ev->parsed()) {
    std::vector<const char*> specs;
    for (const auto& a : opt.ablations) specs.push_back(a.c_str());
    if (micas_status st = micas_eval(cfg.get(), opt.out.c_str(), specs.data(), specs.size()); st != MICAS_OK)
      return report_failure(st, "eval");
    std::printf("report written to %s/report.json and %s/report.csv\n", opt.out.c_str(), opt.out.c_str());
  }
  return 0;
}
