#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "micas/micas_c.h"

namespace fs = std::filesystem;

namespace {

micas_config* tiny_config() {
  micas_config* cfg = nullptr;
  REQUIRE(micas_config_create("desk", &cfg) == MICAS_OK);
  const char* kv[][2] = {{"points", "32"}, {"centers", "4"}, {"patch_size", "4"}, {"candidates", "4"},
                         {"d1", "8"}, {"d2", "8"}, {"hidden", "8"}, {"sampler_epochs", "2"},
                         {"ranker_epochs", "2"}, {"train_per_level", "1"}, {"test_per_level", "1"},
                         {"bank_per_task", "5"}, {"levels", "1,2"}, {"seed", "5"}};
  for (auto& p : kv) REQUIRE(micas_config_set(cfg, p[0], p[1]) == MICAS_OK);
  return cfg;
}

void count_epochs(void* user, const micas_epoch* e) {
  auto* n = static_cast<int*>(user);
  ++*n;
  CHECK(std::isfinite(e->loss));
}

}  // namespace

TEST_CASE("status names, version and errors") {
  CHECK(std::string(micas_status_name(MICAS_OK)) == "ok");
  CHECK(std::string(micas_status_name(MICAS_ERR_CONFIG)) != "ok");
  CHECK(std::strlen(micas_version()) > 0);

  micas_config* cfg = nullptr;
  CHECK(micas_config_create("laptop", &cfg) == MICAS_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::strlen(micas_last_error()) > 0);
  CHECK(micas_config_create("desk", nullptr) == MICAS_ERR_INVALID_ARGUMENT);
  CHECK(micas_config_create("desk", &cfg) == MICAS_OK);
  CHECK(std::string(micas_last_error()).empty());
  CHECK(micas_config_set(cfg, "points", "lots") == MICAS_ERR_CONFIG);
  CHECK(micas_config_set(cfg, "centers", "9999") == MICAS_OK);
  CHECK(micas_config_validate(cfg) == MICAS_ERR_CONFIG);
  micas_config_destroy(cfg);
  micas_config_destroy(nullptr);
}

TEST_CASE("config buffers report their full length") {
  micas_config* cfg = nullptr;
  REQUIRE(micas_config_create("paper", &cfg) == MICAS_OK);
  size_t needed = 0;
  char small[3];
  CHECK(micas_config_get(cfg, "points", small, sizeof small, &needed) == MICAS_OK);
  CHECK(needed == 4);
  CHECK(std::string(small) == "10");
  char big[16];
  CHECK(micas_config_get(cfg, "points", big, sizeof big, &needed) == MICAS_OK);
  CHECK(std::string(big) == "1024");
  CHECK(micas_config_serialize(cfg, nullptr, 0, &needed) == MICAS_OK);
  std::string text(needed + 1, '\0');
  CHECK(micas_config_serialize(cfg, text.data(), text.size(), &needed) == MICAS_OK);
  CHECK(text.find("profile = paper") != std::string::npos);

  uint64_t h1 = 0, h2 = 0;
  micas_config_hash(cfg, &h1);
  CHECK(micas_config_set(cfg, "seed", "9") == MICAS_OK);
  micas_config_hash(cfg, &h2);
  CHECK(h1 != h2);
  micas_config_destroy(cfg);
}

TEST_CASE("clouds, chamfer and fps") {
  const double a[] = {0, 0, 0, 2, 0, 0};
  const double b[] = {1, 0, 0};
  micas_cloud *ca = nullptr, *cb = nullptr;
  REQUIRE(micas_cloud_create(a, 2, &ca) == MICAS_OK);
  REQUIRE(micas_cloud_create(b, 1, &cb) == MICAS_OK);
  double cd = 0.0;
  CHECK(micas_chamfer(ca, cb, &cd) == MICAS_OK);
  CHECK(cd == 2.0);
  size_t idx[2] = {9, 9};
  CHECK(micas_fps(ca, 2, idx) == MICAS_OK);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 1);
  CHECK(micas_fps(ca, 3, idx) == MICAS_ERR_DOMAIN);

  const fs::path dir = fs::temp_directory_path() / "micas_c_api_cloud";
  fs::create_directories(dir);
  CHECK(micas_cloud_save(ca, (dir / "a.micaspc").c_str()) == MICAS_OK);
  micas_cloud* back = nullptr;
  REQUIRE(micas_cloud_load((dir / "a.micaspc").c_str(), &back) == MICAS_OK);
  size_t n = 0;
  micas_cloud_size(back, &n);
  CHECK(n == 2);
  std::vector<double> pts(6);
  CHECK(micas_cloud_points(back, pts.data(), pts.size()) == MICAS_OK);
  CHECK(pts[3] == 2.0);
  CHECK(micas_cloud_points(back, pts.data(), 5) == MICAS_ERR_INVALID_ARGUMENT);
  CHECK(micas_cloud_load((dir / "missing.micaspc").c_str(), &back) == MICAS_ERR_IO);
  fs::remove_all(dir);

  const double bad[] = {0, 0, NAN};
  micas_cloud* cbad = nullptr;
  CHECK(micas_cloud_create(bad, 1, &cbad) == MICAS_ERR_DOMAIN);
  CHECK(micas_cloud_create(a, 0, &cbad) == MICAS_ERR_DOMAIN);
  micas_cloud_destroy(ca);
  micas_cloud_destroy(cb);
  micas_cloud_destroy(back);
}

TEST_CASE("pipeline through the C interface") {
  const fs::path dir = fs::temp_directory_path() / "micas_c_api_run";
  fs::remove_all(dir);
  micas_config* cfg = tiny_config();
  const std::string run = dir.string();

  CHECK(micas_gen_data(cfg, run.c_str()) == MICAS_OK);
  micas_ranker_summary summary{};
  CHECK(micas_train_ranker(cfg, run.c_str(), nullptr, nullptr, &summary) == MICAS_ERR_CONFIG);

  int epochs = 0;
  uint64_t sampler_hash = 0;
  CHECK(micas_train_sampler(cfg, run.c_str(), count_epochs, &epochs, &sampler_hash) == MICAS_OK);
  CHECK(epochs == 2);
  uint64_t on_disk = 0;
  CHECK(micas_params_file_hash((dir / "sampler.micasnn").c_str(), &on_disk) == MICAS_OK);
  CHECK(on_disk == sampler_hash);

  epochs = 0;
  CHECK(micas_train_ranker(cfg, run.c_str(), count_epochs, &epochs, &summary) == MICAS_OK);
  CHECK(epochs == 2);
  CHECK(summary.sampler_hash_before == sampler_hash);
  CHECK(summary.sampler_hash_after == sampler_hash);

  const char* ablations[] = {"all"};
  CHECK(micas_eval(cfg, run.c_str(), ablations, 1) == MICAS_OK);
  const char* wrong[] = {"fps,best"};
  CHECK(micas_eval(cfg, run.c_str(), wrong, 1) == MICAS_ERR_CONFIG);
  size_t needed = 0;
  CHECK(micas_report(run.c_str(), nullptr, 0, &needed) == MICAS_OK);
  std::string text(needed + 1, '\0');
  CHECK(micas_report(run.c_str(), text.data(), text.size(), &needed) == MICAS_OK);
  CHECK(text.find("registration") != std::string::npos);

  micas_config_destroy(cfg);
  fs::remove_all(dir);
}
