#include "micas/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "micas/error.hpp"

namespace micas {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    fail(ErrorKind::Configuration, "config key '" + std::string(key) + "': not a number: " + std::string(v));
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    fail(ErrorKind::Configuration, "config key '" + std::string(key) + "': not an integer: " + std::string(v));
  return out;
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is{std::string(v)};
  while (std::getline(is, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
Field index_field(T RunConfig::*member) {
  return {[member](const RunConfig& c) { return std::to_string(c.*member); },
          [member](RunConfig& c, std::string_view v) { c.*member = parse_int<T>("", v); }};
}

Field double_field(double RunConfig::*member) {
  return {[member](const RunConfig& c) { return format_double(c.*member); },
          [member](RunConfig& c, std::string_view v) { c.*member = parse_double("", v); }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> t;
    t["profile"] = {[](const RunConfig& c) { return c.profile; },
                    [](RunConfig& c, std::string_view v) { c.profile = std::string(v); }};
    t["points"] = index_field(&RunConfig::points);
    t["centers"] = index_field(&RunConfig::centers);
    t["patch_size"] = index_field(&RunConfig::patch_size);
    t["candidates"] = index_field(&RunConfig::candidates);
    t["mask_ratio"] = double_field(&RunConfig::mask_ratio);
    t["d1"] = index_field(&RunConfig::d1);
    t["d2"] = index_field(&RunConfig::d2);
    t["hidden"] = index_field(&RunConfig::hidden);
    t["optimizer"] = {[](const RunConfig& c) { return std::string(ad::optimizer_name(c.optimizer)); },
                      [](RunConfig& c, std::string_view v) { c.optimizer = ad::parse_optimizer(v); }};
    t["alpha"] = double_field(&RunConfig::alpha);
    t["tau_start"] = double_field(&RunConfig::tau_start);
    t["tau_end"] = double_field(&RunConfig::tau_end);
    t["tau_infer"] = double_field(&RunConfig::tau_infer);
    t["sampler_lr0"] = double_field(&RunConfig::sampler_lr0);
    t["sampler_lr_min"] = double_field(&RunConfig::sampler_lr_min);
    t["sampler_epochs"] = index_field(&RunConfig::sampler_epochs);
    t["sampler_batch"] = index_field(&RunConfig::sampler_batch);
    t["ranker_lr0"] = double_field(&RunConfig::ranker_lr0);
    t["ranker_lr_min"] = double_field(&RunConfig::ranker_lr_min);
    t["ranker_epochs"] = index_field(&RunConfig::ranker_epochs);
    t["ranker_batch"] = index_field(&RunConfig::ranker_batch);
    t["seed"] = index_field(&RunConfig::seed);
    t["train_per_level"] = index_field(&RunConfig::train_per_level);
    t["test_per_level"] = index_field(&RunConfig::test_per_level);
    t["bank_per_task"] = index_field(&RunConfig::bank_per_task);
    t["tasks"] = {[](const RunConfig& c) {
                    std::string s;
                    for (auto task : c.tasks) s += (s.empty() ? "" : ",") + std::string(task_name(task));
                    return s;
                  },
                  [](RunConfig& c, std::string_view v) {
                    c.tasks.clear();
                    for (const auto& name : split_list(v)) c.tasks.push_back(parse_task(name));
                  }};
    t["levels"] = {[](const RunConfig& c) {
                     std::string s;
                     for (int l : c.levels) s += (s.empty() ? "" : ",") + std::to_string(l);
                     return s;
                   },
                   [](RunConfig& c, std::string_view v) {
                     c.levels.clear();
                     for (const auto& item : split_list(v)) c.levels.push_back(parse_int<int>("levels", item));
                   }};
    return t;
  }();
  return table;
}

}  // namespace

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::paper() {
  RunConfig c;
  c.profile = "paper";
  c.points = 1024;
  c.centers = 64;
  c.patch_size = 32;
  c.candidates = 8;
  c.alpha = 0.5;
  c.sampler_lr0 = 1e-4;
  c.sampler_lr_min = 1e-6;
  c.sampler_epochs = 60;
  c.sampler_batch = 72;
  c.ranker_lr0 = 1e-5;
  c.ranker_lr_min = 1e-6;
  c.ranker_epochs = 30;
  c.ranker_batch = 9;
  c.train_per_level = 64;
  c.test_per_level = 16;
  c.bank_per_task = 64;
  return c;
}

RunConfig RunConfig::for_profile(std::string_view profile) {
  if (profile == "desk") return desk();
  if (profile == "paper") return paper();
  fail(ErrorKind::Configuration, "unknown profile: " + std::string(profile));
}

RunConfig RunConfig::parse(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Configuration, "config line " + std::to_string(line_no) + ": expected key = value");
    entries.emplace_back(trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }

  std::string profile = "desk";
  for (const auto& [k, v] : entries)
    if (k == "profile") profile = v;
  RunConfig cfg = for_profile(profile);
  for (const auto& [k, v] : entries) cfg.set(k, v);
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open config: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) fail(ErrorKind::Configuration, "unknown config key: " + std::string(key));
  try {
    it->second.set(*this, trim(value));
  } catch (const Error& e) {
    fail(ErrorKind::Configuration, "config key '" + std::string(key) + "': " + e.what());
  }
}

std::string RunConfig::get(std::string_view key) const {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) fail(ErrorKind::Configuration, "unknown config key: " + std::string(key));
  return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : fields()) out.push_back(k);
    return out;
  }();
  return names;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::Configuration, what);
  };
  need(profile == "desk" || profile == "paper", "profile must be desk or paper");
  need(points >= 8, "points must be at least 8");
  need(centers >= 1 && centers <= points, "centers must lie in [1, points]");
  need(patch_size >= 1 && patch_size <= points, "patch_size must lie in [1, points]");
  need(candidates >= 1, "candidates must be positive");
  need(mask_ratio >= 0.0 && mask_ratio <= 1.0, "mask_ratio must lie in [0, 1]");
  need(d1 >= 1 && d2 >= 1 && hidden >= 1, "network widths must be positive");
  need(alpha >= 0.0, "alpha must be nonnegative");
  need(tau_start > 0.0 && tau_end > 0.0 && tau_infer > 0.0, "temperatures must be positive");
  need(sampler_lr_min > 0.0 && sampler_lr0 >= sampler_lr_min, "sampler learning rates invalid");
  need(ranker_lr_min > 0.0 && ranker_lr0 >= ranker_lr_min, "ranker learning rates invalid");
  need(sampler_epochs >= 2 && ranker_epochs >= 2, "epoch counts must be at least 2");
  need(sampler_batch >= 1 && ranker_batch >= 1, "batch sizes must be positive");
  need(train_per_level >= 1 && test_per_level >= 1, "split sizes must be positive");
  need(bank_per_task >= candidates, "bank_per_task must hold at least `candidates` prompts");
  need(!tasks.empty() && !levels.empty(), "tasks and levels must be nonempty");
  for (int l : levels) need(l >= 1 && l <= kLevels, "levels must lie in 1..5");
}

SamplerConfig RunConfig::sampler() const {
  return {d1, d2, hidden, centers, ad::Activation::Relu};
}

SurrogateConfig RunConfig::surrogate() const { return {d1, hidden, patch_size}; }

RankerConfig RunConfig::ranker() const { return {hidden, ad::Activation::Relu}; }

std::string hash_hex(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace micas
