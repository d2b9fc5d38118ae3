#include "micas/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "micas/binary_io.hpp"
#include "micas/error.hpp"

namespace micas::ad {

std::string MlpSpec::weight_name(std::size_t layer) const {
  return prefix + ".w" + std::to_string(layer);
}

std::string MlpSpec::bias_name(std::size_t layer) const {
  return prefix + ".b" + std::to_string(layer);
}

void init_mlp(ParamStore& params, const MlpSpec& spec, Rng& rng) {
  require(spec.widths.size() >= 2, ErrorKind::Domain, "mlp needs at least one layer");
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const Index fan_in = spec.widths[l];
    const Index fan_out = spec.widths[l + 1];
    require(fan_in >= 1 && fan_out >= 1, ErrorKind::Domain, "mlp widths must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix w(fan_in, fan_out);
    for (Index r = 0; r < fan_in; ++r)
      for (Index c = 0; c < fan_out; ++c) w(r, c) = uniform(rng, -bound, bound);
    params.add(spec.weight_name(l), std::move(w));
    params.add(spec.bias_name(l), Matrix::Zero(1, fan_out));
  }
}

Var forward_mlp(Tape& tape, ParamStore& params, const MlpSpec& spec, Var input) {
  require(!spec.widths.empty() && input.cols() == spec.widths.front(), ErrorKind::Domain,
          "mlp input width mismatch");
  Var x = input;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    Var w = tape.param(params, spec.weight_name(l));
    Var b = tape.param(params, spec.bias_name(l));
    require(w.rows() == x.cols() && w.cols() == spec.widths[l + 1], ErrorKind::Domain,
            "mlp weight shape does not match layer spec");
    x = add_row(matmul(x, w), b);
    if (l + 1 < spec.layers() || spec.activate_last) x = activate(x, spec.activation);
  }
  return x;
}

std::pair<Matrix, std::unique_ptr<Tape>> forward_mlp(ParamStore& params, const MlpSpec& spec,
                                                     const Matrix& input) {
  auto tape = std::make_unique<Tape>();
  Var out = forward_mlp(*tape, params, spec, tape->constant(input));
  Matrix value = out.value();
  return {std::move(value), std::move(tape)};
}

double cosine_lr(Index step, Index total_steps, double lr0, double lr_min) {
  require(total_steps >= 2, ErrorKind::Domain, "cosine schedule needs at least two steps");
  require(step >= 0 && step < total_steps, ErrorKind::Domain, "step outside the schedule");
  require(lr_min > 0.0 && lr0 >= lr_min, ErrorKind::Domain, "learning rates must satisfy lr0 >= lr_min > 0");
  const double phase = std::numbers::pi * static_cast<double>(step) /
                       static_cast<double>(total_steps - 1);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

double sgd_cosine_step(ParamStore& params, Index step, Index total_steps, double lr0,
                       double lr_min) {
  const double lr = cosine_lr(step, total_steps, lr0, lr_min);
  for (auto& [name, e] : params) {
    e.value.noalias() -= lr * e.grad;
    e.grad.setZero();
  }
  require(params.all_finite(), ErrorKind::Numeric, "parameter became non-finite after update");
  return lr;
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  fail(ErrorKind::Configuration, "unknown optimizer: " + std::string(name));
}

double Optimizer::step(ParamStore& params, Index step, Index total_steps, double lr0, double lr_min) {
  ++updates_;
  if (kind_ == OptimizerKind::Sgd) return sgd_cosine_step(params, step, total_steps, lr0, lr_min);

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double lr = cosine_lr(step, total_steps, lr0, lr_min);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(updates_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(updates_));
  for (auto& [name, e] : params) {
    auto it = moments_.find(name);
    if (it == moments_.end())
      it = moments_.emplace(name, Moments{Matrix::Zero(e.value.rows(), e.value.cols()),
                                          Matrix::Zero(e.value.rows(), e.value.cols())}).first;
    Moments& mo = it->second;
    if (mo.m.rows() != e.value.rows() || mo.m.cols() != e.value.cols())
      fail(ErrorKind::Contract, "optimizer state shape changed for " + name);
    mo.m = beta1 * mo.m + (1.0 - beta1) * e.grad;
    mo.v = beta2 * mo.v + (1.0 - beta2) * e.grad.cwiseProduct(e.grad);
    e.value.array() -= lr * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + eps);
    e.grad.setZero();
  }
  require(params.all_finite(), ErrorKind::Numeric, "parameter became non-finite after update");
  return lr;
}

GradCheckResult finite_diff_check(const LossFn& loss_fn, ParamStore& params, double epsilon) {
  require(epsilon > 0.0, ErrorKind::Domain, "epsilon must be positive");

  auto evaluate = [&]() {
    Tape t;
    return loss_fn(t, params).scalar();
  };

  params.zero_grad();
  double base = 0.0;
  {
    Tape t;
    Var loss = loss_fn(t, params);
    base = loss.scalar();
    t.backward(loss);
  }
  const double again = evaluate();
  require(std::memcmp(&base, &again, sizeof base) == 0, ErrorKind::Contract,
          "loss function is not deterministic under frozen inputs");

  GradCheckResult result;
  for (auto& [name, e] : params) {
    const Matrix analytic = e.grad;
    for (Index k = 0; k < e.value.size(); ++k) {
      double& v = e.value.data()[k];
      const double saved = v;
      v = saved + epsilon;
      const double up = evaluate();
      v = saved - epsilon;
      const double down = evaluate();
      v = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic.data()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_error) {
        result = {rel, name, k, a, numeric};
      }
    }
  }
  params.zero_grad();
  return result;
}

namespace {
constexpr std::string_view kParamMagic = "MICASNN1";
}

void write_params(std::ostream& os, const ParamStore& params) {
  binary::put_magic(os, kParamMagic);
  for (const auto& [name, e] : params) {
    binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binary::put<std::uint32_t>(os, 2);
    binary::put<std::uint64_t>(os, static_cast<std::uint64_t>(e.value.rows()));
    binary::put<std::uint64_t>(os, static_cast<std::uint64_t>(e.value.cols()));
    for (Index r = 0; r < e.value.rows(); ++r)
      for (Index c = 0; c < e.value.cols(); ++c) binary::put<double>(os, e.value(r, c));
  }
}

ParamStore read_params(std::istream& is) {
  binary::expect_magic(is, kParamMagic);
  ParamStore params;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = binary::get<std::uint32_t>(is);
    if (len == 0 || len > 4096) fail(ErrorKind::Format, "bad parameter name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) fail(ErrorKind::Format, "unexpected end of file");
    const auto rank = binary::get<std::uint32_t>(is);
    if (rank < 1 || rank > 2) fail(ErrorKind::Format, "unsupported parameter rank");
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t d = 0; d < rank; ++d) dims[d] = binary::get<std::uint64_t>(is);
    // rank-1 entries load as a single row
    const auto rows = static_cast<Index>(rank == 1 ? 1 : dims[0]);
    const auto cols = static_cast<Index>(rank == 1 ? dims[0] : dims[1]);
    if (rows > (1 << 24) || cols > (1 << 24)) fail(ErrorKind::Format, "parameter too large");
    Matrix value(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) value(r, c) = binary::get<double>(is);
    if (params.contains(name)) fail(ErrorKind::Format, "duplicate parameter " + name);
    params.add(name, std::move(value));
  }
  return params;
}

void save_params(const std::filesystem::path& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  write_params(os, params);
  if (!os) fail(ErrorKind::Io, "write failed: " + path.string());
}

ParamStore load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open for reading: " + path.string());
  return read_params(is);
}

}  // namespace micas::ad
