#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "micas/autodiff.hpp"
#include "micas/random.hpp"

namespace micas::ad {

/// Shared per-row affine stack: widths = {d_in, h1, ..., d_out}. The
/// activation follows every layer except (unless activate_last) the final one.
struct MlpSpec {
  std::string prefix;
  std::vector<Index> widths;
  Activation activation = Activation::Relu;
  bool activate_last = false;

  std::size_t layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;
};

/// Registers the layer parameters with a uniform +-sqrt(6 / fan_in) draw and
/// zero biases.
void init_mlp(ParamStore& params, const MlpSpec& spec, Rng& rng);

Var forward_mlp(Tape& tape, ParamStore& params, const MlpSpec& spec, Var input);

/// Standalone form: records a fresh tape for `input`.
std::pair<Matrix, std::unique_ptr<Tape>> forward_mlp(ParamStore& params,
                                                     const MlpSpec& spec,
                                                     const Matrix& input);

/// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / (total_steps - 1))) / 2
double cosine_lr(Index step, Index total_steps, double lr0, double lr_min);

/// Plain SGD with the cosine-annealed rate; clears gradients. Returns the rate.
double sgd_cosine_step(ParamStore& params, Index step, Index total_steps,
                       double lr0, double lr_min);

enum class OptimizerKind { Sgd, Adam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// Stateful update rule driven by the cosine schedule. Adam uses
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8 with bias correction; Sgd is
/// exactly sgd_cosine_step. Every step clears the gradients.
class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind) : kind_(kind) {}

  /// Applies one update at the rate of schedule position `step`; returns it.
  double step(ParamStore& params, Index step, Index total_steps, double lr0, double lr_min);

  OptimizerKind kind() const { return kind_; }
  long updates() const { return updates_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  OptimizerKind kind_;
  long updates_ = 0;
  std::map<std::string, Moments, std::less<>> moments_;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossFn = std::function<Var(Tape&, ParamStore&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares backward() against central differences over every scalar.
/// Throws a contract error if two evaluations at the same point disagree.
GradCheckResult finite_diff_check(const LossFn& loss_fn, ParamStore& params,
                                  double epsilon = 1e-6);

// MICASNN1 checkpoints: magic then, until EOF, per entry: u32 name length,
// name bytes, u32 rank, rank x u64 dims, row-major f64 payload.
void write_params(std::ostream& os, const ParamStore& params);
ParamStore read_params(std::istream& is);
void save_params(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_params(const std::filesystem::path& path);

}  // namespace micas::ad
