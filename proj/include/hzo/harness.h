#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hzo/analysis.h"
#include "hzo/csv.h"
#include "hzo/data.h"
#include "hzo/errors.h"
#include "hzo/hzo.h"
#include "hzo/ledger.h"
#include "hzo/network.h"
#include "hzo/oracle.h"

namespace hzo {

enum class Engine { Hzo, ZoAct, ZoWeight, ZoRand, Bp };
enum class Arch { Plain, Residual, Conv };
enum class OptimizerKind { Sgd, Adam };

std::string to_string(Engine e);
std::string to_string(Arch a);
std::string to_string(OptimizerKind o);
Engine parse_engine(const std::string& name);
Arch parse_arch(const std::string& name);
OptimizerKind parse_optimizer(const std::string& name);

/// Invalid run configuration. `field()` names the offending setting.
class UsageError : public InputError {
 public:
  UsageError(const std::string& field, const std::string& what)
      : InputError(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  Arch arch = Arch::Residual;
  /// Layer count for MLPs; convolution count for the conv arch.
  std::size_t depth = 8;
  /// Hidden width M for MLPs; channel count for the conv arch.
  std::size_t width = 16;
  /// 0 picks the natural value (width, or the dataset's feature width).
  std::size_t input_width = 0;
  /// 0 picks the natural value (width, or the dataset's class count).
  /// For the conv arch, 0 means no dense head.
  std::size_t output_width = 0;
  Activation activation = Activation::GELU;
  Activation head_activation = Activation::Identity;
  /// Unset: mse for the probe commands, ce for training.
  std::optional<LossKind> loss;
  Engine engine = Engine::Hzo;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double eta = 1e-2;
  /// 0 picks default_epsilon(precision).
  double epsilon = 0.0;
  Precision precision = Precision::Double;
  std::uint64_t seed = 1;
  std::size_t steps = 500;
  std::size_t batch = 32;
  /// "two-moons", "spirals" or "idx:IMAGES,LABELS".
  std::string dataset = "two-moons";
  std::size_t samples = 200;
  double noise = 0.1;
  std::filesystem::path out = "out";
  unsigned threads = 1;

  double weight_scale = 1.0;
  double residual_scale = 0.5;
  bool orthogonal = false;
  /// Direction count q of the zo-rand engine.
  std::size_t directions = 64;
  UpdateRule update_rule = UpdateRule::ExactLocal;
  bool spatial_parallel = false;
  /// Training: compare against the oracle every N steps (0 = never).
  std::size_t probe_every = 0;

  /// Conv arch feature map is image x image, kernel x kernel filters.
  std::size_t image = 8;
  std::size_t kernel = 3;

  double effective_epsilon() const;
  LossKind effective_loss(LossKind fallback) const;
  /// Throws UsageError naming the first invalid field.
  void validate() const;
};

/// Seeded network for `cfg`, stored under cfg.precision.
Network build_network(const RunConfig& cfg, std::size_t input_width, std::size_t output_width,
                      Rng& rng);

struct EngineResult {
  double loss = 0.0;
  GradientBundle gradients;
  QueryLedger ledger;
};

/// Gradient of one sample by the selected engine. `rng` feeds zo-rand.
EngineResult run_engine(Engine engine, const Network& net, const Tensor& input, const Label& label,
                        LossKind loss, const RunConfig& cfg, Rng& rng);

/// Mean of run_engine over the listed samples; ledgers are summed.
EngineResult run_engine_batch(Engine engine, const Network& net, const Dataset& data,
                              std::span<const std::size_t> indices, LossKind loss,
                              const RunConfig& cfg, Rng& rng);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First-order optimizer with its own state; engines only supply gradients.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, AdamParams adam = {});

  /// In-place update of a flat parameter vector.
  void step(std::span<double> params, std::span<const double> grads);
  /// Updates every parameter of `net` (bundle order) and rounds it to the
  /// network's precision.
  void step(Network& net, const GradientBundle& grads);

  std::size_t steps_taken() const noexcept { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamParams adam_;
  std::size_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// Index of the largest output.
std::size_t predict(const Network& net, const Tensor& input);
/// Fraction of samples whose class label equals the prediction.
double accuracy(const Network& net, const Dataset& data);
double mean_loss(const Network& net, const Dataset& data, LossKind loss);

/// Parses cfg.dataset.
Dataset load_dataset(const RunConfig& cfg, Rng& rng);

// ---- gradcheck ----

struct GradCheckResult {
  GradCheckReport report;
  QueryLedger ledger;
  double loss = 0.0;
  double oracle_loss = 0.0;
};

GradCheckResult cmd_gradcheck(const RunConfig& cfg);
CsvTable gradcheck_csv(const GradCheckResult& result);

// ---- bench ----

struct BenchRow {
  Engine engine = Engine::Hzo;
  std::size_t depth = 0;
  std::size_t width = 0;
  std::uint64_t layer_evals = 0;
  std::uint64_t span_forwards = 0;
  std::uint64_t jacobian_evals = 0;
  std::optional<std::uint64_t> predicted;
  std::vector<std::uint64_t> per_level;
  double wall_ms = 0.0;
};

std::vector<BenchRow> cmd_bench(const RunConfig& cfg, std::span<const std::size_t> depths,
                                std::span<const Engine> engines);
/// Counts only; deterministic.
CsvTable bench_csv(const std::vector<BenchRow>& rows);
/// Wall-clock sidecar.
CsvTable bench_timing_csv(const std::vector<BenchRow>& rows);

// ---- train ----

struct TrainRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> rho;
  std::uint64_t layer_evals = 0;
};

struct TrainResult {
  std::vector<TrainRecord> log;
  /// Final parameters, or the last finite ones if training diverged.
  Network network;
  bool diverged = false;
};

TrainResult cmd_train(const RunConfig& cfg);
CsvTable train_csv(const TrainResult& result);

// ---- errorscan ----

struct ErrorScanRow {
  double scale = 1.0;
  Activation activation = Activation::Tanh;
  std::size_t depth = 0;
  std::uint64_t seed = 0;
  double error_norm = 0.0;
  double oracle_norm = 0.0;
  double rho = 0.0;
  double envelope = 0.0;
};

struct ErrorScanFit {
  double scale = 1.0;
  /// OLS slope of log(mean error) against log(depth).
  double loglog_slope = 0.0;
  bool strictly_increasing = false;
  /// Ratio of successive mean errors per depth doubling.
  std::vector<double> doubling_ratios;
  /// Seeds on which the envelope with lip = scale fits better than with the other scale.
  std::size_t matched_wins = 0;
  std::size_t seeds = 0;
};

struct ErrorScanResult {
  std::vector<ErrorScanRow> rows;
  std::vector<ErrorScanFit> fits;
  /// Largest relative error of the affine (identity-activation) rows.
  double affine_max_relative_error = 0.0;
};

/// Tanh networks with orthogonal weights scaled by each c, plus an affine
/// control, at every depth, over `seeds` consecutive seeds from cfg.seed.
ErrorScanResult cmd_errorscan(const RunConfig& cfg, std::span<const double> scales,
                              std::span<const std::size_t> depths, std::size_t seeds);
CsvTable errorscan_csv(const ErrorScanResult& result);
CsvTable errorscan_fit_csv(const ErrorScanResult& result);

// ---- ablate ----

struct AblateRow {
  Activation activation = Activation::GELU;
  Precision precision = Precision::Double;
  std::size_t depth = 0;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  double rho = 0.0;
};

struct AblateCell {
  Activation activation = Activation::GELU;
  Precision precision = Precision::Double;
  std::size_t depth = 0;
  double mean_rho = 0.0;
  double min_rho = 0.0;
  std::size_t seeds = 0;
};

struct AblateResult {
  std::vector<AblateRow> rows;
  std::vector<AblateCell> cells;
};

/// HZO fidelity over activation x precision x depth, `seeds` paired seeds per cell.
/// A cfg.epsilon of 0 uses each precision's default.
AblateResult cmd_ablate(const RunConfig& cfg, std::span<const Activation> acts,
                        std::span<const Precision> precisions,
                        std::span<const std::size_t> depths, std::size_t seeds);
CsvTable ablate_csv(const AblateResult& result);
CsvTable ablate_summary_csv(const AblateResult& result);

// ---- sppcheck ----

struct SppRow {
  std::uint64_t seed = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t receptive_field = 0;
  std::size_t separation = 0;
  bool control = false;
  double max_discrepancy = 0.0;
  std::uint64_t sequential_evals = 0;
  std::uint64_t spp_evals = 0;
  double reduction = 0.0;
};

/// Conv stack of cfg.depth layers on an image x image map with cfg.width
/// channels. Compares batched and sequential target propagation across the
/// whole stack, with the correct separation R and (if R > 1) a control at R-1.
std::vector<SppRow> cmd_sppcheck(const RunConfig& cfg, std::size_t seeds);
CsvTable sppcheck_csv(const std::vector<SppRow>& rows);

}  // namespace hzo
