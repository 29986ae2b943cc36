#include "hzo/harness.h"

#include <algorithm>
#include <chrono>
#include <concepts>
#include <cmath>
#include <numeric>

#include "hzo/architectures.h"
#include "hzo/baselines.h"
#include "hzo/spp.h"

namespace hzo {
namespace {

std::string cell(double v) { return format_number(v); }
template <std::unsigned_integral T>
std::string cell(T v) {
  return format_number(static_cast<std::uint64_t>(v));
}
std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string join_counts(const std::vector<std::uint64_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    out += format_number(values[i]);
  }
  return out;
}

/// Seeded probe sample: Gaussian input and a target matching the loss.
struct Probe {
  Tensor input;
  Label label;
};

Probe make_probe(const Network& net, LossKind loss, Rng& rng) {
  const std::size_t in = net.width(0);
  const std::size_t out = net.width(net.depth());
  Probe p;
  p.input = round_through(gaussian({in}, 1.0, rng), net.policy());
  if (loss == LossKind::MSE) {
    p.label = gaussian({out}, 1.0, rng);
  } else {
    p.label = static_cast<std::size_t>(rng.below(out));
  }
  return p;
}

std::pair<std::size_t, std::size_t> mlp_widths(const RunConfig& cfg) {
  return {cfg.input_width ? cfg.input_width : cfg.width,
          cfg.output_width ? cfg.output_width : cfg.width};
}

double log_mean(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += std::log(v);
  return std::exp(s / static_cast<double>(values.size()));
}

}  // namespace

std::string to_string(Engine e) {
  switch (e) {
    case Engine::Hzo: return "hzo";
    case Engine::ZoAct: return "zo-act";
    case Engine::ZoWeight: return "zo-weight";
    case Engine::ZoRand: return "zo-rand";
    case Engine::Bp: return "bp";
  }
  return "?";
}

std::string to_string(Arch a) {
  switch (a) {
    case Arch::Plain: return "plain";
    case Arch::Residual: return "residual";
    case Arch::Conv: return "conv";
  }
  return "?";
}

std::string to_string(OptimizerKind o) { return o == OptimizerKind::Sgd ? "sgd" : "adam"; }

Engine parse_engine(const std::string& name) {
  for (Engine e : {Engine::Hzo, Engine::ZoAct, Engine::ZoWeight, Engine::ZoRand, Engine::Bp}) {
    if (to_string(e) == name) return e;
  }
  throw UsageError("engine", "unknown engine '" + name + "'");
}

Arch parse_arch(const std::string& name) {
  for (Arch a : {Arch::Plain, Arch::Residual, Arch::Conv}) {
    if (to_string(a) == name) return a;
  }
  throw UsageError("arch", "unknown architecture '" + name + "'");
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw UsageError("optimizer", "unknown optimizer '" + name + "'");
}

double RunConfig::effective_epsilon() const {
  return epsilon > 0.0 ? epsilon : default_epsilon(precision);
}

LossKind RunConfig::effective_loss(LossKind fallback) const { return loss.value_or(fallback); }

void RunConfig::validate() const {
  if (depth == 0) throw UsageError("depth", "must be at least 1");
  if (width == 0) throw UsageError("width", "must be at least 1");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw UsageError("eta", "must be finite and >= 0");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw UsageError("epsilon", "must be positive (0 selects the precision default)");
  }
  if (steps == 0) throw UsageError("steps", "must be at least 1");
  if (batch == 0) throw UsageError("batch", "must be at least 1");
  if (samples < 2) throw UsageError("samples", "must be at least 2");
  if (!(noise >= 0.0)) throw UsageError("noise", "must be >= 0");
  if (threads == 0) throw UsageError("threads", "must be at least 1");
  if (!(weight_scale > 0.0)) throw UsageError("weight-scale", "must be positive");
  if (!(residual_scale >= 0.0)) throw UsageError("residual-scale", "must be >= 0");
  if (directions == 0) throw UsageError("directions", "must be at least 1");
  if (image == 0) throw UsageError("image", "must be at least 1");
  if (kernel == 0 || kernel % 2 == 0) throw UsageError("kernel", "must be odd");
  if (spatial_parallel && arch != Arch::Conv) {
    throw UsageError("spatial-parallel", "requires --arch conv");
  }
  if (dataset != "two-moons" && dataset != "spirals" && dataset.rfind("idx:", 0) != 0) {
    throw UsageError("dataset", "expected two-moons, spirals or idx:IMAGES,LABELS");
  }
}

Network build_network(const RunConfig& cfg, std::size_t input_width, std::size_t output_width,
                      Rng& rng) {
  Network net;
  if (cfg.arch == Arch::Conv) {
    ConvSpec spec;
    spec.in_channels = 1;
    spec.channels = cfg.width;
    spec.height = cfg.image;
    spec.width = cfg.image;
    spec.kernel = cfg.kernel;
    spec.conv_layers = cfg.depth;
    spec.act = cfg.activation;
    spec.classes = output_width;
    spec.weight_scale = cfg.weight_scale;
    net = make_conv_net(spec, rng);
  } else {
    MlpSpec spec;
    spec.input_width = input_width;
    spec.width = cfg.width;
    spec.output_width = output_width;
    spec.depth = cfg.depth;
    spec.act = cfg.activation;
    spec.head_act = cfg.head_activation;
    spec.weight_scale = cfg.weight_scale;
    spec.residual_scale = cfg.residual_scale;
    spec.orthogonal = cfg.orthogonal;
    net = cfg.arch == Arch::Plain ? make_plain_mlp(spec, rng) : make_residual_mlp(spec, rng);
  }
  net.set_policy({cfg.precision});
  return net;
}

EngineResult run_engine(Engine engine, const Network& net, const Tensor& input, const Label& label,
                        LossKind loss, const RunConfig& cfg, Rng& rng) {
  const double eps = cfg.effective_epsilon();
  EngineResult r;
  switch (engine) {
    case Engine::Hzo: {
      HzoConfig hc;
      hc.epsilon = eps;
      hc.update_rule = cfg.update_rule;
      hc.policy = {cfg.precision};
      hc.threads = cfg.threads;
      hc.spatial_parallel = cfg.spatial_parallel;
      auto est = hzo_estimate_gradient(net, input, label, loss, hc);
      r.loss = est.loss;
      r.gradients = std::move(est.gradients);
      r.ledger = est.ledger;
      return r;
    }
    case Engine::ZoAct:
      r.gradients = zo_activation_gradient(net, input, label, loss, eps, &r.ledger, cfg.threads);
      break;
    case Engine::ZoWeight:
      r.gradients = zo_weight_gradient(net, input, label, loss,
                                       {BaselineKind::Type::WeightCoordinate, 1}, eps, rng,
                                       &r.ledger, cfg.threads);
      break;
    case Engine::ZoRand:
      r.gradients = zo_weight_gradient(
          net, input, label, loss, {BaselineKind::Type::WeightRandomDirections, cfg.directions},
          eps, rng, &r.ledger, cfg.threads);
      break;
    case Engine::Bp: {
      auto bp = backprop(net, input, label, loss, &r.ledger);
      r.loss = bp.loss;
      r.gradients = std::move(bp.gradients);
      return r;
    }
  }
  r.loss = loss_value(forward(net, net.full_span(), input), label, loss);
  return r;
}

EngineResult run_engine_batch(Engine engine, const Network& net, const Dataset& data,
                              std::span<const std::size_t> indices, LossKind loss,
                              const RunConfig& cfg, Rng& rng) {
  if (indices.empty()) throw InputError("empty batch");
  EngineResult total;
  total.gradients = GradientBundle::zeros_like(net);
  const double w = 1.0 / static_cast<double>(indices.size());
  for (std::size_t i : indices) {
    const auto one = run_engine(engine, net, data.inputs.at(i), data.labels.at(i), loss, cfg, rng);
    total.loss += w * one.loss;
    total.gradients.add_scaled(one.gradients, w);
    total.ledger.merge(one.ledger);
  }
  return total;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, AdamParams adam)
    : kind_(kind), lr_(learning_rate), adam_(adam) {
  if (!(learning_rate >= 0.0)) throw InputError("learning rate must be >= 0");
}

void Optimizer::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw DimensionError("parameter/gradient count mismatch");
  ++t_;
  if (kind_ == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grads[i];
    return;
  }
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  if (m_.size() != params.size()) throw DimensionError("parameter count changed between steps");
  const double c1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = adam_.beta1 * m_[i] + (1.0 - adam_.beta1) * grads[i];
    v_[i] = adam_.beta2 * v_[i] + (1.0 - adam_.beta2) * grads[i] * grads[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + adam_.epsilon);
  }
}

void Optimizer::step(Network& net, const GradientBundle& grads) {
  std::vector<double> flat;
  for (std::size_t l = 1; l <= net.depth(); ++l) {
    for (const Tensor* p : parameters(std::as_const(net).layer(l))) {
      flat.insert(flat.end(), p->values().begin(), p->values().end());
    }
  }
  const Tensor g = grads.flatten();
  step(flat, g.values());
  const PrecisionPolicy policy = net.policy();
  std::size_t pos = 0;
  for (std::size_t l = 1; l <= net.depth(); ++l) {
    for (Tensor* p : parameters(net.layer(l))) {
      for (double& v : p->values()) v = policy.round(flat[pos++]);
    }
  }
}

std::size_t predict(const Network& net, const Tensor& input) {
  const Tensor out = forward(net, net.full_span(), input);
  const auto v = out.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double accuracy(const Network& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto* c = std::get_if<std::size_t>(&data.labels[i]);
    if (c && predict(net, data.inputs[i]) == *c) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double mean_loss(const Network& net, const Dataset& data, LossKind loss) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    s += loss_value(forward(net, net.full_span(), data.inputs[i]), data.labels[i], loss);
  }
  return s / static_cast<double>(data.size());
}

Dataset load_dataset(const RunConfig& cfg, Rng& rng) {
  if (cfg.dataset == "two-moons") return make_two_moons(cfg.samples, cfg.noise, rng);
  if (cfg.dataset == "spirals") return make_spirals(cfg.samples, 1.5, cfg.noise, rng);
  if (cfg.dataset.rfind("idx:", 0) == 0) {
    const std::string paths = cfg.dataset.substr(4);
    const auto comma = paths.find(',');
    if (comma == std::string::npos) {
      throw UsageError("dataset", "idx datasets are given as idx:IMAGES,LABELS");
    }
    return load_idx(paths.substr(0, comma), paths.substr(comma + 1));
  }
  throw UsageError("dataset", "unknown dataset '" + cfg.dataset + "'");
}

// ---- gradcheck ----

GradCheckResult cmd_gradcheck(const RunConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto [in, out] = mlp_widths(cfg);
  Rng init = rng.split(1);
  const Network net =
      build_network(cfg, in, cfg.arch == Arch::Conv ? cfg.output_width : out, init);
  const LossKind loss = cfg.effective_loss(LossKind::MSE);
  Rng probe_rng = rng.split(2);
  const Probe probe = make_probe(net, loss, probe_rng);
  const auto oracle = backprop(net, probe.input, probe.label, loss);
  Rng engine_rng = rng.split(3);
  const auto est = run_engine(cfg.engine, net, probe.input, probe.label, loss, cfg, engine_rng);

  GradCheckResult r;
  r.report = make_report(est.gradients, oracle.gradients,
                         {to_string(cfg.engine), to_string(cfg.arch), to_string(cfg.activation),
                          cfg.depth, cfg.width, cfg.effective_epsilon(), cfg.precision, cfg.seed});
  r.ledger = est.ledger;
  r.loss = est.loss;
  r.oracle_loss = oracle.loss;
  return r;
}

CsvTable gradcheck_csv(const GradCheckResult& result) {
  const auto& rep = result.report;
  const auto& e = rep.echo;
  CsvTable t("gradcheck", {"engine", "arch", "activation", "depth", "width", "epsilon", "precision",
                           "seed", "scope", "rho", "oracle_norm", "error_norm", "layer_evals",
                           "jacobian_evals"});
  const auto prefix = [&]() {
    return std::vector<std::string>{e.engine,          e.arch,       e.activation,
                                    cell(e.depth),  cell(e.width), cell(e.epsilon),
                                    to_string(e.precision), cell(e.seed)};
  };
  const std::string evals = cell(result.ledger.layer_evals());
  const std::string jac = cell(result.ledger.jacobian_layer_evals());
  for (std::size_t l = 0; l < rep.layer_cosine.size(); ++l) {
    auto row = prefix();
    row.insert(row.end(), {"layer" + std::to_string(l + 1), cell(rep.layer_cosine[l]),
                           cell(rep.layer_oracle_norm[l]), cell(rep.layer_error_norm[l]), evals,
                           jac});
    t.add_row(std::move(row));
  }
  auto row = prefix();
  row.insert(row.end(), {"global", cell(rep.global_cosine), cell(rep.oracle_norm),
                         cell(rep.error_norm), evals, jac});
  t.add_row(std::move(row));
  return t;
}

// ---- bench ----

std::vector<BenchRow> cmd_bench(const RunConfig& cfg, std::span<const std::size_t> depths,
                                std::span<const Engine> engines) {
  cfg.validate();
  std::vector<BenchRow> rows;
  for (std::size_t depth : depths) {
    RunConfig c = cfg;
    c.depth = depth;
    c.validate();
    Rng rng(cfg.seed);
    Rng init = rng.split(1);
    const auto [in, out] = mlp_widths(c);
    const Network net = build_network(c, in, c.arch == Arch::Conv ? c.output_width : out, init);
    const LossKind loss = c.effective_loss(LossKind::MSE);
    Rng probe_rng = rng.split(2);
    const Probe probe = make_probe(net, loss, probe_rng);
    for (Engine engine : engines) {
      Rng engine_rng = rng.split(3);
      const auto start = std::chrono::steady_clock::now();
      const auto est = run_engine(engine, net, probe.input, probe.label, loss, c, engine_rng);
      const auto stop = std::chrono::steady_clock::now();
      BenchRow row;
      row.engine = engine;
      row.depth = depth;
      row.width = c.width;
      row.layer_evals = est.ledger.layer_evals();
      row.span_forwards = est.ledger.span_forwards();
      row.jacobian_evals = est.ledger.jacobian_layer_evals();
      if (engine == Engine::Hzo) row.predicted = predicted_queries(net.widths());
      for (const auto& [level, n] : est.ledger.per_level()) row.per_level.push_back(n);
      row.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

CsvTable bench_csv(const std::vector<BenchRow>& rows) {
  CsvTable t("bench", {"engine", "depth", "width", "layer_evals", "span_forwards", "jacobian_evals",
                       "predicted_queries", "per_level_jacobian"});
  for (const auto& r : rows) {
    t.add_row({to_string(r.engine), cell(r.depth), cell(r.width), cell(r.layer_evals),
               cell(r.span_forwards), cell(r.jacobian_evals),
               r.predicted ? cell(*r.predicted) : std::string(), join_counts(r.per_level)});
  }
  return t;
}

CsvTable bench_timing_csv(const std::vector<BenchRow>& rows) {
  CsvTable t("bench-timing", {"engine", "depth", "width", "wall_ms"});
  for (const auto& r : rows) {
    t.add_row({to_string(r.engine), cell(r.depth), cell(r.width), cell(r.wall_ms)});
  }
  return t;
}

// ---- train ----

TrainResult cmd_train(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.arch == Arch::Conv) throw UsageError("arch", "training supports plain and residual MLPs");
  Rng rng(cfg.seed);
  Rng data_rng = rng.split(1);
  const Dataset data = load_dataset(cfg, data_rng);
  data.validate();
  if (data.class_count < 2) throw UsageError("dataset", "needs at least two classes");
  Rng init = rng.split(2);
  TrainResult result;
  result.network = build_network(cfg, data.feature_width, data.class_count, init);
  Network& net = result.network;
  const LossKind loss = cfg.effective_loss(LossKind::SoftmaxCrossEntropy);
  Rng batch_rng = rng.split(3);
  Rng engine_rng = rng.split(4);
  Optimizer opt(cfg.optimizer, cfg.eta);
  std::uint64_t evals = 0;
  std::vector<std::size_t> batch(std::min(cfg.batch, data.size()));

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    if (batch.size() == data.size()) {
      std::iota(batch.begin(), batch.end(), std::size_t{0});
    } else {
      for (auto& i : batch) i = static_cast<std::size_t>(batch_rng.below(data.size()));
    }
    const auto est = run_engine_batch(cfg.engine, net, data, batch, loss, cfg, engine_rng);
    evals += est.ledger.layer_evals();
    TrainRecord rec;
    rec.step = step;
    if (cfg.probe_every && step % cfg.probe_every == 0) {
      Rng unused(0);
      const auto bp = run_engine_batch(Engine::Bp, net, data, batch, loss, cfg, unused);
      rec.rho = cosine_similarity(est.gradients, bp.gradients).value;
    }
    if (!std::isfinite(est.loss) || !est.gradients.flatten().all_finite()) {
      result.diverged = true;
      break;
    }
    Network before = net;
    opt.step(net, est.gradients);
    rec.loss = mean_loss(net, data, loss);
    if (!std::isfinite(rec.loss)) {
      net = std::move(before);
      result.diverged = true;
      break;
    }
    rec.train_accuracy = accuracy(net, data);
    rec.layer_evals = evals;
    result.log.push_back(rec);
  }
  return result;
}

CsvTable train_csv(const TrainResult& result) {
  CsvTable t("train", {"step", "loss", "train_accuracy", "val_accuracy", "rho", "layer_evals"});
  for (const auto& r : result.log) {
    t.add_row({cell(r.step), cell(r.loss), cell(r.train_accuracy), "", cell(r.rho),
               cell(r.layer_evals)});
  }
  return t;
}

// ---- errorscan ----

ErrorScanResult cmd_errorscan(const RunConfig& cfg, std::span<const double> scales,
                              std::span<const std::size_t> depths, std::size_t seeds) {
  cfg.validate();
  if (scales.empty() || depths.empty() || seeds == 0) {
    throw UsageError("errorscan", "needs at least one scale, depth and seed");
  }
  const double eps = cfg.epsilon > 0.0 ? cfg.epsilon : 1e-2;
  const double beta = *curvature_bound(Activation::Tanh);
  ErrorScanResult result;

  const auto run_one = [&](Activation act, double c, std::size_t depth, std::uint64_t seed) {
    RunConfig rc = cfg;
    rc.arch = Arch::Plain;
    rc.activation = act;
    rc.head_activation = act;
    rc.orthogonal = true;
    rc.weight_scale = c;
    rc.depth = depth;
    rc.epsilon = eps;
    rc.engine = Engine::Hzo;
    rc.seed = seed;
    rc.input_width = rc.output_width = 0;
    return cmd_gradcheck(rc);
  };

  for (double c : scales) {
    for (std::size_t depth : depths) {
      for (std::size_t s = 0; s < seeds; ++s) {
        const auto g = run_one(Activation::Tanh, c, depth, cfg.seed + s);
        ErrorScanRow row;
        row.scale = c;
        row.activation = Activation::Tanh;
        row.depth = depth;
        row.seed = cfg.seed + s;
        row.error_norm = g.report.error_norm;
        row.oracle_norm = g.report.oracle_norm;
        row.rho = g.report.global_cosine;
        row.envelope = error_envelope(c, beta, eps, depth);
        result.rows.push_back(row);
      }
    }
  }
  for (std::size_t depth : depths) {
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto g = run_one(Activation::Identity, 1.0, depth, cfg.seed + s);
      ErrorScanRow row;
      row.scale = 1.0;
      row.activation = Activation::Identity;
      row.depth = depth;
      row.seed = cfg.seed + s;
      row.error_norm = g.report.error_norm;
      row.oracle_norm = g.report.oracle_norm;
      row.rho = g.report.global_cosine;
      row.envelope = 0.0;
      result.rows.push_back(row);
      result.affine_max_relative_error =
          std::max(result.affine_max_relative_error, row.error_norm / row.oracle_norm);
    }
  }

  std::vector<double> xs(depths.begin(), depths.end());
  const auto errors_of = [&](double c, std::uint64_t seed) {
    std::vector<double> e;
    for (const auto& r : result.rows) {
      if (r.activation == Activation::Tanh && r.scale == c && r.seed == seed) {
        e.push_back(r.error_norm);
      }
    }
    return e;
  };
  for (double c : scales) {
    ErrorScanFit fit;
    fit.scale = c;
    fit.seeds = seeds;
    std::vector<double> means;
    for (std::size_t depth : depths) {
      std::vector<double> e;
      for (const auto& r : result.rows) {
        if (r.activation == Activation::Tanh && r.scale == c && r.depth == depth) {
          e.push_back(r.error_norm);
        }
      }
      means.push_back(log_mean(e));
    }
    fit.loglog_slope = xs.size() >= 3 ? fit_loglog_slope(xs, means) : 0.0;
    fit.strictly_increasing = true;
    for (std::size_t i = 1; i < means.size(); ++i) {
      fit.strictly_increasing = fit.strictly_increasing && means[i] > means[i - 1];
      fit.doubling_ratios.push_back(means[i] / means[i - 1]);
    }
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto e = errors_of(c, cfg.seed + s);
      const double own = envelope_fit_residual(xs, e, c);
      bool wins = scales.size() > 1;
      for (double other : scales) {
        if (other != c && envelope_fit_residual(xs, e, other) <= own) wins = false;
      }
      if (wins) ++fit.matched_wins;
    }
    result.fits.push_back(std::move(fit));
  }
  return result;
}

CsvTable errorscan_csv(const ErrorScanResult& result) {
  CsvTable t("errorscan", {"activation", "scale", "depth", "seed", "error_norm", "oracle_norm",
                           "relative_error", "rho", "envelope"});
  for (const auto& r : result.rows) {
    t.add_row({to_string(r.activation), cell(r.scale), cell(r.depth), cell(r.seed),
               cell(r.error_norm), cell(r.oracle_norm), cell(r.error_norm / r.oracle_norm),
               cell(r.rho), cell(r.envelope)});
  }
  return t;
}

CsvTable errorscan_fit_csv(const ErrorScanResult& result) {
  CsvTable t("errorscan-fit", {"scale", "loglog_slope", "strictly_increasing", "doubling_ratios",
                               "matched_envelope_wins", "seeds"});
  for (const auto& f : result.fits) {
    std::string ratios;
    for (std::size_t i = 0; i < f.doubling_ratios.size(); ++i) {
      if (i) ratios += ';';
      ratios += format_number(f.doubling_ratios[i]);
    }
    t.add_row({cell(f.scale), cell(f.loglog_slope), f.strictly_increasing ? "1" : "0", ratios,
               cell(f.matched_wins), cell(f.seeds)});
  }
  return t;
}

// ---- ablate ----

AblateResult cmd_ablate(const RunConfig& cfg, std::span<const Activation> acts,
                        std::span<const Precision> precisions,
                        std::span<const std::size_t> depths, std::size_t seeds) {
  cfg.validate();
  if (seeds == 0) throw UsageError("seeds", "must be at least 1");
  AblateResult result;
  for (Activation act : acts) {
    for (Precision prec : precisions) {
      for (std::size_t depth : depths) {
        AblateCell cellv{act, prec, depth, 0.0, 1.0, seeds};
        for (std::size_t s = 0; s < seeds; ++s) {
          RunConfig rc = cfg;
          rc.activation = act;
          rc.precision = prec;
          rc.depth = depth;
          rc.seed = cfg.seed + s;
          rc.engine = Engine::Hzo;
          const auto g = cmd_gradcheck(rc);
          result.rows.push_back({act, prec, depth, rc.seed, rc.effective_epsilon(),
                                 g.report.global_cosine});
          cellv.mean_rho += g.report.global_cosine / static_cast<double>(seeds);
          cellv.min_rho = std::min(cellv.min_rho, g.report.global_cosine);
        }
        result.cells.push_back(cellv);
      }
    }
  }
  return result;
}

CsvTable ablate_csv(const AblateResult& result) {
  CsvTable t("ablate", {"activation", "precision", "depth", "seed", "epsilon", "rho"});
  for (const auto& r : result.rows) {
    t.add_row({to_string(r.activation), to_string(r.precision), cell(r.depth), cell(r.seed),
               cell(r.epsilon), cell(r.rho)});
  }
  return t;
}

CsvTable ablate_summary_csv(const AblateResult& result) {
  CsvTable t("ablate-summary", {"activation", "precision", "depth", "seeds", "mean_rho", "min_rho"});
  for (const auto& c : result.cells) {
    t.add_row({to_string(c.activation), to_string(c.precision), cell(c.depth),
               cell(c.seeds), cell(c.mean_rho), cell(c.min_rho)});
  }
  return t;
}

// ---- sppcheck ----

std::vector<SppRow> cmd_sppcheck(const RunConfig& cfg, std::size_t seeds) {
  cfg.validate();
  if (seeds == 0) throw UsageError("seeds", "must be at least 1");
  std::vector<SppRow> rows;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = cfg.seed + s;
    Rng rng(seed);
    ConvSpec spec;
    spec.in_channels = cfg.width;
    spec.channels = cfg.width;
    spec.height = cfg.image;
    spec.width = cfg.image;
    spec.kernel = cfg.kernel;
    spec.conv_layers = cfg.depth;
    spec.act = cfg.activation;
    spec.weight_scale = cfg.weight_scale;
    Rng init = rng.split(1);
    Network net = make_conv_net(spec, init);
    net.set_policy({cfg.precision});
    const PrecisionPolicy policy = net.policy();
    Rng probe = rng.split(2);
    const Span right = net.full_span();
    const Tensor a_k = round_through(gaussian({net.width(0)}, 1.0, probe), policy);
    const TargetSignal t_j{right.last,
                           round_through(gaussian({net.width(right.last)}, 1.0, probe), policy)};
    const double eps = cfg.effective_epsilon();
    const std::size_t r = receptive_field(net, right);

    QueryLedger seq_ledger;
    const auto seq = sequential_jacobian_action(net, right, a_k, t_j, eps, &seq_ledger,
                                                cfg.threads, policy);
    std::vector<std::pair<std::size_t, bool>> separations{{r, false}};
    if (r > 1) separations.emplace_back(r - 1, true);
    for (const auto& [sep, control] : separations) {
      const auto groups = build_disjoint_groups(cfg.image, cfg.image, sep);
      QueryLedger spp_ledger;
      const auto spp = spp_estimate_jacobian_action(net, right, a_k, t_j, eps, groups,
                                                    &spp_ledger, cfg.threads, policy);
      double worst = 0.0;
      for (std::size_t i = 0; i < seq.value.size(); ++i) {
        worst = std::max(worst, std::fabs(seq.value[i] - spp.value[i]));
      }
      SppRow row;
      row.seed = seed;
      row.height = row.width = cfg.image;
      row.channels = cfg.width;
      row.receptive_field = r;
      row.separation = sep;
      row.control = control;
      row.max_discrepancy = worst;
      row.sequential_evals = seq_ledger.layer_evals();
      row.spp_evals = spp_ledger.layer_evals();
      row.reduction =
          static_cast<double>(row.sequential_evals) / static_cast<double>(row.spp_evals);
      rows.push_back(row);
    }
  }
  return rows;
}

CsvTable sppcheck_csv(const std::vector<SppRow>& rows) {
  CsvTable t("sppcheck", {"seed", "height", "width", "channels", "receptive_field", "separation",
                          "control", "max_discrepancy", "sequential_evals", "spp_evals",
                          "reduction"});
  for (const auto& r : rows) {
    t.add_row({cell(r.seed), cell(r.height), cell(r.width), cell(r.channels),
               cell(r.receptive_field), cell(r.separation), r.control ? "1" : "0",
               cell(r.max_discrepancy), cell(r.sequential_evals), cell(r.spp_evals),
               cell(r.reduction)});
  }
  return t;
}

}  // namespace hzo
