// hzo: command-line front end for the experiment drivers.
//
//   hzo gradcheck --arch residual --depth 16 --engine hzo
//   hzo bench --depths 8,16,32,64 --engines hzo,zo-act,bp
//   hzo train --dataset two-moons --steps 500 --out runs/moons
//
// Every option may also come from a flat key=value file given with --config;
// flags on the command line win over the file.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>

#include "hzo/harness.h"

namespace {

constexpr int kUsageExit = 2;
constexpr int kNumericalExit = 3;

struct Options {
  std::string arch = "residual";
  std::string activation = "gelu";
  std::string head_activation = "identity";
  std::string loss;
  std::string engine = "hzo";
  std::string optimizer = "adam";
  std::string precision = "double";
  std::string update_rule = "exact-local";
  std::string out = "out";
  std::vector<std::size_t> depths;
  std::vector<double> scales;
  std::vector<std::string> engines;
  std::vector<std::string> activations;
  std::vector<std::string> precisions;
  std::size_t seeds = 0;
};

template <typename T>
T parse_or_usage(const std::string& field, const std::string& value, T (*parse)(const std::string&)) {
  try {
    return parse(value);
  } catch (const hzo::UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw hzo::UsageError(field, e.what());
  }
}

void write_table(const hzo::CsvTable& table, const std::filesystem::path& path) {
  table.write(path);
  std::cout << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical zeroth-order gradient estimation experiments"};
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "Flat key=value file with option defaults");

  hzo::RunConfig cfg;
  Options o;
  std::size_t depth = cfg.depth;
  std::size_t width = cfg.width;
  std::size_t image = cfg.image;

  app.add_option("--arch", o.arch, "plain | residual | conv")->capture_default_str();
  app.add_option("--depth", depth, "Layer count (convolutions for conv)")->capture_default_str();
  app.add_option("--width", width, "Hidden width M (channels for conv)")->capture_default_str();
  app.add_option("--input-width", cfg.input_width, "0 = width or dataset features");
  app.add_option("--output-width", cfg.output_width, "0 = width or class count");
  app.add_option("--activation", o.activation, "identity | relu | gelu | tanh")
      ->capture_default_str();
  app.add_option("--head-activation", o.head_activation)->capture_default_str();
  app.add_option("--loss", o.loss, "mse | ce (default depends on command)");
  app.add_option("--engine", o.engine, "hzo | zo-act | zo-weight | zo-rand | bp")
      ->capture_default_str();
  app.add_option("--optimizer", o.optimizer, "sgd | adam")->capture_default_str();
  app.add_option("--eta", cfg.eta, "Learning rate")->capture_default_str();
  app.add_option("--epsilon", cfg.epsilon, "Perturbation size, 0 = precision default");
  app.add_option("--precision", o.precision, "double | single | half")->capture_default_str();
  app.add_option("--seed", cfg.seed)->capture_default_str();
  app.add_option("--steps", cfg.steps)->capture_default_str();
  app.add_option("--batch", cfg.batch)->capture_default_str();
  app.add_option("--dataset", cfg.dataset, "two-moons | spirals | idx:IMAGES,LABELS")
      ->capture_default_str();
  app.add_option("--samples", cfg.samples)->capture_default_str();
  app.add_option("--noise", cfg.noise)->capture_default_str();
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--threads", cfg.threads, "Worker cap; results do not depend on it")
      ->capture_default_str();
  app.add_option("--weight-scale", cfg.weight_scale)->capture_default_str();
  app.add_option("--residual-scale", cfg.residual_scale)->capture_default_str();
  app.add_flag("--orthogonal", cfg.orthogonal, "Orthogonal weights scaled by --weight-scale");
  app.add_option("--directions", cfg.directions, "Directions for zo-rand")->capture_default_str();
  app.add_option("--update-rule", o.update_rule, "exact-local | delta-rule")->capture_default_str();
  app.add_flag("--spatial-parallel", cfg.spatial_parallel, "Batched perturbation on conv spans");
  app.add_option("--probe-every", cfg.probe_every, "Training: oracle comparison period");
  app.add_option("--image", image, "Conv feature map side")->capture_default_str();
  app.add_option("--kernel", cfg.kernel)->capture_default_str();
  app.add_option("--depths", o.depths, "Depth list")->delimiter(',');
  app.add_option("--scales", o.scales, "Orthogonal weight scales (errorscan)")->delimiter(',');
  app.add_option("--engines", o.engines, "Engine list (bench)")->delimiter(',');
  app.add_option("--activations", o.activations, "Activation list (ablate)")->delimiter(',');
  app.add_option("--precisions", o.precisions, "Precision list (ablate)")->delimiter(',');
  app.add_option("--seeds", o.seeds, "Seed count for sweeps");

  std::map<std::string, CLI::App*> cmds;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"gradcheck", "Compare one estimator against the backprop oracle"},
           {"bench", "Query counts per engine and depth"},
           {"train", "Train on a dataset and write a log and checkpoint"},
           {"errorscan", "Estimator error against depth and weight scale"},
           {"ablate", "Fidelity over activation, precision and depth"},
           {"sppcheck", "Batched spatial perturbation against the sequential oracle"}}) {
    cmds[name] = app.add_subcommand(name, help)->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageExit;
  }

  const auto given = [&](const char* flag) { return app.count(flag) > 0; };
  const auto chosen = [&]() -> std::string {
    for (const auto& [name, sub] : cmds) {
      if (sub->parsed()) return name;
    }
    return {};
  }();

  try {
    cfg.arch = parse_or_usage("arch", o.arch, hzo::parse_arch);
    cfg.activation = parse_or_usage("activation", o.activation, hzo::parse_activation);
    cfg.head_activation = parse_or_usage("head-activation", o.head_activation, hzo::parse_activation);
    if (!o.loss.empty()) cfg.loss = parse_or_usage("loss", o.loss, hzo::parse_loss);
    cfg.engine = parse_or_usage("engine", o.engine, hzo::parse_engine);
    cfg.optimizer = parse_or_usage("optimizer", o.optimizer, hzo::parse_optimizer);
    cfg.precision = parse_or_usage("precision", o.precision, hzo::parse_precision);
    cfg.update_rule = parse_or_usage("update-rule", o.update_rule, hzo::parse_update_rule);
    cfg.out = o.out;
    cfg.depth = depth;
    cfg.width = width;
    cfg.image = image;

    // Command-specific defaults for options left unset.
    if (chosen == "sppcheck") {
      if (!given("--depth")) cfg.depth = 2;
      if (!given("--width")) cfg.width = 2;
      if (!given("--image")) cfg.image = 16;
    }
    cfg.validate();

    const std::filesystem::path out = cfg.out;
    const std::size_t seeds = o.seeds;

    if (chosen == "gradcheck") {
      const auto r = hzo::cmd_gradcheck(cfg);
      write_table(hzo::gradcheck_csv(r), out / "gradcheck.csv");
      std::printf("rho=%.12g error_norm=%.6g layer_evals=%llu\n", r.report.global_cosine,
                  r.report.error_norm, static_cast<unsigned long long>(r.ledger.layer_evals()));
    } else if (chosen == "bench") {
      std::vector<std::size_t> depths =
          o.depths.empty() ? std::vector<std::size_t>{8, 16, 32, 64} : o.depths;
      std::vector<hzo::Engine> engines;
      for (const auto& e : o.engines.empty() ? std::vector<std::string>{"hzo", "zo-act", "bp"}
                                             : o.engines) {
        engines.push_back(parse_or_usage("engines", e, hzo::parse_engine));
      }
      const auto rows = hzo::cmd_bench(cfg, depths, engines);
      write_table(hzo::bench_csv(rows), out / "bench.csv");
      write_table(hzo::bench_timing_csv(rows), out / "bench_timing.csv");
    } else if (chosen == "train") {
      const auto r = hzo::cmd_train(cfg);
      write_table(hzo::train_csv(r), out / "train.csv");
      hzo::save(r.network, out / "checkpoint.hzo");
      std::cout << "wrote " << (out / "checkpoint.hzo").string() << "\n";
      if (!r.log.empty()) {
        std::printf("final loss=%.6g train_accuracy=%.4f\n", r.log.back().loss,
                    r.log.back().train_accuracy);
      }
      if (r.diverged) {
        std::cerr << "training diverged; checkpoint holds the last finite parameters\n";
        return kNumericalExit;
      }
    } else if (chosen == "errorscan") {
      const std::vector<double> scales = o.scales.empty() ? std::vector<double>{1.0, 1.3} : o.scales;
      const std::vector<std::size_t> depths =
          o.depths.empty() ? std::vector<std::size_t>{4, 8, 16, 32} : o.depths;
      const auto r = hzo::cmd_errorscan(cfg, scales, depths, seeds ? seeds : 5);
      write_table(hzo::errorscan_csv(r), out / "errorscan.csv");
      write_table(hzo::errorscan_fit_csv(r), out / "errorscan_fit.csv");
    } else if (chosen == "ablate") {
      std::vector<hzo::Activation> acts;
      for (const auto& a : o.activations.empty() ? std::vector<std::string>{"gelu", "relu"}
                                                 : o.activations) {
        acts.push_back(parse_or_usage("activations", a, hzo::parse_activation));
      }
      std::vector<hzo::Precision> precs;
      for (const auto& p : o.precisions.empty()
                               ? std::vector<std::string>{"double", "single", "half"}
                               : o.precisions) {
        precs.push_back(parse_or_usage("precisions", p, hzo::parse_precision));
      }
      const std::vector<std::size_t> depths =
          o.depths.empty() ? std::vector<std::size_t>{1, 8, 32} : o.depths;
      const auto r = hzo::cmd_ablate(cfg, acts, precs, depths, seeds ? seeds : 10);
      write_table(hzo::ablate_csv(r), out / "ablate.csv");
      write_table(hzo::ablate_summary_csv(r), out / "ablate_summary.csv");
    } else if (chosen == "sppcheck") {
      const auto rows = hzo::cmd_sppcheck(cfg, seeds ? seeds : 3);
      write_table(hzo::sppcheck_csv(rows), out / "sppcheck.csv");
    }
  } catch (const hzo::InputError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageExit;
  } catch (const hzo::DimensionError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageExit;
  } catch (const hzo::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kNumericalExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
