// cfx: train models, generate counterfactuals, evaluate and report.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 missing
// prerequisite, 4 invariant violation.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfx/config.hpp"
#include "cfx/error.hpp"
#include "cfx/io.hpp"
#include "cfx/pipeline.hpp"

namespace {

using namespace cfx;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mnist;
  bool desk = false;
};

config::ExperimentConfig resolve(const Options& o) {
  const auto preset = o.desk ? config::Preset::Desk : config::Preset::Full;
  config::ExperimentConfig c =
      o.config_path.empty() ? config::preset_defaults(preset) : config::load(o.config_path, preset);
  if (o.desk && c.preset != config::Preset::Desk)
    throw ConfigError("--desk-scale conflicts with preset = full in " + o.config_path);
  const config::ExperimentConfig defaults;
  if (const char* env = std::getenv("CFX_MNIST_DIR"); env && *env && c.mnist_dir == defaults.mnist_dir)
    c.mnist_dir = env;
  if (!o.mnist.empty()) c.mnist_dir = o.mnist;
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  c.validate();
  return c;
}

std::vector<pipeline::Component> components(const std::string& name) {
  using pipeline::Component;
  if (name == "all")
    return {Component::Discriminator, Component::Autoencoder, Component::ClassAutoencoders, Component::DGCEx,
            Component::DADGCEx};
  return {pipeline::component_from_name(name)};
}

int run(int argc, char** argv) {
  CLI::App app{"Counterfactual explanations for MNIST: CFPROTO, DGCEx and DA-DGCEx"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "Experiment config (INI)");
  app.add_option("--seed", o.seed, "Run seed (overrides run.seed)");
  app.add_option("--out", o.out, "Output directory (overrides run.out)");
  app.add_option("--mnist", o.mnist, "MNIST directory (overrides data.mnist_dir)");
  app.add_flag("--desk-scale", o.desk, "10k training images, 500 evaluated instances, halved epochs");

  auto* train = app.add_subcommand("train", "Train a component and write its checkpoints");
  std::string component;
  train->add_option("component", component, "discriminator | ae | ae-per-class | dgcex | dadgcex | all")->required();

  auto* explain = app.add_subcommand("explain", "Generate counterfactuals");
  std::string scope;
  std::string method_name_arg;
  std::optional<std::int64_t> id;
  std::optional<int> target;
  explain->add_option("scope", scope, "'all' (default) runs the protocol over the evaluation subset");
  explain->add_option("--method", method_name_arg, "cfproto | dgcex | dadgcex");
  explain->add_option("--id", id, "Single test instance id");
  explain->add_option("--target", target, "Counterfactual class for --id");

  auto* evaluate = app.add_subcommand("evaluate", "Score explanation logs and write summary tables");
  std::vector<std::string> eval_methods;
  evaluate->add_option("--method", eval_methods, "Methods to evaluate (default: all three)");

  auto* report = app.add_subcommand("report", "Write the image grid and combined report");
  auto* run_all = app.add_subcommand("run", "Every stage in order: train all, explain, evaluate, report");
  auto* print = app.add_subcommand("print-config", "Print the resolved config in canonical form");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    io::tune_allocator();
    const auto cfg = resolve(o);
    if (*print) {
      std::cout << config::to_ini(cfg);
      return 0;
    }
    if (*train) {
      for (auto c : components(component)) pipeline::train(cfg, c, std::cout);
    } else if (*explain) {
      if (!scope.empty() && scope != "all") throw ConfigError("explain scope must be 'all' or omitted");
      std::optional<Method> method;
      if (!method_name_arg.empty()) method = method_from_name(method_name_arg);
      if (id) {
        if (!method) throw ConfigError("--id needs --method");
        pipeline::explain_single(cfg, {*method, *id, target}, std::cout);
      } else {
        if (target) throw ConfigError("--target needs --id");
        pipeline::explain_protocol(cfg, method, std::cout);
      }
    } else if (*evaluate) {
      std::vector<Method> methods;
      for (const auto& m : eval_methods) methods.push_back(method_from_name(m));
      if (methods.empty()) methods = {Method::CFPROTO, Method::DGCEx, Method::DADGCEx};
      pipeline::evaluate(cfg, methods, std::cout);
    } else if (*report) {
      pipeline::report(cfg, std::cout);
    } else if (*run_all) {
      pipeline::run_all(cfg, std::cout);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "invalid request: " << e.what() << "\n";
    return 2;
  } catch (const PrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return 3;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
