// Command-line driver: train / score / evaluate.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "logitds/cli.hpp"

namespace {

using logitds::cli::ExitCode;
using logitds::cli::RunConfig;

void add_common(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--preset", rc.preset, "blobs | mnist-mlp | mnist-lenet")->capture_default_str();
  cmd->add_option("--seed", rc.seed, "Master seed")->capture_default_str();
  cmd->add_option("--out-dir", rc.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--threads", rc.threads, "Worker threads for posterior sampling")->capture_default_str();
  cmd->add_option("--config", "Flat key=value file with flag names as keys; explicit flags win");
}

// Splices "--key=value" for each config-file line after the subcommand name, skipping
// keys the user also passed as flags.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path);
  std::vector<std::string> explicit_flags;
  for (const auto& a : args) {
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    explicit_flags.push_back(eq == std::string::npos ? a.substr(2) : a.substr(2, eq - 2));
  }
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("config line without '=': " + line);
    auto trim = [](std::string v) {
      const auto a = v.find_first_not_of(" \t\r"), b = v.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : v.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (std::find(explicit_flags.begin(), explicit_flags.end(), key) != explicit_flags.end()) continue;
    injected.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural network OoD detection with logit disagreement scores"};
  app.require_subcommand(1);
  RunConfig rc;

  auto* train = app.add_subcommand("train", "Train a mean-field variational network");
  add_common(train, rc);
  train->add_option("--data", rc.data, "Training dataset spec");
  train->add_option("--pi", rc.pi, "KL weight");
  train->add_option("--lr", rc.lr, "Adam learning rate");
  train->add_option("--batch", rc.batch, "Minibatch size");
  train->add_option("--epochs", rc.epochs, "Epochs");

  auto* score = app.add_subcommand("score", "Compute per-input uncertainty scores");
  add_common(score, rc);
  score->add_option("--checkpoint", rc.checkpoint, "Checkpoint file");
  score->add_option("--logits", rc.logits, "Posterior logit tensor dump (instead of a checkpoint)");
  score->add_option("--data", rc.data, "Dataset spec");
  score->add_option("--samples", rc.samples, "Posterior samples M");
  score->add_option("--epsilon", rc.epsilon, "Logit truncation constant");
  score->add_option("--scores", rc.scores, "Score names to emit")->delimiter(',');

  auto* evaluate = app.add_subcommand("evaluate", "AUROC / FNR95 benchmark");
  add_common(evaluate, rc);
  evaluate->add_option("--checkpoint", rc.checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--data", rc.data, "In-distribution dataset spec");
  evaluate->add_option("--ood", rc.ood, "OoD dataset spec (repeatable)");
  evaluate->add_option("--samples", rc.samples, "Posterior samples M");
  evaluate->add_option("--n", rc.n, "Inputs sampled per dataset");
  evaluate->add_option("--epsilon", rc.epsilon, "Logit truncation constant");
  evaluate->add_option("--scores", rc.scores, "Score names to evaluate")->delimiter(',');

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    args.erase(args.begin());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc_code = app.exit(e);
    return rc_code == 0 ? ExitCode::ok : ExitCode::config_error;
  } catch (const std::runtime_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ExitCode::config_error;
  }

  try {
    if (*train) {
      const auto out = logitds::cli::cmd_train(rc);
      std::cout << "best validation accuracy " << out.report.best_val_accuracy << " at epoch "
                << out.report.best_epoch << "\n"
                << "wrote " << out.checkpoint.string() << ", " << out.report_json.string() << ", "
                << out.epochs_csv.string() << "\n";
    } else if (*score) {
      const auto out = logitds::cli::cmd_score(rc);
      std::cout << "wrote " << out.csv.string() << "\n";
    } else if (*evaluate) {
      const auto out = logitds::cli::cmd_evaluate(rc);
      for (const auto& w : out.result.report.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << logitds::format_table(out.result.report);
      std::cout << "wrote " << out.report_json.string() << ", " << out.report_txt.string() << "\n";
    }
  } catch (const logitds::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ExitCode::config_error;
  } catch (const logitds::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return ExitCode::data_error;
  } catch (const logitds::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return ExitCode::numeric_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCode::failure;
  }
  return ExitCode::ok;
}
