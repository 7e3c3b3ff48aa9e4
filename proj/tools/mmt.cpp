// SPDX-License-Identifier: Apache-2.0
// mmt: command-line front end.
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "mmt/commands.hpp"
#include "mmt/error.hpp"

namespace {

// "--a.b value" and "--a.b=value" pairs left over by CLI11.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) throw mmt::ConfigError("unexpected argument '" + arg + "'");
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(arg.substr(2), extras[++i]);
    } else {
      throw mmt::ConfigError("option '" + arg + "' needs a value");
    }
  }
  return out;
}

void set_log_level() {
  const char* level = std::getenv("MMT_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
}

}  // namespace

int main(int argc, char** argv) {
  set_log_level();
  CLI::App app{"MMT-Net cross-domain recommender"};
  app.require_subcommand(1);
  app.footer(
      "Config fields can be overridden with dotted flags, e.g. --model.d 16 --train.lr 0.01\n"
      "--transfer.method anneal --data.path data/source --seed 3 --out runs/x\n"
      "Log verbosity: MMT_LOG_LEVEL=trace|debug|info|warn|error|off");

  std::string config;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->allow_extras();
    return sub;
  };
  auto* train = add_common(app.add_subcommand("train", "train all modules on one domain"));
  std::string source_ckpt, ckpt, synth_config, synth_out = "synth";
  auto* transfer = add_common(app.add_subcommand("transfer", "transfer shared modules to a target domain"));
  transfer->add_option("--source", source_ckpt, "source checkpoint directory")->required();
  auto* eval = add_common(app.add_subcommand("eval", "evaluate a checkpoint on a domain"));
  eval->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  auto* synth = app.add_subcommand("synth", "generate synthetic domains");
  synth->add_option("--config", synth_config, "synthetic generator config (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "output directory");
  auto* gradcheck = add_common(app.add_subcommand("gradcheck", "finite-difference gradient suite"));
  auto* compare = add_common(app.add_subcommand("compare", "transfer methods against from-scratch training"));

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      mmt::cmd_synth(synth_config, synth_out);
      return 0;
    }
    CLI::App* sub = app.get_subcommands().front();
    std::optional<std::filesystem::path> file;
    if (!config.empty()) file = config;
    const auto cfg = mmt::load_experiment_config(file, parse_overrides(sub->remaining()));
    if (sub == train) {
      mmt::cmd_train(cfg);
    } else if (sub == transfer) {
      mmt::cmd_transfer(cfg, source_ckpt);
    } else if (sub == eval) {
      mmt::cmd_eval(cfg, ckpt);
    } else if (sub == gradcheck) {
      return mmt::cmd_gradcheck(cfg).passed() ? 0 : 1;
    } else if (sub == compare) {
      mmt::cmd_compare(cfg);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
