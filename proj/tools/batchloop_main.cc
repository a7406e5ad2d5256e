// Copyright 2026 The batchloop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: one subcommand per experiment.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "batchloop/common.h"
#include "batchloop/experiment.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

std::string ReadText(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw batchloop::IoError("cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

std::vector<std::uint64_t> ParseSeedList(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      seeds.push_back(v);
    } catch (const std::exception&) {
      throw batchloop::ConfigError("--seeds", "not an unsigned integer: \"" +
                                                  item + "\"");
    }
  }
  if (seeds.empty()) throw batchloop::ConfigError("--seeds", "empty list");
  return seeds;
}

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string seeds;
  std::string out;
  bool quiet = false;
  bool verbose = false;
  bool dump_config = false;
};

int Run(batchloop::ExperimentKind kind, const Options& opts) {
  using batchloop::ExperimentConfig;
  batchloop::SetLogLevel(opts.quiet     ? batchloop::LogLevel::kQuiet
                         : opts.verbose ? batchloop::LogLevel::kInfo
                                        : batchloop::LogLevel::kWarning);
  ExperimentConfig cfg =
      opts.config_path.empty()
          ? batchloop::ValidateConfig("{}")
          : batchloop::ValidateConfig(ReadText(opts.config_path));
  cfg.kind = kind;
  if (opts.seed_given) cfg.seeds = {opts.seed};
  if (!opts.seeds.empty()) cfg.seeds = ParseSeedList(opts.seeds);
  if (!opts.out.empty()) {
    cfg.output_dir = opts.out;
  } else if (cfg.output_dir.empty()) {
    const char* env = std::getenv("BATCHLOOP_OUT");
    cfg.output_dir = env && *env ? env : "batchloop_out";
  }
  cfg.Validate();
  if (opts.dump_config) {
    std::cout << batchloop::ConfigToJson(cfg).dump(2) << '\n';
    return kExitOk;
  }
  const auto manifests = batchloop::RunExperiment(cfg);
  if (!opts.quiet) {
    for (const auto& m : manifests) {
      std::cout << m.run_dir << ": " << m.status << ' ' << m.summary.dump()
                << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch reactor RTO, Kalman-filter ILC and informed PPO "
               "experiments"};
  app.require_subcommand(1);
  Options opts;
  struct Command {
    const char* name;
    const char* help;
    batchloop::ExperimentKind kind;
  };
  const Command commands[] = {
      {"rto", "solve the nominal economic trajectory",
       batchloop::ExperimentKind::kRto},
      {"ilc", "run the hierarchical Kalman-filter ILC on the plant",
       batchloop::ExperimentKind::kIlc},
      {"pretrain", "offline imitation pre-training on the linear surrogate",
       batchloop::ExperimentKind::kPretrain},
      {"online", "pre-training followed by fused online adaptation",
       batchloop::ExperimentKind::kOnline},
      {"baseline", "plain PPO on the plant", batchloop::ExperimentKind::kBaseline},
      {"compare", "informed agent versus plain PPO, per-episode MSE",
       batchloop::ExperimentKind::kCompare},
  };
  std::vector<std::pair<CLI::App*, batchloop::ExperimentKind>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opts.config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&opts](const std::uint64_t& s) {
          opts.seed = s;
          opts.seed_given = true;
        },
        "single master seed");
    sub->add_option("--seeds", opts.seeds,
                    "comma-separated seeds, one run directory each");
    sub->add_option("--out", opts.out,
                    "output directory (default: config, then $BATCHLOOP_OUT)");
    sub->add_flag("--quiet", opts.quiet, "suppress all non-error output");
    sub->add_flag("--verbose", opts.verbose, "progress messages on stderr");
    sub->add_flag("--dump-config", opts.dump_config,
                  "print the resolved config and exit");
    subs.emplace_back(sub, c.kind);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  batchloop::ExperimentKind kind = batchloop::ExperimentKind::kRto;
  for (const auto& [sub, k] : subs) {
    if (sub->parsed()) kind = k;
  }
  try {
    return Run(kind, opts);
  } catch (const batchloop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const batchloop::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const batchloop::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
