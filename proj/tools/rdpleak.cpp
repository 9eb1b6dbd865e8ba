// Copyright 2026 The rdpleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// rdpleak: bound and measure secret leakage from DP-SGD training.
//
//   rdpleak account   --config c.json --out dir
//   rdpleak simulate  --config c.json --out dir --threads 4
//   rdpleak scan      --config c.json --out dir
//   rdpleak calibrate --config c.json --out dir
//
// Exit status: 0 ok, 1 a report check failed, 2 bad input or runtime error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "rdpleak/reports.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 0;
};

void add_common(CLI::App* sub, Flags& flags, bool config_required) {
  auto* c = sub->add_option("--config", flags.config, "JSON config file");
  if (config_required) c->required();
  c->check(CLI::ExistingFile);
  sub->add_option("--out", flags.out, "output directory")->capture_default_str();
  sub->add_option_function<std::uint64_t>(
      "--seed", [&flags](const std::uint64_t& s) {
        flags.seed = s;
        flags.seed_given = true;
      },
      "master seed (overrides the config)");
  sub->add_option("--threads", flags.threads, "worker threads (0: hardware)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rdpleak: Renyi-DP leakage bounds and canary experiments"};
  app.set_version_flag("--version", std::string(rdpleak::reports::kVersion));
  app.require_subcommand(1);

  Flags flags;
  auto* account = app.add_subcommand("account", "bound tables for a (q, sigma, steps) grid");
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo canary leakage vs bound");
  auto* scan = app.add_subcommand("scan", "lazy-sampling risk scan of a corpus");
  auto* calibrate = app.add_subcommand("calibrate", "choose the canary training step count");
  add_common(account, flags, false);
  add_common(simulate, flags, false);
  add_common(scan, flags, true);
  add_common(calibrate, flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    nlohmann::json config = nlohmann::json::object();
    rdpleak::reports::RunContext ctx;
    ctx.command = app.get_subcommands().front()->get_name();
    if (!flags.config.empty()) {
      std::ifstream in(flags.config);
      config = nlohmann::json::parse(in, nullptr, true, true);
      if (!config.is_object()) throw rdpleak::reports::ConfigError("config must be a JSON object");
      ctx.config_dir = std::filesystem::path(flags.config).parent_path();
    }
    ctx.seed = flags.seed_given ? flags.seed
                                : rdpleak::reports::detail::get_or<std::uint64_t>(config, "seed", 0);
    ctx.out_dir = flags.out;
    ctx.threads = flags.threads != 0 ? flags.threads
                                     : std::max(1u, std::thread::hardware_concurrency());

    const auto outcome = rdpleak::reports::run_command(config, ctx);
    for (const auto& f : outcome.files) std::cout << "wrote " << f.string() << "\n";
    for (const auto& m : outcome.messages) std::cerr << m << "\n";
    if (outcome.violations > 0) {
      std::cerr << outcome.violations << " check(s) failed\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
