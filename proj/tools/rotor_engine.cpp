// rotor-engine: run or validate a scenario config.
//
//   rotor-engine run <config> [--output-dir DIR] [--seed N] [--threads N]
//   rotor-engine validate <config>
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 I/O error.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "rotor_engine/runner.hpp"

namespace {

using rotor::runner::ExitCode;

int report(int code, const std::string& msg) {
  fmt::print(stderr, "rotor-engine: {}\n", msg);
  return code;
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const rotor::runner::ConfigError& e) {
    return report(ExitCode::kConfigError, fmt::format("config error: {}", e.what()));
  } catch (const rotor::PreconditionError& e) {
    return report(ExitCode::kConfigError, fmt::format("invalid parameter: {}", e.what()));
  } catch (const rotor::io::IoError& e) {
    return report(ExitCode::kIoError, fmt::format("I/O error: {}", e.what()));
  } catch (const std::filesystem::filesystem_error& e) {
    return report(ExitCode::kIoError, fmt::format("I/O error: {}", e.what()));
  } catch (const rotor::ConvergenceError& e) {
    return report(ExitCode::kNumericalError, fmt::format("numerical failure: {}", e.what()));
  } catch (const rotor::TruncationError& e) {
    return report(ExitCode::kNumericalError, fmt::format("truncation invalid: {}", e.what()));
  } catch (const std::exception& e) {
    return report(ExitCode::kNumericalError, fmt::format("unexpected failure: {}", e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum rotor engine simulations"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  auto* run = app.add_subcommand("run", "Run a scenario and write CSV results plus metadata");
  run->add_option("config", config_path, "Scenario config (JSON)")->required();
  run->add_option("--output-dir", output_dir, "Directory for result files (overrides output_dir)");
  run->add_option("--seed", seed, "Base RNG seed (overrides seed)");
  run->add_option("--threads", threads, "Worker threads (overrides threads)")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", config_path, "Scenario config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ExitCode::kConfigError;
  }

  if (*validate) {
    return guarded([&] {
      const auto cfg = rotor::runner::parse_config(rotor::runner::load_json(config_path));
      fmt::print("{}: ok (scenario {}, hash {})\n", config_path, rotor::runner::to_string(cfg.scenario),
                 rotor::runner::config_hash(cfg.effective));
      return 0;
    });
  }

  return guarded([&] {
    const auto cfg =
        rotor::runner::parse_config(rotor::runner::load_json(config_path), seed, threads, output_dir);
    const auto outcome = rotor::runner::execute(cfg);
    for (const auto& f : outcome.files) fmt::print("wrote {}\n", f.string());
    if (!outcome.numerically_valid) return report(ExitCode::kNumericalError, outcome.message);
    return 0;
  });
}
