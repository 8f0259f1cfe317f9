#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "encfree/cli/config.hpp"
#include "encfree/cli/curves.hpp"
#include "encfree/cli/runner.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitDiverged = 3;

int report(int code, const std::string& msg) {
  std::cerr << "encfree: " << msg << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace encfree;
  CLI::App app{"Decoder-only representation learning experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "run";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", overrides, "Override, key.path=value (repeatable)")->take_all();
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Run seed, overrides the config");
  };
  std::vector<std::pair<std::string, CLI::App*>> commands;
  for (const auto& name : cli::command_names()) {
    CLI::App* sub = app.add_subcommand(name, "Run '" + name + "'");
    add_run_flags(sub);
    commands.emplace_back(name, sub);
  }
  CLI::App* run_sub = app.add_subcommand("run", "Run the command named in the config");
  add_run_flags(run_sub);

  std::string curves_dir, curves_out;
  CLI::App* curves = app.add_subcommand("emit-curves", "Turn metrics.csv files into plot-ready CSVs");
  curves->add_option("run_dir", curves_dir, "Run directory (single run or seed sweep)")->required();
  curves->add_option("--out", curves_out, "Output directory (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (curves->parsed()) {
      cli::emit_curves(curves_dir, curves_out.empty() ? curves_dir : curves_out);
      return 0;
    }
    std::string command;
    for (const auto& [name, sub] : commands)
      if (sub->parsed()) command = name;
    const cli::json user = config_path.empty() ? cli::json::object() : cli::read_json_file(config_path);
    cli::Diagnostics diag;
    const cli::RunConfig rc = cli::typed_config(cli::resolve_config(user, overrides, seed, command, &diag), &diag);
    cli::run(rc, out_dir);
    return 0;
  } catch (const ConfigError& e) {
    return report(kExitConfig, e.what());
  } catch (const MissingFileError& e) {
    return report(kExitData, e.what());
  } catch (const FormatError& e) {
    return report(kExitData, e.what());
  } catch (const ConsistencyError& e) {
    return report(kExitData, e.what());
  } catch (const SizeError& e) {
    return report(kExitData, e.what());
  } catch (const DivergenceError& e) {
    return report(kExitDiverged, e.what());
  } catch (const Error& e) {
    return report(kExitConfig, e.what());
  } catch (const std::exception& e) {
    return report(kExitConfig, std::string("unexpected failure: ") + e.what());
  }
}
