// Command-line front end. Exit codes: 0 ok, 1 replay diverged or other failure,
// 2 configuration rejected, 3 numerical failure.
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mlq/common.hpp"
#include "mlq/io.hpp"
#include "mlq/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mabuchi+Liouville chaos experiments"};
  app.require_subcommand(1);
  std::string config_path, out = "runs", format = "csv", dir;
  std::uint64_t seed = 1;
  int threads = 1;

  std::vector<CLI::App*> runs;
  for (const auto& name : mlq::subcommands()) {
    auto* sub = app.add_subcommand(name, "run " + name);
    sub->add_option("--config", config_path, "flat JSON config")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "RNG seed (u64)");
    sub->add_option("--out", out, "root directory for run directories");
    sub->add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--format", format, "data format")->check(CLI::IsMember({"csv", "json"}));
    runs.push_back(sub);
  }
  auto* replay = app.add_subcommand("replay", "re-execute a run directory and compare artifact hashes");
  replay->add_option("dir", dir, "run directory")->required();
  replay->add_option("--threads", threads, "worker threads")->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);

  mlq::set_warning_sink([](const std::string& m) { std::cerr << "warning: " << m << "\n"; });
  try {
    if (replay->parsed()) {
      const auto r = mlq::replay_run(dir, threads);
      if (r.identical) {
        std::cout << "identical\n";
        return 0;
      }
      std::cout << "diverged:";
      for (const auto& a : r.diverged) std::cout << " " << a;
      std::cout << "\n";
      return 1;
    }
    for (auto* sub : runs) {
      if (!sub->parsed()) continue;
      nlohmann::json config;
      try {
        config = nlohmann::json::parse(mlq::read_file(config_path));
      } catch (const nlohmann::json::exception& e) {
        throw mlq::ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
      std::cout << mlq::write_run(out, sub->get_name(), config, seed, threads, format) << "\n";
    }
  } catch (const mlq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mlq::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
