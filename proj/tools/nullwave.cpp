// nullwave <task> --config <file> [--out <dir>] [--threads N]

#include "nullwave/errors.hpp"
#include "nullwave/parallel.hpp"
#include "nullwave/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace nullwave;
  CLI::App app{"Plane-wave stability laboratory for semilinear null-form wave systems"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);

  std::string config, out;
  int threads = 0;
  for (const char* name : {"classify", "mode", "fdtd", "geoptics", "geometry", "blowup"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run a ") + name + " scenario");
    sub->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output_dir)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores")
        ->check(CLI::NonNegativeNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  thread_count() = threads;
  const std::string task = app.get_subcommands().front()->get_name();

  try {
    Scenario sc = load_scenario(config);
    if (to_string(sc.task) != task)
      throw ValidationError("config task '" + to_string(sc.task) + "' does not match command '" +
                            task + "'");
    const RunManifest man = run_scenario(sc, out);
    std::cout << man.output_dir << '\n';
    for (const auto& f : man.outputs) std::cout << "  " << f << '\n';
    std::cout << "config " << man.config_hash << ", " << man.wall_seconds << " s\n";
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure at t = " << e.time() << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
