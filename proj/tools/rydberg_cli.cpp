// Command-line front end: run a configured experiment, list presets, or run
// the acceptance checks.

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rydberg/acceptance.hpp"
#include "rydberg/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

void print_summary(const rydberg::ExperimentConfig& c, const rydberg::RunOutput& out) {
  std::cout << "preset " << c.preset << " (" << c.info().figure << "), " << out.ensemble.points.size()
            << " scan points x " << c.n_shots << " shots, " << rydberg::mode_name(c.mode) << " mode, "
            << std::fixed << std::setprecision(2) << out.manifest.wall_clock_s << " s\n"
            << std::defaultfloat;
  for (const auto& s : out.manifest.derived) {
    std::cout << "  " << std::left << std::setw(34) << s.name << std::right << " = "
              << (s.value ? std::to_string(*s.value) : std::string("n/a")) << (s.unit.empty() ? "" : " " + s.unit)
              << "  [" << s.rule << ": " << (s.pass ? (*s.pass ? "pass" : "fail") : "info") << "]";
    if (!s.note.empty()) std::cout << "  (" << s.note << ")";
    std::cout << "\n";
  }
  if (!out.manifest.data_file.empty()) {
    std::cout << "data:     " << out.manifest.data_file.string() << "\n"
              << "manifest: " << out.manifest.manifest_file.string() << "\n";
  }
}

int cmd_run(const std::string& path) {
  const rydberg::ExperimentConfig c = rydberg::load_config(path);
  for (const auto& w : c.atom.warnings()) std::cerr << "warning: " << w << "\n";
  print_summary(c, rydberg::run(c));
  return kExitOk;
}

int cmd_list() {
  for (const auto& p : rydberg::list_presets()) {
    std::cout << std::left << std::setw(16) << p["name"].get<std::string>() << std::setw(11)
              << p["figure"].get<std::string>() << " atoms=" << p["atoms"].get<int>() << "  scan "
              << p["scan_variable"].get<std::string>() << " [" << p["default_scan"]["start"].get<double>() << ", "
              << p["default_scan"]["stop"].get<double>() << "] x " << p["default_scan"]["points"].get<int>()
              << ", " << p["default_shots"].get<int>() << " shots\n    " << p["description"].get<std::string>()
              << "\n    sequence:";
    for (const auto& e : p["elements"]) std::cout << " " << e.get<std::string>();
    std::cout << "\n" << std::right;
  }
  return kExitOk;
}

int cmd_check(const std::vector<int>& only) {
  bool all = true;
  for (const auto& c : rydberg::acceptance::criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto r = rydberg::acceptance::run_criterion(c);
    rydberg::acceptance::print(std::cout, r);
    std::cout.flush();
    all = all && r.pass;
  }
  return all ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rydberg two-atom experiment simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(RYDBERG_VERSION));

  std::string config_path;
  auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", config_path, "config file")->required();

  app.add_subcommand("list", "list the available presets");

  std::vector<int> only;
  auto* check = app.add_subcommand("check", "run the acceptance checks and print a pass/fail table");
  check->add_option("--only", only, "criterion numbers to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (app.got_subcommand("list")) return cmd_list();
    if (*check) return cmd_check(only);
  } catch (const rydberg::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const rydberg::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
