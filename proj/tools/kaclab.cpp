#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "kac/experiments.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitTolerance = 3;

int fail(const nlohmann::json& err, int code) {
  std::cout << err.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kac model experiment harness"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  for (const auto& name : kac::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--threads", threads, "worker thread cap")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "random seed (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail({{"error", "usage"}, {"message", e.what()}}, kExitValidation);
  }
  const std::string experiment = app.get_subcommands().front()->get_name();

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  kac::ExperimentConfig cfg;
  try {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw kac::ValidationError({"cannot open config " + config_path});
      try {
        in >> j;
      } catch (const nlohmann::json::parse_error& e) {
        throw kac::ValidationError({std::string("config is not valid JSON: ") + e.what()});
      }
      if (!j.is_object()) throw kac::ValidationError({"config must be a JSON object"});
    }
    if (j.contains("experiment") && j["experiment"] != experiment)
      throw kac::ValidationError({"config experiment '" + j["experiment"].dump() +
                                  "' does not match subcommand '" + experiment + "'"});
    j["experiment"] = experiment;
    if (seed) j["seed"] = *seed;
    if (!out_dir.empty()) j["out"] = out_dir;
    cfg = kac::ExperimentConfig::from_json(j);
    cfg.validate();
  } catch (const kac::ValidationError& e) {
    return fail(e.to_json(), kExitValidation);
  }

  try {
    auto res = kac::run_experiment(cfg, cfg.out);
    for (const auto& c : res.checks)
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << c.value
                << " tolerance=" << c.tolerance << '\n';
    std::cout << "artifacts in " << cfg.out << ':';
    for (const auto& a : res.artifacts) std::cout << ' ' << a;
    std::cout << std::endl;
    return res.pass() ? 0 : kExitTolerance;
  } catch (const kac::ValidationError& e) {
    return fail(e.to_json(), kExitValidation);
  } catch (const kac::ArgumentError& e) {
    return fail({{"error", e.kind()}, {"message", e.what()}}, kExitValidation);
  } catch (const kac::ConfigurationError& e) {
    return fail({{"error", e.kind()}, {"message", e.what()}}, kExitValidation);
  } catch (const kac::Error& e) {
    return fail({{"error", e.kind()}, {"message", e.what()}}, kExitTolerance);
  } catch (const std::exception& e) {
    return fail({{"error", "internal"}, {"message", e.what()}}, 1);
  }
}
