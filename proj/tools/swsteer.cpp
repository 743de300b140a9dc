#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "swsteer/app.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  bool seed_set = false;
  bool out_set = false;
  bool threads_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Path to a JSON config file");
  cmd->add_option("--seed", flags.seed, "Override the simulation seed")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--out", flags.out_dir, "Output directory")
      ->each([&flags](const std::string&) { flags.out_set = true; });
  cmd->add_option("--threads", flags.threads, "Worker threads")
      ->each([&flags](const std::string&) { flags.threads_set = true; });
}

swsteer::AppConfig build_config(const CommonFlags& flags) {
  swsteer::AppConfig cfg = flags.config_path.empty()
                               ? swsteer::default_config()
                               : swsteer::load_config_file(flags.config_path);
  if (flags.seed_set) cfg.sim.seed = flags.seed;
  if (flags.out_set) cfg.outputs.dir = flags.out_dir;
  if (flags.threads_set) {
    if (flags.threads < 1) {
      throw swsteer::ConfigError("--threads must be >= 1");
    }
    cfg.sim.threads = flags.threads;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliced-Wasserstein ensemble steering"};
  app.require_subcommand(1);

  CommonFlags steer_flags, compare_flags, check_flags;
  CLI::App* steer = app.add_subcommand(
      "steer", "Run one controller and write trajectory data");
  add_common(steer, steer_flags);
  CLI::App* compare = app.add_subcommand(
      "compare", "Covariance/ellipse comparison across controllers");
  add_common(compare, compare_flags);
  CLI::App* check = app.add_subcommand(
      "check", "Run the numerical certification suite");
  add_common(check, check_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (steer->parsed()) {
      return swsteer::cmd_steer(build_config(steer_flags), std::cout);
    }
    if (compare->parsed()) {
      return swsteer::cmd_compare(build_config(compare_flags), std::cout);
    }
    return swsteer::cmd_check(build_config(check_flags), std::cout);
  } catch (const swsteer::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const swsteer::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const swsteer::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
