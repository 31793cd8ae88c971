#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "actlab/activations.hpp"

namespace actlab::cli {

enum ExitCode : int { kSuccess = 0, kClaimFailure = 1, kUsageError = 2, kIoError = 3 };

enum class Precision { kAnalysis, kTraining };

/// Flat settings shared by all subcommands. Defaults apply, then the config
/// file, then command-line flags.
struct CliOptions {
  std::string subcommand;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  std::optional<Precision> precision;

  // verify
  double grid_step = 1e-4;
  std::size_t lipschitz_pairs = 1'000'000;
  std::size_t composition_batches = 100;
  /// Test hook: constants used by the tanh-form GELU in the claims suite.
  GeluConstants gelu_constants{};

  // plot-data
  std::vector<std::string> functions{"gelu"};
  double x_min = -2.5;
  double x_max = 2.5;
  double step = 0.025;

  // bench
  std::size_t bench_size = 1 << 20;
  std::size_t bench_reps = 5;

  // train / compare
  std::string dataset = "cifar10";
  std::filesystem::path data_root;
  bool synthetic = false;
  bool desk_scale = false;
  std::string activation = "gelu";
  std::vector<std::string> activations;
  std::string norm = "batch";
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> train_subset;
  std::optional<std::size_t> test_subset;
  std::size_t width_divisor = 1;
  bool record_time = false;
};

/// Every key accepted in config files and as `--key` flags (dashes and
/// underscores are interchangeable).
const std::vector<std::string>& setting_keys();

/// Applies one setting; throws ConfigError for unknown keys or bad values.
void apply_setting(CliOptions& opts, const std::string& key, const std::string& value);

/// Parses `key = value` lines (# comments) or a flat JSON object.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// The twelve-function activation comparison set.
const std::vector<std::string>& comparison_set_functions();

int run_verify(const CliOptions& opts, std::ostream& out, std::ostream& err);
int run_plot_data(const CliOptions& opts, std::ostream& out, std::ostream& err);
int run_bench(const CliOptions& opts, std::ostream& out, std::ostream& err);
int run_train(const CliOptions& opts, std::ostream& out, std::ostream& err);
int run_compare(const CliOptions& opts, std::ostream& out, std::ostream& err);

/// Full entry point: parses argv, dispatches, maps exceptions to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace actlab::cli
