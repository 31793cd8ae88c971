#include "actlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "actlab/errors.hpp"
#include "actlab/experiments.hpp"
#include "actlab/gelu_analysis.hpp"
#include "actlab/normalization.hpp"

namespace actlab::cli {

namespace fs = std::filesystem;
namespace ex = actlab::experiments;

namespace {

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T v{};
  is >> v;
  if (is.fail() || !is.eof()) throw ConfigError("setting '" + key + "' expects a number, got '" + value + "'");
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  if (!value.empty() && value.front() == '-') {
    throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return parse_number<std::size_t>(key, value);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("setting '" + key + "' expects true/false, got '" + value + "'");
}

using Setter = std::function<void(CliOptions&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"out_dir", [](CliOptions& o, const std::string&, const std::string& v) { o.out_dir = v; }},
      {"seed", [](CliOptions& o, const std::string& k, const std::string& v) {
         o.seed = parse_number<std::uint64_t>(k, v);
       }},
      {"precision",
       [](CliOptions& o, const std::string&, const std::string& v) {
         if (v == "analysis") {
           o.precision = Precision::kAnalysis;
         } else if (v == "training") {
           o.precision = Precision::kTraining;
         } else {
           throw ConfigError("precision must be 'analysis' or 'training', got '" + v + "'");
         }
       }},
      {"grid_step",
       [](CliOptions& o, const std::string& k, const std::string& v) {
         o.grid_step = parse_number<double>(k, v);
         if (!(o.grid_step > 0.0)) throw ConfigError("grid_step must be positive");
       }},
      {"lipschitz_pairs",
       [](CliOptions& o, const std::string& k, const std::string& v) { o.lipschitz_pairs = parse_count(k, v); }},
      {"composition_batches",
       [](CliOptions& o, const std::string& k, const std::string& v) { o.composition_batches = parse_count(k, v); }},
      {"functions", [](CliOptions& o, const std::string&, const std::string& v) { o.functions = split_list(v); }},
      {"x_min", [](CliOptions& o, const std::string& k, const std::string& v) { o.x_min = parse_number<double>(k, v); }},
      {"x_max", [](CliOptions& o, const std::string& k, const std::string& v) { o.x_max = parse_number<double>(k, v); }},
      {"step", [](CliOptions& o, const std::string& k, const std::string& v) { o.step = parse_number<double>(k, v); }},
      {"bench_size", [](CliOptions& o, const std::string& k, const std::string& v) { o.bench_size = parse_count(k, v); }},
      {"bench_reps", [](CliOptions& o, const std::string& k, const std::string& v) { o.bench_reps = parse_count(k, v); }},
      {"dataset", [](CliOptions& o, const std::string&, const std::string& v) { o.dataset = v; }},
      {"data_root", [](CliOptions& o, const std::string&, const std::string& v) { o.data_root = v; }},
      {"synthetic", [](CliOptions& o, const std::string& k, const std::string& v) { o.synthetic = parse_bool(k, v); }},
      {"desk_scale", [](CliOptions& o, const std::string& k, const std::string& v) { o.desk_scale = parse_bool(k, v); }},
      {"activation", [](CliOptions& o, const std::string&, const std::string& v) { o.activation = v; }},
      {"activations", [](CliOptions& o, const std::string&, const std::string& v) { o.activations = split_list(v); }},
      {"norm", [](CliOptions& o, const std::string&, const std::string& v) { o.norm = v; }},
      {"epochs", [](CliOptions& o, const std::string& k, const std::string& v) { o.epochs = parse_count(k, v); }},
      {"batch_size", [](CliOptions& o, const std::string& k, const std::string& v) { o.batch_size = parse_count(k, v); }},
      {"lr", [](CliOptions& o, const std::string& k, const std::string& v) { o.lr = parse_number<double>(k, v); }},
      {"train_subset",
       [](CliOptions& o, const std::string& k, const std::string& v) { o.train_subset = parse_count(k, v); }},
      {"test_subset", [](CliOptions& o, const std::string& k, const std::string& v) { o.test_subset = parse_count(k, v); }},
      {"width_divisor",
       [](CliOptions& o, const std::string& k, const std::string& v) { o.width_divisor = parse_count(k, v); }},
      {"record_time",
       [](CliOptions& o, const std::string& k, const std::string& v) { o.record_time = parse_bool(k, v); }},
  };
  return table;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  body(os);
  os.flush();
  if (!os) throw IoError("write failure on " + path.string());
}

Precision precision_or(const CliOptions& opts, Precision fallback) { return opts.precision.value_or(fallback); }

std::string joined_activation_names() {
  std::string s;
  for (const auto& n : activation_names()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

// Resolves function names for plot-data; "comparison" expands to the comparison set.
std::vector<ActivationKind> resolve_functions(const std::vector<std::string>& names) {
  std::vector<ActivationKind> kinds;
  for (const auto& n : names) {
    if (n == "comparison") {
      for (const auto& f : comparison_set_functions()) kinds.push_back(parse_activation(f));
    } else if (n == "all") {
      kinds.insert(kinds.end(), kAllActivations.begin(), kAllActivations.end());
    } else {
      kinds.push_back(parse_activation(n));
    }
  }
  if (kinds.empty()) throw ConfigError("plot-data needs at least one function");
  return kinds;
}

template <typename T>
void plot_rows(std::ostream& os, const std::vector<ActivationKind>& kinds, const std::vector<double>& xs) {
  Tensor<T> x({xs.size()});
  for (std::size_t i = 0; i < xs.size(); ++i) x[i] = static_cast<T>(xs[i]);
  for (ActivationKind kind : kinds) {
    const Activation act{kind, {}};
    const Tensor<T> f = apply_activation(act, x);
    const Tensor<T> df = activation_derivative(act, x);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      os << activation_name(kind) << ',' << ex::format_double(static_cast<double>(x[i])) << ','
         << ex::format_double(static_cast<double>(f[i])) << ',' << ex::format_double(static_cast<double>(df[i]))
         << '\n';
    }
  }
}

template <typename T>
double median_rate(std::size_t reps, std::size_t n, const std::function<void()>& work) {
  std::vector<double> rates;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    work();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rates.push_back(static_cast<double>(n) / std::max(secs, 1e-12));
  }
  std::sort(rates.begin(), rates.end());
  const std::size_t m = rates.size() / 2;
  return rates.size() % 2 ? rates[m] : 0.5 * (rates[m - 1] + rates[m]);
}

template <typename T>
void bench_rows(std::ostream& os, const CliOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  const Tensor<T> x = random_normal<T>({opts.bench_size}, rng, T{3});
  volatile T sink = T{0};
  for (ActivationKind kind : kAllActivations) {
    const Activation act{kind, {}};
    const double fwd = median_rate<T>(opts.bench_reps, opts.bench_size, [&] { sink = apply_activation(act, x)[0]; });
    const double bwd =
        median_rate<T>(opts.bench_reps, opts.bench_size, [&] { sink = activation_derivative(act, x)[0]; });
    os << activation_name(kind) << ',' << ex::format_double(fwd) << ',' << ex::format_double(bwd) << '\n';
  }
  (void)sink;
}

// Architecture and protocol details that the reference setup leaves open.
constexpr const char* kFillInNote =
    "note: widths 64/128/256, He-normal init, [0,1] scaling + per-channel standardization, no augmentation and "
    "no weight decay are filled-in choices; numbers are not exact reproductions\n";

ex::ExperimentConfig experiment_config(const CliOptions& opts) {
  if (precision_or(opts, Precision::kTraining) != Precision::kTraining) {
    throw ConfigError("train and compare run in training precision only");
  }
  ex::ExperimentConfig cfg;
  cfg.dataset.name = opts.synthetic ? ex::DatasetName::kSynthetic : ex::parse_dataset(opts.dataset);
  if (cfg.dataset.name != ex::DatasetName::kSynthetic) {
    if (opts.data_root.empty()) {
      throw ConfigError("dataset '" + opts.dataset + "' needs --data-root (or pass --synthetic)");
    }
    if (!fs::is_directory(opts.data_root)) throw IoError("data root " + opts.data_root.string() + " is not a directory");
  }
  cfg.dataset.root = opts.data_root;
  cfg.activation.kind = parse_activation(opts.activation);
  cfg.norm = parse_norm(opts.norm);
  cfg.seed = opts.seed;
  cfg.width_divisor = opts.width_divisor;
  cfg.record_time = opts.record_time;
  if (opts.desk_scale) cfg = ex::desk_scale(cfg);
  if (opts.epochs) cfg.epochs = *opts.epochs;
  if (opts.batch_size) cfg.batch_size = *opts.batch_size;
  if (opts.lr) cfg.lr = *opts.lr;
  if (opts.train_subset) cfg.train_subset = *opts.train_subset;
  if (opts.test_subset) cfg.test_subset = *opts.test_subset;
  cfg.validate();
  return cfg;
}

}  // namespace

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(CliOptions& opts, const std::string& key, const std::string& value) {
  const std::string k = normalize_key(key);
  const auto it = setters().find(k);
  if (it == setters().end()) {
    std::string known;
    for (const auto& n : setting_keys()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown setting '" + key + "'; known settings: " + known);
  }
  it->second(opts, k, value);
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
    for (const auto& [key, v] : j.items()) {
      if (v.is_string()) {
        out[normalize_key(key)] = v.get<std::string>();
      } else if (v.is_array()) {
        std::string joined;
        for (const auto& item : v) {
          joined += (joined.empty() ? "" : ",") + (item.is_string() ? item.get<std::string>() : item.dump());
        }
        out[normalize_key(key)] = joined;
      } else if (v.is_primitive() && !v.is_null()) {
        out[normalize_key(key)] = v.dump();
      } else {
        throw ConfigError("config key '" + key + "' must be a string, number, boolean or list");
      }
    }
    return out;
  }
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
    }
    out[normalize_key(trim(line.substr(0, eq)))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

const std::vector<std::string>& comparison_set_functions() {
  static const std::vector<std::string> names = {"sigmoid",  "tanh", "leaky_relu", "softplus", "softsign", "gelu",
                                                 "prelu",    "rrelu", "celu",      "elu",      "selu",     "logsigmoid"};
  return names;
}

int run_verify(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  if (precision_or(opts, Precision::kAnalysis) != Precision::kAnalysis) {
    throw ConfigError("verify runs in analysis precision only");
  }
  analysis::AnalysisOptions ao;
  ao.grid_step = opts.grid_step;
  ao.lipschitz_pairs = opts.lipschitz_pairs;
  ao.composition_batches = opts.composition_batches;
  ao.seed = opts.seed;
  ao.constants = opts.gelu_constants;
  const auto claims = analysis::run_claims(ao);
  write_file(opts.out_dir / "claims.csv", [&](std::ostream& os) { analysis::write_claims_csv(os, claims); });
  write_file(opts.out_dir / "claims.txt", [&](std::ostream& os) { analysis::write_claims_text(os, claims); });
  analysis::write_claims_text(out, claims);
  if (!analysis::all_pass(claims)) {
    err << "verify: one or more claims failed\n";
    return kClaimFailure;
  }
  return kSuccess;
}

int run_plot_data(const CliOptions& opts, std::ostream& out, std::ostream&) {
  const auto kinds = resolve_functions(opts.functions);
  if (!(opts.step > 0.0) || !(opts.x_max >= opts.x_min)) {
    throw ConfigError("plot-data needs x_min <= x_max and a positive step");
  }
  const auto n = static_cast<std::size_t>(std::llround((opts.x_max - opts.x_min) / opts.step));
  std::vector<double> xs(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    xs[i] = n == 0 ? opts.x_min : opts.x_min + (opts.x_max - opts.x_min) * static_cast<double>(i) / static_cast<double>(n);
  }
  const fs::path path = opts.out_dir / "plot_data.csv";
  write_file(path, [&](std::ostream& os) {
    os << "function,x,f,df\n";
    if (precision_or(opts, Precision::kAnalysis) == Precision::kAnalysis) {
      plot_rows<double>(os, kinds, xs);
    } else {
      plot_rows<float>(os, kinds, xs);
    }
  });
  out << "wrote " << kinds.size() * xs.size() << " rows to " << path.string() << '\n';
  return kSuccess;
}

int run_bench(const CliOptions& opts, std::ostream& out, std::ostream&) {
  if (opts.bench_size == 0 || opts.bench_reps < 5) throw ConfigError("bench needs bench_size >= 1 and bench_reps >= 5");
  std::ostringstream rows;
  if (precision_or(opts, Precision::kTraining) == Precision::kTraining) {
    bench_rows<float>(rows, opts);
  } else {
    bench_rows<double>(rows, opts);
  }
  const fs::path path = opts.out_dir / "bench.csv";
  write_file(path, [&](std::ostream& os) {
    os << "activation,forward_elements_per_second,derivative_elements_per_second\n" << rows.str();
  });
  out << "activation,forward_elements_per_second,derivative_elements_per_second\n" << rows.str();
  return kSuccess;
}

int run_train(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  ex::ExperimentConfig cfg = experiment_config(opts);
  cfg.out_dir = opts.out_dir;
  err << kFillInNote;
  const auto result = ex::train(cfg);
  ex::write_metrics_csv(out, result.records);
  if (result.failed) err << "train: run failed: " << result.error << '\n';
  return kSuccess;
}

int run_compare(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  ex::ExperimentConfig cfg = experiment_config(opts);
  cfg.out_dir = opts.out_dir;
  err << kFillInNote;
  std::vector<ActivationKind> kinds;
  if (opts.activations.empty()) {
    kinds.assign(kAllActivations.begin(), kAllActivations.end());
  } else {
    for (const auto& n : opts.activations) kinds.push_back(parse_activation(n));
  }
  const auto rows = ex::compare_activations(cfg, kinds);
  ex::write_comparison_csv(out, rows);
  return kSuccess;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Activation-function laboratory: GELU analysis, plotting data, benchmarks and ResNet training."};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer("Activation names: " + joined_activation_names() +
             "\nExit codes: 0 success, 1 claim failure, 2 usage/config error, 3 I/O error.");

  std::string config_path;
  app.add_option("--config", config_path, "Settings file (key=value lines or a flat JSON object); flags override it");

  const std::map<std::string, std::string> help = {
      {"out_dir", "Directory for every output file (default: out)"},
      {"seed", "Seed for all randomness"},
      {"precision", "analysis (double) or training (float)"},
      {"grid_step", "Grid step for the claims suite (default 1e-4)"},
      {"lipschitz_pairs", "Random pairs for the Lipschitz check"},
      {"composition_batches", "Random batches for the composition bound"},
      {"functions", "plot-data functions, comma separated; 'comparison' = the 12-function comparison set, 'all' = every kind"},
      {"x_min", "plot-data range start"},
      {"x_max", "plot-data range end"},
      {"step", "plot-data step"},
      {"bench_size", "bench tensor length"},
      {"bench_reps", "bench repetitions (>= 5)"},
      {"dataset", "cifar10, cifar100 or stl10"},
      {"data_root", "Directory holding the dataset binaries"},
      {"activation", "Activation for train: " + joined_activation_names()},
      {"activations", "Comma-separated activations for compare: " + joined_activation_names()},
      {"norm", "batch, layer or group"},
      {"epochs", "Training epochs"},
      {"batch_size", "Mini-batch size"},
      {"lr", "Adam learning rate"},
      {"train_subset", "Use only the first N training images"},
      {"test_subset", "Use only the first N test images"},
      {"width_divisor", "Divide every network width by this factor"},
  };
  const std::vector<std::string> flag_keys = {"synthetic", "desk_scale", "record_time"};
  const std::map<std::string, std::string> flag_help = {
      {"synthetic", "Use the generated class-blob dataset instead of files"},
      {"desk_scale", "5000/1000 subset, 3 epochs"},
      {"record_time", "Fill the seconds column with wall-clock time (breaks byte-identical reruns)"},
  };

  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, bool> flags;
  for (const auto& key : setting_keys()) {
    if (std::find(flag_keys.begin(), flag_keys.end(), key) != flag_keys.end()) {
      options[key] = app.add_flag("--" + dashed(key), flags[key], flag_help.at(key));
    } else {
      options[key] = app.add_option("--" + dashed(key), raw[key], help.at(key));
    }
  }

  app.add_subcommand("verify", "Run the GELU claims suite; writes claims.csv and claims.txt");
  app.add_subcommand("plot-data", "Write x, f(x), f'(x) samples to plot_data.csv");
  app.add_subcommand("bench", "Measure activation throughput; writes bench.csv");
  app.add_subcommand("train", "Train one network; writes metrics.csv");
  app.add_subcommand("compare", "Train one network per activation; writes comparison.csv and metrics.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    CliOptions opts;
    opts.subcommand = app.get_subcommands().front()->get_name();
    if (!config_path.empty()) {
      for (const auto& [key, value] : read_config_file(config_path)) apply_setting(opts, key, value);
    }
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      const bool is_flag = flags.count(key) != 0;
      apply_setting(opts, key, is_flag ? (flags[key] ? "true" : "false") : raw[key]);
    }
    if (opts.subcommand == "verify") return run_verify(opts, out, err);
    if (opts.subcommand == "plot-data") return run_plot_data(opts, out, err);
    if (opts.subcommand == "bench") return run_bench(opts, out, err);
    if (opts.subcommand == "train") return run_train(opts, out, err);
    return run_compare(opts, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

}  // namespace actlab::cli
