#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "actlab/activations.hpp"
#include "actlab/normalization.hpp"
#include "actlab/resnet.hpp"
#include "actlab/tensor.hpp"

namespace actlab::experiments {

enum class DatasetName { kCifar10, kCifar100, kStl10, kSynthetic };
enum class Split { kTrain, kTest };

std::string_view dataset_name(DatasetName name);
DatasetName parse_dataset(std::string_view name);

/// Images [N,C,H,W] in training precision with integer labels.
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

/// Parameters of the generated class-blob dataset used when no files are
/// available. Each class has a smooth random prototype image; samples are the
/// prototype plus i.i.d. Gaussian pixel noise.
struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t train_size = 1000;
  std::size_t test_size = 200;
  std::size_t channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise = 0.5;
  std::uint64_t seed = 1234;
};

struct DatasetSpec {
  DatasetName name = DatasetName::kSynthetic;
  std::filesystem::path root;
  std::size_t num_classes = 10;
  SyntheticSpec synthetic{};
};

// Raw loaders: pixels scaled to [0,1], no standardization. Accept either the
// directory holding the .bin files or its parent (cifar-10-batches-bin/,
// cifar-100-binary/, stl10_binary/). Throw IoError for missing files and
// FormatError (with a byte offset) for truncated or malformed ones.
Dataset load_cifar10(const std::filesystem::path& root, Split split);
Dataset load_cifar100(const std::filesystem::path& root, Split split);
Dataset load_stl10(const std::filesystem::path& root, Split split);

/// Official split sizes (train, test) for the file-backed datasets.
std::pair<std::size_t, std::size_t> official_sizes(DatasetName name);

Dataset make_synthetic(const SyntheticSpec& spec, Split split);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats channel_stats(const Dataset& data);
void standardize(Dataset& data, const ChannelStats& stats);

/// First `n` samples (all if n is 0 or exceeds the size).
Dataset take(const Dataset& data, std::size_t n);

struct DataSplits {
  Dataset train;
  Dataset test;
  ChannelStats stats;  // computed on train only
};

/// Loads both splits, truncates to the subset sizes, then standardizes both
/// with statistics of the (truncated) training split.
DataSplits load_splits(const DatasetSpec& spec, std::size_t train_subset = 0, std::size_t test_subset = 0);

struct ExperimentConfig {
  DatasetSpec dataset{};
  Activation activation{};
  NormKind norm = NormKind::kBatch;
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double lr = 0.001;
  std::uint64_t seed = 0;
  std::size_t train_subset = 0;
  std::size_t test_subset = 0;
  /// Divides every network width (1 = full 64..256 widths).
  std::size_t width_divisor = 1;
  std::filesystem::path out_dir;
  /// Fill the `seconds` column with wall-clock time (non-deterministic).
  bool record_time = false;

  void validate() const;
};

/// The reduced protocol: 5000/1000 subset, 3 epochs.
ExperimentConfig desk_scale(ExperimentConfig base);

struct MetricsRecord {
  std::string activation;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double seconds = 0.0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct TrainResult {
  std::vector<MetricsRecord> records;
  /// Loss on the first batch before any update.
  double initial_loss = 0.0;
  bool failed = false;
  std::string error;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

using Classifier = std::function<Tensor<float>(const Tensor<float>& images)>;

/// Mean cross-entropy and top-1 accuracy (%) over the whole split.
EvalResult evaluate(const Classifier& model, const Dataset& data, std::size_t batch_size = 128);
EvalResult evaluate(Network<float>& net, const Dataset& data, std::size_t batch_size = 128);

/// Gathers the listed samples into one [k,C,H,W] batch.
Tensor<float> batch_images(const Dataset& data, std::span<const std::size_t> indices);

/// Trains with cross-entropy and Adam on pre-loaded splits. Writes
/// metrics.csv into config.out_dir when set.
TrainResult train(const ExperimentConfig& config, const DataSplits& data);
TrainResult train(const ExperimentConfig& config);

struct ComparisonRow {
  std::string activation;
  double test_loss = 0.0;
  double test_acc = 0.0;
  /// ok, best, second or failed
  std::string status;
};

/// Trains one network per kind with identical seed, data order and
/// initialization. Writes comparison.csv and metrics.csv into out_dir.
std::vector<ComparisonRow> compare_activations(const ExperimentConfig& base, const std::vector<ActivationKind>& kinds,
                                               std::vector<TrainResult>* runs = nullptr);

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(std::istream& is);
void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);
std::vector<ComparisonRow> read_comparison_csv(std::istream& is);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace actlab::experiments
