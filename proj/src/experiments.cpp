#include "actlab/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "actlab/autodiff.hpp"
#include "actlab/losses.hpp"
#include "actlab/optimizers.hpp"

namespace actlab::experiments {

namespace fs = std::filesystem;

std::string_view dataset_name(DatasetName name) {
  switch (name) {
    case DatasetName::kCifar10:
      return "cifar10";
    case DatasetName::kCifar100:
      return "cifar100";
    case DatasetName::kStl10:
      return "stl10";
    case DatasetName::kSynthetic:
      return "synthetic";
  }
  throw ContractError("unknown dataset");
}

DatasetName parse_dataset(std::string_view name) {
  for (auto d : {DatasetName::kCifar10, DatasetName::kCifar100, DatasetName::kStl10, DatasetName::kSynthetic}) {
    if (dataset_name(d) == name) return d;
  }
  throw ConfigError("unknown dataset '" + std::string(name) + "'; expected cifar10, cifar100, stl10 or synthetic");
}

std::pair<std::size_t, std::size_t> official_sizes(DatasetName name) {
  switch (name) {
    case DatasetName::kCifar10:
    case DatasetName::kCifar100:
      return {50000, 10000};
    case DatasetName::kStl10:
      return {5000, 8000};
    case DatasetName::kSynthetic:
      break;
  }
  throw ContractError("synthetic data has no official size");
}

namespace {

constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kStlSide = 96;
constexpr std::size_t kStlPixels = 3 * kStlSide * kStlSide;

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure in " + path.string());
  return bytes;
}

fs::path resolve_dir(const fs::path& root, const char* nested) {
  const fs::path inner = root / nested;
  return fs::is_directory(inner) ? inner : root;
}

// CIFAR layout: per record `label_bytes` label bytes then 3072 channel-planar
// pixels. The last label byte is the one kept.
void append_cifar(const fs::path& file, std::size_t label_bytes, std::size_t num_classes,
                  std::vector<float>& pixels, std::vector<int>& labels) {
  const auto bytes = read_file(file);
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.empty()) throw FormatError(file.string() + ": empty file");
  if (bytes.size() % record != 0) {
    throw FormatError(file.string() + ": truncated record at byte offset " +
                      std::to_string(bytes.size() / record * record) + " (record length " + std::to_string(record) +
                      ", file length " + std::to_string(bytes.size()) + ")");
  }
  for (std::size_t off = 0; off < bytes.size(); off += record) {
    const int label = bytes[off + label_bytes - 1];
    if (static_cast<std::size_t>(label) >= num_classes) {
      throw FormatError(file.string() + ": label " + std::to_string(label) + " out of range at byte offset " +
                        std::to_string(off + label_bytes - 1));
    }
    labels.push_back(label);
    for (std::size_t p = 0; p < kCifarPixels; ++p) pixels.push_back(static_cast<float>(bytes[off + label_bytes + p]) / 255.0f);
  }
}

Dataset finish(std::vector<float> pixels, std::vector<int> labels, std::size_t c, std::size_t h, std::size_t w,
               std::size_t classes) {
  Dataset d;
  const std::size_t n = labels.size();
  d.images = Tensor<float>({n, c, h, w}, std::move(pixels));
  d.labels = std::move(labels);
  d.num_classes = classes;
  return d;
}

}  // namespace

Dataset load_cifar10(const fs::path& root, Split split) {
  const fs::path dir = resolve_dir(root, "cifar-10-batches-bin");
  std::vector<float> pixels;
  std::vector<int> labels;
  if (split == Split::kTrain) {
    for (int i = 1; i <= 5; ++i) {
      append_cifar(dir / ("data_batch_" + std::to_string(i) + ".bin"), 1, 10, pixels, labels);
    }
  } else {
    append_cifar(dir / "test_batch.bin", 1, 10, pixels, labels);
  }
  return finish(std::move(pixels), std::move(labels), 3, 32, 32, 10);
}

Dataset load_cifar100(const fs::path& root, Split split) {
  const fs::path dir = resolve_dir(root, "cifar-100-binary");
  std::vector<float> pixels;
  std::vector<int> labels;
  append_cifar(dir / (split == Split::kTrain ? "train.bin" : "test.bin"), 2, 100, pixels, labels);
  return finish(std::move(pixels), std::move(labels), 3, 32, 32, 100);
}

Dataset load_stl10(const fs::path& root, Split split) {
  const fs::path dir = resolve_dir(root, "stl10_binary");
  const std::string prefix = split == Split::kTrain ? "train" : "test";
  const fs::path xfile = dir / (prefix + "_X.bin");
  const fs::path yfile = dir / (prefix + "_y.bin");
  const auto x = read_file(xfile);
  const auto y = read_file(yfile);
  if (x.empty() || x.size() % kStlPixels != 0) {
    throw FormatError(xfile.string() + ": truncated image at byte offset " +
                      std::to_string(x.size() / kStlPixels * kStlPixels));
  }
  const std::size_t n = x.size() / kStlPixels;
  if (y.size() != n) {
    throw FormatError("stl10 size mismatch: " + std::to_string(n) + " images in " + xfile.string() + " but " +
                      std::to_string(y.size()) + " labels in " + yfile.string());
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] < 1 || y[i] > 10) {
      throw FormatError(yfile.string() + ": label " + std::to_string(y[i]) + " outside 1..10 at byte offset " +
                        std::to_string(i));
    }
    labels[i] = y[i] - 1;
  }
  // Stored column-major within each channel plane: byte (c, col, row).
  std::vector<float> pixels(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const unsigned char* plane = x.data() + i * kStlPixels + c * kStlSide * kStlSide;
      float* out = pixels.data() + i * kStlPixels + c * kStlSide * kStlSide;
      for (std::size_t col = 0; col < kStlSide; ++col) {
        for (std::size_t row = 0; row < kStlSide; ++row) {
          out[row * kStlSide + col] = static_cast<float>(plane[col * kStlSide + row]) / 255.0f;
        }
      }
    }
  }
  return finish(std::move(pixels), std::move(labels), 3, kStlSide, kStlSide, 10);
}

Dataset make_synthetic(const SyntheticSpec& spec, Split split) {
  if (spec.num_classes == 0 || spec.channels == 0 || spec.height == 0 || spec.width == 0) {
    throw ConfigError("synthetic dataset needs positive class count and image shape");
  }
  // Prototypes depend on the seed only, so both splits share them.
  std::mt19937_64 proto_rng(spec.seed);
  std::uniform_real_distribution<double> freq(0.2, 1.2), phase(0.0, 2.0 * std::numbers::pi);
  const std::size_t plane = spec.height * spec.width;
  const std::size_t pixels_per = spec.channels * plane;
  std::vector<std::vector<double>> protos(spec.num_classes, std::vector<double>(pixels_per));
  for (auto& p : protos) {
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const double fx = freq(proto_rng), fy = freq(proto_rng), ph = phase(proto_rng);
      for (std::size_t h = 0; h < spec.height; ++h) {
        for (std::size_t w = 0; w < spec.width; ++w) {
          p[c * plane + h * spec.width + w] =
              std::sin(fx * static_cast<double>(w) + fy * static_cast<double>(h) + ph);
        }
      }
    }
  }
  const std::size_t n = split == Split::kTrain ? spec.train_size : spec.test_size;
  std::mt19937_64 rng(mix_seed(spec.seed, split == Split::kTrain ? 1 : 2));
  std::normal_distribution<double> noise(0.0, spec.noise);
  std::vector<float> pixels(n * pixels_per);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % spec.num_classes;
    labels[i] = static_cast<int>(label);
    for (std::size_t p = 0; p < pixels_per; ++p) {
      pixels[i * pixels_per + p] = static_cast<float>(protos[label][p] + noise(rng));
    }
  }
  return finish(std::move(pixels), std::move(labels), spec.channels, spec.height, spec.width, spec.num_classes);
}

ChannelStats channel_stats(const Dataset& data) {
  const auto& shape = data.images.shape();
  if (shape.size() != 4 || shape[0] == 0) throw ContractError("channel_stats needs a non-empty [N,C,H,W] dataset");
  const std::size_t n = shape[0], c = shape[1], plane = shape[2] * shape[3];
  ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const auto px = data.images.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = px.data() + (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) sum += p[k];
    }
    const double mean = sum / static_cast<double>(n * plane);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = px.data() + (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) sq += (p[k] - mean) * (p[k] - mean);
    }
    s.mean[ch] = mean;
    s.stddev[ch] = std::max(std::sqrt(sq / static_cast<double>(n * plane)), 1e-8);
  }
  return s;
}

void standardize(Dataset& data, const ChannelStats& stats) {
  const auto& shape = data.images.shape();
  const std::size_t n = shape[0], c = shape[1], plane = shape[2] * shape[3];
  if (stats.mean.size() != c) throw DimensionError("standardize: channel count mismatch");
  auto px = data.images.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      float* p = px.data() + (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] = static_cast<float>((p[k] - stats.mean[ch]) / stats.stddev[ch]);
    }
  }
}

Dataset take(const Dataset& data, std::size_t n) {
  if (n == 0 || n >= data.size()) return data;
  Dataset out;
  Shape shape = data.images.shape();
  const std::size_t per = data.images.size() / shape[0];
  shape[0] = n;
  out.images = Tensor<float>(shape, std::vector<float>(data.images.data().begin(), data.images.data().begin() + n * per));
  out.labels.assign(data.labels.begin(), data.labels.begin() + n);
  out.num_classes = data.num_classes;
  return out;
}

DataSplits load_splits(const DatasetSpec& spec, std::size_t train_subset, std::size_t test_subset) {
  DataSplits s;
  switch (spec.name) {
    case DatasetName::kCifar10:
      s.train = load_cifar10(spec.root, Split::kTrain);
      s.test = load_cifar10(spec.root, Split::kTest);
      break;
    case DatasetName::kCifar100:
      s.train = load_cifar100(spec.root, Split::kTrain);
      s.test = load_cifar100(spec.root, Split::kTest);
      break;
    case DatasetName::kStl10:
      s.train = load_stl10(spec.root, Split::kTrain);
      s.test = load_stl10(spec.root, Split::kTest);
      break;
    case DatasetName::kSynthetic:
      s.train = make_synthetic(spec.synthetic, Split::kTrain);
      s.test = make_synthetic(spec.synthetic, Split::kTest);
      break;
  }
  s.train = take(s.train, train_subset);
  s.test = take(s.test, test_subset);
  s.stats = channel_stats(s.train);
  standardize(s.train, s.stats);
  standardize(s.test, s.stats);
  return s;
}

void ExperimentConfig::validate() const {
  activation.validate();
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (width_divisor == 0) throw ConfigError("width_divisor must be >= 1");
}

ExperimentConfig desk_scale(ExperimentConfig base) {
  base.train_subset = 5000;
  base.test_subset = 1000;
  base.epochs = 3;
  return base;
}

Tensor<float> batch_images(const Dataset& data, std::span<const std::size_t> indices) {
  Shape shape = data.images.shape();
  const std::size_t per = data.images.size() / shape[0];
  shape[0] = indices.size();
  Tensor<float> out(shape);
  auto dst = out.data();
  const auto src = data.images.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    std::copy_n(src.begin() + indices[k] * per, per, dst.begin() + k * per);
  }
  return out;
}

EvalResult evaluate(const Classifier& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("evaluate: empty split");
  if (batch_size == 0) throw ConfigError("evaluate: batch_size must be >= 1");
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < data.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - first);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), first);
    const Tensor<float> logits = model(batch_images(data, idx));
    if (logits.rank() != 2 || logits.dim(0) != count) throw DimensionError("evaluate: model returned " + shape_str(logits.shape()));
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < count; ++i) {
      const float* row = logits.data().data() + i * k;
      const int label = data.labels[first + i];
      double mx = row[0];
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (row[j] > mx) {
          mx = row[j];
          arg = j;
        }
      }
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
      loss += mx + std::log(s) - static_cast<double>(row[label]);
      correct += arg == static_cast<std::size_t>(label) ? 1 : 0;
    }
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, 100.0 * static_cast<double>(correct) / n};
}

EvalResult evaluate(Network<float>& net, const Dataset& data, std::size_t batch_size) {
  return evaluate([&net](const Tensor<float>& images) { return net.predict(images, Mode::kEval); }, data, batch_size);
}

namespace {

NetworkConfig network_for(const ExperimentConfig& config, const Dataset& train) {
  NetworkConfig nc;
  nc.activation = config.activation;
  nc.norm = config.norm;
  nc.in_channels = train.images.dim(1);
  nc.num_classes = train.num_classes;
  nc = nc.narrowed(config.width_divisor);
  if (nc.norm == NormKind::kGroup) nc.norm_groups = std::min<std::size_t>(nc.norm_groups, nc.stem_width);
  return nc;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace

TrainResult train(const ExperimentConfig& config, const DataSplits& data) {
  config.validate();
  if (data.train.size() == 0) throw ConfigError("train: empty training split");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const std::string name(activation_name(config.activation.kind));

  TrainResult result;
  Network<float> net(network_for(config, data.train), config.seed);
  AdamState adam(AdamConfig{config.lr});
  std::vector<std::size_t> order(data.train.size());
  std::vector<int> labels;
  std::vector<Tensor<float>> grads;
  std::uint64_t step = 0;
  try {
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5eed0000ULL + epoch));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double loss_sum = 0.0;
      for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
        const std::size_t count = std::min(config.batch_size, order.size() - first);
        const std::span<const std::size_t> idx(order.data() + first, count);
        labels.resize(count);
        for (std::size_t i = 0; i < count; ++i) labels[i] = data.train.labels[idx[i]];

        Graph<float> g;
        auto pass = net.bind(g, true, mix_seed(config.seed, step));
        Var x = g.constant(batch_images(data.train, idx), "images");
        Var logits = net.forward(g, pass, x, Mode::kTrain);
        Var loss = g.cross_entropy(logits, labels);
        const double loss_value = static_cast<double>(g.value(loss).item());
        if (step == 0) result.initial_loss = loss_value;
        const auto gradients = g.backward(loss);
        grads.clear();
        for (Var leaf : pass.leaves) grads.push_back(gradients[leaf]);
        adam_step(adam, net.parameters(), grads);
        loss_sum += loss_value * static_cast<double>(count);
        ++step;
      }
      const EvalResult test = evaluate(net, data.test, config.batch_size);
      MetricsRecord rec;
      rec.activation = name;
      rec.epoch = epoch;
      rec.train_loss = loss_sum / static_cast<double>(order.size());
      rec.test_loss = test.loss;
      rec.test_acc = test.accuracy;
      if (config.record_time) rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
      result.records.push_back(rec);
    }
  } catch (const NonFiniteError& e) {
    result.failed = true;
    result.error = e.what();
  }
  if (!config.out_dir.empty()) {
    write_file(config.out_dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, result.records); });
  }
  return result;
}

TrainResult train(const ExperimentConfig& config) {
  config.validate();
  return train(config, load_splits(config.dataset, config.train_subset, config.test_subset));
}

std::vector<ComparisonRow> compare_activations(const ExperimentConfig& base, const std::vector<ActivationKind>& kinds,
                                               std::vector<TrainResult>* runs) {
  if (kinds.empty()) throw ConfigError("compare_activations: need at least one activation");
  base.validate();
  const DataSplits data = load_splits(base.dataset, base.train_subset, base.test_subset);
  std::vector<ComparisonRow> rows;
  std::vector<MetricsRecord> all_records;
  for (ActivationKind kind : kinds) {
    ExperimentConfig cfg = base;
    cfg.activation.kind = kind;
    cfg.out_dir.clear();
    TrainResult r = train(cfg, data);
    ComparisonRow row;
    row.activation = std::string(activation_name(kind));
    if (r.failed || r.records.empty()) {
      row.status = "failed";
      row.test_loss = std::numeric_limits<double>::quiet_NaN();
      row.test_acc = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.status = "ok";
      row.test_loss = r.records.back().test_loss;
      row.test_acc = r.records.back().test_acc;
    }
    rows.push_back(row);
    all_records.insert(all_records.end(), r.records.begin(), r.records.end());
    if (runs) runs->push_back(std::move(r));
  }
  std::vector<std::size_t> ranked;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].status == "ok") ranked.push_back(i);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].test_acc != rows[b].test_acc) return rows[a].test_acc > rows[b].test_acc;
    return rows[a].test_loss < rows[b].test_loss;
  });
  if (rows.size() > 1 && !ranked.empty()) rows[ranked[0]].status = "best";
  if (rows.size() > 2 && ranked.size() > 1) rows[ranked[1]].status = "second";

  if (!base.out_dir.empty()) {
    write_file(base.out_dir / "comparison.csv", [&](std::ostream& os) { write_comparison_csv(os, rows); });
    write_file(base.out_dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, all_records); });
  }
  return rows;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw InternalError("format_double failed");
  return std::string(buf, ptr);
}

namespace {

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "' in csv");
  return v;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename F>
void read_rows(std::istream& is, const std::string& header, std::size_t columns, F&& on_row) {
  std::string line;
  if (!std::getline(is, line) || line != header) throw FormatError("csv header must be '" + header + "'");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_row(line);
    if (cells.size() != columns) throw FormatError("csv row has " + std::to_string(cells.size()) + " cells: " + line);
    on_row(cells);
  }
}

constexpr const char* kMetricsHeader = "activation,epoch,train_loss,test_loss,test_acc,seconds";
constexpr const char* kComparisonHeader = "activation,test_loss,test_acc,status";

}  // namespace

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << kMetricsHeader << '\n';
  for (const auto& r : records) {
    os << r.activation << ',' << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.test_loss)
       << ',' << format_double(r.test_acc) << ',' << format_double(r.seconds) << '\n';
  }
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& is) {
  std::vector<MetricsRecord> out;
  read_rows(is, kMetricsHeader, 6, [&](const std::vector<std::string>& c) {
    MetricsRecord r;
    r.activation = c[0];
    r.epoch = static_cast<std::size_t>(parse_double(c[1]));
    r.train_loss = parse_double(c[2]);
    r.test_loss = parse_double(c[3]);
    r.test_acc = parse_double(c[4]);
    r.seconds = parse_double(c[5]);
    out.push_back(r);
  });
  return out;
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  os << kComparisonHeader << '\n';
  for (const auto& r : rows) {
    os << r.activation << ',' << format_double(r.test_loss) << ',' << format_double(r.test_acc) << ',' << r.status
       << '\n';
  }
}

std::vector<ComparisonRow> read_comparison_csv(std::istream& is) {
  std::vector<ComparisonRow> out;
  read_rows(is, kComparisonHeader, 4, [&](const std::vector<std::string>& c) {
    out.push_back({c[0], parse_double(c[1]), parse_double(c[2]), c[3]});
  });
  return out;
}

}  // namespace actlab::experiments
