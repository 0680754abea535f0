#include "vmdetect/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "vmdetect/error.hpp"

namespace vmdetect {

LabeledData Dataset::subset(Split s) const {
  LabeledData out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (split.size() == inputs.size() && split[i] != s) continue;
    out.inputs.push_back(inputs[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

void Dataset::validate() const {
  if (inputs.empty()) throw DataError("dataset is empty");
  if (labels.size() != inputs.size()) throw DataError("labels and inputs differ in length");
  const auto d = dim();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != d)
      throw ShapeError("row " + std::to_string(i) + " has dimension " +
                       std::to_string(inputs[i].size()) + ", expected " + std::to_string(d));
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw DataError("row " + std::to_string(i) + " label out of range");
    if ((inputs[i].array() < 0.0).any() || (inputs[i].array() > 1.0).any())
      throw DataError("row " + std::to_string(i) + " is not normalized to [0,1]");
  }
}

namespace {

bool parse_double(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r' || field.back() == '\t'))
    field.remove_suffix(1);
  if (field.empty()) return false;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw DataError(path.string() + ": truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, Normalization norm) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::vector<Eigen::Index> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    double label = 0.0;
    if (!parse_double(fields[0], label)) {
      if (rows.empty() && labels.empty() && line_no == 1) continue;  // header
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed label");
    }
    if (label < 0.0 || label != std::floor(label))
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": label must be a nonnegative integer");
    if (fields.size() < 2)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": no feature columns");
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw ShapeError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width - 1) + " features, got " +
                       std::to_string(fields.size() - 1));
    std::vector<double> values(fields.size() - 1);
    for (std::size_t j = 1; j < fields.size(); ++j)
      if (!parse_double(fields[j], values[j - 1]) || !std::isfinite(values[j - 1]))
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed value in column " +
                        std::to_string(j + 1));
    rows.push_back(std::move(values));
    labels.push_back(static_cast<Eigen::Index>(label));
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");

  const std::size_t d = width - 1;
  double lo = rows[0][0], hi = rows[0][0];
  bool integral = true;
  for (const auto& r : rows)
    for (const double v : r) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      integral = integral && v == std::floor(v);
    }
  if (norm == Normalization::automatic) {
    if (lo >= 0.0 && hi <= 1.0)
      norm = Normalization::none;
    else if (integral && lo >= 0.0 && hi <= 255.0)
      norm = Normalization::byte;
    else
      throw DataError(path.string() + ": values outside [0,1] and not bytes; choose a normalization");
  }

  std::vector<double> fmin(d, 0.0), fmax(d, 1.0);
  if (norm == Normalization::minmax) {
    for (std::size_t j = 0; j < d; ++j) {
      fmin[j] = fmax[j] = rows[0][j];
      for (const auto& r : rows) {
        fmin[j] = std::min(fmin[j], r[j]);
        fmax[j] = std::max(fmax[j], r[j]);
      }
    }
  }

  Dataset data;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Vector x(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
      const double v = rows[i][j];
      switch (norm) {
        case Normalization::byte: x(static_cast<Eigen::Index>(j)) = v / 255.0; break;
        case Normalization::minmax: {
          const double span = fmax[j] - fmin[j];
          x(static_cast<Eigen::Index>(j)) = span > 0.0 ? (v - fmin[j]) / span : 0.0;
          break;
        }
        default: x(static_cast<Eigen::Index>(j)) = v;
      }
    }
    data.inputs.push_back(std::move(x));
  }
  data.labels = std::move(labels);
  data.num_classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  data.validate();
  return data;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  std::ifstream img(images, std::ios::binary);
  if (!img) throw DataError("cannot open " + images.string());
  std::ifstream lab(labels, std::ios::binary);
  if (!lab) throw DataError("cannot open " + labels.string());

  const auto img_magic = read_be32(img, images);
  if (img_magic != 0x00000803)
    throw DataError(images.string() + ": bad IDX magic number (expected 0x00000803)");
  const auto count = read_be32(img, images);
  const auto rows = read_be32(img, images);
  const auto cols = read_be32(img, images);
  const auto lab_magic = read_be32(lab, labels);
  if (lab_magic != 0x00000801)
    throw DataError(labels.string() + ": bad IDX magic number (expected 0x00000801)");
  const auto label_count = read_be32(lab, labels);
  if (label_count != count)
    throw DataError("IDX image count " + std::to_string(count) + " != label count " +
                    std::to_string(label_count));

  const std::size_t pixels = std::size_t{rows} * cols;
  if (pixels == 0) throw ShapeError(images.string() + ": zero-sized images");
  Dataset data;
  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t n = 0; n < count; ++n) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels)))
      throw DataError(images.string() + ": truncated image data");
    Vector x(static_cast<Eigen::Index>(pixels));
    for (std::size_t j = 0; j < pixels; ++j) x(static_cast<Eigen::Index>(j)) = buf[j] / 255.0;
    data.inputs.push_back(std::move(x));
    char l = 0;
    if (!lab.read(&l, 1)) throw DataError(labels.string() + ": truncated label data");
    data.labels.push_back(static_cast<unsigned char>(l));
  }
  data.num_classes = data.labels.empty()
                         ? 0
                         : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  data.validate();
  return data;
}

Dataset make_two_moons(std::size_t samples, double noise, std::uint64_t seed) {
  if (samples < 2) throw ConfigError("two-moons needs at least two samples");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  std::normal_distribution<double> jitter(0.0, noise);
  Dataset data;
  data.num_classes = 2;
  for (std::size_t i = 0; i < samples; ++i) {
    const Eigen::Index label = static_cast<Eigen::Index>(i % 2);
    const double t = angle(rng);
    double u = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double v = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
    u += jitter(rng);
    v += jitter(rng);
    // Raw support is roughly [-1.5, 2.5] x [-1.0, 1.5].
    Vector x(2);
    x << std::clamp((u + 1.5) / 4.0, 0.0, 1.0), std::clamp((v + 1.0) / 2.5, 0.0, 1.0);
    data.inputs.push_back(std::move(x));
    data.labels.push_back(label);
  }
  return data;
}

void assign_splits(Dataset& data, double train_fraction, double val_fraction, std::uint64_t seed) {
  if (train_fraction <= 0.0 || val_fraction < 0.0 || train_fraction + val_fraction >= 1.0)
    throw ConfigError("split fractions must satisfy train > 0, val >= 0, train + val < 1");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(data.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * n));
  data.split.assign(data.size(), Split::test);
  for (std::size_t k = 0; k < order.size(); ++k)
    data.split[order[k]] = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "label";
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << ",x" << j;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << ',' << data.inputs[i](j);
    out << '\n';
  }
}

}  // namespace vmdetect
