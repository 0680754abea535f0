#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vmdetect/network.hpp"

namespace vmdetect {

enum class Split { train, val, test };

// Inputs live in [0, 1]. `split` tags each row after assign_splits().
struct Dataset {
  std::vector<Vector> inputs;
  std::vector<Eigen::Index> labels;
  std::vector<Split> split;
  Eigen::Index num_classes = 0;

  std::size_t size() const { return inputs.size(); }
  Eigen::Index dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
  LabeledData subset(Split s) const;
  void validate() const;
};

// How raw CSV values are mapped into [0, 1].
//   automatic: values already in [0,1] are kept; integer data in [0,255] is
//              divided by 255; anything else is rejected.
//   byte:      v / 255.
//   minmax:    per-feature affine map of the observed range onto [0, 1].
enum class Normalization { automatic, byte, minmax, none };

// Rows of "label,v1,...,vd". A leading header row (non-numeric first field)
// is skipped.
Dataset load_csv(const std::filesystem::path& path, Normalization norm = Normalization::automatic);

// Big-endian IDX files: images (magic 0x00000803, ubyte) and labels
// (magic 0x00000801, ubyte). Pixels are divided by 255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Two interleaved half-circles with Gaussian jitter, mapped into [0, 1]^2.
Dataset make_two_moons(std::size_t samples, double noise, std::uint64_t seed);

// Deterministic seeded shuffle into train/val/test by fraction.
void assign_splits(Dataset& data, double train_fraction, double val_fraction, std::uint64_t seed);

void write_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace vmdetect
