#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vmdetect/attacks.hpp"
#include "vmdetect/dataset.hpp"
#include "vmdetect/evaluation.hpp"
#include "vmdetect/sampling.hpp"

namespace vmdetect {

struct DataConfig {
  std::string format = "moons";  // moons | csv | idx
  std::filesystem::path path;
  std::filesystem::path labels;  // idx only
  std::size_t samples = 1000;    // moons only
  double noise = 0.1;            // moons only
  Normalization normalization = Normalization::automatic;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct NetworkConfig {
  std::vector<Eigen::Index> hidden{32, 32};
  TrainConfig train;
  std::filesystem::path path = "network.json";  // relative to the output dir
};

struct DetectConfig {
  SamplingConfig sampling;
  Statistic statistic = Statistic::mutual_information;
  double target_fpr = 0.05;
};

struct RunConfig {
  DataConfig data;
  NetworkConfig network;
  std::vector<AttackConfig> attacks;
  DetectConfig detect;
  SweepGrid sweep;
  std::filesystem::path output_dir = "out";
  std::string source;  // raw text, hashed into the run manifest
};

// INI-style text: [data], [network], [attack.<name>] (any number), [detect],
// [sweep], [output]. Lists are comma separated. Unknown keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

Dataset load_data(const DataConfig& cfg);

// 64-bit FNV-1a of the text, as 16 hex digits.
std::string content_hash(const std::string& text);

}  // namespace vmdetect
