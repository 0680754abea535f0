#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vmdetect/network.hpp"

namespace vmdetect {

enum class Method { vm_exact, vm_lin, vm_log, dvm_lin, dvm_log, uniform_dropout };
enum class MaskMode { or_composition, independent_bernoulli };

std::string to_string(Method m);
Method method_from_string(const std::string& name);
std::string to_string(MaskMode m);
MaskMode mask_mode_from_string(const std::string& name);

// True for the methods whose probabilities are recomputed on every pass.
bool is_dynamic(Method m);

struct SamplingConfig {
  Method method = Method::vm_exact;
  // Hidden-layer positions carrying a sampling unit, 1-based: position b
  // randomizes the post-activation output of layer b before layer b+1.
  std::vector<std::size_t> blocks{1};
  double f = 1.0;            // C = f * nnz(x)
  double keep = 0.5;         // uniform dropout pick probability
  int runs = 20;             // R
  MaskMode mask_mode = MaskMode::independent_bernoulli;
  std::uint64_t seed = 0;
  double solver_tol = 1e-9;

  void validate(const Network& net) const;
};

using Rng = std::mt19937_64;

// Independent reproducible stream for (seed, a, b).
Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

struct PlanEntry {
  std::size_t position = 0;  // 1-based hidden layer index
  Vector p;                  // empty for uniform dropout
  Vector pi;
  double draws = 0.0;        // C; 0 for uniform dropout
};

struct SamplingPlan {
  Method method = Method::vm_exact;
  std::vector<PlanEntry> entries;
  std::vector<std::size_t> skipped;  // positions whose activation was all zero

  const PlanEntry* find(std::size_t position) const;
};

struct SamplingMask {
  Eigen::VectorXi z;
  Vector scale;
};

std::size_t count_nonzero(const Vector& x);

// Probabilities for one unit from its observed activation. Throws SolverError
// on an all-zero activation.
PlanEntry plan_unit(const Vector& activation, std::size_t position, const SamplingConfig& cfg);

// Fixed-probability plan (VM-exact / VM-lin / VM-log / uniform dropout) from
// the full network's activations.
SamplingPlan build_plan(const Network& net, const ActivationTrace& trace, const SamplingConfig& cfg);

SamplingMask draw_mask(const PlanEntry& entry, MaskMode mode, Rng& rng);

template <typename Derived>
Vector apply_sampling(const Eigen::MatrixBase<Derived>& x, const SamplingMask& mask) {
  return (x.derived().array() * mask.z.cast<double>().array() * mask.scale.array()).matrix();
}

struct MCBatch {
  Matrix outputs;  // R x K, one softmax vector per row
  std::uint64_t seed = 0;
  SamplingConfig config;
  std::size_t skipped_units = 0;  // dynamic mode: all-zero observed activations

  Eigen::Index runs() const { return outputs.rows(); }
};

// `stream` separates inputs that share a seed (e.g. the input id).
MCBatch mc_forward_fixed(const Network& net, const Vector& x, const SamplingPlan& plan,
                         const SamplingConfig& cfg, std::uint64_t stream = 0);

// Dynamic probabilities; `observed` (optional) receives, per pass and active
// position, the activation that determined the probabilities.
struct DynamicLog {
  std::vector<std::vector<Vector>> activations;  // [pass][block]
  std::vector<std::vector<Vector>> probabilities;
};

MCBatch mc_forward_dynamic(const Network& net, const Vector& x, const SamplingConfig& cfg,
                           std::uint64_t stream = 0, DynamicLog* observed = nullptr);

// Dispatches on cfg.method.
MCBatch run_detection_net(const Network& net, const Vector& x, const SamplingConfig& cfg,
                          std::uint64_t stream = 0);

void write_batch_csv(const MCBatch& batch, std::ostream& out);

}  // namespace vmdetect
