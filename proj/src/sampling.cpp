#include "vmdetect/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "vmdetect/error.hpp"
#include "vmdetect/solvers.hpp"

namespace vmdetect {

std::string to_string(Method m) {
  switch (m) {
    case Method::vm_exact: return "vm-exact";
    case Method::vm_lin: return "vm-lin";
    case Method::vm_log: return "vm-log";
    case Method::dvm_lin: return "dvm-lin";
    case Method::dvm_log: return "dvm-log";
    case Method::uniform_dropout: return "uniform-dropout";
  }
  return "vm-exact";
}

Method method_from_string(const std::string& name) {
  if (name == "vm-exact") return Method::vm_exact;
  if (name == "vm-lin") return Method::vm_lin;
  if (name == "vm-log") return Method::vm_log;
  if (name == "dvm-lin" || name == "sap") return Method::dvm_lin;
  if (name == "dvm-log") return Method::dvm_log;
  if (name == "uniform-dropout" || name == "dropout") return Method::uniform_dropout;
  throw ConfigError("unknown sampling method '" + name + "'");
}

std::string to_string(MaskMode m) {
  return m == MaskMode::or_composition ? "or-composition" : "independent-bernoulli";
}

MaskMode mask_mode_from_string(const std::string& name) {
  if (name == "or-composition") return MaskMode::or_composition;
  if (name == "independent-bernoulli") return MaskMode::independent_bernoulli;
  throw ConfigError("unknown mask mode '" + name + "'");
}

bool is_dynamic(Method m) { return m == Method::dvm_lin || m == Method::dvm_log; }

void SamplingConfig::validate(const Network& net) const {
  if (runs < 2) throw ConfigError("R must be at least 2");
  if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("f must be positive");
  if (!(keep > 0.0 && keep <= 1.0)) throw ConfigError("dropout keep probability must be in (0, 1]");
  if (blocks.empty()) throw ConfigError("at least one sampling block is required");
  for (const auto b : blocks)
    if (b < 1 || b + 1 > net.depth())
      throw ConfigError("block " + std::to_string(b) + " is not a hidden-layer position (1.." +
                        std::to_string(net.depth() - 1) + ")");
  if (!(solver_tol > 0.0)) throw ConfigError("solver tolerance must be positive");
}

Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

const PlanEntry* SamplingPlan::find(std::size_t position) const {
  for (const auto& e : entries)
    if (e.position == position) return &e;
  return nullptr;
}

std::size_t count_nonzero(const Vector& x) {
  return static_cast<std::size_t>((x.array() != 0.0).count());
}

PlanEntry plan_unit(const Vector& activation, std::size_t position, const SamplingConfig& cfg) {
  PlanEntry entry;
  entry.position = position;
  if (cfg.method == Method::uniform_dropout) {
    entry.pi = Vector::Constant(activation.size(), cfg.keep);
    return entry;
  }
  const auto nnz = count_nonzero(activation);
  if (nnz == 0)
    throw SolverError("all-zero activation at block " + std::to_string(position));
  entry.draws = cfg.f * static_cast<double>(nnz);
  const auto in = solver_input_from_activation(activation, entry.draws);
  switch (cfg.method) {
    case Method::vm_exact:
      entry.p = solve_exact(in, cfg.solver_tol).p;
      break;
    case Method::vm_lin:
    case Method::dvm_lin:
      entry.p = solve_linear(in);
      break;
    case Method::vm_log:
    case Method::dvm_log:
      entry.p = solve_log(in);
      break;
    case Method::uniform_dropout:
      break;
  }
  entry.pi = bernoulli_params(entry.p, entry.draws);
  return entry;
}

SamplingPlan build_plan(const Network& net, const ActivationTrace& trace, const SamplingConfig& cfg) {
  cfg.validate(net);
  if (is_dynamic(cfg.method))
    throw ConfigError("build_plan needs a fixed-probability method, got " + to_string(cfg.method));
  if (trace.post.size() != net.depth()) throw ShapeError("trace does not belong to this network");
  SamplingPlan plan;
  plan.method = cfg.method;
  for (const auto b : cfg.blocks) {
    const Vector& activation = trace.post[b - 1];
    if (cfg.method != Method::uniform_dropout && count_nonzero(activation) == 0) {
      plan.skipped.push_back(b);
      continue;
    }
    plan.entries.push_back(plan_unit(activation, b, cfg));
  }
  return plan;
}

SamplingMask draw_mask(const PlanEntry& entry, MaskMode mode, Rng& rng) {
  const Eigen::Index n = entry.pi.size();
  SamplingMask mask;
  mask.z = Eigen::VectorXi::Zero(n);
  mask.scale = Vector::Zero(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  if (mode == MaskMode::or_composition && entry.p.size() == n) {
    const auto draws = static_cast<long>(std::llround(entry.draws));
    if (draws < 1) throw ConfigError("or-composition needs round(C) >= 1");
    Vector cumulative(n);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += entry.p(i);
      cumulative(i) = acc;
    }
    const double total = acc;
    for (long c = 0; c < draws; ++c) {
      const double u = unit(rng) * total;
      auto it = std::upper_bound(cumulative.data(), cumulative.data() + n, u);
      auto idx = static_cast<Eigen::Index>(it - cumulative.data());
      if (idx == n) {
        // u rounded up to the total: take the last slot with mass.
        idx = n - 1;
        while (idx > 0 && entry.p(idx) == 0.0) --idx;
      }
      mask.z(idx) = 1;
    }
    // The marginal of round(C) physical draws.
    const Vector pi = bernoulli_params(entry.p, static_cast<double>(draws));
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask.z(i) && pi(i) > 0.0) mask.scale(i) = 1.0 / pi(i);
    return mask;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = entry.pi(i);
    if (pi >= 1.0 || (pi > 0.0 && unit(rng) < pi)) {
      mask.z(i) = 1;
      mask.scale(i) = 1.0 / pi;
    }
  }
  return mask;
}

namespace {

void check_finite(const Vector& v, std::size_t layer) {
  if (!v.allFinite())
    throw NumericError("non-finite activation at layer " + std::to_string(layer + 1));
}

bool is_block(const SamplingConfig& cfg, std::size_t position) {
  return std::find(cfg.blocks.begin(), cfg.blocks.end(), position) != cfg.blocks.end();
}

}  // namespace

MCBatch mc_forward_fixed(const Network& net, const Vector& x, const SamplingPlan& plan,
                         const SamplingConfig& cfg, std::uint64_t stream) {
  cfg.validate(net);
  if (x.size() != net.input_dim()) throw ShapeError("input dimension mismatch");
  for (const auto& e : plan.entries)
    if (e.position + 1 > net.depth() || e.pi.size() != net.layers()[e.position - 1].outputs())
      throw ShapeError("plan does not match the network");
  MCBatch batch;
  batch.seed = cfg.seed;
  batch.config = cfg;
  batch.outputs.resize(cfg.runs, net.num_classes());
  // Uniform dropout has no categorical draws to compose.
  const MaskMode mode =
      plan.method == Method::uniform_dropout ? MaskMode::independent_bernoulli : cfg.mask_mode;
  for (int r = 0; r < cfg.runs; ++r) {
    Rng rng = make_stream(cfg.seed, stream, static_cast<std::uint64_t>(r));
    Vector h = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
      const auto& layer = net.layers()[l];
      h = apply_activation(layer.activation, layer.weights * h + layer.bias);
      check_finite(h, l);
      if (const auto* entry = plan.find(l + 1); entry && l + 1 < net.depth())
        h = apply_sampling(h, draw_mask(*entry, mode, rng));
    }
    batch.outputs.row(r) = h.transpose();
  }
  return batch;
}

MCBatch mc_forward_dynamic(const Network& net, const Vector& x, const SamplingConfig& cfg,
                           std::uint64_t stream, DynamicLog* observed) {
  cfg.validate(net);
  if (!is_dynamic(cfg.method))
    throw ConfigError("dynamic inference needs dvm-lin or dvm-log, got " + to_string(cfg.method));
  if (x.size() != net.input_dim()) throw ShapeError("input dimension mismatch");
  MCBatch batch;
  batch.seed = cfg.seed;
  batch.config = cfg;
  batch.outputs.resize(cfg.runs, net.num_classes());
  if (observed) {
    observed->activations.assign(static_cast<std::size_t>(cfg.runs), {});
    observed->probabilities.assign(static_cast<std::size_t>(cfg.runs), {});
  }
  for (int r = 0; r < cfg.runs; ++r) {
    Rng rng = make_stream(cfg.seed, stream, static_cast<std::uint64_t>(r));
    Vector h = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
      const auto& layer = net.layers()[l];
      h = apply_activation(layer.activation, layer.weights * h + layer.bias);
      check_finite(h, l);
      if (l + 1 < net.depth() && is_block(cfg, l + 1)) {
        if (count_nonzero(h) == 0) {
          ++batch.skipped_units;
          continue;
        }
        const PlanEntry entry = plan_unit(h, l + 1, cfg);
        if (observed) {
          observed->activations[static_cast<std::size_t>(r)].push_back(h);
          observed->probabilities[static_cast<std::size_t>(r)].push_back(entry.p);
        }
        h = apply_sampling(h, draw_mask(entry, cfg.mask_mode, rng));
      }
    }
    batch.outputs.row(r) = h.transpose();
  }
  return batch;
}

MCBatch run_detection_net(const Network& net, const Vector& x, const SamplingConfig& cfg,
                          std::uint64_t stream) {
  if (is_dynamic(cfg.method)) return mc_forward_dynamic(net, x, cfg, stream);
  const auto plan = build_plan(net, forward_full(net, x), cfg);
  return mc_forward_fixed(net, x, plan, cfg, stream);
}

void write_batch_csv(const MCBatch& batch, std::ostream& out) {
  out.precision(17);
  out << "run";
  for (Eigen::Index k = 0; k < batch.outputs.cols(); ++k) out << ",y" << k;
  out << '\n';
  for (Eigen::Index r = 0; r < batch.outputs.rows(); ++r) {
    out << r;
    for (Eigen::Index k = 0; k < batch.outputs.cols(); ++k) out << ',' << batch.outputs(r, k);
    out << '\n';
  }
}

}  // namespace vmdetect
