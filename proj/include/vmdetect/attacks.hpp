#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "vmdetect/network.hpp"

namespace vmdetect {

enum class AttackKind { fgsm, bim, mim };

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& name);

struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  double epsilon = 0.1;    // l-infinity budget, input units
  double eps_iter = 0.0;   // per-step size; <= 0 means epsilon / iters
  int iters = 20;
  double decay = 1.0;      // MIM momentum
  double box_lo = 0.0;
  double box_hi = 1.0;
  std::string name;        // label used in reports, e.g. "fgsm-0.1"

  double step() const;
  void validate() const;
};

struct AdversarialPair {
  Vector clean;
  Vector adversarial;
  Eigen::Index label = 0;
  Eigen::Index clean_prediction = 0;
  Eigen::Index adversarial_prediction = 0;
};

// The attacks run against the deterministic full network.
AdversarialPair fgsm(const Network& net, const Vector& x, Eigen::Index label, const AttackConfig& cfg);
AdversarialPair bim(const Network& net, const Vector& x, Eigen::Index label, const AttackConfig& cfg);

// Exposes the momentum accumulator after the final step for inspection.
AdversarialPair mim(const Network& net, const Vector& x, Eigen::Index label, const AttackConfig& cfg,
                    Vector* momentum = nullptr);

AdversarialPair run_attack(const Network& net, const Vector& x, Eigen::Index label,
                           const AttackConfig& cfg);

// One row per pair: id,label,clean_prediction,adversarial_prediction,
// clean_0..clean_{d-1},adv_0..adv_{d-1}. Values use 17 significant digits so
// a read-back reproduces the vectors exactly.
void write_attack_csv(const std::vector<AdversarialPair>& pairs, std::ostream& out);
std::vector<AdversarialPair> read_attack_csv(std::istream& in);

}  // namespace vmdetect
