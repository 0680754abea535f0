#include "vmdetect/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "vmdetect/error.hpp"

namespace vmdetect {

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::bim: return "bim";
    case AttackKind::mim: return "mim";
  }
  return "fgsm";
}

AttackKind attack_kind_from_string(const std::string& name) {
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "bim") return AttackKind::bim;
  if (name == "mim") return AttackKind::mim;
  throw ConfigError("unknown attack '" + name + "'");
}

double AttackConfig::step() const {
  return eps_iter > 0.0 ? eps_iter : epsilon / static_cast<double>(iters);
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be >= 0");
  if (iters < 1) throw ConfigError("attack iters must be >= 1");
  if (step() > epsilon) throw ConfigError("eps-iter must not exceed epsilon");
  if (!(decay >= 0.0)) throw ConfigError("decay must be >= 0");
  if (!(box_lo < box_hi)) throw ConfigError("attack box needs lo < hi");
}

namespace {

Vector sign(const Vector& v) {
  return v.unaryExpr([](double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); });
}

Vector checked_gradient(const Network& net, const Vector& x, Eigen::Index label) {
  Vector g = grad_input(net, x, label);
  if (!g.allFinite()) throw NumericError("attack gradient is not finite");
  return g;
}

void check_box(const Vector& x, const AttackConfig& cfg) {
  if ((x.array() < cfg.box_lo).any() || (x.array() > cfg.box_hi).any())
    throw DataError("attack input lies outside the box");
}

// Projection onto the l-infinity ball around x intersected with the box.
Vector project(const Vector& candidate, const Vector& x, const AttackConfig& cfg) {
  const Vector lo = (x.array() - cfg.epsilon).cwiseMax(cfg.box_lo);
  const Vector hi = (x.array() + cfg.epsilon).cwiseMin(cfg.box_hi);
  return candidate.cwiseMax(lo).cwiseMin(hi);
}

AdversarialPair finish(const Network& net, const Vector& x, Vector adv, Eigen::Index label) {
  AdversarialPair pair;
  pair.clean = x;
  pair.adversarial = std::move(adv);
  pair.label = label;
  pair.clean_prediction = predict(net, pair.clean);
  pair.adversarial_prediction = predict(net, pair.adversarial);
  return pair;
}

}  // namespace

AdversarialPair fgsm(const Network& net, const Vector& x, Eigen::Index label, const AttackConfig& cfg) {
  cfg.validate();
  check_box(x, cfg);
  const Vector g = checked_gradient(net, x, label);
  const Vector adv = (x + cfg.epsilon * sign(g)).cwiseMax(cfg.box_lo).cwiseMin(cfg.box_hi);
  return finish(net, x, adv, label);
}

AdversarialPair bim(const Network& net, const Vector& x, Eigen::Index label, const AttackConfig& cfg) {
  cfg.validate();
  check_box(x, cfg);
  const double step = cfg.step();
  Vector adv = x;
  for (int t = 0; t < cfg.iters; ++t) {
    const Vector g = checked_gradient(net, adv, label);
    adv = project(adv + step * sign(g), x, cfg);
  }
  return finish(net, x, adv, label);
}

AdversarialPair mim(const Network& net, const Vector& x, Eigen::Index label, const AttackConfig& cfg,
                    Vector* momentum) {
  cfg.validate();
  check_box(x, cfg);
  const double step = cfg.step();
  Vector adv = x;
  Vector acc = Vector::Zero(x.size());
  for (int t = 0; t < cfg.iters; ++t) {
    const Vector g = checked_gradient(net, adv, label);
    const double l1 = g.lpNorm<1>();
    // A zero gradient cannot be normalized; its raw sign (all zeros) is used.
    acc = cfg.decay * acc + (l1 > 0.0 ? Vector(g / l1) : g);
    adv = project(adv + step * sign(acc), x, cfg);
  }
  if (momentum) *momentum = acc;
  return finish(net, x, adv, label);
}

AdversarialPair run_attack(const Network& net, const Vector& x, Eigen::Index label,
                           const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::fgsm: return fgsm(net, x, label, cfg);
    case AttackKind::bim: return bim(net, x, label, cfg);
    case AttackKind::mim: return mim(net, x, label, cfg);
  }
  throw ConfigError("unknown attack kind");
}

void write_attack_csv(const std::vector<AdversarialPair>& pairs, std::ostream& out) {
  const Eigen::Index d = pairs.empty() ? 0 : pairs.front().clean.size();
  out.precision(17);
  out << "id,label,clean_prediction,adversarial_prediction";
  for (Eigen::Index j = 0; j < d; ++j) out << ",clean_" << j;
  for (Eigen::Index j = 0; j < d; ++j) out << ",adv_" << j;
  out << '\n';
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.clean.size() != d || p.adversarial.size() != d)
      throw ShapeError("attack pairs have inconsistent dimensions");
    out << i << ',' << p.label << ',' << p.clean_prediction << ',' << p.adversarial_prediction;
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << p.clean(j);
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << p.adversarial(j);
    out << '\n';
  }
}

std::vector<AdversarialPair> read_attack_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,label,clean_prediction,adversarial_prediction", 0) != 0)
    throw DataError("attack CSV has an unexpected header");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 4 || (columns - 4) % 2 != 0) throw ShapeError("attack CSV header has odd vector width");
  const Eigen::Index d = (columns - 4) / 2;
  std::vector<AdversarialPair> pairs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) {
      try {
        v.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw DataError("attack CSV line " + std::to_string(line_no) + ": bad number '" + field + "'");
      }
    }
    if (static_cast<Eigen::Index>(v.size()) != columns)
      throw ShapeError("attack CSV line " + std::to_string(line_no) + " has " +
                       std::to_string(v.size()) + " columns, expected " + std::to_string(columns));
    AdversarialPair p;
    p.label = static_cast<Eigen::Index>(v[1]);
    p.clean_prediction = static_cast<Eigen::Index>(v[2]);
    p.adversarial_prediction = static_cast<Eigen::Index>(v[3]);
    p.clean = Eigen::Map<const Vector>(v.data() + 4, d);
    p.adversarial = Eigen::Map<const Vector>(v.data() + 4 + d, d);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace vmdetect
