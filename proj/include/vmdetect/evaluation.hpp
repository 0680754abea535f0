#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vmdetect/attacks.hpp"
#include "vmdetect/metrics.hpp"
#include "vmdetect/network.hpp"
#include "vmdetect/sampling.hpp"

namespace vmdetect {

// Test inputs that the full network classifies correctly before the attack
// and incorrectly after it.
struct EvalSet {
  std::string attack;
  std::vector<AdversarialPair> pairs;
  std::vector<std::size_t> source_index;  // position in the attack output
  std::size_t candidates = 0;
  std::size_t clean_correct = 0;
};

EvalSet build_eval_set(const Network& net, const std::vector<AdversarialPair>& attacked,
                       const std::string& attack_name = "");

// Union of several eval sets (the combination attack).
EvalSet combine(const std::vector<EvalSet>& sets);

struct DetectionRecord {
  std::string id;
  bool adversarial = false;
  double mi = 0.0;
  double var_trace = 0.0;

  double score(Statistic s) const { return s == Statistic::mutual_information ? mi : var_trace; }
};

// Clean input i uses RNG stream 2i, its adversarial twin 2i+1.
std::vector<DetectionRecord> score_all(const Network& net, const EvalSet& set,
                                       const SamplingConfig& cfg);

void write_scores_csv(const std::vector<DetectionRecord>& records, std::ostream& out);
std::vector<DetectionRecord> read_scores_csv(std::istream& in);

struct RocPoint {
  double tau = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Points ordered by increasing tau, from (1,1) at -inf to (0,0) at +inf.
struct RocCurve {
  std::string label;
  std::vector<RocPoint> points;
  double auc = 0.0;
};

RocCurve roc_and_auc(const std::vector<DetectionRecord>& records,
                     Statistic stat = Statistic::mutual_information);
RocCurve roc_and_auc(const std::vector<double>& clean, const std::vector<double>& adversarial);

void write_roc_csv(const RocCurve& curve, std::ostream& out);
RocCurve read_roc_csv(std::istream& in);
// Trapezoid area of an already-built curve.
double trapezoid_auc(const std::vector<RocPoint>& points);

// Smallest threshold whose false-positive rate on `clean_scores` is <= target.
// A convenience for operating the detector; sweeps use the full ROC.
double threshold_at_fpr(std::vector<double> clean_scores, double target_fpr);

struct SweepGrid {
  std::vector<Method> methods;
  std::vector<std::size_t> blocks;
  std::vector<double> f_values;     // VM / DVM methods
  std::vector<double> keep_values;  // uniform dropout
};

struct SweepCell {
  Method method = Method::vm_exact;
  std::size_t block = 1;
  double parameter = 0.0;  // f or keep
  double auc = 0.0;
  std::optional<std::string> error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepCell> best;  // one per method with at least one good cell
};

// Every cell reuses base.seed, so a cell's value does not depend on the rest
// of the grid.
SweepResult sweep(const Network& net, const EvalSet& set, const SweepGrid& grid,
                  const SamplingConfig& base, Statistic stat = Statistic::mutual_information);

void write_sweep_csv(const SweepResult& result, std::ostream& out);

// SVG figures plus a CSV of all plotted points; returns the written paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<RocCurve>& curves,
                                              const SweepResult* sweep,
                                              const std::filesystem::path& out_dir);

}  // namespace vmdetect
