#include "vmdetect/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "vmdetect/error.hpp"

namespace vmdetect {

std::string to_string(Statistic s) {
  return s == Statistic::mutual_information ? "mi" : "var-trace";
}

Statistic statistic_from_string(const std::string& name) {
  if (name == "mi" || name == "mutual-information") return Statistic::mutual_information;
  if (name == "var-trace" || name == "variance") return Statistic::variance_trace;
  throw ConfigError("unknown detector statistic '" + name + "'");
}

EvalSet build_eval_set(const Network& net, const std::vector<AdversarialPair>& attacked,
                       const std::string& attack_name) {
  EvalSet set;
  set.attack = attack_name;
  set.candidates = attacked.size();
  for (std::size_t i = 0; i < attacked.size(); ++i) {
    const auto& pair = attacked[i];
    if (predict(net, pair.clean) != pair.label) continue;
    ++set.clean_correct;
    if (predict(net, pair.adversarial) == pair.label) continue;
    set.pairs.push_back(pair);
    set.source_index.push_back(i);
  }
  return set;
}

EvalSet combine(const std::vector<EvalSet>& sets) {
  EvalSet all;
  all.attack = "combination";
  for (const auto& s : sets) {
    all.pairs.insert(all.pairs.end(), s.pairs.begin(), s.pairs.end());
    all.source_index.insert(all.source_index.end(), s.source_index.begin(), s.source_index.end());
    all.candidates += s.candidates;
    all.clean_correct += s.clean_correct;
  }
  return all;
}

std::vector<DetectionRecord> score_all(const Network& net, const EvalSet& set,
                                       const SamplingConfig& cfg) {
  cfg.validate(net);
  std::vector<DetectionRecord> records;
  records.reserve(2 * set.pairs.size());
  const std::string prefix = set.attack.empty() ? "" : set.attack + ":";
  for (std::size_t i = 0; i < set.pairs.size(); ++i) {
    for (int adv = 0; adv < 2; ++adv) {
      DetectionRecord rec;
      rec.id = prefix + std::to_string(i) + (adv ? ":adv" : ":clean");
      rec.adversarial = adv == 1;
      const Vector& x = adv ? set.pairs[i].adversarial : set.pairs[i].clean;
      try {
        const auto batch = run_detection_net(net, x, cfg, 2 * i + static_cast<std::size_t>(adv));
        const auto score = score_batch(batch.outputs);
        rec.mi = score.mi;
        rec.var_trace = score.var_trace;
      } catch (const NumericError& e) {
        throw NumericError("input " + rec.id + ": " + e.what());
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

void write_scores_csv(const std::vector<DetectionRecord>& records, std::ostream& out) {
  out.precision(17);
  out << "input-id,truth,mi,var-trace\n";
  for (const auto& r : records)
    out << r.id << ',' << (r.adversarial ? "adversarial" : "clean") << ',' << r.mi << ','
        << r.var_trace << '\n';
}

std::vector<DetectionRecord> read_scores_csv(std::istream& in) {
  std::vector<DetectionRecord> records;
  std::string line;
  if (!std::getline(in, line) || line.rfind("input-id,", 0) != 0)
    throw DataError("scores CSV must start with the 'input-id,truth,mi,var-trace' header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string id, truth, mi, var;
    if (!std::getline(row, id, ',') || !std::getline(row, truth, ',') ||
        !std::getline(row, mi, ',') || !std::getline(row, var))
      throw DataError("scores CSV line " + std::to_string(line_no) + " is malformed");
    DetectionRecord r;
    r.id = id;
    if (truth == "adversarial")
      r.adversarial = true;
    else if (truth != "clean")
      throw DataError("scores CSV line " + std::to_string(line_no) + ": unknown truth '" + truth + "'");
    try {
      r.mi = std::stod(mi);
      r.var_trace = std::stod(var);
    } catch (const std::exception&) {
      throw DataError("scores CSV line " + std::to_string(line_no) + ": bad number");
    }
    records.push_back(std::move(r));
  }
  return records;
}

double trapezoid_auc(const std::vector<RocPoint>& points) {
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < points.size(); ++k)
    area += (points[k].fpr - points[k + 1].fpr) * (points[k].tpr + points[k + 1].tpr) / 2.0;
  return area;
}

RocCurve roc_and_auc(const std::vector<double>& clean, const std::vector<double>& adversarial) {
  if (clean.empty() || adversarial.empty())
    throw DataError("ROC needs both clean and adversarial scores");
  for (const double s : clean)
    if (std::isnan(s)) throw NumericError("NaN clean score");
  for (const double s : adversarial)
    if (std::isnan(s)) throw NumericError("NaN adversarial score");
  std::vector<double> c = clean, a = adversarial;
  std::sort(c.begin(), c.end());
  std::sort(a.begin(), a.end());
  std::vector<double> taus;
  taus.reserve(c.size() + a.size());
  std::merge(c.begin(), c.end(), a.begin(), a.end(), std::back_inserter(taus));
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  const auto nc = static_cast<double>(c.size());
  const auto na = static_cast<double>(a.size());
  auto above = [](const std::vector<double>& sorted, double tau) {
    return static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), tau));
  };
  RocCurve curve;
  const double inf = std::numeric_limits<double>::infinity();
  curve.points.push_back({-inf, 1.0, 1.0});
  for (const double tau : taus) curve.points.push_back({tau, above(c, tau) / nc, above(a, tau) / na});
  curve.points.push_back({inf, 0.0, 0.0});
  curve.auc = trapezoid_auc(curve.points);
  return curve;
}

RocCurve roc_and_auc(const std::vector<DetectionRecord>& records, Statistic stat) {
  std::vector<double> clean, adv;
  for (const auto& r : records) (r.adversarial ? adv : clean).push_back(r.score(stat));
  return roc_and_auc(clean, adv);
}

void write_roc_csv(const RocCurve& curve, std::ostream& out) {
  out.precision(17);
  out << "tau,fpr,tpr\n";
  for (const auto& p : curve.points) out << p.tau << ',' << p.fpr << ',' << p.tpr << '\n';
}

RocCurve read_roc_csv(std::istream& in) {
  RocCurve curve;
  std::string line;
  if (!std::getline(in, line) || line != "tau,fpr,tpr")
    throw DataError("ROC CSV must start with 'tau,fpr,tpr'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string tau, fpr, tpr;
    std::getline(row, tau, ',');
    std::getline(row, fpr, ',');
    std::getline(row, tpr);
    try {
      curve.points.push_back({std::stod(tau), std::stod(fpr), std::stod(tpr)});
    } catch (const std::exception&) {
      throw DataError("ROC CSV row '" + line + "' is malformed");
    }
  }
  curve.auc = trapezoid_auc(curve.points);
  return curve;
}

double threshold_at_fpr(std::vector<double> clean_scores, double target_fpr) {
  if (clean_scores.empty()) throw DataError("no clean scores to calibrate on");
  if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) throw ConfigError("target FPR must lie in [0,1]");
  std::sort(clean_scores.begin(), clean_scores.end());
  const auto n = static_cast<double>(clean_scores.size());
  // Candidate thresholds: -inf and each distinct score; fpr(tau) = #{s > tau} / n.
  double tau = -std::numeric_limits<double>::infinity();
  double fpr = 1.0;
  std::size_t k = 0;
  while (fpr > target_fpr && k < clean_scores.size()) {
    tau = clean_scores[k];
    while (k < clean_scores.size() && clean_scores[k] == tau) ++k;
    fpr = static_cast<double>(clean_scores.size() - k) / n;
  }
  return tau;
}

SweepResult sweep(const Network& net, const EvalSet& set, const SweepGrid& grid,
                  const SamplingConfig& base, Statistic stat) {
  if (grid.methods.empty() || grid.blocks.empty()) throw ConfigError("sweep grid is empty");
  SweepResult result;
  for (const auto method : grid.methods) {
    const auto& params = method == Method::uniform_dropout ? grid.keep_values : grid.f_values;
    if (params.empty())
      throw ConfigError("sweep grid has no parameter values for " + to_string(method));
    std::optional<SweepCell> best;
    for (const auto block : grid.blocks) {
      for (const double param : params) {
        SweepCell cell;
        cell.method = method;
        cell.block = block;
        cell.parameter = param;
        SamplingConfig cfg = base;
        cfg.method = method;
        cfg.blocks = {block};
        if (method == Method::uniform_dropout)
          cfg.keep = param;
        else
          cfg.f = param;
        try {
          cell.auc = roc_and_auc(score_all(net, set, cfg), stat).auc;
          if (!best || cell.auc > best->auc) best = cell;
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        result.cells.push_back(std::move(cell));
      }
    }
    if (best) result.best.push_back(*best);
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  out.precision(17);
  out << "method,block,parameter,auc,best,error\n";
  for (const auto& c : result.cells) {
    bool is_best = false;
    for (const auto& b : result.best)
      is_best = is_best || (b.method == c.method && b.block == c.block && b.parameter == c.parameter);
    out << to_string(c.method) << ',' << c.block << ',' << c.parameter << ',';
    if (c.error)
      out << "nan," << 0 << ",\"" << *c.error << "\"\n";
    else
      out << c.auc << ',' << (is_best ? 1 : 0) << ",\n";
  }
}

}  // namespace vmdetect
