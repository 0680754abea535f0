// Command-line harness: train, attack, plan, score, roc, sweep.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vmdetect/config.hpp"
#include "vmdetect/error.hpp"
#include "vmdetect/evaluation.hpp"
#include "vmdetect/solvers.hpp"

namespace fs = std::filesystem;
using namespace vmdetect;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Context {
  RunConfig cfg;
  fs::path out;
};

Context open_run(const std::string& config_path, const std::string& out_override) {
  Context ctx;
  ctx.cfg = load_config(config_path);
  ctx.out = out_override.empty() ? ctx.cfg.output_dir : fs::path(out_override);
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) throw DataError("cannot create output dir " + ctx.out.string() + ": " + ec.message());
  return ctx;
}

void write_manifest(const Context& ctx, const std::string& command, const nlohmann::json& extra) {
  nlohmann::json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config_hash"] = content_hash(ctx.cfg.source);
  m["seeds"] = {{"data", ctx.cfg.data.seed},
                {"train", ctx.cfg.network.train.seed},
                {"detect", ctx.cfg.detect.sampling.seed}};
  m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
               "." + std::to_string(EIGEN_MINOR_VERSION);
  m["details"] = extra;
  std::ofstream f(ctx.out / ("manifest-" + command + ".json"));
  if (!f) throw DataError("cannot write manifest in " + ctx.out.string());
  f << m.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path.string());
  return f;
}

Network load_trained(const Context& ctx) {
  const auto path = ctx.out / ctx.cfg.network.path;
  if (!fs::exists(path)) throw DataError("no trained network at " + path.string() + " (run 'train' first)");
  return load_network(path);
}

fs::path attack_path(const Context& ctx, const std::string& name) {
  return ctx.out / "attacks" / (name + ".csv");
}

std::vector<std::string> attack_names(const Context& ctx, const std::string& only) {
  std::vector<std::string> names;
  for (const auto& a : ctx.cfg.attacks)
    if (only.empty() || only == a.name || only == "combination") names.push_back(a.name);
  if (names.empty())
    throw ConfigError(only.empty() ? "config defines no [attack.*] sections"
                                   : "no attack named '" + only + "'");
  return names;
}

// Eval sets for every configured attack plus their union.
std::map<std::string, EvalSet> load_eval_sets(const Context& ctx, const Network& net,
                                              const std::string& only) {
  std::map<std::string, EvalSet> sets;
  std::vector<EvalSet> parts;
  for (const auto& name : attack_names(ctx, only)) {
    auto in = open_in(attack_path(ctx, name));
    auto set = build_eval_set(net, read_attack_csv(in), name);
    std::cerr << name << ": " << set.pairs.size() << " of " << set.candidates
              << " inputs enter the eval set (" << set.clean_correct << " clean-correct)\n";
    if (set.pairs.empty()) {
      std::cerr << "warning: empty eval set for " << name << ", skipping\n";
      continue;
    }
    parts.push_back(set);
    sets.emplace(name, std::move(set));
  }
  if (parts.size() > 1 && (only.empty() || only == "combination"))
    sets.emplace("combination", combine(parts));
  if (!only.empty() && only == "combination") {
    for (auto it = sets.begin(); it != sets.end();)
      it = it->first == "combination" ? std::next(it) : sets.erase(it);
  }
  if (sets.empty()) throw DataError("every eval set is empty; nothing to evaluate");
  return sets;
}

int cmd_train(const Context& ctx) {
  const auto data = load_data(ctx.cfg.data);
  const auto train = data.subset(Split::train);
  const auto test = data.subset(Split::test);
  std::vector<Eigen::Index> arch{data.dim()};
  arch.insert(arch.end(), ctx.cfg.network.hidden.begin(), ctx.cfg.network.hidden.end());
  arch.push_back(data.num_classes);
  const auto net = train_sgd(train, arch, ctx.cfg.network.train);
  save_network(net, ctx.out / ctx.cfg.network.path);
  const double train_acc = accuracy(net, train);
  const double test_acc = accuracy(net, test);
  std::cout << "train accuracy " << train_acc << "\ntest accuracy " << test_acc << '\n';
  write_manifest(ctx, "train", {{"train_accuracy", train_acc},
                                {"test_accuracy", test_acc},
                                {"train_size", train.inputs.size()},
                                {"test_size", test.inputs.size()}});
  return 0;
}

int cmd_attack(const Context& ctx) {
  const auto net = load_trained(ctx);
  const auto data = load_data(ctx.cfg.data);
  const auto test = data.subset(Split::test);
  fs::create_directories(ctx.out / "attacks");
  nlohmann::json files = nlohmann::json::array();
  for (const auto& a : ctx.cfg.attacks) {
    std::vector<AdversarialPair> pairs;
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < test.inputs.size(); ++i) {
      pairs.push_back(run_attack(net, test.inputs[i], test.labels[i], a));
      flipped += pairs.back().adversarial_prediction != test.labels[i];
    }
    auto f = open_out(attack_path(ctx, a.name));
    write_attack_csv(pairs, f);
    const double adv_acc = 1.0 - static_cast<double>(flipped) / static_cast<double>(pairs.size());
    std::cout << a.name << ": accuracy under attack " << adv_acc << '\n';
    files.push_back({{"name", a.name},
                     {"file", attack_path(ctx, a.name).filename().string()},
                     {"kind", to_string(a.kind)},
                     {"epsilon", a.epsilon},
                     {"eps_iter", a.step()},
                     {"iters", a.iters},
                     {"decay", a.decay},
                     {"dim", data.dim()},
                     {"count", pairs.size()},
                     {"accuracy_under_attack", adv_acc}});
  }
  {
    auto f = open_out(ctx.out / "attacks" / "manifest.json");
    f << nlohmann::json{{"attacks", files}}.dump(2) << '\n';
  }
  write_manifest(ctx, "attack", {{"attacks", files}});
  return 0;
}

int cmd_plan(const Context& ctx, std::size_t index) {
  const auto net = load_trained(ctx);
  const auto data = load_data(ctx.cfg.data);
  const auto test = data.subset(Split::test);
  if (index >= test.inputs.size()) throw ConfigError("--index beyond the test split");
  const auto& cfg = ctx.cfg.detect.sampling;
  if (is_dynamic(cfg.method))
    throw ConfigError("plan shows fixed probabilities; dynamic methods recompute them per pass");
  const auto trace = forward_full(net, test.inputs[index]);
  const auto plan = build_plan(net, trace, cfg);
  auto f = open_out(ctx.out / "plan.csv");
  for (std::ostream* os : {static_cast<std::ostream*>(&std::cout), static_cast<std::ostream*>(&f)}) {
    os->precision(17);
    *os << "block,unit,activation,p,pi,C\n";
    for (const auto& e : plan.entries) {
      const auto& x = trace.post[e.position - 1];
      for (Eigen::Index i = 0; i < x.size(); ++i)
        *os << e.position << ',' << i << ',' << x(i) << ',' << (e.p.size() ? e.p(i) : 0.0) << ','
            << e.pi(i) << ',' << e.draws << '\n';
    }
  }
  for (const auto b : plan.skipped) std::cerr << "block " << b << " skipped: all-zero activation\n";
  write_manifest(ctx, "plan", {{"index", index}, {"method", to_string(cfg.method)}});
  return 0;
}

int cmd_score(const Context& ctx, const std::string& only) {
  const auto net = load_trained(ctx);
  const auto sets = load_eval_sets(ctx, net, only);
  const auto& cfg = ctx.cfg.detect.sampling;
  const auto stat = ctx.cfg.detect.statistic;

  // Operating threshold from correctly classified clean validation inputs.
  const auto data = load_data(ctx.cfg.data);
  const auto val = data.subset(Split::val);
  std::vector<double> val_scores;
  for (std::size_t i = 0; i < val.inputs.size(); ++i) {
    if (predict(net, val.inputs[i]) != val.labels[i]) continue;
    const auto batch = run_detection_net(net, val.inputs[i], cfg, 1'000'000 + i);
    val_scores.push_back(score_batch(batch.outputs).get(stat));
  }
  std::optional<double> tau;
  if (!val_scores.empty()) tau = threshold_at_fpr(val_scores, ctx.cfg.detect.target_fpr);

  nlohmann::json summary = nlohmann::json::object();
  for (const auto& [name, set] : sets) {
    const auto records = score_all(net, set, cfg);
    auto f = open_out(ctx.out / ("scores_" + name + ".csv"));
    write_scores_csv(records, f);
    double clean = 0.0, adv = 0.0;
    std::size_t flagged = 0, false_alarms = 0;
    for (const auto& r : records) {
      (r.adversarial ? adv : clean) += r.score(stat);
      if (tau && decide(r.score(stat), {*tau}) == Verdict::adversarial)
        (r.adversarial ? flagged : false_alarms)++;
    }
    const double n = static_cast<double>(set.pairs.size());
    std::cout << name << ": mean " << to_string(stat) << " clean " << clean / n << ", adversarial "
              << adv / n;
    if (tau)
      std::cout << "; at tau0=" << *tau << " flagged " << flagged << "/" << set.pairs.size()
                << " adversarial, " << false_alarms << " clean";
    std::cout << '\n';
    summary[name] = {{"pairs", set.pairs.size()}, {"mean_clean", clean / n}, {"mean_adversarial", adv / n}};
  }
  nlohmann::json details{{"method", to_string(cfg.method)}, {"statistic", to_string(stat)},
                         {"runs", cfg.runs}, {"sets", summary}};
  if (tau) details["tau0"] = *tau;
  write_manifest(ctx, "score", details);
  return 0;
}

int cmd_roc(const Context& ctx, std::vector<std::string> score_files) {
  if (score_files.empty())
    for (const auto& entry : fs::directory_iterator(ctx.out)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("scores_", 0) == 0 && entry.path().extension() == ".csv")
        score_files.push_back(entry.path().string());
    }
  std::sort(score_files.begin(), score_files.end());
  if (score_files.empty()) throw DataError("no scores_*.csv files found (run 'score' first)");
  std::vector<RocCurve> curves;
  auto auc_csv = open_out(ctx.out / "auc.csv");
  auc_csv.precision(17);
  auc_csv << "scores,statistic,auc\n";
  nlohmann::json aucs = nlohmann::json::object();
  for (const auto& file : score_files) {
    auto in = open_in(file);
    const auto records = read_scores_csv(in);
    auto curve = roc_and_auc(records, ctx.cfg.detect.statistic);
    std::string label = fs::path(file).stem().string();
    if (label.rfind("scores_", 0) == 0) label = label.substr(7);
    curve.label = label;
    auto roc_csv = open_out(ctx.out / ("roc_" + label + ".csv"));
    write_roc_csv(curve, roc_csv);
    auc_csv << label << ',' << to_string(ctx.cfg.detect.statistic) << ',' << curve.auc << '\n';
    std::cout << label << ": AUC " << curve.auc << '\n';
    aucs[label] = curve.auc;
    curves.push_back(std::move(curve));
  }
  const auto written = emit_plots(curves, nullptr, ctx.out / "plots");
  write_manifest(ctx, "roc", {{"auc", aucs}, {"plots", written.size()}});
  return 0;
}

int cmd_sweep(const Context& ctx, const std::string& only) {
  const auto net = load_trained(ctx);
  const auto sets = load_eval_sets(ctx, net, only);
  auto csv = open_out(ctx.out / "sweep.csv");
  csv << "attack,";
  bool header = true;
  nlohmann::json best = nlohmann::json::object();
  SweepResult last;
  for (const auto& [name, set] : sets) {
    const auto result = sweep(net, set, ctx.cfg.sweep, ctx.cfg.detect.sampling, ctx.cfg.detect.statistic);
    std::stringstream body;
    write_sweep_csv(result, body);
    std::string line;
    std::getline(body, line);
    if (header) {
      csv << line << '\n';
      header = false;
    }
    while (std::getline(body, line)) csv << name << ',' << line << '\n';
    for (const auto& b : result.best) {
      std::cout << name << " best " << to_string(b.method) << ": B=" << b.block
                << (b.method == Method::uniform_dropout ? " keep=" : " f=") << b.parameter
                << " AUC " << b.auc << '\n';
      best[name][to_string(b.method)] = {{"block", b.block}, {"parameter", b.parameter}, {"auc", b.auc}};
    }
    for (const auto& c : result.cells)
      if (c.error) std::cerr << name << ": cell failed: " << *c.error << '\n';
    last = result;
  }
  emit_plots({}, &last, ctx.out / "plots");
  write_manifest(ctx, "sweep", {{"best", best}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimum-variance sampling for adversarial-input detection"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config = "vmdetect.ini";
  std::string out;
  app.add_option("-c,--config", config, "run configuration (INI)")->check(CLI::ExistingFile);
  app.add_option("-o,--out", out, "output directory (overrides [output] dir)");

  auto* train = app.add_subcommand("train", "train the full network");
  auto* attack = app.add_subcommand("attack", "craft adversarial sets for every [attack.*]");
  auto* plan = app.add_subcommand("plan", "print sampling probabilities for one test input");
  std::size_t index = 0;
  plan->add_option("-i,--index", index, "test-split index");
  auto* score = app.add_subcommand("score", "score eval sets with the detection network");
  std::string only;
  score->add_option("-a,--attack", only, "restrict to one attack (or 'combination')");
  auto* roc = app.add_subcommand("roc", "ROC curves and AUC from score files");
  std::vector<std::string> score_files;
  roc->add_option("scores", score_files, "scores CSV files (default: all in the output dir)");
  auto* sw = app.add_subcommand("sweep", "AUC over the [sweep] grid");
  sw->add_option("-a,--attack", only, "restrict to one attack (or 'combination')");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto ctx = open_run(config, out);
    if (*train) return cmd_train(ctx);
    if (*attack) return cmd_attack(ctx);
    if (*plan) return cmd_plan(ctx, index);
    if (*score) return cmd_score(ctx, only);
    if (*roc) return cmd_roc(ctx, score_files);
    if (*sw) return cmd_sweep(ctx, only);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
