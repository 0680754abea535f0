#include "vmdetect/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "vmdetect/error.hpp"

namespace vmdetect {

namespace {

using boost::property_tree::ptree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Typed access to one INI section that remembers which keys were read, so
// leftovers can be reported as typos.
class Section {
 public:
  Section(std::string name, const ptree& tree) : name_(std::move(name)), tree_(tree) {}

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const auto v = raw(key)) out = convert<T>(key, *v);
  }

  template <typename T>
  void read_list(const std::string& key, std::vector<T>& out) {
    const auto v = raw(key);
    if (!v) return;
    out.clear();
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(convert<T>(key, item));
    }
    if (out.empty()) throw ConfigError(name_ + "." + key + ": empty list");
  }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    const auto child = tree_.get_child_optional(ptree::path_type(key, '\0'));
    if (!child) return std::nullopt;
    return trim(child->data());
  }

  void reject_unknown() const {
    for (const auto& [key, value] : tree_)
      if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in [" + name_ + "]");
  }

 private:
  template <typename T>
  T convert(const std::string& key, const std::string& text) const {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else {
      std::istringstream in(text);
      T value{};
      in >> value;
      if (in.fail() || !(in >> std::ws).eof())
        throw ConfigError(name_ + "." + key + ": cannot parse '" + text + "'");
      return value;
    }
  }

  std::string name_;
  const ptree& tree_;
  std::set<std::string> used_;
};

Normalization normalization_from_string(const std::string& s) {
  if (s == "auto") return Normalization::automatic;
  if (s == "byte") return Normalization::byte;
  if (s == "minmax") return Normalization::minmax;
  if (s == "none") return Normalization::none;
  throw ConfigError("unknown normalization '" + s + "'");
}

void read_data(Section& s, DataConfig& d) {
  s.read("format", d.format);
  if (d.format != "moons" && d.format != "csv" && d.format != "idx")
    throw ConfigError("data.format must be moons, csv or idx");
  std::string path, labels, norm;
  s.read("path", path);
  s.read("labels", labels);
  if (!path.empty()) d.path = path;
  if (!labels.empty()) d.labels = labels;
  s.read("samples", d.samples);
  s.read("noise", d.noise);
  if (s.raw("normalization")) {
    s.read("normalization", norm);
    d.normalization = normalization_from_string(norm);
  }
  s.read("train_fraction", d.train_fraction);
  s.read("val_fraction", d.val_fraction);
  s.read("seed", d.seed);
}

void read_network(Section& s, NetworkConfig& n) {
  s.read_list("hidden", n.hidden);
  std::string activation, path;
  s.read("activation", activation);
  if (!activation.empty()) n.train.hidden_activation = activation_from_string(activation);
  if (n.train.hidden_activation == Activation::softmax)
    throw ConfigError("hidden layers cannot use softmax");
  s.read("learning_rate", n.train.learning_rate);
  s.read("epochs", n.train.epochs);
  s.read("batch_size", n.train.batch_size);
  s.read("seed", n.train.seed);
  s.read("path", path);
  if (!path.empty()) n.path = path;
  for (const auto h : n.hidden)
    if (h < 1) throw ConfigError("network.hidden widths must be positive");
  if (n.train.epochs < 1) throw ConfigError("network.epochs must be >= 1");
  if (n.train.batch_size < 1) throw ConfigError("network.batch_size must be >= 1");
  if (!(n.train.learning_rate > 0.0)) throw ConfigError("network.learning_rate must be > 0");
}

void read_attack(Section& s, const std::string& name, AttackConfig& a) {
  a.name = name;
  std::string kind = name;
  s.read("kind", kind);
  a.kind = attack_kind_from_string(kind);
  s.read("epsilon", a.epsilon);
  s.read("eps_iter", a.eps_iter);
  s.read("iters", a.iters);
  s.read("decay", a.decay);
  s.read("box_lo", a.box_lo);
  s.read("box_hi", a.box_hi);
  if (a.kind == AttackKind::fgsm) a.iters = 1;
  a.validate();
}

void read_detect(Section& s, DetectConfig& d) {
  auto& c = d.sampling;
  std::string method, mode, stat;
  s.read("method", method);
  if (!method.empty()) c.method = method_from_string(method);
  s.read_list("blocks", c.blocks);
  s.read("f", c.f);
  s.read("keep", c.keep);
  s.read("runs", c.runs);
  s.read("mask_mode", mode);
  if (!mode.empty()) c.mask_mode = mask_mode_from_string(mode);
  s.read("seed", c.seed);
  s.read("solver_tol", c.solver_tol);
  s.read("statistic", stat);
  if (!stat.empty()) d.statistic = statistic_from_string(stat);
  s.read("target_fpr", d.target_fpr);
  if (c.runs < 2) throw ConfigError("detect.runs must be >= 2");
  if (!(c.f > 0.0)) throw ConfigError("detect.f must be > 0");
  if (!(c.keep > 0.0 && c.keep <= 1.0)) throw ConfigError("detect.keep must lie in (0, 1]");
}

void read_sweep(Section& s, SweepGrid& g) {
  std::vector<std::string> methods;
  s.read_list("methods", methods);
  g.methods.clear();
  for (const auto& m : methods) g.methods.push_back(method_from_string(m));
  s.read_list("blocks", g.blocks);
  s.read_list("f", g.f_values);
  s.read_list("keep", g.keep_values);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  cfg.source = text;
  cfg.sweep.methods = {Method::vm_exact, Method::uniform_dropout};
  cfg.sweep.blocks = {1};
  cfg.sweep.f_values = {1.0};
  cfg.sweep.keep_values = {0.5};
  for (const auto& [name, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config key '" + name + "' appears outside a section");
    Section section(name, body);
    if (name == "data") {
      read_data(section, cfg.data);
    } else if (name == "network") {
      read_network(section, cfg.network);
    } else if (name.rfind("attack.", 0) == 0 && name.size() > 7) {
      AttackConfig a;
      read_attack(section, name.substr(7), a);
      cfg.attacks.push_back(a);
    } else if (name == "detect") {
      read_detect(section, cfg.detect);
    } else if (name == "sweep") {
      read_sweep(section, cfg.sweep);
    } else if (name == "output") {
      std::string dir;
      section.read("dir", dir);
      if (!dir.empty()) cfg.output_dir = dir;
    } else {
      throw ConfigError("unknown config section [" + name + "]");
    }
    section.reject_unknown();
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto cfg = parse_config(buf.str());
  // Relative data paths are resolved against the config file location.
  const auto base = path.parent_path();
  if (!cfg.data.path.empty() && cfg.data.path.is_relative()) cfg.data.path = base / cfg.data.path;
  if (!cfg.data.labels.empty() && cfg.data.labels.is_relative())
    cfg.data.labels = base / cfg.data.labels;
  return cfg;
}

Dataset load_data(const DataConfig& cfg) {
  Dataset data;
  if (cfg.format == "moons")
    data = make_two_moons(cfg.samples, cfg.noise, cfg.seed);
  else if (cfg.format == "csv")
    data = load_csv(cfg.path, cfg.normalization);
  else if (cfg.format == "idx")
    data = load_idx(cfg.path, cfg.labels);
  else
    throw ConfigError("unknown data format '" + cfg.format + "'");
  assign_splits(data, cfg.train_fraction, cfg.val_fraction, cfg.seed);
  return data;
}

std::string content_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vmdetect
