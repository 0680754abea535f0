#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "vmdetect/error.hpp"
#include "vmdetect/evaluation.hpp"

namespace vmdetect {

namespace {

constexpr double kSize = 400.0;
constexpr double kMargin = 50.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string safe_name(const std::string& label) {
  std::string out;
  for (const char c : label)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out.empty() ? "curve" : out;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_roc_svg(const RocCurve& curve, std::ostream& out) {
  const double w = kSize + 2 * kMargin;
  auto px = [](double fpr) { return kMargin + fpr * kSize; };
  auto py = [](double tpr) { return kMargin + (1.0 - tpr) * kSize; };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(w)
      << "\" viewBox=\"0 0 " << fmt(w) << ' ' << fmt(w) << "\">\n";
  out << "<rect x=\"" << fmt(kMargin) << "\" y=\"" << fmt(kMargin) << "\" width=\"" << fmt(kSize)
      << "\" height=\"" << fmt(kSize) << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(1))
      << "\" y2=\"" << fmt(py(1)) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t k = curve.points.size(); k-- > 0;)
    out << fmt(px(curve.points[k].fpr)) << ',' << fmt(py(curve.points[k].tpr)) << ' ';
  out << "\"/>\n";
  out << "<text x=\"" << fmt(w / 2) << "\" y=\"" << fmt(w - 12) << "\" text-anchor=\"middle\">"
      << "false positive rate</text>\n";
  out << "<text x=\"14\" y=\"" << fmt(w / 2) << "\" transform=\"rotate(-90 14 " << fmt(w / 2)
      << ")\" text-anchor=\"middle\">true positive rate</text>\n";
  out << "<text x=\"" << fmt(w / 2) << "\" y=\"30\" text-anchor=\"middle\">"
      << escape(curve.label) << " (AUC " << fmt(curve.auc) << ")</text>\n";
  out << "</svg>\n";
}

void write_sweep_svg(const SweepResult& sweep, std::ostream& out) {
  const double bar = 14.0;
  const double width = 2 * kMargin + bar * static_cast<double>(sweep.cells.size()) * 1.5;
  const double height = kSize + 2 * kMargin;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
      << fmt(height) << "\">\n";
  out << "<line x1=\"" << fmt(kMargin) << "\" y1=\"" << fmt(kMargin + kSize) << "\" x2=\""
      << fmt(width - kMargin) << "\" y2=\"" << fmt(kMargin + kSize) << "\" stroke=\"black\"/>\n";
  const double chance = kMargin + kSize * 0.5;
  out << "<line x1=\"" << fmt(kMargin) << "\" y1=\"" << fmt(chance) << "\" x2=\""
      << fmt(width - kMargin) << "\" y2=\"" << fmt(chance)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  double x = kMargin;
  for (const auto& c : sweep.cells) {
    const double auc = c.error ? 0.0 : c.auc;
    out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(kMargin + (1.0 - auc) * kSize)
        << "\" width=\"" << fmt(bar) << "\" height=\"" << fmt(auc * kSize)
        << "\" fill=\"steelblue\"><title>" << escape(to_string(c.method)) << " B=" << c.block
        << " param=" << fmt(c.parameter) << " AUC=" << fmt(auc) << "</title></rect>\n";
    x += bar * 1.5;
  }
  out << "</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::vector<RocCurve>& curves,
                                              const SweepResult* sweep,
                                              const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  if (curves.empty() && (!sweep || sweep->cells.empty())) return written;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  if (!curves.empty()) {
    const auto csv_path = out_dir / "roc_points.csv";
    auto csv = open_for_write(csv_path);
    csv.precision(17);
    csv << "curve,tau,fpr,tpr\n";
    for (std::size_t i = 0; i < curves.size(); ++i) {
      const auto& curve = curves[i];
      const std::string name = safe_name(curve.label.empty() ? "curve" + std::to_string(i) : curve.label);
      for (const auto& p : curve.points)
        csv << name << ',' << p.tau << ',' << p.fpr << ',' << p.tpr << '\n';
      const auto svg_path = out_dir / ("roc_" + name + ".svg");
      auto svg = open_for_write(svg_path);
      write_roc_svg(curve, svg);
      written.push_back(svg_path);
    }
    written.push_back(csv_path);
  }
  if (sweep && !sweep->cells.empty()) {
    const auto svg_path = out_dir / "sweep.svg";
    auto svg = open_for_write(svg_path);
    write_sweep_svg(*sweep, svg);
    written.push_back(svg_path);
  }
  return written;
}

}  // namespace vmdetect
