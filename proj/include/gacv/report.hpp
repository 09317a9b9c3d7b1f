#ifndef GACV_REPORT_HPP
#define GACV_REPORT_HPP

// CSV tables and hand-written SVG figures for the experiment runner.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "gacv/experiments.hpp"

namespace gacv::report {

/// Shortest round-trip-safe text for a double; "nan" for skipped cells.
inline std::string num(double v)
{
  if (std::isnan(v)) {
    return "nan";
  }
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string join(const std::vector<std::int64_t>& v, char sep = ';')
{
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) {
      out += sep;
    }
    out += std::to_string(v[i]);
  }
  return out;
}

inline std::string is_vs_mf_csv(const IsVsMfConfig& c, std::uint64_t seed, const std::vector<IsVsMfCell>& cells)
{
  std::ostringstream os;
  os << "experiment,seed,rho01,rho02,rho12,n,m1,m2,variance_a,variance_b,ratio\n";
  for (const auto& cell : cells) {
    os << "is-vs-mf," << seed << ',' << num(c.rho01) << ',' << num(c.rho02) << ',' << num(c.rho12) << ','
       << c.n << ',' << cell.m1 << ',' << cell.m2() << ',' << num(cell.variance_is) << ','
       << num(cell.variance_mf) << ',' << num(cell.ratio) << '\n';
  }
  return os.str();
}

inline std::string saob_sweep_csv(const SaobSweepConfig& c, const std::vector<SweepRecord>& records)
{
  std::ostringstream os;
  os << "experiment,seed,L,M,instance,problem_seed,m,m_hat,cost_mlblue,cost_gacv,cost_parity,"
        "variance_a,variance_b,ratio\n";
  for (const auto& r : records) {
    os << "saob-sweep," << c.seed << ',' << r.highest_model << ',' << r.max_group_size << ','
       << r.instance << ',' << r.problem_seed << ',' << join(r.m) << ',' << join(r.m_hat) << ','
       << num(r.cost_mlblue) << ',' << num(r.cost_gacv) << ',' << (r.cost_parity ? 1 : 0) << ','
       << num(r.variance_mlblue) << ',' << num(r.variance_gacv) << ',' << num(r.ratio) << '\n';
  }
  return os.str();
}

inline std::string sweep_summary_csv(const std::vector<SweepPairSummary>& summaries)
{
  std::ostringstream os;
  os << "L,M,completed,failures,fraction_above_one,min_ratio,median_ratio,max_ratio,cost_parity_violations\n";
  for (const auto& s : summaries) {
    os << s.highest_model << ',' << s.max_group_size << ',' << s.completed << ',' << s.failures << ','
       << num(s.fraction_above_one) << ',' << num(s.min_ratio) << ',' << num(s.median_ratio) << ','
       << num(s.max_ratio) << ',' << s.cost_parity_violations << '\n';
  }
  return os.str();
}

inline std::string histogram_csv(int highest_model, int max_group_size, const Histogram& h)
{
  std::ostringstream os;
  os << "L,M,bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    os << highest_model << ',' << max_group_size << ',' << num(h.edges[b]) << ',' << num(h.edges[b + 1])
       << ',' << h.counts[b] << '\n';
  }
  return os.str();
}

inline std::string table1_csv(const ConversionTable& t)
{
  std::ostringstream os;
  os << "group,model,mlblue,gacv\n";
  for (std::size_t k = 0; k < t.mlblue.size(); ++k) {
    for (std::size_t l = 0; l < t.mlblue[k].size(); ++l) {
      os << k << ',' << l << ',' << t.mlblue[k][l] << ',' << t.gacv[k][l] << '\n';
    }
  }
  for (std::size_t l = 0; l < t.evals_mlblue.size(); ++l) {
    os << "total," << l << ',' << t.evals_mlblue[l] << ',' << t.evals_gacv[l] << '\n';
  }
  return os.str();
}

/// Fixed-width text rendering of the conversion table.
inline std::string table1_text(const ConversionTable& t)
{
  std::ostringstream os;
  const auto models = t.evals_mlblue.size();
  os << "group ";
  for (std::size_t l = 0; l < models; ++l) {
    os << "| model " << l << " (MLB/GACV) ";
  }
  os << '\n';
  auto row = [&](const std::string& label, const std::vector<std::int64_t>& a,
                 const std::vector<std::int64_t>& b) {
    os << std::left << std::setw(6) << label;
    for (std::size_t l = 0; l < models; ++l) {
      std::ostringstream cell;
      cell << a[l] << " / " << b[l];
      os << "| " << std::setw(20) << cell.str();
    }
    os << '\n';
  };
  for (std::size_t k = 0; k < t.mlblue.size(); ++k) {
    row("S" + std::to_string(k + 1), t.mlblue[k], t.gacv[k]);
  }
  row("n", t.evals_mlblue, t.evals_gacv);
  os << "m     = [" << join(t.m, ',') << "]\n";
  os << "m_hat = [" << join(t.m_hat, ',') << "]\n";
  os << "cost: MLB " << num(t.cost_mlblue) << ", GACV " << num(t.cost_gacv) << '\n';
  return os.str();
}

inline std::string replicates_csv(const std::vector<double>& values)
{
  std::ostringstream os;
  os << "replicate_index,estimate\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << i << ',' << num(values[i]) << '\n';
  }
  return os.str();
}

// --- SVG -------------------------------------------------------------------------

inline constexpr int kCanvasWidth = 800;
inline constexpr int kCanvasHeight = 600;

inline const std::array<const char*, 8>& viridis8()
{
  static const std::array<const char*, 8> ramp{"#440154", "#46327e", "#365c8d", "#277f8e",
                                               "#1fa187", "#4ac16d", "#a0da39", "#fde725"};
  return ramp;
}

inline std::string svg_open()
{
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvasWidth << "\" height=\""
     << kCanvasHeight << "\" viewBox=\"0 0 " << kCanvasWidth << ' ' << kCanvasHeight
     << "\" style=\"background:white\">\n";
  return os.str();
}

/**
 * Heatmap of ratio over (m1, m2 - m1); m1 along x, extra samples along y
 * (bottom to top, one row per configured value). Cell edges separating
 * ratio > 1 from ratio <= 1 are drawn as the unity contour.
 */
inline std::string is_vs_mf_svg(const IsVsMfConfig& c, const std::vector<IsVsMfCell>& cells)
{
  const auto nx = c.m1_values.size();
  const auto ny = c.extra_values.size();
  const double left = 90, right = 130, top = 50, bottom = 70;
  const double cw = (kCanvasWidth - left - right) / static_cast<double>(nx);
  const double ch = (kCanvasHeight - top - bottom) / static_cast<double>(ny);
  auto at = [&](std::size_t ix, std::size_t iy) -> const IsVsMfCell& { return cells[ix * ny + iy]; };

  double lo = INFINITY;
  double hi = -INFINITY;
  for (const auto& cell : cells) {
    if (cell.valid) {
      lo = std::min(lo, cell.ratio);
      hi = std::max(hi, cell.ratio);
    }
  }
  const auto& ramp = viridis8();
  auto color = [&](double r) {
    if (!(hi > lo)) {
      return ramp[0];
    }
    auto b = static_cast<std::size_t>((r - lo) / (hi - lo) * 8.0);
    return ramp[std::min<std::size_t>(b, 7)];
  };
  auto x_of = [&](std::size_t ix) { return left + cw * static_cast<double>(ix); };
  auto y_of = [&](std::size_t iy) { return kCanvasHeight - bottom - ch * static_cast<double>(iy + 1); };

  std::ostringstream os;
  os << svg_open();
  os << "<text x=\"" << kCanvasWidth / 2 << "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">"
     << "Var[IS] / Var[MF], rho = (" << num(c.rho01) << ", " << num(c.rho02) << ", " << num(c.rho12)
     << "), n = " << c.n << "</text>\n";
  for (std::size_t ix = 0; ix < nx; ++ix) {
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const auto& cell = at(ix, iy);
      os << "<rect x=\"" << num(x_of(ix)) << "\" y=\"" << num(y_of(iy)) << "\" width=\"" << num(cw)
         << "\" height=\"" << num(ch) << "\" fill=\"" << (cell.valid ? color(cell.ratio) : "#cccccc")
         << "\"/>\n";
    }
  }
  auto above = [&](std::size_t ix, std::size_t iy) {
    const auto& cell = at(ix, iy);
    return cell.valid && cell.ratio > 1.0;
  };
  auto valid = [&](std::size_t ix, std::size_t iy) { return at(ix, iy).valid; };
  os << "<g stroke=\"red\" stroke-width=\"3\" fill=\"none\">\n";
  for (std::size_t ix = 0; ix < nx; ++ix) {
    for (std::size_t iy = 0; iy < ny; ++iy) {
      if (ix + 1 < nx && valid(ix, iy) && valid(ix + 1, iy) && above(ix, iy) != above(ix + 1, iy)) {
        os << "<line x1=\"" << num(x_of(ix + 1)) << "\" y1=\"" << num(y_of(iy)) << "\" x2=\""
           << num(x_of(ix + 1)) << "\" y2=\"" << num(y_of(iy) + ch) << "\"/>\n";
      }
      if (iy + 1 < ny && valid(ix, iy) && valid(ix, iy + 1) && above(ix, iy) != above(ix, iy + 1)) {
        os << "<line x1=\"" << num(x_of(ix)) << "\" y1=\"" << num(y_of(iy)) << "\" x2=\""
           << num(x_of(ix) + cw) << "\" y2=\"" << num(y_of(iy)) << "\"/>\n";
      }
    }
  }
  os << "</g>\n";
  for (std::size_t ix = 0; ix < nx; ++ix) {
    os << "<text x=\"" << num(x_of(ix) + cw / 2) << "\" y=\"" << kCanvasHeight - bottom + 18
       << "\" text-anchor=\"middle\" font-size=\"10\">" << c.m1_values[ix] << "</text>\n";
  }
  for (std::size_t iy = 0; iy < ny; ++iy) {
    os << "<text x=\"" << left - 6 << "\" y=\"" << num(y_of(iy) + ch / 2 + 4)
       << "\" text-anchor=\"end\" font-size=\"10\">" << c.extra_values[iy] << "</text>\n";
  }
  os << "<text x=\"" << num(left + (kCanvasWidth - left - right) / 2) << "\" y=\"" << kCanvasHeight - 25
     << "\" text-anchor=\"middle\" font-size=\"13\">m1</text>\n";
  os << "<text x=\"20\" y=\"" << kCanvasHeight / 2 << "\" font-size=\"13\" transform=\"rotate(-90 20 "
     << kCanvasHeight / 2 << ")\" text-anchor=\"middle\">m2 - m1</text>\n";
  // Color legend.
  const double lx = kCanvasWidth - right + 30;
  const double lh = (kCanvasHeight - top - bottom) / 8.0;
  for (std::size_t b = 0; b < 8; ++b) {
    os << "<rect x=\"" << num(lx) << "\" y=\"" << num(kCanvasHeight - bottom - lh * static_cast<double>(b + 1))
       << "\" width=\"20\" height=\"" << num(lh) << "\" fill=\"" << ramp[b] << "\"/>\n";
  }
  if (std::isfinite(lo)) {
    os << "<text x=\"" << num(lx + 26) << "\" y=\"" << kCanvasHeight - bottom << "\" font-size=\"10\">"
       << num(std::round(lo * 1000) / 1000) << "</text>\n";
    os << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(top + 10) << "\" font-size=\"10\">"
       << num(std::round(hi * 1000) / 1000) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Bar histogram of variance ratios with a vertical line at ratio 1. One rect per non-empty bin.
inline std::string histogram_svg(const std::string& title, const Histogram& h)
{
  const double left = 70, right = 30, top = 50, bottom = 60;
  const double lo = h.edges.front();
  const double hi = h.edges.back();
  const double plot_w = kCanvasWidth - left - right;
  const double plot_h = kCanvasHeight - top - bottom;
  const int peak = std::max(1, h.counts.empty() ? 1 : *std::max_element(h.counts.begin(), h.counts.end()));
  auto x_of = [&](double v) { return left + (v - lo) / (hi - lo) * plot_w; };

  std::ostringstream os;
  os << svg_open();
  os << "<text x=\"" << kCanvasWidth / 2 << "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">" << title
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << kCanvasHeight - bottom << "\" x2=\"" << kCanvasWidth - right
     << "\" y2=\"" << kCanvasHeight - bottom << "\" stroke=\"black\"/>\n";
  os << "<g fill=\"" << viridis8()[2] << "\">\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    if (h.counts[b] == 0) {
      continue;
    }
    const double height = plot_h * h.counts[b] / static_cast<double>(peak);
    os << "<rect x=\"" << num(x_of(h.edges[b])) << "\" y=\"" << num(kCanvasHeight - bottom - height)
       << "\" width=\"" << num(x_of(h.edges[b + 1]) - x_of(h.edges[b])) << "\" height=\"" << num(height)
       << "\"/>\n";
  }
  os << "</g>\n";
  if (lo <= 1.0 && 1.0 <= hi) {
    os << "<line x1=\"" << num(x_of(1.0)) << "\" y1=\"" << top << "\" x2=\"" << num(x_of(1.0)) << "\" y2=\""
       << kCanvasHeight - bottom << "\" stroke=\"red\" stroke-width=\"2\" stroke-dasharray=\"6,4\"/>\n";
  }
  const int ticks = 5;
  for (int t = 0; t <= ticks; ++t) {
    const double v = lo + (hi - lo) * t / ticks;
    os << "<text x=\"" << num(x_of(v)) << "\" y=\"" << kCanvasHeight - bottom + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << num(std::round(v * 100) / 100) << "</text>\n";
  }
  os << "<text x=\"" << kCanvasWidth / 2 << "\" y=\"" << kCanvasHeight - 20
     << "\" text-anchor=\"middle\" font-size=\"13\">Var[ML-BLUE] / Var[GACV]</text>\n";
  os << "<text x=\"" << left - 10 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\" font-size=\"11\">" << peak
     << "</text>\n";
  if (h.underflow + h.overflow > 0) {
    os << "<text x=\"" << kCanvasWidth - right << "\" y=\"" << top << "\" text-anchor=\"end\" font-size=\"11\">"
       << "outside range: " << h.underflow << " below, " << h.overflow << " above</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace gacv::report

#endif  // GACV_REPORT_HPP
