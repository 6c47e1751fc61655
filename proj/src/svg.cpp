#include "nbhd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nbhd/util.hpp"

namespace nbhd::svg {
namespace {

const char* kColors[3] = {"#4d4d4d", "#1b9e77", "#d95f02"};  // Approach order

std::string num(double v) { return format_sig6(v); }

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Canvas {
 public:
  Canvas(double w, double h) : w_(w), h_(h) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
    body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }
  void circle(double cx, double cy, double r, const std::string& fill, double opacity = 1.0) {
    body_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r) << "\" fill=\"" << fill
          << "\" fill-opacity=\"" << num(opacity) << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke = "none") {
    body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
          << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill, double opacity) {
    body_ << "<polygon points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
    body_ << "\" fill=\"" << fill << "\" fill-opacity=\"" << num(opacity) << "\" stroke=\"" << fill << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
    body_ << "\"/>\n";
  }
  void text(double x, double y, std::string_view s, double size = 11, const std::string& anchor = "middle",
            const std::string& fill = "#000") {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\" fill=\"" << fill << "\">" << escape(s)
          << "</text>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
        << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_) << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n" << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double w_, h_;
  std::ostringstream body_;
};

// Linear map from a data range onto a pixel range.
struct Scale {
  double d0, d1, p0, p1;
  double operator()(double v) const { return d1 == d0 ? (p0 + p1) / 2 : p0 + (v - d0) / (d1 - d0) * (p1 - p0); }
};

std::vector<double> ticks(double lo, double hi, int target = 5) {
  const double span = hi - lo;
  if (!(span > 0) || !std::isfinite(span)) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  return out;
}

std::pair<double, double> padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {-1.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.08 * (hi - lo);
  return {lo - pad, hi + pad};
}

void y_axis(Canvas& c, const Scale& s, double x, double x_end, bool zero_line = true) {
  c.line(x, s.p0, x, s.p1, "#000");
  for (double t : ticks(std::min(s.d0, s.d1), std::max(s.d0, s.d1))) {
    c.line(x - 4, s(t), x, s(t), "#000");
    c.text(x - 6, s(t) + 4, num(t), 10, "end");
  }
  if (zero_line && std::min(s.d0, s.d1) < 0 && std::max(s.d0, s.d1) > 0) c.line(x, s(0), x_end, s(0), "#999", 0.8);
}

void x_axis(Canvas& c, const Scale& s, double y) {
  c.line(s.p0, y, s.p1, y, "#000");
  for (double t : ticks(std::min(s.d0, s.d1), std::max(s.d0, s.d1))) {
    c.line(s(t), y, s(t), y + 4, "#000");
    c.text(s(t), y + 15, num(t), 10);
  }
}

void legend(Canvas& c, double x, double y) {
  for (Approach a : kApproaches) {
    const int i = static_cast<int>(a);
    c.rect(x, y + i * 16 - 9, 10, 10, kColors[i]);
    c.text(x + 14, y + i * 16, to_string(a), 11, "start");
  }
}

}  // namespace

std::string ladder_figure(const std::vector<econ::LadderCell>& cells) {
  const std::vector<Comparison> comps{Comparison::VsIdeal, Comparison::VsStableDeclining};
  const double pw = 300, ph = 220, left = 60, top = 40;
  Canvas c(left + comps.size() * (pw + 40) + 120, top + kOutcomes.size() * (ph + 50));
  c.text(20, 20, "Treatment effect by specification (delta +/- 1.96 SE)", 13, "start");

  for (std::size_t oi = 0; oi < kOutcomes.size(); ++oi)
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
      const double x0 = left + ci * (pw + 40), y0 = top + oi * (ph + 50);
      std::vector<const econ::LadderCell*> sel;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& cell : cells)
        if (cell.spec.outcome == kOutcomes[oi] && cell.spec.comparison == comps[ci] && cell.fit) {
          sel.push_back(&cell);
          lo = std::min(lo, cell.fit->delta - 1.96 * cell.fit->se_delta);
          hi = std::max(hi, cell.fit->delta + 1.96 * cell.fit->se_delta);
        }
      lo = std::min(lo, 0.0);
      hi = std::max(hi, 0.0);
      auto [d0, d1] = padded(lo, hi);
      const Scale ys{d0, d1, y0 + ph, y0};
      y_axis(c, ys, x0, x0 + pw);
      c.line(x0, y0 + ph, x0 + pw, y0 + ph, "#000");
      c.text(x0 + pw / 2, y0 - 6,
             std::string(to_string(kOutcomes[oi])) + ", " + std::string(to_string(comps[ci])), 12);
      const double slot = pw / econ::kVariants.size();
      for (std::size_t vi = 0; vi < econ::kVariants.size(); ++vi)
        c.text(x0 + slot * (vi + 0.5), y0 + ph + 15, to_string(econ::kVariants[vi]), 10);
      for (const auto* cell : sel) {
        const auto vi = static_cast<double>(
            std::find(econ::kVariants.begin(), econ::kVariants.end(), cell->spec.variant) - econ::kVariants.begin());
        const int ai = static_cast<int>(cell->spec.approach);
        const double x = x0 + slot * (vi + 0.5) + (ai - 1) * slot * 0.22;
        const auto& f = *cell->fit;
        c.line(x, ys(f.delta - 1.96 * f.se_delta), x, ys(f.delta + 1.96 * f.se_delta), kColors[ai], 1.5);
        c.circle(x, ys(f.delta), 3.5, kColors[ai]);
      }
    }
  legend(c, left + comps.size() * (pw + 40), top + 20);
  return c.str();
}

std::string violin_figure(const stackinf::BootstrapDistribution& dist, Outcome outcome, Comparison comparison) {
  const double left = 70, top = 50, pw = 420, ph = 300;
  Canvas c(left + pw + 40, top + ph + 60);
  c.text(20, 22,
         "Bootstrap distribution of total effects: " + std::string(to_string(outcome)) + ", " +
             std::string(to_string(comparison)) + " (" + std::string(stackinf::to_string(dist.spec)) +
             ", B=" + std::to_string(dist.B) + ")",
         12, "start");
  const auto rows = dist.draws.rows();
  double lo = rows ? dist.draws.minCoeff() : -1.0, hi = rows ? dist.draws.maxCoeff() : 1.0;
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  auto [d0, d1] = padded(lo, hi);
  const Scale ys{d0, d1, top + ph, top};
  y_axis(c, ys, left, left + pw);
  c.line(left, top + ph, left + pw, top + ph, "#000");
  const double slot = pw / 3.0;

  for (Approach a : kApproaches) {
    const int ai = static_cast<int>(a);
    const double cx = left + slot * (ai + 0.5);
    c.text(cx, top + ph + 16, to_string(a), 11);
    if (rows < 2) continue;
    std::vector<double> v(dist.draws.col(ai).data(), dist.draws.col(ai).data() + rows);
    std::sort(v.begin(), v.end());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size() - 1));
    const double iqr = quantile_type7(v, 0.75) - quantile_type7(v, 0.25);
    double bw = 0.9 * std::min(sd, iqr > 0 ? iqr / 1.34 : sd) * std::pow(static_cast<double>(v.size()), -0.2);
    if (!(bw > 0)) bw = 1e-6;
    constexpr int kGrid = 64;
    std::vector<double> grid(kGrid), dens(kGrid);
    double dmax = 0.0;
    for (int g = 0; g < kGrid; ++g) {
      grid[g] = v.front() + (v.back() - v.front()) * g / (kGrid - 1);
      double s = 0.0;
      for (double x : v) s += std::exp(-0.5 * std::pow((grid[g] - x) / bw, 2));
      dens[g] = s;
      dmax = std::max(dmax, s);
    }
    std::vector<std::pair<double, double>> pts;
    const double half = slot * 0.38;
    for (int g = 0; g < kGrid; ++g) pts.emplace_back(cx - half * dens[g] / dmax, ys(grid[g]));
    for (int g = kGrid - 1; g >= 0; --g) pts.emplace_back(cx + half * dens[g] / dmax, ys(grid[g]));
    c.polygon(pts, kColors[ai], 0.35);
    c.line(cx, ys(dist.ci_low[ai]), cx, ys(dist.ci_high[ai]), "#d62728", 3);
    c.circle(cx, ys(dist.means[ai]), 3.5, "#000");
    c.text(cx + half + 4, ys(dist.means[ai]) + 4, num(dist.means[ai]), 11, "start");
  }
  return c.str();
}

std::string explanatory_figure(const std::vector<quantfit::R2Cell>& cells, const aggregate::Panel& panel) {
  const double left = 60, top = 50, pw = 360, ph = 240, gap = 90;
  const std::vector<Outcome> outs{Outcome::Poverty, Outcome::Canopy};
  Canvas c(left + 2 * (pw + gap), top + outs.size() * (ph + 70));
  c.text(20, 22, "A: adjusted R2 by specification    B: authoritative vs method prediction", 12, "start");

  for (std::size_t oi = 0; oi < outs.size(); ++oi) {
    const double y0 = top + oi * (ph + 70);
    // Panel A
    const Scale xs{0.0, 1.0, left, left + pw};
    const double slot = ph / quantfit::kR2Specs.size();
    x_axis(c, xs, y0 + ph);
    c.text(left + pw / 2, y0 - 6, std::string("A: ") + std::string(to_string(outs[oi])), 12);
    for (std::size_t si = 0; si < quantfit::kR2Specs.size(); ++si) {
      const double y = y0 + slot * (si + 0.5);
      c.text(left + 4, y - 8, quantfit::to_string(quantfit::kR2Specs[si]), 9, "start", "#555");
      for (const auto& cell : cells) {
        if (cell.outcome != outs[oi] || cell.spec != quantfit::kR2Specs[si] || !cell.error.empty()) continue;
        const auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
        c.line(xs(clamp01(cell.adj_r2.ci_low)), y, xs(clamp01(cell.adj_r2.ci_high)), y, "#d62728", 2);
        c.circle(xs(clamp01(cell.adj_r2.point)), y, 4, "#000");
        c.text(xs(clamp01(cell.adj_r2.point)), y + 14, num(cell.adj_r2.point), 9);
      }
    }
    // Panel B
    const double x0 = left + pw + gap;
    const auto auth = panel.layer(Approach::Authoritative);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Approach a : kApproaches)
      for (const auto* r : panel.layer(a)) {
        lo = std::min(lo, r->outcome(outs[oi]));
        hi = std::max(hi, r->outcome(outs[oi]));
      }
    auto [d0, d1] = padded(lo, hi);
    const Scale bx{d0, d1, x0, x0 + pw}, by{d0, d1, y0 + ph, y0};
    x_axis(c, bx, y0 + ph);
    y_axis(c, by, x0, x0 + pw, false);
    c.line(bx(d0), by(d0), bx(d1), by(d1), "#999", 0.8);
    c.text(x0 + pw / 2, y0 - 6, std::string("B: ") + std::string(to_string(outs[oi])), 12);
    for (Approach a : {Approach::Mllm, Approach::Segmentation}) {
      const auto layer = panel.layer(a);
      for (std::size_t i = 0; i < layer.size() && i < auth.size(); ++i)
        c.circle(bx(layer[i]->outcome(outs[oi])), by(auth[i]->outcome(outs[oi])), 2, kColors[static_cast<int>(a)], 0.6);
    }
  }
  legend(c, left + 2 * pw + gap + 10, top + 10);
  return c.str();
}

std::string quantile_figure(const std::vector<quantfit::QuantileCell>& cells) {
  const double left = 60, top = 50, pw = 320, ph = 220, gap = 70;
  const std::vector<Outcome> outs{Outcome::Poverty, Outcome::Canopy};
  Canvas c(left + outs.size() * (pw + gap) + 100, top + ph + 60);
  c.text(20, 22, "Pseudo-R2 across quantiles", 12, "start");
  for (std::size_t oi = 0; oi < outs.size(); ++oi) {
    const double x0 = left + oi * (pw + gap);
    const Scale xs{0.0, 1.0, x0, x0 + pw}, ys{0.0, 1.0, top + ph, top};
    x_axis(c, xs, top + ph);
    y_axis(c, ys, x0, x0 + pw, false);
    c.text(x0 + pw / 2, top - 6, to_string(outs[oi]), 12);
    for (Approach a : {Approach::Mllm, Approach::Segmentation}) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& cell : cells) {
        if (cell.outcome != outs[oi] || cell.approach != a || !cell.error.empty()) continue;
        const double y = std::clamp(cell.pseudo_r2.point, 0.0, 1.0);
        pts.emplace_back(xs(cell.tau), ys(y));
        c.line(xs(cell.tau), ys(std::clamp(cell.pseudo_r2.ci_low, 0.0, 1.0)), xs(cell.tau),
               ys(std::clamp(cell.pseudo_r2.ci_high, 0.0, 1.0)), kColors[static_cast<int>(a)], 1.5);
        c.circle(xs(cell.tau), ys(y), 3.5, kColors[static_cast<int>(a)]);
      }
      if (pts.size() > 1) c.polyline(pts, kColors[static_cast<int>(a)]);
    }
  }
  legend(c, left + outs.size() * (pw + gap), top + 10);
  return c.str();
}

}  // namespace nbhd::svg
