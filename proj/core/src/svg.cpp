#include "vrfm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vrfm {

namespace {

constexpr double kW = 640, kH = 480;
constexpr double kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

struct Canvas {
  std::ostringstream body;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

  double sx(double x) const {
    return kMarginL + (x - xmin) / (xmax - xmin) * (kW - kMarginL - kMarginR);
  }
  double sy(double y) const {
    return kH - kMarginB - (y - ymin) / (ymax - ymin) * (kH - kMarginT - kMarginB);
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0) {
    body << "<line x1='" << x1 << "' y1='" << y1 << "' x2='" << x2 << "' y2='" << y2
         << "' stroke='" << stroke << "' stroke-width='" << width << "'/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    body << "<rect x='" << x << "' y='" << y << "' width='" << w << "' height='" << h
         << "' fill='" << fill << "'/>\n";
  }
  void circle(double cx, double cy, double r, const std::string& fill) {
    body << "<circle cx='" << cx << "' cy='" << cy << "' r='" << r << "' fill='" << fill
         << "'/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "middle") {
    body << "<text x='" << x << "' y='" << y << "' font-size='" << size
         << "' font-family='sans-serif' text-anchor='" << anchor << "'>" << s
         << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double width = 1.5, double opacity = 1.0) {
    body << "<polyline fill='none' stroke='" << stroke << "' stroke-width='" << width
         << "' stroke-opacity='" << opacity << "' points='";
    for (const auto& [x, y] : pts) body << x << "," << y << " ";
    body << "'/>\n";
  }

  void axes(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    line(kMarginL, kH - kMarginB, kW - kMarginR, kH - kMarginB, "#000");
    line(kMarginL, kMarginT, kMarginL, kH - kMarginB, "#000");
    text(kW / 2, kMarginT - 14, title, 14);
    text(kW / 2, kH - 10, xlabel);
    body << "<text x='18' y='" << kH / 2
         << "' font-size='12' font-family='sans-serif' text-anchor='middle' "
            "transform='rotate(-90 18 "
         << kH / 2 << ")'>" << ylabel << "</text>\n";
  }

  void y_ticks(int n = 5) {
    for (int i = 0; i <= n; ++i) {
      const double v = ymin + (ymax - ymin) * i / n;
      const double y = sy(v);
      line(kMarginL - 4, y, kMarginL, y, "#000");
      std::ostringstream lab;
      lab.precision(3);
      lab << v;
      text(kMarginL - 8, y + 4, lab.str(), 10, "end");
    }
  }

  void save(const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write SVG: " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
       << "' viewBox='0 0 " << kW << " " << kH << "'>\n<rect width='100%' height='100%' "
       << "fill='white'/>\n"
       << body.str() << "</svg>\n";
  }
};

std::string viridis(double f) {
  // Five-stop approximation of the viridis colormap.
  static const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140},
                                     {94, 201, 98}, {253, 231, 37}};
  f = std::clamp(f, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(f));
  const double w = f - i;
  std::ostringstream os;
  os << "rgb(" << static_cast<int>(stops[i][0] + w * (stops[i + 1][0] - stops[i][0])) << ","
     << static_cast<int>(stops[i][1] + w * (stops[i + 1][1] - stops[i][1])) << ","
     << static_cast<int>(stops[i][2] + w * (stops[i + 1][2] - stops[i][2])) << ")";
  return os.str();
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<std::string>& x_tick_labels,
                      const std::vector<Series>& series) {
  Canvas cv;
  cv.xmin = -0.5;
  cv.xmax = static_cast<double>(x_tick_labels.size()) - 0.5;
  double lo = 1e300, hi = -1e300;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double e = i < s.yerr.size() ? s.yerr[i] : 0.0;
      lo = std::min(lo, s.y[i] - e);
      hi = std::max(hi, s.y[i] + e);
    }
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.08 * (hi - lo);
  cv.ymin = lo - pad;
  cv.ymax = hi + pad;
  cv.axes(title, xlabel, ylabel);
  cv.y_ticks();
  for (std::size_t i = 0; i < x_tick_labels.size(); ++i) {
    const double x = cv.sx(static_cast<double>(i));
    cv.line(x, kH - kMarginB, x, kH - kMarginB + 4, "#000");
    cv.text(x, kH - kMarginB + 18, x_tick_labels[i], 10);
  }
  double ly = kMarginT + 10;
  for (const Series& s : series) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double x = cv.sx(static_cast<double>(i));
      const double y = cv.sy(s.y[i]);
      pts.emplace_back(x, y);
      if (i < s.yerr.size() && s.yerr[i] > 0.0) {
        cv.line(x, cv.sy(s.y[i] - s.yerr[i]), x, cv.sy(s.y[i] + s.yerr[i]), s.color, 1.0);
      }
      cv.circle(x, y, 2.5, s.color);
    }
    cv.polyline(pts, s.color, 2.0);
    cv.line(kW - kMarginR - 130, ly, kW - kMarginR - 105, ly, s.color, 2.5);
    cv.text(kW - kMarginR - 100, ly + 4, s.label, 11, "start");
    ly += 16;
  }
  cv.save(path);
}

void write_heatmap(const std::string& path, const std::string& title,
                   const std::vector<double>& xs, const std::vector<double>& ts,
                   const Matrix& values, const Matrix& mask) {
  Canvas cv;
  cv.xmin = 0;
  cv.xmax = static_cast<double>(ts.size());
  cv.ymin = 0;
  cv.ymax = static_cast<double>(xs.size());
  cv.axes(title, "t bin", "x bin");
  double vmax = 0.0;
  for (Index r = 0; r < values.rows(); ++r)
    for (Index c = 0; c < values.cols(); ++c)
      if (mask(r, c) > 0.5) vmax = std::max(vmax, values(r, c));
  if (vmax <= 0.0) vmax = 1.0;
  const double cw = (kW - kMarginL - kMarginR) / ts.size();
  const double ch = (kH - kMarginT - kMarginB) / xs.size();
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      const std::string fill =
          mask(r, c) > 0.5 ? viridis(values(r, c) / vmax) : std::string("#cccccc");
      cv.rect(cv.sx(static_cast<double>(c)), cv.sy(static_cast<double>(r + 1)), cw + 0.5,
              ch + 0.5, fill);
    }
  }
  for (std::size_t i = 0; i < ts.size(); i += std::max<std::size_t>(1, ts.size() / 8)) {
    std::ostringstream lab;
    lab.precision(2);
    lab << ts[i];
    cv.text(cv.sx(i + 0.5), kH - kMarginB + 18, lab.str(), 10);
  }
  for (std::size_t i = 0; i < xs.size(); i += std::max<std::size_t>(1, xs.size() / 8)) {
    std::ostringstream lab;
    lab.precision(2);
    lab << xs[i];
    cv.text(kMarginL - 8, cv.sy(i + 0.5) + 4, lab.str(), 10, "end");
  }
  cv.save(path);
}

void write_trajectories_2d(const std::string& path, const std::string& title,
                           const std::vector<Matrix>& paths,
                           const std::vector<PointSet>& overlays) {
  Canvas cv;
  double lo = -1.5, hi = 1.5;
  for (const Matrix& p : paths) {
    lo = std::min({lo, p.col(0).minCoeff(), p.col(1).minCoeff()});
    hi = std::max({hi, p.col(0).maxCoeff(), p.col(1).maxCoeff()});
  }
  cv.xmin = lo;
  cv.xmax = hi;
  cv.ymin = lo;
  cv.ymax = hi;
  cv.axes(title, "x1", "x2");
  for (const Matrix& p : paths) {
    std::vector<std::pair<double, double>> pts;
    for (Index i = 0; i < p.rows(); ++i) pts.emplace_back(cv.sx(p(i, 0)), cv.sy(p(i, 1)));
    cv.polyline(pts, "#2ca02c", 0.8, 0.5);
  }
  for (const PointSet& ov : overlays)
    for (Index i = 0; i < ov.points.rows(); ++i)
      cv.circle(cv.sx(ov.points(i, 0)), cv.sy(ov.points(i, 1)), 1.6, ov.color);
  cv.save(path);
}

void write_trajectories_1d(const std::string& path, const std::string& title,
                           const std::vector<double>& times,
                           const std::vector<std::vector<double>>& paths) {
  Canvas cv;
  cv.xmin = 0.0;
  cv.xmax = 1.0;
  double lo = -2.0, hi = 2.0;
  for (const auto& p : paths)
    for (double v : p) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  cv.ymin = lo;
  cv.ymax = hi;
  cv.axes(title, "t", "x");
  cv.y_ticks();
  for (const auto& p : paths) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < p.size(); ++i)
      pts.emplace_back(cv.sx(times[i]), cv.sy(p[i]));
    cv.polyline(pts, "#2ca02c", 0.8, 0.5);
  }
  cv.save(path);
}

}  // namespace vrfm
