#pragma once

// Bullseye layout for one word's yearly vectors. The radial coordinate is
// the exact cosine distance to the base year; the angle comes from a
// deterministic 2-D PCA of the trajectory and is only a visual aid.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "semstab/common.hpp"
#include "semstab/metrics.hpp"
#include "semstab/store.hpp"

namespace semstab {

struct BullseyePoint {
  int year = 0;
  double radius = 0;  // 1 - cos(v_base, v_year)
  double angle = 0;   // [0, 2*pi)
};

struct BullseyeFrame {
  std::string word;
  int base_year = 0;
  std::vector<BullseyePoint> points;
};

inline BullseyeFrame bullseye(const WordTrajectory& traj, int base_year) {
  traj.validate();
  std::size_t base = traj.size();
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (traj.years[i] == base_year) base = i;
  if (base == traj.size()) fail(ErrorKind::data, "bullseye: base year " + std::to_string(base_year) + " not in trajectory of '" + traj.word + "'");

  const auto n = static_cast<Eigen::Index>(traj.size());
  const auto d = static_cast<Eigen::Index>(traj.vectors.front().size());
  Eigen::MatrixXd stacked(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    stacked.row(i) = Eigen::Map<const Eigen::RowVectorXd>(traj.vectors[static_cast<std::size_t>(i)].data(), d);
  stacked.rowwise() -= stacked.colwise().mean();

  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(n, 2);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, sv.size()); ++c) {
    if (!(sv(c) > 1e-12 * std::max(1.0, sv(0)))) break;
    Eigen::VectorXd col = svd.matrixU().col(c) * sv(c);
    // Orient so the final year has a non-negative coordinate; if it sits on
    // the axis, make the first non-zero entry positive instead.
    double pivot = col(n - 1);
    for (Eigen::Index i = 0; pivot == 0 && i < n; ++i) pivot = col(i);
    if (pivot < 0) col = -col;
    coords.col(c) = col;
  }

  BullseyeFrame frame;
  frame.word = traj.word;
  frame.base_year = base_year;
  const double two_pi = 2 * std::numbers::pi;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    BullseyePoint p;
    p.year = traj.years[i];
    p.radius = i == base ? 0.0 : 1.0 - cosine(traj.vectors[base], traj.vectors[i]);
    const auto r = static_cast<Eigen::Index>(i);
    if (coords(r, 0) != 0 || coords(r, 1) != 0) {
      p.angle = std::atan2(coords(r, 1), coords(r, 0));
      if (p.angle < 0) p.angle += two_pi;
      if (p.angle >= two_pi) p.angle = 0;
    }
    frame.points.push_back(p);
  }
  return frame;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace detail

/// Pixels per unit of cosine distance, and the canvas centre.
inline constexpr double kBullseyeScale = 100.0;
inline constexpr double kBullseyeCenter = 250.0;

inline std::string bullseye_csv(const BullseyeFrame& frame) {
  std::string out = "year,radius,angle\n";
  for (const auto& p : frame.points) {
    out += std::to_string(p.year) + ",";
    append_double(out, p.radius);
    out += ",";
    append_double(out, p.angle);
    out += "\n";
  }
  return out;
}

inline std::string bullseye_svg(const BullseyeFrame& frame) {
  using detail::fixed3;
  const double c = kBullseyeCenter;
  const double size = 2 * c;
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fixed3(size) + "\" height=\"" +
       fixed3(size) + "\" viewBox=\"0 0 " + fixed3(size) + " " + fixed3(size) + "\">\n";
  s += "  <title>" + detail::xml_escape(frame.word) + " (base " + std::to_string(frame.base_year) + ")</title>\n";
  s += "  <rect x=\"0\" y=\"0\" width=\"" + fixed3(size) + "\" height=\"" + fixed3(size) + "\" fill=\"white\"/>\n";
  for (double ring : {0.25, 0.5, 0.75, 1.0}) {
    s += "  <circle class=\"ring\" cx=\"" + fixed3(c) + "\" cy=\"" + fixed3(c) + "\" r=\"" + fixed3(ring * kBullseyeScale) +
         "\" fill=\"none\" stroke=\"#999999\" stroke-width=\"1\"/>\n";
  }
  for (const auto& p : frame.points) {
    const double x = c + p.radius * kBullseyeScale * std::cos(p.angle);
    const double y = c - p.radius * kBullseyeScale * std::sin(p.angle);
    const bool is_base = p.year == frame.base_year;
    s += "  <circle class=\"point\" data-year=\"" + std::to_string(p.year) + "\" cx=\"" + fixed3(x) + "\" cy=\"" + fixed3(y) +
         "\" r=\"4\" fill=\"" + (is_base ? "#c0392b" : "#2c3e50") + "\"/>\n";
    s += "  <text x=\"" + fixed3(x + 6) + "\" y=\"" + fixed3(y - 6) + "\" font-size=\"10\" font-family=\"sans-serif\">" +
         std::to_string(p.year) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Writes `<stem>.svg` and `<stem>.csv`.
inline void render(const BullseyeFrame& frame, const std::filesystem::path& stem) {
  auto svg = stem;
  svg += ".svg";
  auto csv = stem;
  csv += ".csv";
  write_text(svg, bullseye_svg(frame));
  write_text(csv, bullseye_csv(frame));
}

}  // namespace semstab
