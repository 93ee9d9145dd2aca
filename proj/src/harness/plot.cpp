#include "swarmdiff/harness/plot.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace swarmdiff::harness {

namespace {

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.8f", v == 0.0 ? 0.0 : v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

Ellipse two_sigma_ellipse(const gauss::GaussianState& s) {
  Eigen::SelfAdjointEigenSolver<Mat2> eig(s.covariance());
  const Vec2 lam = eig.eigenvalues();  // ascending
  Vec2 major = eig.eigenvectors().col(1);
  if (major.x() < 0.0 || (major.x() == 0.0 && major.y() < 0.0)) major = -major;
  double angle = std::atan2(major.y(), major.x()) * 180.0 / std::numbers::pi;
  if (angle <= -90.0) angle += 180.0;
  return {s.x, s.y, 2.0 * std::sqrt(std::max(lam(1), 0.0)), 2.0 * std::sqrt(std::max(lam(0), 0.0)), angle};
}

std::string render_svg(const env::Workspace& ws, const macro::GmmTrajectory* plan, const micro::SwarmLog* log) {
  const double W = ws.width();
  const double H = ws.height();
  auto fy = [&](double y) { return H - y; };
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\" width=\"" +
       num(W * 10.0) + "\" height=\"" + num(H * 10.0) + "\">\n";
  s += "<rect class=\"workspace\" x=\"0\" y=\"0\" width=\"" + num(W) + "\" height=\"" + num(H) +
       "\" fill=\"white\" stroke=\"black\" stroke-width=\"0.2\"/>\n";
  for (const auto& o : ws.obstacles()) {
    s += "<polygon class=\"obstacle\" fill=\"black\" points=\"";
    bool first = true;
    for (const auto& v : o.vertices()) {
      if (!first) s += ' ';
      s += num(v.x()) + "," + num(fy(v.y()));
      first = false;
    }
    s += "\"/>\n";
  }
  auto ellipse = [&](const gauss::GaussianState& g, const char* cls, const char* color) {
    const Ellipse e = two_sigma_ellipse(g);
    s += std::string("<ellipse class=\"") + cls + "\" cx=\"" + num(e.cx) + "\" cy=\"" + num(fy(e.cy)) + "\" rx=\"" +
         num(e.rx) + "\" ry=\"" + num(e.ry) + "\" transform=\"rotate(" + num(-e.angle_deg) + " " + num(e.cx) + " " +
         num(fy(e.cy)) + ")\" fill=\"" + color + "\" fill-opacity=\"0.3\" stroke=\"" + color +
         "\" stroke-width=\"0.15\"/>\n";
  };
  if (plan != nullptr) {
    for (const auto& c : plan->start_gmm.components()) ellipse(c, "start", "#2ca02c");
    for (const auto& c : plan->goal_gmm.components()) ellipse(c, "goal", "#d62728");
    for (std::size_t k = 0; k < plan->size(); ++k) {
      s += std::string("<polyline class=\"trajectory\" fill=\"none\" stroke=\"") + kPalette[k % 10] +
           "\" stroke-width=\"0.3\" data-alpha=\"" + num(plan->alphas[k]) + "\" points=\"";
      const auto& states = plan->trajectories[k].states;
      for (std::size_t t = 0; t < states.size(); ++t) {
        if (t > 0) s += ' ';
        s += num(states[t].x) + "," + num(fy(states[t].y));
      }
      s += "\"/>\n";
    }
  }
  if (log != nullptr && !log->frames.empty()) {
    const std::size_t n = log->frames.front().positions.size();
    for (std::size_t k = 0; k < n; ++k) {
      s += "<polyline class=\"robot\" fill=\"none\" stroke=\"#555555\" stroke-width=\"0.08\" points=\"";
      // Every 10th frame keeps the file small; the last frame is always drawn.
      for (std::size_t f = 0; f < log->frames.size(); f += 10) {
        const Vec2& p = log->frames[f].positions[k];
        s += num(p.x()) + "," + num(fy(p.y())) + " ";
      }
      const Vec2& p = log->frames.back().positions[k];
      s += num(p.x()) + "," + num(fy(p.y())) + "\"/>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace swarmdiff::harness
