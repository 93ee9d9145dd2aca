#pragma once

#include <string>

#include "swarmdiff/env/workspace.hpp"
#include "swarmdiff/gaussian/gaussian.hpp"
#include "swarmdiff/macro/planner.hpp"
#include "swarmdiff/micro/simulate.hpp"

namespace swarmdiff::harness {

/// 2-sigma ellipse of a Gaussian in workspace coordinates; angle of the
/// major axis from +x, counterclockwise, in degrees within (-90, 90].
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double rx = 0.0;  ///< major semi-axis
  double ry = 0.0;  ///< minor semi-axis
  double angle_deg = 0.0;
};

Ellipse two_sigma_ellipse(const gauss::GaussianState& s);

/// SVG in metre units (viewBox = workspace, y up). Obstacles are black
/// polygons, start and goal components are 2-sigma ellipses (class "start" /
/// "goal"), each plan trajectory's mean path is a polyline of class
/// "trajectory". Robot paths from `log` are drawn as class "robot" when
/// given. Numbers use fixed precision so output is byte-stable.
std::string render_svg(const env::Workspace& ws, const macro::GmmTrajectory* plan, const micro::SwarmLog* log);

}  // namespace swarmdiff::harness
