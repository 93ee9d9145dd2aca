#pragma once

#include <Eigen/Dense>
#include <vector>

namespace swarmdiff {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec5 = Eigen::Matrix<double, 5, 1>;

using Points = std::vector<Vec2>;

}  // namespace swarmdiff
