#pragma once

#include <Eigen/Core>

namespace swarmdiff::macro {

struct TransportSolution {
  Eigen::MatrixXd plan;  ///< N1 x N2, nonzero only on basic cells
  Eigen::VectorXd u;     ///< row duals
  Eigen::VectorXd v;     ///< column duals; u_i + v_j = cost_ij on basic cells
  double objective = 0.0;
  int pivots = 0;
};

/// Transportation simplex: north-west-corner start, u-v duals, Dantzig
/// pricing with a switch to Bland's rule after a run of degenerate pivots.
/// Returns a vertex of the transport polytope, so at most N1 + N2 - 1
/// entries are positive. Throws DomainError when the marginals are not
/// distributions with equal mass or a cost is not finite and nonnegative.
TransportSolution solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& w_start,
                                  const Eigen::VectorXd& w_goal);

/// Plan-only convenience wrapper.
Eigen::MatrixXd solve_transport_lp(const Eigen::MatrixXd& cost, const Eigen::VectorXd& w_start,
                                   const Eigen::VectorXd& w_goal);

}  // namespace swarmdiff::macro
