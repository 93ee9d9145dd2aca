#include "swarmdiff/macro/transport.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::macro {
namespace {

constexpr double kMassTol = 1e-9;
constexpr int kDegenerateBeforeBland = 50;

void check_distribution(const Eigen::VectorXd& w, const char* name) {
  if (w.size() == 0) throw DomainError(std::string(name) + " weights are empty");
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) throw DomainError(std::string(name) + " weights must be finite and nonnegative");
  }
  if (std::abs(w.sum() - 1.0) > kMassTol) {
    throw DomainError(std::string(name) + " weights sum to " + std::to_string(w.sum()) +
                      ", not 1 (normalization error)");
  }
}

struct Cell {
  int i;
  int j;
};

class Simplex {
 public:
  Simplex(const Eigen::MatrixXd& c, const Eigen::VectorXd& a, const Eigen::VectorXd& b)
      : c_(c), m_(static_cast<int>(c.rows())), n_(static_cast<int>(c.cols())), x_(Eigen::MatrixXd::Zero(m_, n_)),
        basic_(static_cast<std::size_t>(m_ * n_), false) {
    north_west_corner(a, b);
  }

  TransportSolution run() {
    const double tol = 1e-12 * std::max(1.0, c_.cwiseAbs().maxCoeff());
    const int max_pivots = 1000 * (m_ + n_) * (m_ + n_);
    int degenerate = 0;
    bool bland = false;
    TransportSolution sol;
    for (;;) {
      compute_duals();
      int ei = -1, ej = -1;
      double best = -tol;
      for (int i = 0; i < m_ && !(bland && ei >= 0); ++i) {
        for (int j = 0; j < n_; ++j) {
          if (basic_[index(i, j)]) continue;
          const double r = c_(i, j) - u_[i] - v_[j];
          if (r < best) {
            best = bland ? -tol : r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) break;
      if (++sol.pivots > max_pivots) throw NumericError("transport simplex exceeded its pivot budget");
      const double theta = pivot(ei, ej, bland);
      degenerate = theta > 0.0 ? 0 : degenerate + 1;
      if (degenerate > kDegenerateBeforeBland) bland = true;
    }
    sol.plan = x_;
    sol.u = Eigen::Map<const Eigen::VectorXd>(u_.data(), m_);
    sol.v = Eigen::Map<const Eigen::VectorXd>(v_.data(), n_);
    sol.objective = (x_.array() * c_.array()).sum();
    return sol;
  }

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i * n_ + j); }

  void north_west_corner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    std::vector<double> ra(a.data(), a.data() + m_);
    std::vector<double> rb(b.data(), b.data() + n_);
    int i = 0, j = 0;
    for (;;) {
      const double q = std::max(0.0, std::min(ra[i], rb[j]));
      x_(i, j) = q;
      basic_[index(i, j)] = true;
      cells_.push_back({i, j});
      ra[i] -= q;
      rb[j] -= q;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i == m_ - 1) {
        ++j;
      } else if (j == n_ - 1) {
        ++i;
      } else if (ra[i] <= rb[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Nodes 0..m-1 are rows, m..m+n-1 columns; basic cells are tree edges.
  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(m_ + n_));
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      adj[cells_[k].i].push_back(static_cast<int>(k));
      adj[m_ + cells_[k].j].push_back(static_cast<int>(k));
    }
    return adj;
  }

  void compute_duals() {
    u_.assign(static_cast<std::size_t>(m_), 0.0);
    v_.assign(static_cast<std::size_t>(n_), 0.0);
    std::vector<bool> seen(static_cast<std::size_t>(m_ + n_), false);
    const auto adj = adjacency();
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
      const int node = q.front();
      q.pop();
      for (int k : adj[node]) {
        const auto [i, j] = cells_[k];
        if (node < m_ && !seen[m_ + j]) {
          v_[j] = c_(i, j) - u_[i];
          seen[m_ + j] = true;
          q.push(m_ + j);
        } else if (node >= m_ && !seen[i]) {
          u_[i] = c_(i, j) - v_[j];
          seen[i] = true;
          q.push(i);
        }
      }
    }
  }

  double pivot(int ei, int ej, bool bland) {
    // Tree path from column ej to row ei; with the entering cell it closes
    // the cycle, whose signs alternate starting with minus at column ej.
    const auto adj = adjacency();
    std::vector<int> via(static_cast<std::size_t>(m_ + n_), -1);
    std::vector<bool> seen(static_cast<std::size_t>(m_ + n_), false);
    std::queue<int> q;
    q.push(m_ + ej);
    seen[m_ + ej] = true;
    while (!q.empty() && !seen[ei]) {
      const int node = q.front();
      q.pop();
      for (int k : adj[node]) {
        const int other = node < m_ ? m_ + cells_[k].j : cells_[k].i;
        if (seen[other]) continue;
        seen[other] = true;
        via[other] = k;
        q.push(other);
      }
    }
    if (!seen[ei]) throw NumericError("transport basis is not a spanning tree");
    std::vector<int> path;
    for (int node = ei; node != m_ + ej;) {
      const int k = via[node];
      path.push_back(k);
      node = node < m_ ? m_ + cells_[k].j : cells_[k].i;
    }
    std::reverse(path.begin(), path.end());

    int leave = -1;
    double theta = 0.0;
    for (std::size_t p = 0; p < path.size(); p += 2) {
      const auto [i, j] = cells_[path[p]];
      const double xv = x_(i, j);
      if (leave < 0 || xv < theta ||
          (bland && xv == theta && index(i, j) < index(cells_[leave].i, cells_[leave].j))) {
        leave = path[p];
        theta = xv;
      }
    }
    for (std::size_t p = 0; p < path.size(); ++p) {
      const auto [i, j] = cells_[path[p]];
      x_(i, j) += p % 2 == 0 ? -theta : theta;
      if (x_(i, j) < 0.0) x_(i, j) = 0.0;
    }
    const auto [li, lj] = cells_[leave];
    x_(li, lj) = 0.0;
    basic_[index(li, lj)] = false;
    x_(ei, ej) = theta;
    basic_[index(ei, ej)] = true;
    cells_[leave] = {ei, ej};
    return theta;
  }

  const Eigen::MatrixXd& c_;
  int m_;
  int n_;
  Eigen::MatrixXd x_;
  std::vector<bool> basic_;
  std::vector<Cell> cells_;
  std::vector<double> u_;
  std::vector<double> v_;
};

}  // namespace

TransportSolution solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& w_start,
                                  const Eigen::VectorXd& w_goal) {
  check_distribution(w_start, "start");
  check_distribution(w_goal, "goal");
  if (cost.rows() != w_start.size() || cost.cols() != w_goal.size()) {
    throw DomainError("cost matrix shape does not match the marginals");
  }
  for (Eigen::Index k = 0; k < cost.size(); ++k) {
    const double c = cost.data()[k];
    if (!std::isfinite(c) || c < 0.0) throw DomainError("transport costs must be finite and nonnegative");
  }
  return Simplex(cost, w_start, w_goal).run();
}

Eigen::MatrixXd solve_transport_lp(const Eigen::MatrixXd& cost, const Eigen::VectorXd& w_start,
                                   const Eigen::VectorXd& w_goal) {
  return solve_transport(cost, w_start, w_goal).plan;
}

}  // namespace swarmdiff::macro
