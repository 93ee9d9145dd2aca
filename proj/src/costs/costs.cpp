#include "swarmdiff/costs/costs.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/parallel.hpp"

namespace swarmdiff::costs {

void GaussianTrajectory::validate() const {
  if (states.size() < 2) throw DomainError("trajectory needs at least 2 states");
  if (!(dt > 0.0)) throw DomainError("trajectory dt must be positive");
  for (const auto& s : states) s.validate();
}

void to_json(nlohmann::json& j, const GaussianTrajectory& t) {
  j = nlohmann::json{{"dt", t.dt}, {"states", t.states}};
}

void from_json(const nlohmann::json& j, GaussianTrajectory& t) {
  t.dt = j.at("dt").get<double>();
  t.states = j.at("states").get<std::vector<GaussianState>>();
}

void CostWeights::validate() const {
  if (lambda_obs < 0.0 || lambda_dis < 0.0 || lambda_gp < 0.0) {
    throw DomainError("cost weights must be nonnegative");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if (epsilon < 0.0) throw DomainError("epsilon must be nonnegative");
}

void to_json(nlohmann::json& j, const CostWeights& w) {
  j = nlohmann::json{{"lambda_obs", w.lambda_obs}, {"lambda_dis", w.lambda_dis}, {"lambda_gp", w.lambda_gp},
                     {"alpha", w.alpha},           {"epsilon", w.epsilon}};
}

void from_json(const nlohmann::json& j, CostWeights& w) {
  CostWeights d;
  w.lambda_obs = j.value("lambda_obs", d.lambda_obs);
  w.lambda_dis = j.value("lambda_dis", d.lambda_dis);
  w.lambda_gp = j.value("lambda_gp", d.lambda_gp);
  w.alpha = j.value("alpha", d.alpha);
  w.epsilon = j.value("epsilon", d.epsilon);
}

GpModel GpModel::constant_velocity(double dt, double q_pos, double q_shape) {
  if (!(dt > 0.0) || !(q_pos > 0.0) || !(q_shape > 0.0)) {
    throw DomainError("GP model needs positive dt and spectral densities");
  }
  GpModel m;
  m.dt = dt;
  m.transition.setIdentity();
  m.process_noise.setZero();
  for (int c = 0; c < 5; ++c) {
    const int p = kChannelIndex[c], v = kRateIndex[c];
    const double qc = c < 2 ? q_pos : q_shape;
    m.transition(p, v) = dt;
    m.process_noise(p, p) = qc * dt * dt * dt / 3.0;
    m.process_noise(p, v) = m.process_noise(v, p) = qc * dt * dt / 2.0;
    m.process_noise(v, v) = qc * dt;
  }
  m.precision = m.process_noise.ldlt().solve(Mat10::Identity());
  m.precision = 0.5 * (m.precision + m.precision.transpose()).eval();
  return m;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425, hi = 1.0 - lo;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= hi) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against erfc.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double cvar_multiplier(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  return normal_pdf(normal_quantile(1.0 - alpha)) / alpha;
}

namespace {

double risk_variance(const GaussianState& s, const Vec2& n) { return n.dot(s.covariance() * n); }

env::SdfSample query_mean(const env::EsdfGrid& grid, const GaussianState& s) {
  if (!grid.contains(s.mean())) {
    std::ostringstream msg;
    msg << "trajectory mean (" << s.x << ", " << s.y << ") lies outside the ESDF grid";
    throw DomainError(msg.str());
  }
  return grid.query(s.mean());
}

}  // namespace

double cvar_collision(const GaussianState& state, const env::EsdfGrid& grid, double alpha) {
  const auto q = query_mean(grid, state);
  return -q.distance + cvar_multiplier(alpha) * risk_variance(state, q.normal);
}

double collision_cost(const GaussianTrajectory& traj, const env::EsdfGrid& grid, double alpha, double epsilon) {
  const double k = cvar_multiplier(alpha);
  double total = 0.0;
  for (const auto& s : traj.states) {
    const auto q = query_mean(grid, s);
    total += std::max(0.0, -q.distance + k * risk_variance(s, q.normal) - epsilon);
  }
  return total;
}

double transport_cost(const GaussianTrajectory& traj) {
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < traj.size(); ++j) total += gauss::wasserstein2(traj.states[j], traj.states[j + 1]);
  return total;
}

std::vector<Vec10> extended_states(const GaussianTrajectory& traj) {
  const std::size_t h = traj.size();
  if (h < 2) throw DomainError("extended states need at least 2 nodes");
  std::vector<Vec5> v(h);
  for (std::size_t t = 0; t < h; ++t) v[t] = traj.states[t].to_vector();
  std::vector<Vec10> out(h);
  for (std::size_t t = 0; t < h; ++t) {
    Vec5 rate;
    if (t == 0) {
      rate = (v[1] - v[0]) / traj.dt;
    } else if (t == h - 1) {
      rate = (v[h - 1] - v[h - 2]) / traj.dt;
    } else {
      rate = (v[t + 1] - v[t - 1]) / (2.0 * traj.dt);
    }
    for (int c = 0; c < 5; ++c) {
      out[t][kChannelIndex[c]] = v[t][c];
      out[t][kRateIndex[c]] = rate[c];
    }
  }
  return out;
}

double gp_cost(const GaussianTrajectory& traj, const GpModel& model) {
  if (traj.size() < 3) throw DomainError("gp_cost needs at least 3 nodes");
  const auto s = extended_states(traj);
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < s.size(); ++t) {
    const Vec10 r = model.transition * s[t] - s[t + 1];
    total += 0.5 * r.dot(model.precision * r);
  }
  return total;
}

CostBreakdown evaluate_costs(const GaussianTrajectory& traj, const env::EsdfGrid& grid, const CostWeights& w,
                             const GpModel& model) {
  CostBreakdown c;
  c.collision = collision_cost(traj, grid, w.alpha, w.epsilon);
  c.transport = transport_cost(traj);
  c.gp = gp_cost(traj, model);
  c.total = w.lambda_obs * c.collision + w.lambda_dis * c.transport + w.lambda_gp * c.gp;
  return c;
}

double total_cost(const GaussianTrajectory& traj, const env::EsdfGrid& grid, const CostWeights& w,
                  const GpModel& model) {
  return evaluate_costs(traj, grid, w, model).total;
}

Gradient collision_gradient(const GaussianTrajectory& traj, const env::EsdfGrid& grid, double alpha, double epsilon) {
  const double k = cvar_multiplier(alpha);
  Gradient g(traj.size(), Vec5::Zero());
  for (std::size_t j = 0; j < traj.size(); ++j) {
    const auto& s = traj.states[j];
    if (!grid.contains(s.mean())) throw DomainError("trajectory mean lies outside the ESDF grid");
    const auto q = grid.query_jet(s.mean());
    const Vec2& n = q.normal;
    if (-q.distance + k * risk_variance(s, n) - epsilon <= 0.0) continue;
    g[j][0] = -q.distance_gradient.x();
    g[j][1] = -q.distance_gradient.y();
    g[j][2] = k * (2.0 * n.x() * n.x() * s.sigma_x + 2.0 * n.x() * n.y() * s.rho * s.sigma_y);
    g[j][3] = k * (2.0 * n.y() * n.y() * s.sigma_y + 2.0 * n.x() * n.y() * s.rho * s.sigma_x);
    g[j][4] = k * 2.0 * n.x() * n.y() * s.sigma_x * s.sigma_y;
  }
  return g;
}

Gradient transport_gradient(const GaussianTrajectory& traj) {
  Gradient g(traj.size(), Vec5::Zero());
  for (std::size_t j = 0; j + 1 < traj.size(); ++j) {
    const auto jet = gauss::wasserstein2_jet(traj.states[j], traj.states[j + 1]);
    g[j] += jet.d_first;
    g[j + 1] += jet.d_second;
  }
  return g;
}

Gradient gp_gradient(const GaussianTrajectory& traj, const GpModel& model) {
  const std::size_t h = traj.size();
  if (h < 3) throw DomainError("gp_cost needs at least 3 nodes");
  const auto s = extended_states(traj);
  std::vector<Vec10> ds(h, Vec10::Zero());
  for (std::size_t t = 0; t + 1 < h; ++t) {
    const Vec10 pr = model.precision * (model.transition * s[t] - s[t + 1]);
    ds[t] += model.transition.transpose() * pr;
    ds[t + 1] -= pr;
  }
  // Chain through the finite-difference lift.
  Gradient g(h, Vec5::Zero());
  const double inv = 1.0 / traj.dt;
  for (std::size_t t = 0; t < h; ++t) {
    for (int c = 0; c < 5; ++c) {
      g[t][c] += ds[t][kChannelIndex[c]];
      const double dr = ds[t][kRateIndex[c]];
      if (t == 0) {
        g[1][c] += dr * inv;
        g[0][c] -= dr * inv;
      } else if (t == h - 1) {
        g[h - 1][c] += dr * inv;
        g[h - 2][c] -= dr * inv;
      } else {
        g[t + 1][c] += 0.5 * dr * inv;
        g[t - 1][c] -= 0.5 * dr * inv;
      }
    }
  }
  return g;
}

Gradient cost_gradient(const GaussianTrajectory& traj, const env::EsdfGrid& grid, const CostWeights& w,
                       const GpModel& model) {
  Gradient g(traj.size(), Vec5::Zero());
  if (w.lambda_obs != 0.0) {
    const auto c = collision_gradient(traj, grid, w.alpha, w.epsilon);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] -= w.lambda_obs * c[j];
  }
  if (w.lambda_dis != 0.0) {
    const auto c = transport_gradient(traj);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] -= w.lambda_dis * c[j];
  }
  if (w.lambda_gp != 0.0) {
    const auto c = gp_gradient(traj, model);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] -= w.lambda_gp * c[j];
  }
  return g;
}

std::vector<CostBreakdown> batch_costs(std::span<const GaussianTrajectory> trajs, const env::EsdfGrid& grid,
                                       const CostWeights& w, const GpModel& model, Exec exec) {
  std::vector<CostBreakdown> out(trajs.size());
  const auto n = static_cast<std::ptrdiff_t>(trajs.size());
  parallel_for(n, exec, [&](std::ptrdiff_t i) { out[i] = evaluate_costs(trajs[i], grid, w, model); });
  return out;
}

std::vector<Gradient> batch_gradients(std::span<const GaussianTrajectory> trajs, const env::EsdfGrid& grid,
                                      const CostWeights& w, const GpModel& model, Exec exec) {
  std::vector<Gradient> out(trajs.size());
  const auto n = static_cast<std::ptrdiff_t>(trajs.size());
  parallel_for(n, exec, [&](std::ptrdiff_t i) { out[i] = cost_gradient(trajs[i], grid, w, model); });
  return out;
}

}  // namespace swarmdiff::costs
