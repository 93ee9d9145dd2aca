#include "swarmdiff/diffusion/sampler.hpp"

#include <cmath>
#include <random>

#include "swarmdiff/common/error.hpp"
#include "swarmdiff/common/parallel.hpp"
#include "swarmdiff/common/rng.hpp"
#include "swarmdiff/diffusion/context.hpp"

namespace swarmdiff::diffusion {

void GuidanceConfig::validate() const {
  if (weight < 0.0) throw DomainError("guidance.weight must be nonnegative");
  if (node_clip < 0.0) throw DomainError("guidance.node_clip must be nonnegative");
  if (x0_clip < 0.0) throw DomainError("guidance.x0_clip must be nonnegative");
  if (final_steps < 0 || final_step_size < 0.0) throw DomainError("guidance final descent settings must be nonnegative");
}

void to_json(nlohmann::json& j, const GuidanceConfig& g) {
  j = nlohmann::json{{"weight", g.weight},
                     {"node_clip", g.node_clip},
                     {"x0_clip", g.x0_clip},
                     {"final_steps", g.final_steps},
                     {"final_step_size", g.final_step_size}};
}

void from_json(const nlohmann::json& j, GuidanceConfig& g) {
  GuidanceConfig d;
  g.weight = j.value("weight", d.weight);
  g.node_clip = j.value("node_clip", d.node_clip);
  g.x0_clip = j.value("x0_clip", d.x0_clip);
  g.final_steps = j.value("final_steps", d.final_steps);
  g.final_step_size = j.value("final_step_size", d.final_step_size);
}

SampleRequest make_request(const gauss::GaussianState& start, const gauss::GaussianState& goal,
                           const env::EsdfGrid& grid) {
  return {start, goal, esdf_features(start.mean(), goal.mean(), grid)};
}

namespace {

// Normalized gradient direction -dC/dz at mu_z, clipped per node. Means that
// left the grid are projected back before evaluating the cost.
NodeArray normalized_descent(const NodeArray& mu_z, const DiffusionModel& model, const env::EsdfGrid& grid,
                             const costs::CostWeights& weights, const costs::GpModel& gp, double node_clip,
                             int* out_of_bounds) {
  auto traj = model.normalizer.denormalize(mu_z, model.dt);
  const Vec2 lo = grid.origin(), hi = grid.origin() + grid.extent();
  for (auto& s : traj.states) {
    const double x = std::clamp(s.x, lo.x(), hi.x()), y = std::clamp(s.y, lo.y(), hi.y());
    if (x != s.x || y != s.y) {
      if (out_of_bounds) ++*out_of_bounds;
      s.x = x;
      s.y = y;
    }
  }
  const auto g = costs::cost_gradient(traj, grid, weights, gp);
  NodeArray out(mu_z.rows(), 5);
  for (Eigen::Index i = 0; i < mu_z.rows(); ++i) {
    Vec5 gz = g[static_cast<std::size_t>(i)].cwiseProduct(model.normalizer.jacobian(mu_z.row(i).transpose()));
    if (node_clip > 0.0 && gz.norm() > node_clip) gz *= node_clip / gz.norm();
    out.row(i) = gz.transpose();
  }
  out.row(0).setZero();
  out.row(mu_z.rows() - 1).setZero();
  return out;
}

}  // namespace

NodeArray reverse_mean(const NodeArray& z, const NodeArray& eps, int t, const NoiseSchedule& schedule, double x0_clip) {
  if (x0_clip <= 0.0) return posterior_mean(z, eps, t, schedule);
  const NodeArray x0 = predict_x0(z, eps, t, schedule).cwiseMax(-x0_clip).cwiseMin(x0_clip);
  const double ab = schedule.alpha_bar(t), ab_prev = schedule.alpha_bar(t - 1);
  const double c0 = std::sqrt(ab_prev) * schedule.beta(t) / (1.0 - ab);
  const double ct = std::sqrt(schedule.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  return c0 * x0 + ct * z;
}

NodeArray guidance_delta(const NodeArray& mu_z, int t, const DiffusionModel& model, const env::EsdfGrid& grid,
                         const costs::CostWeights& weights, const costs::GpModel& gp, const GuidanceConfig& guidance,
                         int* out_of_bounds) {
  const double scale = guidance.weight * model.schedule.posterior_variance(t);
  return scale * normalized_descent(mu_z, model, grid, weights, gp, guidance.node_clip, out_of_bounds);
}

std::vector<costs::GaussianTrajectory> guided_sample(const DiffusionModel& model, const SampleRequest& request,
                                                     const env::EsdfGrid& grid, const costs::CostWeights& weights,
                                                     const costs::GpModel& gp, const GuidanceConfig& guidance, int k,
                                                     std::uint64_t seed, SampleStats* stats, Exec exec) {
  if (k < 1) throw DomainError("guided_sample needs K >= 1");
  guidance.validate();
  weights.validate();
  const int h = model.horizon;
  if (h < 3) throw DomainError("model horizon must be at least 3");
  const auto net = model.network();
  const Vec5 z_start = model.normalizer.normalize(request.start);
  const Vec5 z_goal = model.normalizer.normalize(request.goal);
  const Eigen::VectorXd ctx = context_vector(request.start, request.goal, request.esdf_features, model.normalizer);
  const Denoiser<float>::RowVec ctx_f = ctx.transpose().cast<float>();
  const int steps = model.schedule.steps();

  std::vector<costs::GaussianTrajectory> out(static_cast<std::size_t>(k));
  std::vector<int> warnings(static_cast<std::size_t>(k), 0);
  auto chain = [&](int idx) {
    auto rng = make_rng(seed, streams::kSampling, static_cast<std::uint64_t>(idx));
    std::normal_distribution<double> normal;
    NodeArray z(h, 5);
    for (int i = 0; i < h; ++i) {
      for (int c = 0; c < 5; ++c) z(i, c) = normal(rng);
    }
    z.row(0) = z_start.transpose();
    z.row(h - 1) = z_goal.transpose();
    Denoiser<float>::Input in;
    in.context = ctx_f;
    int* warn = &warnings[static_cast<std::size_t>(idx)];
    for (int t = steps; t >= 1; --t) {
      in.x = z.cast<float>();
      in.t = t;
      const NodeArray eps = net.forward(in).cast<double>();
      NodeArray mu = reverse_mean(z, eps, t, model.schedule, guidance.x0_clip);
      if (guidance.weight > 0.0) mu += guidance_delta(mu, t, model, grid, weights, gp, guidance, warn);
      if (t > 1) {
        const double sd = std::sqrt(model.schedule.posterior_variance(t));
        for (int i = 0; i < h; ++i) {
          for (int c = 0; c < 5; ++c) mu(i, c) += sd * normal(rng);
        }
      }
      if (!mu.allFinite()) throw SamplingError("non-finite sample at diffusion step " + std::to_string(t));
      z = std::move(mu);
      z.row(0) = z_start.transpose();
      z.row(h - 1) = z_goal.transpose();
    }
    for (int s = 0; s < guidance.final_steps; ++s) {
      z += guidance.final_step_size * normalized_descent(z, model, grid, weights, gp, guidance.node_clip, warn);
    }
    auto traj = model.normalizer.denormalize(z, model.dt);
    traj.states.front() = request.start;
    traj.states.back() = request.goal;
    out[static_cast<std::size_t>(idx)] = std::move(traj);
  };
  parallel_for(k, exec, [&](std::ptrdiff_t idx) { chain(static_cast<int>(idx)); });
  if (stats) {
    for (int w : warnings) stats->out_of_bounds += w;
  }
  return out;
}

}  // namespace swarmdiff::diffusion
