#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>
#include <nlohmann/json.hpp>

#include "swarmdiff/diffusion/context.hpp"

namespace swarmdiff::diffusion {

struct DenoiserConfig {
  int width = 64;
  int layers = 2;
  int heads = 4;
  int ff_mult = 4;
  int context_dim = kContextDim;

  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

/// Parameter and gradient storage. Eigen picks GEMM code paths by pointer
/// alignment, so aligned buffers plus aligned tensor offsets keep results
/// bitwise reproducible from run to run.
template <typename Scalar>
using AlignedVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

/// Tensor offsets are rounded up to this many elements; the gaps stay zero.
inline constexpr std::size_t kParamAlignment = 16;

/// One named tensor inside the flat parameter vector. Matrices are stored
/// row-major as (fan_in x fan_out) so a layer computes y = x W + b.
struct ParamTensor {
  std::string name;
  std::size_t offset;
  int rows;
  int cols;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Parameter order (D = width, F = ff_mult * D, C = context_dim):
///   in.w 5xD, in.b 1xD,
///   time.w1 DxD, time.b1, time.w2 DxD, time.b2, ctx.w CxD, ctx.b,
///   per block l: block{l}.mod.w Dx6D, block{l}.mod.b 1x6D,
///     block{l}.q.w, .q.b, .k.w, .k.b, .v.w, .v.b, .o.w, .o.b (DxD, 1xD),
///     block{l}.ff1.w DxF, .ff1.b 1xF, block{l}.ff2.w FxD, .ff2.b 1xD,
///   final.mod.w Dx2D, final.mod.b 1x2D, out.w Dx5, out.b 1x5.
std::vector<ParamTensor> parameter_layout(const DenoiserConfig& cfg);
std::size_t parameter_count(const DenoiserConfig& cfg);

/// Sinusoidal embedding: e[2i] = sin(v / 10000^(2i/D)), e[2i+1] = cos(...).
template <typename Scalar>
Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sinusoidal_embedding(double v, int dim);

/// Transformer noise predictor eps_theta(x_t, t, c).
///
/// Tokens are trajectory nodes. Each block applies pre-norm multi-head
/// self-attention and a GELU feed-forward layer, both modulated by shift,
/// scale and gate vectors regressed from SiLU(time embedding + context
/// projection). Layer norms carry no affine parameters of their own.
template <typename Scalar>
class Denoiser {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  struct Input {
    Mat x;                   ///< H x 5 noisy nodes
    int t = 1;               ///< diffusion step
    RowVec context;          ///< 1 x context_dim
    std::vector<int> positions;  ///< positional ids; empty means 0..H-1
  };

  struct BlockCache {
    Mat h_in, xhat1, u1, q, k, v, o, attn, h_mid, xhat2, u2, z1, g1, ff;
    RowVec rstd1, rstd2, mod;
    std::vector<Mat> probs;
  };

  struct Cache {
    Mat x;
    RowVec context, temb, zt, e1, cond, act;
    std::vector<BlockCache> blocks;
    Mat h_final, xhat_f, u_f;
    RowVec rstd_f, mod_f;
  };

  Denoiser(DenoiserConfig cfg, const std::vector<Scalar>& params);

  /// Scaled normal initialization (std 1/sqrt(fan_in)); modulation weights
  /// use std 0.02 and biases start at zero.
  static std::vector<Scalar> initial_parameters(const DenoiserConfig& cfg, std::uint64_t seed);

  const DenoiserConfig& config() const { return cfg_; }
  const AlignedVector<Scalar>& parameters() const { return params_; }
  AlignedVector<Scalar>& parameters() { return params_; }

  /// Returns the H x 5 noise prediction. Throws NumericError naming the block
  /// when an activation becomes non-finite.
  Mat forward(const Input& in, Cache* cache = nullptr) const;

  /// Accumulates dLoss/dparams into grad (same layout as parameters()).
  void backward(const Cache& cache, const Mat& d_out, AlignedVector<Scalar>& grad) const;

 private:
  DenoiserConfig cfg_;
  AlignedVector<Scalar> params_;
  std::vector<ParamTensor> layout_;
};

extern template class Denoiser<float>;
extern template class Denoiser<double>;

}  // namespace swarmdiff::diffusion
