#include "swarmdiff/diffusion/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::diffusion {

void DenoiserConfig::validate() const {
  if (width < 2 || width % 2 != 0) throw DomainError("denoiser width must be a positive even number");
  if (layers < 1) throw DomainError("denoiser needs at least one block");
  if (heads < 1 || width % heads != 0) throw DomainError("denoiser width must be divisible by heads");
  if (ff_mult < 1) throw DomainError("ff_mult must be positive");
  if (context_dim < 1) throw DomainError("context_dim must be positive");
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = nlohmann::json{{"width", c.width},     {"layers", c.layers},          {"heads", c.heads},
                     {"ff_mult", c.ff_mult}, {"context_dim", c.context_dim}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  DenoiserConfig d;
  c.width = j.value("width", d.width);
  c.layers = j.value("layers", d.layers);
  c.heads = j.value("heads", d.heads);
  c.ff_mult = j.value("ff_mult", d.ff_mult);
  c.context_dim = j.value("context_dim", d.context_dim);
}

std::vector<ParamTensor> parameter_layout(const DenoiserConfig& cfg) {
  cfg.validate();
  const int d = cfg.width, f = cfg.ff_mult * cfg.width;
  std::vector<ParamTensor> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    offset = (offset + kParamAlignment - 1) / kParamAlignment * kParamAlignment;
    out.push_back({std::move(name), offset, rows, cols});
    offset += out.back().size();
  };
  add("in.w", 5, d);
  add("in.b", 1, d);
  add("time.w1", d, d);
  add("time.b1", 1, d);
  add("time.w2", d, d);
  add("time.b2", 1, d);
  add("ctx.w", cfg.context_dim, d);
  add("ctx.b", 1, d);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    add(p + "mod.w", d, 6 * d);
    add(p + "mod.b", 1, 6 * d);
    for (const char* n : {"q", "k", "v", "o"}) {
      add(p + n + ".w", d, d);
      add(p + n + ".b", 1, d);
    }
    add(p + "ff1.w", d, f);
    add(p + "ff1.b", 1, f);
    add(p + "ff2.w", f, d);
    add(p + "ff2.b", 1, d);
  }
  add("final.mod.w", d, 2 * d);
  add("final.mod.b", 1, 2 * d);
  add("out.w", d, 5);
  add("out.b", 1, 5);
  return out;
}

std::size_t parameter_count(const DenoiserConfig& cfg) {
  const auto layout = parameter_layout(cfg);
  return layout.back().offset + layout.back().size();
}

template <typename Scalar>
Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sinusoidal_embedding(double v, int dim) {
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    e[2 * i] = static_cast<Scalar>(std::sin(v * freq));
    e[2 * i + 1] = static_cast<Scalar>(std::cos(v * freq));
  }
  return e;
}

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

// Layer slots within one block, in layout order.
enum BlockSlot { kModW, kModB, kQW, kQB, kKW, kKB, kVW, kVB, kOW, kOB, kFf1W, kFf1B, kFf2W, kFf2B, kBlockSlots };
enum HeadSlot { kInW, kInB, kTW1, kTB1, kTW2, kTB2, kCW, kCB, kHeadSlots };

template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename P>
auto view(P* data, const ParamTensor& t) {
  using S = std::remove_const_t<P>;
  using M = std::conditional_t<std::is_const_v<P>, const MatT<S>, MatT<S>>;
  return Eigen::Map<M>(data + t.offset, t.rows, t.cols);
}

template <typename P>
auto row_view(P* data, const ParamTensor& t) {
  using S = std::remove_const_t<P>;
  using R = std::conditional_t<std::is_const_v<P>, const RowT<S>, RowT<S>>;
  return Eigen::Map<R>(data + t.offset, t.cols);
}

std::size_t block_base(int l) { return kHeadSlots + static_cast<std::size_t>(l) * kBlockSlots; }

template <typename Scalar>
void layer_norm(const MatT<Scalar>& x, MatT<Scalar>& xhat, RowT<Scalar>& rstd) {
  xhat.resize(x.rows(), x.cols());
  rstd.resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar mu = x.row(i).mean();
    const auto centered = (x.row(i).array() - mu).eval();
    const Scalar var = centered.square().mean();
    rstd[i] = Scalar(1) / std::sqrt(var + Scalar(kLnEps));
    xhat.row(i) = centered * rstd[i];
  }
}

template <typename Scalar>
MatT<Scalar> layer_norm_backward(const MatT<Scalar>& dxhat, const MatT<Scalar>& xhat, const RowT<Scalar>& rstd) {
  MatT<Scalar> dx(dxhat.rows(), dxhat.cols());
  for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
    const Scalar m1 = dxhat.row(i).mean();
    const Scalar m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
    dx.row(i) = rstd[i] * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
  }
  return dx;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
RowT<Scalar> silu(const RowT<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return v * sigmoid(v); });
}

template <typename Scalar>
RowT<Scalar> silu_grad(const RowT<Scalar>& x) {
  return x.unaryExpr([](Scalar v) {
    const Scalar s = sigmoid(v);
    return s * (Scalar(1) + v * (Scalar(1) - s));
  });
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(Scalar(kGeluK) * (x + Scalar(kGeluC) * x * x * x)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar th = std::tanh(Scalar(kGeluK) * (x + Scalar(kGeluC) * x * x * x));
  return Scalar(0.5) * (Scalar(1) + th) +
         Scalar(0.5) * x * (Scalar(1) - th * th) * Scalar(kGeluK) * (Scalar(1) + Scalar(3 * kGeluC) * x * x);
}

template <typename Scalar>
void check_finite(const MatT<Scalar>& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite activation in " + where);
}

}  // namespace

template <typename Scalar>
Denoiser<Scalar>::Denoiser(DenoiserConfig cfg, const std::vector<Scalar>& params)
    : cfg_(cfg), params_(params.begin(), params.end()), layout_(parameter_layout(cfg)) {
  if (params_.size() != parameter_count(cfg_)) {
    std::ostringstream msg;
    msg << "denoiser expects " << parameter_count(cfg_) << " parameters, got " << params_.size();
    throw DomainError(msg.str());
  }
}

template <typename Scalar>
std::vector<Scalar> Denoiser<Scalar>::initial_parameters(const DenoiserConfig& cfg, std::uint64_t seed) {
  const auto layout = parameter_layout(cfg);
  std::vector<Scalar> p(parameter_count(cfg), Scalar(0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (const auto& t : layout) {
    if (t.rows == 1) continue;  // biases
    const bool modulation = t.name.find("mod.w") != std::string::npos;
    const double std = modulation ? 0.02 : 1.0 / std::sqrt(static_cast<double>(t.rows));
    for (std::size_t i = 0; i < t.size(); ++i) p[t.offset + i] = static_cast<Scalar>(std * normal(rng));
  }
  return p;
}

template <typename Scalar>
typename Denoiser<Scalar>::Mat Denoiser<Scalar>::forward(const Input& in, Cache* cache) const {
  const int d = cfg_.width, heads = cfg_.heads, head_dim = d / heads;
  const Eigen::Index h_len = in.x.rows();
  if (in.x.cols() != 5 || h_len < 1) throw DomainError("denoiser input must be H x 5");
  if (in.context.size() != cfg_.context_dim) throw DomainError("denoiser context has the wrong length");
  if (!in.positions.empty() && static_cast<Eigen::Index>(in.positions.size()) != h_len) {
    throw DomainError("position ids must match the token count");
  }
  const Scalar* p = params_.data();
  const Scalar attn_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));

  Cache local;
  Cache& c = cache ? *cache : local;
  c.x = in.x;
  c.context = in.context;

  Mat h = in.x * view(p, layout_[kInW]);
  h.rowwise() += row_view(p, layout_[kInB]);
  for (Eigen::Index i = 0; i < h_len; ++i) {
    const int pos = in.positions.empty() ? static_cast<int>(i) : in.positions[static_cast<std::size_t>(i)];
    h.row(i) += sinusoidal_embedding<Scalar>(pos, d);
  }

  c.temb = sinusoidal_embedding<Scalar>(in.t, d);
  c.zt = c.temb * view(p, layout_[kTW1]) + row_view(p, layout_[kTB1]);
  c.e1 = silu(c.zt);
  c.cond = c.e1 * view(p, layout_[kTW2]) + row_view(p, layout_[kTB2]) + in.context * view(p, layout_[kCW]) +
           row_view(p, layout_[kCB]);
  c.act = silu(c.cond);

  c.blocks.resize(static_cast<std::size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    BlockCache& b = c.blocks[static_cast<std::size_t>(l)];
    const std::size_t base = block_base(l);
    b.h_in = h;
    b.mod = c.act * view(p, layout_[base + kModW]) + row_view(p, layout_[base + kModB]);
    const auto shift1 = b.mod.segment(0, d), scale1 = b.mod.segment(d, d), gate1 = b.mod.segment(2 * d, d);
    const auto shift2 = b.mod.segment(3 * d, d), scale2 = b.mod.segment(4 * d, d), gate2 = b.mod.segment(5 * d, d);

    layer_norm<Scalar>(h, b.xhat1, b.rstd1);
    b.u1 = (b.xhat1.array().rowwise() * (scale1.array() + Scalar(1))).rowwise() + shift1.array();
    b.q = b.u1 * view(p, layout_[base + kQW]);
    b.q.rowwise() += row_view(p, layout_[base + kQB]);
    b.k = b.u1 * view(p, layout_[base + kKW]);
    b.k.rowwise() += row_view(p, layout_[base + kKB]);
    b.v = b.u1 * view(p, layout_[base + kVW]);
    b.v.rowwise() += row_view(p, layout_[base + kVB]);
    b.o.resize(h_len, d);
    b.probs.resize(static_cast<std::size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      Mat s = b.q.middleCols(hd * head_dim, head_dim) * b.k.middleCols(hd * head_dim, head_dim).transpose() * attn_scale;
      for (Eigen::Index i = 0; i < h_len; ++i) {
        const Scalar mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      b.o.middleCols(hd * head_dim, head_dim) = s * b.v.middleCols(hd * head_dim, head_dim);
      b.probs[static_cast<std::size_t>(hd)] = std::move(s);
    }
    b.attn = b.o * view(p, layout_[base + kOW]);
    b.attn.rowwise() += row_view(p, layout_[base + kOB]);
    h = h + (b.attn.array().rowwise() * gate1.array()).matrix();
    b.h_mid = h;

    layer_norm<Scalar>(h, b.xhat2, b.rstd2);
    b.u2 = (b.xhat2.array().rowwise() * (scale2.array() + Scalar(1))).rowwise() + shift2.array();
    b.z1 = b.u2 * view(p, layout_[base + kFf1W]);
    b.z1.rowwise() += row_view(p, layout_[base + kFf1B]);
    b.g1 = b.z1.unaryExpr([](Scalar v) { return gelu(v); });
    b.ff = b.g1 * view(p, layout_[base + kFf2W]);
    b.ff.rowwise() += row_view(p, layout_[base + kFf2B]);
    h = h + (b.ff.array().rowwise() * gate2.array()).matrix();
    check_finite<Scalar>(h, "block " + std::to_string(l));
  }

  const std::size_t fin = block_base(cfg_.layers);
  c.h_final = h;
  c.mod_f = c.act * view(p, layout_[fin]) + row_view(p, layout_[fin + 1]);
  layer_norm<Scalar>(h, c.xhat_f, c.rstd_f);
  c.u_f = (c.xhat_f.array().rowwise() * (c.mod_f.segment(d, d).array() + Scalar(1))).rowwise() +
          c.mod_f.segment(0, d).array();
  Mat out = c.u_f * view(p, layout_[fin + 2]);
  out.rowwise() += row_view(p, layout_[fin + 3]);
  check_finite<Scalar>(out, "output head");
  return out;
}

template <typename Scalar>
void Denoiser<Scalar>::backward(const Cache& c, const Mat& d_out, AlignedVector<Scalar>& grad) const {
  if (grad.size() != params_.size()) throw DomainError("gradient buffer has the wrong size");
  const int d = cfg_.width, heads = cfg_.heads, head_dim = d / heads;
  const Scalar attn_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  const Scalar* p = params_.data();
  Scalar* g = grad.data();

  const std::size_t fin = block_base(cfg_.layers);
  view(g, layout_[fin + 2]).noalias() += c.u_f.transpose() * d_out;
  row_view(g, layout_[fin + 3]) += d_out.colwise().sum();
  Mat du = d_out * view(p, layout_[fin + 2]).transpose();
  RowVec dmod_f(2 * d);
  dmod_f.segment(0, d) = du.colwise().sum();
  dmod_f.segment(d, d) = (du.array() * c.xhat_f.array()).colwise().sum();
  Mat dxhat = (du.array().rowwise() * (c.mod_f.segment(d, d).array() + Scalar(1))).matrix();
  Mat dh = layer_norm_backward<Scalar>(dxhat, c.xhat_f, c.rstd_f);
  view(g, layout_[fin]).noalias() += c.act.transpose() * dmod_f;
  row_view(g, layout_[fin + 1]) += dmod_f;
  RowVec dact = dmod_f * view(p, layout_[fin]).transpose();

  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const BlockCache& b = c.blocks[static_cast<std::size_t>(l)];
    const std::size_t base = block_base(l);
    const auto scale1 = b.mod.segment(d, d), gate1 = b.mod.segment(2 * d, d);
    const auto scale2 = b.mod.segment(4 * d, d), gate2 = b.mod.segment(5 * d, d);
    RowVec dmod(6 * d);

    // Feed-forward residual.
    const Mat dff = (dh.array().rowwise() * gate2.array()).matrix();
    dmod.segment(5 * d, d) = (dh.array() * b.ff.array()).colwise().sum();
    view(g, layout_[base + kFf2W]).noalias() += b.g1.transpose() * dff;
    row_view(g, layout_[base + kFf2B]) += dff.colwise().sum();
    Mat dz1 = dff * view(p, layout_[base + kFf2W]).transpose();
    dz1.array() *= b.z1.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
    view(g, layout_[base + kFf1W]).noalias() += b.u2.transpose() * dz1;
    row_view(g, layout_[base + kFf1B]) += dz1.colwise().sum();
    const Mat du2 = dz1 * view(p, layout_[base + kFf1W]).transpose();
    dmod.segment(3 * d, d) = du2.colwise().sum();
    dmod.segment(4 * d, d) = (du2.array() * b.xhat2.array()).colwise().sum();
    const Mat dxhat2 = (du2.array().rowwise() * (scale2.array() + Scalar(1))).matrix();
    const Mat dh_mid = dh + layer_norm_backward<Scalar>(dxhat2, b.xhat2, b.rstd2);

    // Attention residual.
    const Mat dattn = (dh_mid.array().rowwise() * gate1.array()).matrix();
    dmod.segment(2 * d, d) = (dh_mid.array() * b.attn.array()).colwise().sum();
    view(g, layout_[base + kOW]).noalias() += b.o.transpose() * dattn;
    row_view(g, layout_[base + kOB]) += dattn.colwise().sum();
    const Mat d_o = dattn * view(p, layout_[base + kOW]).transpose();
    Mat dq(b.q.rows(), d), dk(b.k.rows(), d), dv(b.v.rows(), d);
    for (int hd = 0; hd < heads; ++hd) {
      const Mat& prob = b.probs[static_cast<std::size_t>(hd)];
      const auto doh = d_o.middleCols(hd * head_dim, head_dim);
      dv.middleCols(hd * head_dim, head_dim) = prob.transpose() * doh;
      const Mat dprob = doh * b.v.middleCols(hd * head_dim, head_dim).transpose();
      Mat ds = prob.cwiseProduct(dprob);
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rows = ds.rowwise().sum();
      ds = prob.cwiseProduct((dprob.colwise() - rows));
      dq.middleCols(hd * head_dim, head_dim) = ds * b.k.middleCols(hd * head_dim, head_dim) * attn_scale;
      dk.middleCols(hd * head_dim, head_dim) = ds.transpose() * b.q.middleCols(hd * head_dim, head_dim) * attn_scale;
    }
    view(g, layout_[base + kQW]).noalias() += b.u1.transpose() * dq;
    row_view(g, layout_[base + kQB]) += dq.colwise().sum();
    view(g, layout_[base + kKW]).noalias() += b.u1.transpose() * dk;
    row_view(g, layout_[base + kKB]) += dk.colwise().sum();
    view(g, layout_[base + kVW]).noalias() += b.u1.transpose() * dv;
    row_view(g, layout_[base + kVB]) += dv.colwise().sum();
    const Mat du1 = dq * view(p, layout_[base + kQW]).transpose() + dk * view(p, layout_[base + kKW]).transpose() +
                    dv * view(p, layout_[base + kVW]).transpose();
    dmod.segment(0, d) = du1.colwise().sum();
    dmod.segment(d, d) = (du1.array() * b.xhat1.array()).colwise().sum();
    const Mat dxhat1 = (du1.array().rowwise() * (scale1.array() + Scalar(1))).matrix();
    dh = dh_mid + layer_norm_backward<Scalar>(dxhat1, b.xhat1, b.rstd1);

    view(g, layout_[base + kModW]).noalias() += c.act.transpose() * dmod;
    row_view(g, layout_[base + kModB]) += dmod;
    dact += dmod * view(p, layout_[base + kModW]).transpose();
  }

  const RowVec dcond = dact.cwiseProduct(silu_grad(c.cond));
  view(g, layout_[kCW]).noalias() += c.context.transpose() * dcond;
  row_view(g, layout_[kCB]) += dcond;
  view(g, layout_[kTW2]).noalias() += c.e1.transpose() * dcond;
  row_view(g, layout_[kTB2]) += dcond;
  const RowVec dzt = (dcond * view(p, layout_[kTW2]).transpose()).cwiseProduct(silu_grad(c.zt));
  view(g, layout_[kTW1]).noalias() += c.temb.transpose() * dzt;
  row_view(g, layout_[kTB1]) += dzt;

  view(g, layout_[kInW]).noalias() += c.x.transpose() * dh;
  row_view(g, layout_[kInB]) += dh.colwise().sum();
}

template Eigen::Matrix<float, 1, Eigen::Dynamic> sinusoidal_embedding<float>(double, int);
template Eigen::Matrix<double, 1, Eigen::Dynamic> sinusoidal_embedding<double>(double, int);
template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace swarmdiff::diffusion
