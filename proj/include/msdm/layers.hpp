#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msdm/error.hpp"
#include "msdm/rng.hpp"
#include "msdm/tensor.hpp"

namespace msdm {

enum class LayerKind { Conv2d, BatchNorm, ReLU, MaxPool, Linear };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "Conv2d";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::Linear: return "Linear";
  }
  return "?";
}

enum class Mode { Train, Eval };

/// Declarative layer description. Convolutions and pools are valid
/// (unpadded); `in_channels`/`out_channels` apply to Conv2d, Linear and
/// BatchNorm (which uses in_channels only).
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int kernel = 1;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;

  static LayerSpec conv(int in, int out, int kernel, int stride = 1) {
    return {LayerKind::Conv2d, kernel, stride, in, out};
  }
  static LayerSpec pool(int kernel, int stride) { return {LayerKind::MaxPool, kernel, stride, 0, 0}; }
  static LayerSpec batch_norm(int channels) { return {LayerKind::BatchNorm, 1, 1, channels, channels}; }
  static LayerSpec relu() { return {LayerKind::ReLU, 1, 1, 0, 0}; }
  static LayerSpec linear(int in, int out) { return {LayerKind::Linear, 1, 1, in, out}; }

  bool spatial() const { return kind == LayerKind::Conv2d || kind == LayerKind::MaxPool; }

  std::string describe() const {
    switch (kind) {
      case LayerKind::Conv2d:
        return "conv" + std::to_string(kernel) + "s" + std::to_string(stride) + " " + std::to_string(in_channels) +
               "->" + std::to_string(out_channels);
      case LayerKind::MaxPool:
        return "maxpool" + std::to_string(kernel) + "s" + std::to_string(stride);
      case LayerKind::BatchNorm:
        return "batchnorm " + std::to_string(in_channels);
      case LayerKind::ReLU:
        return "relu";
      case LayerKind::Linear:
        return "linear " + std::to_string(in_channels) + "->" + std::to_string(out_channels);
    }
    return "?";
  }

  bool operator==(const LayerSpec&) const = default;
};

/// Intermediates retained by one forward application of one layer.
struct Saved {
  bool valid = false;
  Mode mode = Mode::Train;
  Tensor input;
  Tensor aux;                       // BN: normalized activations
  std::vector<std::int32_t> index;  // MaxPool: flat argmax per output
  std::vector<float> stats;         // BN: inverse std per channel
};

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(spec) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }

  /// With `saved` non-null the intermediates needed by backward() are kept.
  virtual Tensor forward(const Tensor& x, Mode mode, Saved* saved) = 0;

  /// Accumulates parameter gradients into each parameter's grad buffer and
  /// returns the gradient with respect to the input.
  virtual Tensor backward(const Tensor& grad_out, const Saved& saved) = 0;

  virtual std::vector<Tensor*> parameters() { return {}; }
  /// Non-trainable state (batch-norm running statistics).
  virtual std::vector<Tensor*> buffers() { return {}; }
  virtual void init(Rng&) {}

 protected:
  static void require_saved(const Saved& s, const char* who) {
    if (!s.valid) throw NoForwardState(std::string(who) + ": backward called without a retained forward pass");
  }

  LayerSpec spec_;
};

// ---------------------------------------------------------------------------

inline int valid_extent(int in, int kernel, int stride) {
  if (in < kernel) return 0;
  return (in - kernel) / stride + 1;
}

class Conv2d final : public Layer {
 public:
  explicit Conv2d(LayerSpec spec)
      : Layer(spec),
        weight_({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}),
        bias_({spec.out_channels}) {
    if (spec.kernel < 1 || spec.stride < 1 || spec.in_channels < 1 || spec.out_channels < 1) {
      throw ConfigError("invalid conv spec " + spec.describe());
    }
  }

  void init(Rng& rng) override {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.in_channels * spec_.kernel * spec_.kernel));
    for (auto& w : weight_.values) w = static_cast<float>(rng.uniform(-bound, bound));
    std::fill(bias_.values.begin(), bias_.values.end(), 0.0f);
  }

  std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }

  Tensor forward(const Tensor& x, Mode, Saved* saved) override {
    check_input(x);
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int ho = valid_extent(h, spec_.kernel, spec_.stride), wo = valid_extent(w, spec_.kernel, spec_.stride);
    if (ho < 1 || wo < 1) throw ShapeMismatch("conv input " + x.shape_str() + " smaller than kernel");
    const int co = spec_.out_channels;
    const long cols_n = static_cast<long>(n) * ho * wo;

    RowMatrix cols = im2col(x, ho, wo);
    RowMatrix y = ConstMatrixMap(weight_.data(), co, cols.rows()) * cols;
    Tensor out({n, co, ho, wo});
    const long hw = static_cast<long>(ho) * wo;
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < co; ++c) {
        const float bc = bias_.values[c];
        float* dst = out.data() + (static_cast<long>(b) * co + c) * hw;
        const float* src = y.data() + c * cols_n + b * hw;
        for (long p = 0; p < hw; ++p) dst[p] = src[p] + bc;
      }
    if (saved) {
      saved->input = x;
      saved->valid = true;
    }
    return out;
  }

  Tensor backward(const Tensor& gy, const Saved& saved) override {
    require_saved(saved, "Conv2d");
    const Tensor& x = saved.input;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int ho = valid_extent(h, spec_.kernel, spec_.stride), wo = valid_extent(w, spec_.kernel, spec_.stride);
    const int co = spec_.out_channels;
    if (gy.shape != std::vector<int>{n, co, ho, wo}) throw ShapeMismatch("conv grad shape " + gy.shape_str());
    const long hw = static_cast<long>(ho) * wo;
    const long cols_n = static_cast<long>(n) * hw;

    RowMatrix g(co, cols_n);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < co; ++c) {
        const float* src = gy.data() + (static_cast<long>(b) * co + c) * hw;
        float* dst = g.data() + c * cols_n + b * hw;
        std::copy(src, src + hw, dst);
      }
    if (!weight_.has_grad()) weight_.zero_grad();
    if (!bias_.has_grad()) bias_.zero_grad();

    RowMatrix cols = im2col(x, ho, wo);
    MatrixMap dw(weight_.grad.data(), co, cols.rows());
    dw.noalias() += g * cols.transpose();
    for (int c = 0; c < co; ++c) {
      double s = 0.0;
      const float* row = g.data() + c * cols_n;
      for (long p = 0; p < cols_n; ++p) s += row[p];
      bias_.grad[c] += static_cast<float>(s);
    }
    RowMatrix dcols = ConstMatrixMap(weight_.data(), co, cols.rows()).transpose() * g;
    return col2im(dcols, x.shape, ho, wo);
  }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  void check_input(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != spec_.in_channels) {
      throw ShapeMismatch("conv expects Nx" + std::to_string(spec_.in_channels) + "xHxW, got " + x.shape_str());
    }
  }

  /// Rows: (ci, ky, kx); columns: (sample, oy, ox).
  RowMatrix im2col(const Tensor& x, int ho, int wo) const {
    const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int k = spec_.kernel, s = spec_.stride;
    const long hw = static_cast<long>(ho) * wo;
    const long cols_n = static_cast<long>(n) * hw;
    RowMatrix cols(static_cast<long>(ci) * k * k, cols_n);
    for (int c = 0; c < ci; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          float* row = cols.data() + ((static_cast<long>(c) * k + ky) * k + kx) * cols_n;
          for (int b = 0; b < n; ++b) {
            const float* plane = x.data() + (static_cast<long>(b) * ci + c) * h * w;
            float* dst = row + b * hw;
            for (int oy = 0; oy < ho; ++oy) {
              const float* src = plane + static_cast<long>(oy * s + ky) * w + kx;
              for (int ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = src[ox * s];
            }
          }
        }
    return cols;
  }

  Tensor col2im(const RowMatrix& dcols, const std::vector<int>& shape, int ho, int wo) const {
    const int n = shape[0], ci = shape[1], h = shape[2], w = shape[3];
    const int k = spec_.kernel, s = spec_.stride;
    const long hw = static_cast<long>(ho) * wo;
    const long cols_n = static_cast<long>(n) * hw;
    Tensor dx(shape);
    for (int c = 0; c < ci; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const float* row = dcols.data() + ((static_cast<long>(c) * k + ky) * k + kx) * cols_n;
          for (int b = 0; b < n; ++b) {
            float* plane = dx.data() + (static_cast<long>(b) * ci + c) * h * w;
            const float* src = row + b * hw;
            for (int oy = 0; oy < ho; ++oy) {
              float* dst = plane + static_cast<long>(oy * s + ky) * w + kx;
              for (int ox = 0; ox < wo; ++ox) dst[ox * s] += src[oy * wo + ox];
            }
          }
        }
    return dx;
  }

  Tensor weight_;
  Tensor bias_;
};

// ---------------------------------------------------------------------------

/// Per-channel normalization over (N, H, W); also accepts N×C inputs.
class BatchNorm final : public Layer {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  explicit BatchNorm(LayerSpec spec)
      : Layer(spec),
        gamma_({spec.in_channels}, 1.0f),
        beta_({spec.in_channels}, 0.0f),
        running_mean_({spec.in_channels}, 0.0f),
        running_var_({spec.in_channels}, 1.0f) {
    if (spec.in_channels < 1) throw ConfigError("batch-norm needs a channel count");
  }

  void init(Rng&) override {
    std::fill(gamma_.values.begin(), gamma_.values.end(), 1.0f);
    std::fill(beta_.values.begin(), beta_.values.end(), 0.0f);
    std::fill(running_mean_.values.begin(), running_mean_.values.end(), 0.0f);
    std::fill(running_var_.values.begin(), running_var_.values.end(), 1.0f);
  }

  std::vector<Tensor*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }

  Tensor forward(const Tensor& x, Mode mode, Saved* saved) override {
    const auto [n, c, plane] = layout(x);
    Tensor y(x.shape);
    Tensor xhat;
    std::vector<float> inv_stds(c);
    if (saved) xhat = Tensor(x.shape);
    const long count = static_cast<long>(n) * plane;
    for (int ch = 0; ch < c; ++ch) {
      double mean, var;
      if (mode == Mode::Train) {
        double s = 0.0;
        for (int b = 0; b < n; ++b) {
          const float* p = x.data() + (static_cast<long>(b) * c + ch) * plane;
          for (long i = 0; i < plane; ++i) s += p[i];
        }
        mean = s / static_cast<double>(count);
        double ss = 0.0;
        for (int b = 0; b < n; ++b) {
          const float* p = x.data() + (static_cast<long>(b) * c + ch) * plane;
          for (long i = 0; i < plane; ++i) ss += (p[i] - mean) * (p[i] - mean);
        }
        var = ss / static_cast<double>(count);
        const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
        running_mean_.values[ch] =
            static_cast<float>((1.0 - kMomentum) * running_mean_.values[ch] + kMomentum * mean);
        running_var_.values[ch] =
            static_cast<float>((1.0 - kMomentum) * running_var_.values[ch] + kMomentum * unbiased);
      } else {
        mean = running_mean_.values[ch];
        var = running_var_.values[ch];
      }
      const double inv_std = 1.0 / std::sqrt(var + kEps);
      inv_stds[ch] = static_cast<float>(inv_std);
      const float g = gamma_.values[ch], bt = beta_.values[ch];
      for (int b = 0; b < n; ++b) {
        const long off = (static_cast<long>(b) * c + ch) * plane;
        for (long i = 0; i < plane; ++i) {
          const float xh = static_cast<float>((x.values[off + i] - mean) * inv_std);
          if (saved) xhat.values[off + i] = xh;
          y.values[off + i] = g * xh + bt;
        }
      }
    }
    if (saved) {
      saved->mode = mode;
      saved->aux = std::move(xhat);
      saved->stats = std::move(inv_stds);
      saved->input.shape = x.shape;
      saved->valid = true;
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const Saved& saved) override {
    require_saved(saved, "BatchNorm");
    if (gy.shape != saved.aux.shape) throw ShapeMismatch("batch-norm grad shape " + gy.shape_str());
    const auto [n, c, plane] = layout(gy);
    if (!gamma_.has_grad()) gamma_.zero_grad();
    if (!beta_.has_grad()) beta_.zero_grad();
    Tensor dx(gy.shape);
    const double count = static_cast<double>(n) * plane;
    for (int ch = 0; ch < c; ++ch) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int b = 0; b < n; ++b) {
        const long off = (static_cast<long>(b) * c + ch) * plane;
        for (long i = 0; i < plane; ++i) {
          sum_g += gy.values[off + i];
          sum_gx += static_cast<double>(gy.values[off + i]) * saved.aux.values[off + i];
        }
      }
      gamma_.grad[ch] += static_cast<float>(sum_gx);
      beta_.grad[ch] += static_cast<float>(sum_g);
      const double g = gamma_.values[ch];
      if (saved.mode == Mode::Eval) {
        // Running statistics are constants: the map is affine per channel.
        const float scale = static_cast<float>(g * saved.stats[ch]);
        for (int b = 0; b < n; ++b) {
          const long off = (static_cast<long>(b) * c + ch) * plane;
          for (long i = 0; i < plane; ++i) dx.values[off + i] = scale * gy.values[off + i];
        }
        continue;
      }
      const double scale = g * saved.stats[ch] / count;
      for (int b = 0; b < n; ++b) {
        const long off = (static_cast<long>(b) * c + ch) * plane;
        for (long i = 0; i < plane; ++i) {
          dx.values[off + i] = static_cast<float>(
              scale * (count * gy.values[off + i] - sum_g - saved.aux.values[off + i] * sum_gx));
        }
      }
    }
    return dx;
  }

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  struct Layout {
    int n, c;
    long plane;
  };
  Layout layout(const Tensor& x) const {
    if ((x.rank() != 2 && x.rank() != 4) || x.dim(1) != spec_.in_channels) {
      throw ShapeMismatch("batch-norm expects Nx" + std::to_string(spec_.in_channels) + "[xHxW], got " +
                          x.shape_str());
    }
    const long plane = x.rank() == 4 ? static_cast<long>(x.dim(2)) * x.dim(3) : 1;
    return {x.dim(0), x.dim(1), plane};
  }

  Tensor gamma_, beta_, running_mean_, running_var_;
};

// ---------------------------------------------------------------------------

class ReLU final : public Layer {
 public:
  explicit ReLU(LayerSpec spec = LayerSpec::relu()) : Layer(spec) {}

  Tensor forward(const Tensor& x, Mode, Saved* saved) override {
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.values[i] = x.values[i] > 0.0f ? x.values[i] : 0.0f;
    if (saved) {
      saved->input = x;
      saved->valid = true;
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const Saved& saved) override {
    require_saved(saved, "ReLU");
    if (gy.shape != saved.input.shape) throw ShapeMismatch("relu grad shape " + gy.shape_str());
    Tensor dx(gy.shape);
    for (std::size_t i = 0; i < gy.size(); ++i) dx.values[i] = saved.input.values[i] > 0.0f ? gy.values[i] : 0.0f;
    return dx;
  }
};

// ---------------------------------------------------------------------------

/// Valid max-pooling; ties go to the first maximum in row-major window order.
class MaxPool final : public Layer {
 public:
  explicit MaxPool(LayerSpec spec) : Layer(spec) {
    if (spec.kernel < 1 || spec.stride < 1) throw ConfigError("invalid pool spec");
  }

  Tensor forward(const Tensor& x, Mode, Saved* saved) override {
    if (x.rank() != 4) throw ShapeMismatch("max-pool expects NxCxHxW, got " + x.shape_str());
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int k = spec_.kernel, s = spec_.stride;
    const int ho = valid_extent(h, k, s), wo = valid_extent(w, k, s);
    if (ho < 1 || wo < 1) throw ShapeMismatch("pool input " + x.shape_str() + " smaller than window");
    Tensor y({n, c, ho, wo});
    std::vector<std::int32_t> idx(y.size());
    std::size_t o = 0;
    for (int p = 0; p < n * c; ++p) {
      const float* plane = x.data() + static_cast<long>(p) * h * w;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++o) {
          int best = (oy * s) * w + ox * s;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int at = (oy * s + ky) * w + ox * s + kx;
              if (plane[at] > plane[best]) best = at;
            }
          y.values[o] = plane[best];
          idx[o] = best;
        }
    }
    if (saved) {
      saved->input.shape = x.shape;
      saved->index = std::move(idx);
      saved->valid = true;
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const Saved& saved) override {
    require_saved(saved, "MaxPool");
    const auto& shape = saved.input.shape;
    const long plane_in = static_cast<long>(shape[2]) * shape[3];
    const long plane_out = gy.rank() == 4 ? static_cast<long>(gy.dim(2)) * gy.dim(3) : 0;
    if (gy.size() != saved.index.size() || plane_out == 0) throw ShapeMismatch("max-pool grad shape " + gy.shape_str());
    Tensor dx(shape);
    for (std::size_t o = 0; o < gy.size(); ++o) {
      const long p = static_cast<long>(o) / plane_out;
      dx.values[p * plane_in + saved.index[o]] += gy.values[o];
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------

/// Affine map on N×in inputs (higher-rank inputs are flattened per sample).
class Linear final : public Layer {
 public:
  explicit Linear(LayerSpec spec)
      : Layer(spec), weight_({spec.out_channels, spec.in_channels}), bias_({spec.out_channels}) {
    if (spec.in_channels < 1 || spec.out_channels < 1) throw ConfigError("invalid linear spec");
  }

  void init(Rng& rng) override {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.in_channels));
    for (auto& w : weight_.values) w = static_cast<float>(rng.uniform(-bound, bound));
    std::fill(bias_.values.begin(), bias_.values.end(), 0.0f);
  }

  std::vector<Tensor*> parameters() override { return {&weight_, &bias_}; }

  Tensor forward(const Tensor& x, Mode, Saved* saved) override {
    const int n = check(x);
    Tensor y({n, spec_.out_channels});
    MatrixMap ym(y.data(), n, spec_.out_channels);
    ym.noalias() = ConstMatrixMap(x.data(), n, spec_.in_channels) *
                   ConstMatrixMap(weight_.data(), spec_.out_channels, spec_.in_channels).transpose();
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias_.data(), spec_.out_channels);
    if (saved) {
      saved->input = x;
      saved->valid = true;
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const Saved& saved) override {
    require_saved(saved, "Linear");
    const Tensor& x = saved.input;
    const int n = check(x);
    if (gy.shape != std::vector<int>{n, spec_.out_channels}) throw ShapeMismatch("linear grad shape " + gy.shape_str());
    if (!weight_.has_grad()) weight_.zero_grad();
    if (!bias_.has_grad()) bias_.zero_grad();
    ConstMatrixMap g(gy.data(), n, spec_.out_channels);
    ConstMatrixMap xm(x.data(), n, spec_.in_channels);
    MatrixMap(weight_.grad.data(), spec_.out_channels, spec_.in_channels).noalias() += g.transpose() * xm;
    for (int o = 0; o < spec_.out_channels; ++o) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) s += gy.values[static_cast<long>(b) * spec_.out_channels + o];
      bias_.grad[o] += static_cast<float>(s);
    }
    Tensor dx(x.shape);
    MatrixMap(dx.data(), n, spec_.in_channels).noalias() =
        g * ConstMatrixMap(weight_.data(), spec_.out_channels, spec_.in_channels);
    return dx;
  }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  int check(const Tensor& x) const {
    if (x.rank() < 2 || x.size() != static_cast<std::size_t>(x.dim(0)) * spec_.in_channels) {
      throw ShapeMismatch("linear expects Nx" + std::to_string(spec_.in_channels) + ", got " + x.shape_str());
    }
    return x.dim(0);
  }

  Tensor weight_, bias_;
};

// ---------------------------------------------------------------------------

inline std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Conv2d: return std::make_unique<Conv2d>(spec);
    case LayerKind::BatchNorm: return std::make_unique<BatchNorm>(spec);
    case LayerKind::ReLU: return std::make_unique<ReLU>(spec);
    case LayerKind::MaxPool: return std::make_unique<MaxPool>(spec);
    case LayerKind::Linear: return std::make_unique<Linear>(spec);
  }
  throw ConfigError("unknown layer kind");
}

inline float sigmoid(float z) {
  if (z >= 0.0f) return 1.0f / (1.0f + std::exp(-z));
  const float e = std::exp(z);
  return e / (1.0f + e);
}

/// Ordered stack of layers sharing one parameter set. Each forward
/// application records into its own tape, so one stack can be applied to
/// several inputs per step and gradients accumulate across applications.
class Sequential {
 public:
  using Tape = std::vector<Saved>;

  Sequential() = default;
  explicit Sequential(const std::vector<LayerSpec>& specs) {
    for (const auto& s : specs) layers_.push_back(make_layer(s));
  }

  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void push_back(const LayerSpec& s) { layers_.push_back(make_layer(s)); }

  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }
  const Layer& operator[](std::size_t i) const { return *layers_[i]; }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l->spec());
    return out;
  }

  Tensor forward(const Tensor& x, Mode mode, Tape* tape = nullptr) {
    if (tape) tape->assign(layers_.size(), Saved{});
    Tensor cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) cur = layers_[i]->forward(cur, mode, tape ? &(*tape)[i] : nullptr);
    return cur;
  }

  Tensor backward(const Tensor& grad_out, const Tape& tape) {
    if (tape.size() != layers_.size()) throw NoForwardState("tape does not belong to this stack");
    Tensor g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, tape[i]);
    return g;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers_)
      for (auto* p : l->parameters()) out.push_back(p);
    return out;
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Deterministic initialization of every layer; layer i draws from a stream
/// derived from (seed, i).
inline void init_parameters(Sequential& net, std::uint64_t seed) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    net[i].init(rng);
  }
}

struct SgdConfig {
  double learning_rate = 0.01;
  double weight_decay = 0.0001;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  }
};

/// Plain SGD with L2 weight decay folded into the gradient:
/// p <- p - lr * (g + wd * p). Gradients are left untouched.
inline void sgd_step(std::span<Tensor* const> params, const SgdConfig& cfg) {
  const float lr = static_cast<float>(cfg.learning_rate);
  const float wd = static_cast<float>(cfg.weight_decay);
  for (Tensor* p : params) {
    if (!p->has_grad()) continue;
    if (p->grad.size() != p->values.size()) throw ShapeMismatch("gradient/parameter size mismatch");
    for (std::size_t i = 0; i < p->values.size(); ++i) {
      p->values[i] -= lr * (p->grad[i] + wd * p->values[i]);
    }
  }
}

inline void zero_grads(std::span<Tensor* const> params) {
  for (Tensor* p : params) p->zero_grad();
}

}  // namespace msdm
