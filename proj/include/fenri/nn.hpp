#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fenri/rng.hpp"
#include "fenri/types.hpp"

namespace fenri::nn {

// Minimal reverse-mode stack for the encoder/decoder pair: each module owns
// its parameters, caches what backward needs during a training-mode forward,
// and accumulates parameter gradients. Activations are dense matrices with
// one item per column.

template <class S>
struct Tensor {
  std::string name;
  MatX<S> value;
  MatX<S> grad;
  MatX<S> adam_m, adam_v;

  void init_shape(const std::string& n, int rows, int cols) {
    name = n;
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
    adam_m.setZero(rows, cols);
    adam_v.setZero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

template <class S>
void he_uniform_init(MatX<S>& w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      w(i, j) = S(rng.uniform(-bound, bound));
}

template <class S>
struct Dense {
  Tensor<S> W;  // out x in
  Tensor<S> b;  // out x 1
  MatX<S> x_cache;

  void init(const std::string& name, int in, int out, Rng& rng) {
    W.init_shape(name + ".W", out, in);
    b.init_shape(name + ".b", out, 1);
    he_uniform_init(W.value, in, rng);
  }

  MatX<S> forward(const MatX<S>& x, bool training) {
    if (training) x_cache = x;
    MatX<S> y = W.value * x;
    y.colwise() += b.value.col(0);
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    W.grad.noalias() += dy * x_cache.transpose();
    b.grad.col(0).noalias() += dy.rowwise().sum();
    return W.value.transpose() * dy;
  }

  void collect(std::vector<Tensor<S>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

/// Fully-connected net: n_hidden hidden layers with ReLU, linear output.
template <class S>
struct Mlp {
  std::vector<Dense<S>> layers;
  std::vector<MatX<S>> pre_act;  // pre-activation caches per hidden layer

  void init(const std::string& name, int in, int hidden, int n_hidden, int out,
            Rng& rng) {
    layers.clear();
    layers.resize(n_hidden + 1);
    int prev = in;
    for (int i = 0; i < n_hidden; ++i) {
      layers[i].init(name + ".l" + std::to_string(i), prev, hidden, rng);
      prev = hidden;
    }
    layers[n_hidden].init(name + ".l" + std::to_string(n_hidden), prev, out, rng);
  }

  int in_width() const { return int(layers.front().W.value.cols()); }
  int out_width() const { return int(layers.back().W.value.rows()); }

  MatX<S> forward(const MatX<S>& x, bool training) {
    if (training) pre_act.assign(layers.size() - 1, MatX<S>());
    MatX<S> h = x;
    for (size_t i = 0; i + 1 < layers.size(); ++i) {
      h = layers[i].forward(h, training);
      if (training) pre_act[i] = h;
      h = h.cwiseMax(S(0));
    }
    return layers.back().forward(h, training);
  }

  MatX<S> backward(const MatX<S>& dy) {
    MatX<S> d = layers.back().backward(dy);
    for (int i = int(layers.size()) - 2; i >= 0; --i) {
      d.array() *= (pre_act[i].array() > S(0)).template cast<S>();
      d = layers[i].backward(d);
    }
    return d;
  }

  void collect(std::vector<Tensor<S>*>& out) {
    for (auto& l : layers) l.collect(out);
  }
};

/// 3D convolution over a [channels x voxels] activation with known spatial
/// shape, stride 1, zero same-padding, cubic kernel of odd size (or 1x1x1).
template <class S>
struct Conv3 {
  Tensor<S> W;  // out_ch x (in_ch * k^3)
  Tensor<S> b;  // out_ch x 1
  int in_ch = 0, out_ch = 0, ksize = 1;
  MatX<S> cols_cache;
  Vec3i shape_cache{0, 0, 0};

  void init(const std::string& name, int in, int out, int k, Rng& rng) {
    in_ch = in;
    out_ch = out;
    ksize = k;
    const int kk = k * k * k;
    W.init_shape(name + ".W", out, in * kk);
    b.init_shape(name + ".b", out, 1);
    he_uniform_init(W.value, in * kk, rng);
  }

  static std::int64_t lin(const Vec3i& sh, int x, int y, int z) {
    return x + std::int64_t(sh.x()) * (y + std::int64_t(sh.y()) * z);
  }

  MatX<S> im2col(const MatX<S>& x, const Vec3i& sh) const {
    const int r = ksize / 2;
    const int kk = ksize * ksize * ksize;
    MatX<S> cols = MatX<S>::Zero(std::int64_t(in_ch) * kk, x.cols());
    std::int64_t v = 0;
    for (int z = 0; z < sh.z(); ++z)
      for (int y = 0; y < sh.y(); ++y)
        for (int xx = 0; xx < sh.x(); ++xx, ++v) {
          int o = 0;
          for (int dz = -r; dz <= r; ++dz)
            for (int dy = -r; dy <= r; ++dy)
              for (int dx = -r; dx <= r; ++dx, ++o) {
                const int px = xx + dx, py = y + dy, pz = z + dz;
                if (px < 0 || py < 0 || pz < 0 || px >= sh.x() || py >= sh.y() ||
                    pz >= sh.z())
                  continue;
                cols.block(std::int64_t(o) * in_ch, v, in_ch, 1) =
                    x.col(lin(sh, px, py, pz));
              }
        }
    return cols;
  }

  MatX<S> forward(const MatX<S>& x, const Vec3i& sh, bool training) {
    if (training) shape_cache = sh;
    MatX<S> y;
    if (ksize == 1) {
      if (training) cols_cache = x;
      y.noalias() = W.value * x;
    } else {
      MatX<S> cols = im2col(x, sh);
      y.noalias() = W.value * cols;
      if (training) cols_cache = std::move(cols);
    }
    y.colwise() += b.value.col(0);
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    W.grad.noalias() += dy * cols_cache.transpose();
    b.grad.col(0).noalias() += dy.rowwise().sum();
    if (ksize == 1) return W.value.transpose() * dy;

    const MatX<S> dcols = W.value.transpose() * dy;
    const Vec3i& sh = shape_cache;
    const int r = ksize / 2;
    MatX<S> dx = MatX<S>::Zero(in_ch, dy.cols());
    std::int64_t v = 0;
    for (int z = 0; z < sh.z(); ++z)
      for (int y = 0; y < sh.y(); ++y)
        for (int xx = 0; xx < sh.x(); ++xx, ++v) {
          int o = 0;
          for (int dz = -r; dz <= r; ++dz)
            for (int dy_ = -r; dy_ <= r; ++dy_)
              for (int dx_ = -r; dx_ <= r; ++dx_, ++o) {
                const int px = xx + dx_, py = y + dy_, pz = z + dz;
                if (px < 0 || py < 0 || pz < 0 || px >= sh.x() || py >= sh.y() ||
                    pz >= sh.z())
                  continue;
                dx.col(lin(sh, px, py, pz)) +=
                    dcols.block(std::int64_t(o) * in_ch, v, in_ch, 1);
              }
        }
    return dx;
  }

  void collect(std::vector<Tensor<S>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

/// Kernel-2 stride-1 average pooling with replicate clamping at the upper
/// boundary, so the spatial shape is preserved.
template <class S>
struct AvgPool2 {
  Vec3i shape_cache{0, 0, 0};

  static std::int64_t lin(const Vec3i& sh, int x, int y, int z) {
    return x + std::int64_t(sh.x()) * (y + std::int64_t(sh.y()) * z);
  }

  MatX<S> forward(const MatX<S>& x, const Vec3i& sh, bool training) {
    if (training) shape_cache = sh;
    MatX<S> y = MatX<S>::Zero(x.rows(), x.cols());
    std::int64_t v = 0;
    for (int z = 0; z < sh.z(); ++z)
      for (int yy = 0; yy < sh.y(); ++yy)
        for (int xx = 0; xx < sh.x(); ++xx, ++v) {
          for (int dz = 0; dz <= 1; ++dz)
            for (int dy = 0; dy <= 1; ++dy)
              for (int dx = 0; dx <= 1; ++dx) {
                const int px = std::min(xx + dx, sh.x() - 1);
                const int py = std::min(yy + dy, sh.y() - 1);
                const int pz = std::min(z + dz, sh.z() - 1);
                y.col(v) += x.col(lin(sh, px, py, pz));
              }
          y.col(v) *= S(0.125);
        }
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    const Vec3i& sh = shape_cache;
    MatX<S> dx = MatX<S>::Zero(dy.rows(), dy.cols());
    std::int64_t v = 0;
    for (int z = 0; z < sh.z(); ++z)
      for (int yy = 0; yy < sh.y(); ++yy)
        for (int xx = 0; xx < sh.x(); ++xx, ++v) {
          for (int dz = 0; dz <= 1; ++dz)
            for (int dy_ = 0; dy_ <= 1; ++dy_)
              for (int dx_ = 0; dx_ <= 1; ++dx_) {
                const int px = std::min(xx + dx_, sh.x() - 1);
                const int py = std::min(yy + dy_, sh.y() - 1);
                const int pz = std::min(z + dz, sh.z() - 1);
                dx.col(lin(sh, px, py, pz)) += S(0.125) * dy.col(v);
              }
        }
    return dx;
  }
};

/// Per-channel batch normalization. The encoder always normalizes a whole
/// volume at once, so both modes use the statistics of the data being
/// normalized; inference with running averages mismatches badly when each
/// training batch is one phantom. Running buffers are still tracked and
/// serialized for diagnostics.
template <class S>
struct BatchNorm {
  Tensor<S> gamma, beta;
  VecX<S> running_mean, running_var;
  S momentum = S(0.1);
  S eps = S(1e-5);

  // caches
  MatX<S> xhat_cache;
  VecX<S> inv_std_cache;

  void init(const std::string& name, int channels) {
    gamma.init_shape(name + ".gamma", channels, 1);
    beta.init_shape(name + ".beta", channels, 1);
    gamma.value.setOnes();
    running_mean = VecX<S>::Zero(channels);
    running_var = VecX<S>::Ones(channels);
  }

  MatX<S> forward(const MatX<S>& x, bool training) {
    VecX<S> mean = x.rowwise().mean();
    VecX<S> var = (x.colwise() - mean).array().square().rowwise().mean();
    if (training) {
      running_mean = (S(1) - momentum) * running_mean + momentum * mean;
      running_var = (S(1) - momentum) * running_var + momentum * var;
    }
    VecX<S> inv_std = (var.array() + eps).rsqrt();
    MatX<S> xhat = (x.colwise() - mean).array().colwise() * inv_std.array();
    MatX<S> y = (xhat.array().colwise() * gamma.value.col(0).array()).matrix();
    y.colwise() += beta.value.col(0);
    if (training) {
      xhat_cache = std::move(xhat);
      inv_std_cache = std::move(inv_std);
    }
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    const S n = S(dy.cols());
    gamma.grad.col(0).noalias() +=
        (dy.array() * xhat_cache.array()).rowwise().sum().matrix();
    beta.grad.col(0).noalias() += dy.rowwise().sum();

    MatX<S> dxhat = dy.array().colwise() * gamma.value.col(0).array();
    VecX<S> sum_dxhat = dxhat.rowwise().sum();
    VecX<S> sum_dxhat_xhat = (dxhat.array() * xhat_cache.array()).rowwise().sum();
    MatX<S> dx = dxhat * n;
    dx.colwise() -= sum_dxhat;
    dx.array() -= xhat_cache.array().colwise() * sum_dxhat_xhat.array();
    dx.array() = dx.array().colwise() * (inv_std_cache.array() / n);
    return dx;
  }

  void collect(std::vector<Tensor<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// Adam with bias correction, fixed update order over the tensor list.
template <class S>
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;

  void step(std::vector<Tensor<S>*>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (Tensor<S>* p : params) {
      p->adam_m = S(beta1) * p->adam_m + S(1.0 - beta1) * p->grad;
      p->adam_v = S(beta2) * p->adam_v +
                  S(1.0 - beta2) * p->grad.cwiseProduct(p->grad);
      p->value.array() -=
          S(lr) * (p->adam_m.array() / S(bc1)) /
          ((p->adam_v.array() / S(bc2)).sqrt() + S(eps));
    }
  }
};

}  // namespace fenri::nn
