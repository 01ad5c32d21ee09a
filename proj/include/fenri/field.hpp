#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fenri/grid.hpp"
#include "fenri/nn.hpp"
#include "fenri/rng.hpp"
#include "fenri/sh.hpp"
#include "fenri/types.hpp"

namespace fenri::field {

struct EncoderConfig {
  int in_channels = 0;
  int latent_channels = 32;
  int n_blocks = 3;
  int kernel = 3;       // conv kernel, stride 1, same-padding
  int pool_kernel = 2;  // stride-1 average pooling at the output
  bool batch_norm_at_output = true;
};

struct DecoderConfig {
  int hidden_layers = 3;
  int hidden_width = 96;
  int freq_count = 4;  // positional-encoding frequency count m
  int out_dim = sh::kNumCoeffs;

  int input_width(int latent_channels) const {
    return latent_channels + 6 + 6 * freq_count;
  }
};

/// Fourier features of an offset normalized to [0,1): per axis (axis-major)
/// and per frequency j < m, the pair (sin(2 pi 2^j d), cos(2 pi 2^j d)).
/// Length 6m; m = 0 gives an empty vector.
Eigen::VectorXd positional_encode(const Vec3& delta, int m);

/// Maps an ensemble offset p_i - q (strictly inside one voxel per axis) to
/// [0,1)^3 via x -> x / (2 voxel) + 1/2, clamped to [0, 1 - 1e-6].
Vec3 normalize_offset(const Vec3& p_i, const Vec3& q, const Vec3& voxel_size);

/// Latent feature volume; its grid is the input DWI grid, feature vectors in
/// the same spatial order.
template <class S>
struct LatentVolume {
  VolumeGrid grid;
  MatX<S> data;  // latent_channels x voxels
};

namespace detail {
struct PassCounter {
  std::atomic<std::uint64_t> n{0};
  PassCounter() = default;
  PassCounter(const PassCounter& o) : n(o.n.load()) {}
  PassCounter& operator=(const PassCounter& o) {
    n = o.n.load();
    return *this;
  }
};
}  // namespace detail

/// CARN-style 3D encoder: entry conv, n_blocks residual units fused by 1x1
/// convolutions over the growing global concat, exit conv, then the stride-1
/// average pooling + batch norm output stage. Spatial shape is preserved, so
/// latent features stay in one-to-one correspondence with input voxels.
template <class S>
struct Encoder {
  EncoderConfig cfg;
  nn::Conv3<S> entry;
  struct Block {
    nn::Conv3<S> conv1, conv2;
    nn::Conv3<S> cascade;
  };
  std::vector<Block> blocks;
  nn::Conv3<S> exit;
  nn::AvgPool2<S> pool;
  nn::BatchNorm<S> bn;

  struct Cache {
    std::vector<MatX<S>> pre1;      // conv1 pre-activation per block
    std::vector<MatX<S>> res_sum;   // residual sum pre-activation per block
    std::vector<MatX<S>> casc_pre;  // cascade pre-activation per block
  };
  Cache cache;

  void init(const EncoderConfig& c, Rng& rng) {
    cfg = c;
    const int cl = cfg.latent_channels;
    entry.init("enc.entry", cfg.in_channels, cl, cfg.kernel, rng);
    blocks.clear();
    blocks.resize(cfg.n_blocks);
    for (int k = 0; k < cfg.n_blocks; ++k) {
      auto name = "enc.block" + std::to_string(k);
      blocks[k].conv1.init(name + ".conv1", cl, cl, cfg.kernel, rng);
      blocks[k].conv2.init(name + ".conv2", cl, cl, cfg.kernel, rng);
      blocks[k].cascade.init(name + ".cascade", cl * (k + 2), cl, 1, rng);
    }
    exit.init("enc.exit", cl, cl, cfg.kernel, rng);
    bn.init("enc.bn", cl);
  }

  MatX<S> forward(const MatX<S>& x, const Vec3i& shape, bool training) {
    if (training) {
      cache.pre1.assign(blocks.size(), MatX<S>());
      cache.res_sum.assign(blocks.size(), MatX<S>());
      cache.casc_pre.assign(blocks.size(), MatX<S>());
    }
    const int cl = cfg.latent_channels;
    const Eigen::Index n = x.cols();

    MatX<S> b0 = entry.forward(x, shape, training);
    MatX<S> prev = b0;
    // growing concat [b0 | r_1 | ... | r_k]
    MatX<S> cat(cl * (cfg.n_blocks + 1), n);
    cat.topRows(cl) = b0;

    for (size_t k = 0; k < blocks.size(); ++k) {
      auto& blk = blocks[k];
      MatX<S> h1 = blk.conv1.forward(prev, shape, training);
      if (training) cache.pre1[k] = h1;
      h1 = h1.cwiseMax(S(0));
      MatX<S> sum = blk.conv2.forward(h1, shape, training) + prev;
      if (training) cache.res_sum[k] = sum;
      cat.middleRows(cl * (k + 1), cl) = sum.cwiseMax(S(0));

      MatX<S> cpre =
          blk.cascade.forward(cat.topRows(cl * (k + 2)), shape, training);
      if (training) cache.casc_pre[k] = cpre;
      prev = cpre.cwiseMax(S(0));
    }

    MatX<S> e = exit.forward(prev, shape, training);
    MatX<S> p = pool.forward(e, shape, training);
    return cfg.batch_norm_at_output ? bn.forward(p, training) : p;
  }

  MatX<S> backward(const MatX<S>& dL) {
    const int cl = cfg.latent_channels;
    MatX<S> d = cfg.batch_norm_at_output ? bn.backward(dL) : dL;
    d = pool.backward(d);
    d = exit.backward(d);  // d: grad wrt output of last cascade relu

    MatX<S> db0 = MatX<S>::Zero(cl, dL.cols());
    std::vector<MatX<S>> dr(blocks.size());
    for (auto& m : dr) m = MatX<S>::Zero(cl, dL.cols());

    for (int k = int(blocks.size()) - 1; k >= 0; --k) {
      auto& blk = blocks[k];
      MatX<S> dc = d;
      dc.array() *= (cache.casc_pre[k].array() > S(0)).template cast<S>();
      MatX<S> dcat = blk.cascade.backward(dc);
      db0 += dcat.topRows(cl);
      for (int j = 0; j <= k; ++j) dr[j] += dcat.middleRows(cl * (j + 1), cl);

      MatX<S> ds = dr[k];
      ds.array() *= (cache.res_sum[k].array() > S(0)).template cast<S>();
      MatX<S> da1 = blk.conv2.backward(ds);
      da1.array() *= (cache.pre1[k].array() > S(0)).template cast<S>();
      MatX<S> dprev = blk.conv1.backward(da1) + ds;
      if (k == 0)
        db0 += dprev;
      else
        d = std::move(dprev);
    }
    return entry.backward(db0);
  }

  void collect(std::vector<nn::Tensor<S>*>& out) {
    entry.collect(out);
    for (auto& blk : blocks) {
      blk.conv1.collect(out);
      blk.conv2.collect(out);
      blk.cascade.collect(out);
    }
    exit.collect(out);
    bn.collect(out);
  }
};

/// The full continuous-field model: encoder, ensemble-decoded MLP, the
/// per-degree output standardization, and the coordinate normalizer.
template <class S>
struct FenriModelT {
  EncoderConfig enc_cfg;
  DecoderConfig dec_cfg;
  Encoder<S> encoder;
  nn::Mlp<S> decoder;
  detail::PassCounter decoder_passes;

  Eigen::VectorXd degree_scales = Eigen::VectorXd::Ones(5);
  Eigen::VectorXd degree_means = Eigen::VectorXd::Zero(5);
  Vec3 world_lo = Vec3::Zero();
  Vec3 world_hi = Vec3::Ones();

  void init(const EncoderConfig& ec, const DecoderConfig& dc, uint64_t seed) {
    enc_cfg = ec;
    dec_cfg = dc;
    Rng rng(seed);
    encoder.init(ec, rng);
    decoder.init("dec", dc.input_width(ec.latent_channels), dc.hidden_width,
                 dc.hidden_layers, dc.out_dim, rng);
  }

  std::vector<nn::Tensor<S>*> tensors() {
    std::vector<nn::Tensor<S>*> out;
    encoder.collect(out);
    decoder.collect(out);
    return out;
  }

  Vec3 normalize_world(const Vec3& q) const {
    Vec3 r;
    for (int a = 0; a < 3; ++a) {
      const double span = world_hi[a] - world_lo[a];
      r[a] = span > 0 ? (q[a] - world_lo[a]) / span : 0.0;
    }
    return r;
  }

  /// Per-coefficient scale/mean expanded from the per-degree values.
  Eigen::VectorXd coeff_scales() const {
    Eigen::VectorXd s(dec_cfg.out_dim);
    for (int i = 0; i < dec_cfg.out_dim; ++i)
      s[i] = degree_scales[sh::coeff_degree(i) / 2];
    return s;
  }
  Eigen::VectorXd coeff_means() const {
    Eigen::VectorXd m(dec_cfg.out_dim);
    for (int i = 0; i < dec_cfg.out_dim; ++i)
      m[i] = degree_means[sh::coeff_degree(i) / 2];
    return m;
  }

  template <class T>
  FenriModelT<T> cast() const {
    FenriModelT<T> out;
    out.init(enc_cfg, dec_cfg, 0);
    out.degree_scales = degree_scales;
    out.degree_means = degree_means;
    out.world_lo = world_lo;
    out.world_hi = world_hi;
    std::vector<nn::Tensor<T>*> dst = out.tensors();
    auto* self = const_cast<FenriModelT<S>*>(this);
    std::vector<nn::Tensor<S>*> src = self->tensors();
    for (size_t i = 0; i < src.size(); ++i)
      dst[i]->value = src[i]->value.template cast<T>();
    out.encoder.bn.running_mean =
        encoder.bn.running_mean.template cast<T>();
    out.encoder.bn.running_var = encoder.bn.running_var.template cast<T>();
    return out;
  }
};

using FenriModel = FenriModelT<float>;

/// Runs the encoder in inference mode over a full DWI volume.
template <class S>
LatentVolume<S> encode(FenriModelT<S>& model, const ChannelVolume& dwi) {
  if (dwi.channels() != model.enc_cfg.in_channels)
    throw InvalidArgument("encode: DWI channel count does not match model");
  MatX<S> x = dwi.data.template cast<S>();
  LatentVolume<S> L;
  L.grid = dwi.grid;
  L.data = model.encoder.forward(x, dwi.grid.shape, /*training=*/false);
  return L;
}

namespace detail {

/// Fills one decoder input column. q_cell is the query clamped into the
/// ensemble cube (equal to q except within the boundary half-voxel margin)
/// and feeds the offset encoding; the raw q feeds the coordinate features.
template <class S>
void fill_decoder_column(const FenriModelT<S>& model,
                         const Eigen::Ref<const VecX<S>>& latent,
                         const Vec3& p_i, const Vec3& q, const Vec3& q_cell,
                         const Vec3& voxel, Eigen::Ref<VecX<S>> col) {
  const int cl = model.enc_cfg.latent_channels;
  const int m = model.dec_cfg.freq_count;
  col.head(cl) = latent;
  const Vec3 np = model.normalize_world(p_i);
  const Vec3 nq = model.normalize_world(q);
  for (int a = 0; a < 3; ++a) {
    col[cl + a] = S(np[a]);
    col[cl + 3 + a] = S(nq[a]);
  }
  const Eigen::VectorXd pe = positional_encode(
      normalize_offset(p_i, q_cell, voxel), m);
  for (int i = 0; i < pe.size(); ++i) col[cl + 6 + i] = S(pe[i]);
}

/// Clamps q into the convex hull of the ensemble cube.
inline Vec3 clamp_to_cell(const LocalEnsemble& ens, const Vec3& q) {
  Vec3 out = q;
  const Vec3 lo = ens.entries[0].voxel_center;
  const Vec3 hi = ens.entries[7].voxel_center;
  for (int a = 0; a < 3; ++a) out[a] = std::clamp(out[a], lo[a], hi[a]);
  return out;
}

}  // namespace detail

/// One decoder pass for a single latent vector; returns de-standardized SH
/// coefficients.
template <class S>
Eigen::VectorXd decode_single(FenriModelT<S>& model, const VecX<S>& latent,
                              const Vec3& p_i, const Vec3& q,
                              const Vec3& voxel_size) {
  const int w = model.dec_cfg.input_width(model.enc_cfg.latent_channels);
  MatX<S> in(w, 1);
  detail::fill_decoder_column<S>(model, latent, p_i, q, q, voxel_size, in.col(0));
  model.decoder_passes.n += 1;
  MatX<S> out = model.decoder.forward(in, /*training=*/false);
  return model.coeff_scales().cwiseProduct(
             out.col(0).template cast<double>()) +
         model.coeff_means();
}

/// Local-ensemble prediction: 8 decoder passes, trilinearly blended.
template <class S>
Eigen::VectorXd predict(FenriModelT<S>& model, const LatentVolume<S>& L,
                        const Vec3& q) {
  const LocalEnsemble ens = local_ensemble(L.grid, q);
  const Vec3 q_cell = detail::clamp_to_cell(ens, q);
  const int w = model.dec_cfg.input_width(model.enc_cfg.latent_channels);
  MatX<S> in(w, 8);
  for (int i = 0; i < 8; ++i) {
    const auto& e = ens.entries[i];
    detail::fill_decoder_column<S>(
        model, L.data.col(L.grid.linear_index(e.voxel_index)), e.voxel_center,
        q, q_cell, L.grid.voxel_size, in.col(i));
  }
  model.decoder_passes.n += 8;
  MatX<S> out = model.decoder.forward(in, /*training=*/false);
  VecX<S> blended = VecX<S>::Zero(model.dec_cfg.out_dim);
  for (int i = 0; i < 8; ++i)
    blended += S(ens.entries[i].weight) * out.col(i);
  return model.coeff_scales().cwiseProduct(blended.template cast<double>()) +
         model.coeff_means();
}

/// Encodes once and predicts at every voxel center of target; decoding runs
/// in batched chunks.
template <class S>
ChannelVolume predict_volume(FenriModelT<S>& model, const ChannelVolume& dwi,
                             const VolumeGrid& target) {
  for (int a = 0; a < 3; ++a) {
    if (target.world_min()[a] < dwi.grid.world_min()[a] - 1e-9 ||
        target.world_max()[a] > dwi.grid.world_max()[a] + 1e-9)
      throw OutOfDomain("predict_volume: target grid extends beyond input");
  }
  LatentVolume<S> L = encode(model, dwi);
  ChannelVolume out = make_volume(target, model.dec_cfg.out_dim);

  const int w = model.dec_cfg.input_width(model.enc_cfg.latent_channels);
  const Eigen::VectorXd scales = model.coeff_scales();
  const Eigen::VectorXd means = model.coeff_means();
  constexpr std::int64_t kChunk = 512;
  MatX<S> in(w, 8 * kChunk);
  std::vector<double> weight(8 * size_t(kChunk));
  for (std::int64_t start = 0; start < target.num_voxels(); start += kChunk) {
    const std::int64_t n = std::min(kChunk, target.num_voxels() - start);
    for (std::int64_t b = 0; b < n; ++b) {
      const Vec3 q = target.voxel_center(target.unravel(start + b));
      const LocalEnsemble ens = local_ensemble(L.grid, q);
      const Vec3 q_cell = detail::clamp_to_cell(ens, q);
      for (int i = 0; i < 8; ++i) {
        const auto& e = ens.entries[i];
        weight[size_t(8 * b + i)] = e.weight;
        detail::fill_decoder_column<S>(
            model, L.data.col(L.grid.linear_index(e.voxel_index)),
            e.voxel_center, q, q_cell, L.grid.voxel_size, in.col(8 * b + i));
      }
    }
    model.decoder_passes.n += std::uint64_t(8 * n);
    const MatX<S> dec = model.decoder.forward(in.leftCols(8 * n), false);
    for (std::int64_t b = 0; b < n; ++b) {
      VecX<S> acc = VecX<S>::Zero(model.dec_cfg.out_dim);
      for (int i = 0; i < 8; ++i)
        acc += S(weight[size_t(8 * b + i)]) * dec.col(8 * b + i);
      out.data.col(start + b) =
          scales.cwiseProduct(acc.template cast<double>()) + means;
    }
  }
  return out;
}

/// Degree-standardized mean squared error over coefficient batches
/// (one item per column). This is also the training loss.
double wmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
            const Eigen::VectorXd& degree_scales);

struct TrainSample {
  ChannelVolume input;      // degraded DWI, b0-normalized
  ChannelVolume target_sh;  // ground-truth SH at the finer grid
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_queries = 1024;
  int epochs = 100;
  std::uint64_t seed = 0;
  int patch_size = 16;  // low-res voxels per axis
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // fraction of queries drawn near foreground target voxels (c0 != 0);
  // uniform patch sampling starves the minority tissue class
  double foreground_bias = 0.5;
  // cosine learning-rate decay down to this fraction of the initial rate
  double final_lr_fraction = 0.05;
};

struct TrainResult {
  std::vector<double> loss_history;  // one entry per step
};

/// Pooled standard deviation and mean per SH degree over voxels with nonzero
/// degree-0 signal; scales are floored at a fraction of the degree RMS.
void degree_standardization(const std::vector<const ChannelVolume*>& volumes,
                            Eigen::VectorXd& scales, Eigen::VectorXd& means);

void compute_degree_standardization(const std::vector<TrainSample>& dataset,
                                    Eigen::VectorXd& scales,
                                    Eigen::VectorXd& means);

/// Sets the model's world normalizer and degree standardization from the
/// dataset. Call before train().
template <class S>
void prepare_for_training(FenriModelT<S>& model,
                          const std::vector<TrainSample>& dataset) {
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");
  Vec3 lo = dataset[0].input.grid.world_min();
  Vec3 hi = dataset[0].input.grid.world_max();
  for (const auto& s : dataset) {
    lo = lo.cwiseMin(s.input.grid.world_min());
    hi = hi.cwiseMax(s.input.grid.world_max());
  }
  model.world_lo = lo;
  model.world_hi = hi;
  Eigen::VectorXd scales, means;
  compute_degree_standardization(dataset, scales, means);
  model.degree_scales = scales;
  model.degree_means = means;
}

/// One training minibatch: a low-res input patch, the matching target
/// volume, and continuous query coordinates inside both domains.
struct TrainBatch {
  ChannelVolume input_patch;
  const ChannelVolume* target = nullptr;
  std::vector<Vec3> queries;
};

TrainBatch make_train_batch(const TrainSample& sample, int patch_size,
                            int n_queries, Rng& rng,
                            double foreground_bias = 0.0);

/// Forward (and optionally backward) over one batch; returns the loss.
/// Gradients accumulate into the model tensors when backward is set.
template <class S>
double run_batch(FenriModelT<S>& model, const TrainBatch& batch, bool backward) {
  const auto& patch = batch.input_patch;
  const int cl = model.enc_cfg.latent_channels;
  const int w = model.dec_cfg.input_width(cl);
  const int nc = model.dec_cfg.out_dim;
  const int nb = int(batch.queries.size());

  MatX<S> x = patch.data.template cast<S>();
  MatX<S> L = model.encoder.forward(x, patch.grid.shape, /*training=*/true);

  MatX<S> in(w, 8 * nb);
  std::vector<std::int64_t> corner(8 * size_t(nb));
  std::vector<double> weight(8 * size_t(nb));
  for (int b = 0; b < nb; ++b) {
    const Vec3& q = batch.queries[b];
    const LocalEnsemble ens = local_ensemble(patch.grid, q);
    const Vec3 q_cell = detail::clamp_to_cell(ens, q);
    for (int i = 0; i < 8; ++i) {
      const auto& e = ens.entries[i];
      const std::int64_t li = patch.grid.linear_index(e.voxel_index);
      corner[8 * b + i] = li;
      weight[8 * b + i] = e.weight;
      detail::fill_decoder_column<S>(model, L.col(li), e.voxel_center, q, q_cell,
                                     patch.grid.voxel_size, in.col(8 * b + i));
    }
  }

  model.decoder_passes.n += std::uint64_t(8) * nb;
  MatX<S> out = model.decoder.forward(in, /*training=*/true);

  const Eigen::VectorXd scales = model.coeff_scales();
  const Eigen::VectorXd means = model.coeff_means();
  MatX<S> pred(nc, nb), tgt(nc, nb);
  for (int b = 0; b < nb; ++b) {
    VecX<S> acc = VecX<S>::Zero(nc);
    for (int i = 0; i < 8; ++i) acc += S(weight[8 * b + i]) * out.col(8 * b + i);
    pred.col(b) = acc;
    const Eigen::VectorXd raw = trilinear_sample(*batch.target, batch.queries[b]);
    tgt.col(b) =
        ((raw - means).cwiseQuotient(scales)).template cast<S>();
  }

  const MatX<S> diff = pred - tgt;
  const double loss = double(diff.squaredNorm()) / double(nc) / double(nb);
  if (!backward) return loss;

  MatX<S> dout(nc, 8 * nb);
  const S c = S(2.0 / (double(nc) * double(nb)));
  for (int b = 0; b < nb; ++b)
    for (int i = 0; i < 8; ++i)
      dout.col(8 * b + i) = c * S(weight[8 * b + i]) * diff.col(b);

  MatX<S> din = model.decoder.backward(dout);
  MatX<S> dL = MatX<S>::Zero(cl, L.cols());
  for (int col = 0; col < 8 * nb; ++col)
    dL.col(corner[col]) += din.col(col).head(cl);
  model.encoder.backward(dL);
  return loss;
}

/// Adam training over random patches and random continuous queries.
/// Bit-reproducible for a fixed seed and thread count.
template <class S>
TrainResult train(FenriModelT<S>& model, const std::vector<TrainSample>& dataset,
                  const TrainConfig& cfg) {
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");
  if (!(cfg.learning_rate >= 0))
    throw InvalidArgument("train: learning rate must be >= 0");
  if ((model.degree_scales.array() <= 0).any())
    throw InvalidArgument("train: degree scales must be precomputed and > 0");

  Rng rng(cfg.seed);
  nn::Adam<S> adam;
  adam.lr = cfg.learning_rate;
  adam.beta1 = cfg.adam_beta1;
  adam.beta2 = cfg.adam_beta2;
  adam.eps = cfg.adam_eps;
  std::vector<nn::Tensor<S>*> params = model.tensors();

  TrainResult result;
  const std::int64_t total_steps = std::int64_t(cfg.epochs) * dataset.size();
  result.loss_history.reserve(size_t(total_steps));
  for (std::int64_t step = 0; step < total_steps; ++step) {
    // cosine decay of the learning rate
    const double progress = total_steps > 1 ? double(step) / (total_steps - 1) : 0;
    const double floor_frac = std::clamp(cfg.final_lr_fraction, 0.0, 1.0);
    adam.lr = cfg.learning_rate *
              (floor_frac + (1.0 - floor_frac) * 0.5 * (1.0 + std::cos(kPi * progress)));

    const TrainSample& sample = dataset[rng.below(dataset.size())];
    TrainBatch batch = make_train_batch(sample, cfg.patch_size,
                                        cfg.batch_queries, rng,
                                        cfg.foreground_bias);
    for (auto* p : params) p->zero_grad();
    const double loss = run_batch(model, batch, /*backward=*/true);
    if (!std::isfinite(loss))
      throw NumericError("train: non-finite loss at step " +
                         std::to_string(result.loss_history.size()));
    adam.step(params);
    result.loss_history.push_back(loss);
  }
  return result;
}

/// Central-difference check of the analytic gradients on n_params randomly
/// chosen parameters; returns the max relative error (absolute below 1e-8).
template <class S>
double gradient_check(FenriModelT<S>& model, const TrainBatch& batch,
                      int n_params, std::uint64_t seed) {
  static_assert(sizeof(S) == 8, "gradient_check requires double precision");
  std::vector<nn::Tensor<S>*> params = model.tensors();
  for (auto* p : params) p->zero_grad();
  run_batch(model, batch, /*backward=*/true);
  std::vector<MatX<S>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  Rng rng(seed);
  const double h = 1e-5;
  double max_rel = 0.0;
  for (int k = 0; k < n_params; ++k) {
    const size_t ti = size_t(rng.below(params.size()));
    auto& value = params[ti]->value;
    const Eigen::Index idx = Eigen::Index(rng.below(std::uint64_t(value.size())));
    const S saved = value.data()[idx];
    value.data()[idx] = saved + S(h);
    const double lp = run_batch(model, batch, /*backward=*/false);
    value.data()[idx] = saved - S(h);
    const double lm = run_batch(model, batch, /*backward=*/false);
    value.data()[idx] = saved;
    const double numeric = (lp - lm) / (2.0 * h);
    const double exact = double(analytic[ti].data()[idx]);
    const double denom = std::max(std::abs(numeric), std::abs(exact));
    if (denom < 1e-8) continue;  // dead direction: absolute criterion
    max_rel = std::max(max_rel, std::abs(numeric - exact) / denom);
  }
  return max_rel;
}

}  // namespace fenri::field
