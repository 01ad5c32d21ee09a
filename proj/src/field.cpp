#include "fenri/field.hpp"

#include <algorithm>
#include <cmath>

namespace fenri::field {

Eigen::VectorXd positional_encode(const Vec3& delta, int m) {
  if (m < 0) throw InvalidArgument("positional_encode: negative frequency count");
  for (int a = 0; a < 3; ++a)
    if (!(delta[a] >= 0.0 && delta[a] < 1.0))
      throw InvalidArgument("positional_encode: component outside [0,1)");
  Eigen::VectorXd out(6 * m);
  for (int a = 0; a < 3; ++a) {
    double f = 2.0 * kPi;
    for (int j = 0; j < m; ++j) {
      out[2 * (a * m + j) + 0] = std::sin(f * delta[a]);
      out[2 * (a * m + j) + 1] = std::cos(f * delta[a]);
      f *= 2.0;
    }
  }
  return out;
}

Vec3 normalize_offset(const Vec3& p_i, const Vec3& q, const Vec3& voxel_size) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    const double d = p_i[a] - q[a];
    // boundary-clamped ensembles touch |d| == voxel exactly; that maps to
    // the clamped range edge, anything beyond is misuse
    if (std::abs(d) > voxel_size[a] * (1.0 + 1e-9))
      throw InvalidArgument("normalize_offset: offset exceeds one voxel");
    out[a] = std::clamp(d / (2.0 * voxel_size[a]) + 0.5, 0.0, 1.0 - 1e-6);
  }
  return out;
}

double wmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
            const Eigen::VectorXd& degree_scales) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("wmse: shape mismatch");
  if ((degree_scales.array() <= 0).any())
    throw InvalidArgument("wmse: nonpositive scale");
  Eigen::VectorXd inv(pred.rows());
  for (int i = 0; i < pred.rows(); ++i)
    inv[i] = 1.0 / degree_scales[sh::coeff_degree(int(i)) / 2];
  const Eigen::MatrixXd scaled = (pred - target).array().colwise() * inv.array();
  return scaled.squaredNorm() / double(pred.size());
}

void degree_standardization(const std::vector<const ChannelVolume*>& volumes,
                            Eigen::VectorXd& scales, Eigen::VectorXd& means) {
  const int n_deg = sh::kLmax / 2 + 1;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_deg);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(n_deg);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n_deg);
  for (const ChannelVolume* vol : volumes) {
    const auto& t = vol->data;
    for (Eigen::Index v = 0; v < t.cols(); ++v) {
      if (std::abs(t(0, v)) <= 0.0) continue;  // voxels with no signal
      for (int i = 0; i < t.rows(); ++i) {
        const int d = sh::coeff_degree(i) / 2;
        sum[d] += t(i, v);
        sumsq[d] += t(i, v) * t(i, v);
        count[d] += 1.0;
      }
    }
  }
  scales.resize(n_deg);
  means.resize(n_deg);
  for (int d = 0; d < n_deg; ++d) {
    if (count[d] < 2) {
      means[d] = 0.0;
      scales[d] = 1.0;
      continue;
    }
    means[d] = sum[d] / count[d];
    const double var = std::max(0.0, sumsq[d] / count[d] - means[d] * means[d]);
    // a degree can be constant over the mask (e.g. flat-profile phantoms);
    // floor the scale at a fraction of its RMS so the loss stays bounded
    const double rms = std::sqrt(sumsq[d] / count[d]);
    scales[d] = std::max({std::sqrt(var), 0.05 * rms, 1e-8});
  }
}

void compute_degree_standardization(const std::vector<TrainSample>& dataset,
                                    Eigen::VectorXd& scales,
                                    Eigen::VectorXd& means) {
  std::vector<const ChannelVolume*> targets;
  targets.reserve(dataset.size());
  for (const auto& s : dataset) targets.push_back(&s.target_sh);
  degree_standardization(targets, scales, means);
}

TrainBatch make_train_batch(const TrainSample& sample, int patch_size,
                            int n_queries, Rng& rng, double foreground_bias) {
  const VolumeGrid& g = sample.input.grid;
  Vec3i corner = Vec3i::Zero();
  Vec3i psize;
  for (int a = 0; a < 3; ++a) {
    psize[a] = std::min(patch_size, g.shape[a]);
    if (g.shape[a] > psize[a])
      corner[a] = int(rng.below(std::uint64_t(g.shape[a] - psize[a] + 1)));
  }

  TrainBatch batch;
  batch.input_patch.grid =
      make_grid(psize, g.voxel_size, g.voxel_center(corner));
  batch.input_patch.data.resize(sample.input.data.rows(),
                                batch.input_patch.grid.num_voxels());
  std::int64_t v = 0;
  for (int z = 0; z < psize.z(); ++z)
    for (int y = 0; y < psize.y(); ++y)
      for (int x = 0; x < psize.x(); ++x, ++v)
        batch.input_patch.data.col(v) = sample.input.data.col(
            g.linear_index(corner + Vec3i(x, y, z)));

  batch.target = &sample.target_sh;
  // Queries live where the patch domain and the target domain overlap.
  const VolumeGrid& tg = sample.target_sh.grid;
  Vec3 lo = batch.input_patch.grid.world_min().cwiseMax(tg.world_min());
  Vec3 hi = batch.input_patch.grid.world_max().cwiseMin(tg.world_max());
  for (int a = 0; a < 3; ++a)
    if (!(hi[a] > lo[a]))
      throw InvalidArgument("make_train_batch: patch and target are disjoint");

  // target voxels with signal inside the query box, for biased sampling
  std::vector<std::int64_t> foreground;
  if (foreground_bias > 0) {
    for (std::int64_t i = 0; i < tg.num_voxels(); ++i) {
      if (sample.target_sh.data(0, i) == 0.0) continue;
      const Vec3 center = tg.voxel_center(tg.unravel(i));
      bool in_box = true;
      for (int a = 0; a < 3; ++a)
        if (center[a] < lo[a] || center[a] > hi[a]) in_box = false;
      if (in_box) foreground.push_back(i);
    }
  }

  batch.queries.resize(size_t(n_queries));
  for (auto& q : batch.queries) {
    const bool biased =
        !foreground.empty() && rng.uniform() < foreground_bias;
    if (biased) {
      const std::int64_t vi =
          foreground[size_t(rng.below(foreground.size()))];
      const Vec3 center = tg.voxel_center(tg.unravel(vi));
      for (int a = 0; a < 3; ++a) {
        const double jitter =
            rng.uniform(-0.5 * tg.voxel_size[a], 0.5 * tg.voxel_size[a]);
        q[a] = std::clamp(center[a] + jitter, lo[a], hi[a]);
      }
    } else {
      for (int a = 0; a < 3; ++a) q[a] = rng.uniform(lo[a], hi[a]);
    }
  }
  return batch;
}

}  // namespace fenri::field
