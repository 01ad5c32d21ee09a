#include "fenri/grid.hpp"

#include <cmath>

#include "fenri/parallel.hpp"

namespace fenri {

int& max_threads() {
  static int n = 1;
  return n;
}

VolumeGrid make_grid(const Vec3i& shape, const Vec3& voxel_size,
                     const Vec3& origin) {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 2)
      throw InvalidArgument("grid: shape must be >= 2 per axis");
    if (!(voxel_size[a] > 0))
      throw InvalidArgument("grid: voxel size must be positive");
  }
  return VolumeGrid{shape, voxel_size, origin};
}

ChannelVolume make_volume(const VolumeGrid& grid, int channels) {
  if (channels < 1) throw InvalidArgument("volume: channels must be >= 1");
  ChannelVolume v;
  v.grid = grid;
  v.data = Eigen::MatrixXd::Zero(channels, grid.num_voxels());
  return v;
}

void validate_volume(const ChannelVolume& v) {
  if (v.data.cols() != v.grid.num_voxels())
    throw InvalidArgument("volume: data size does not match grid");
  if (!v.data.allFinite())
    throw InvalidArgument("volume: non-finite values");
}

LocalEnsemble local_ensemble(const VolumeGrid& g, const Vec3& q) {
  const Vec3 u = g.world_to_grid(q);
  for (int a = 0; a < 3; ++a)
    if (!(u[a] >= -0.5 && u[a] <= g.shape[a] - 0.5))
      throw OutOfDomain("local_ensemble: query outside grid domain");

  Vec3i base;
  Vec3 t;
  for (int a = 0; a < 3; ++a) {
    double cell = std::floor(u[a]);
    cell = std::min(std::max(cell, 0.0), double(g.shape[a] - 2));
    base[a] = int(cell);
    t[a] = std::min(std::max(u[a] - cell, 0.0), 1.0);
  }

  LocalEnsemble e;
  int k = 0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const Vec3i idx(base.x() + dx, base.y() + dy, base.z() + dz);
        const double w = (dx ? t.x() : 1.0 - t.x()) *
                         (dy ? t.y() : 1.0 - t.y()) *
                         (dz ? t.z() : 1.0 - t.z());
        e.entries[k++] = EnsembleEntry{idx, g.voxel_center(idx), w};
      }
  return e;
}

Eigen::VectorXd trilinear_sample(const ChannelVolume& v, const Vec3& q) {
  const LocalEnsemble e = local_ensemble(v.grid, q);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.channels());
  for (const auto& entry : e.entries)
    out.noalias() += entry.weight * v.data.col(v.grid.linear_index(entry.voxel_index));
  return out;
}

ChannelVolume resample_volume(const ChannelVolume& v, const VolumeGrid& target) {
  // Reject grids whose domains do not even touch.
  for (int a = 0; a < 3; ++a)
    if (target.world_max()[a] < v.grid.world_min()[a] ||
        target.world_min()[a] > v.grid.world_max()[a])
      throw InvalidArgument("resample_volume: disjoint domains");

  const Vec3 lo = v.grid.world_min();
  const Vec3 hi = v.grid.world_max();
  ChannelVolume out = make_volume(target, v.channels());
  parallel_for(target.num_voxels(), [&](std::int64_t i) {
    Vec3 q = target.voxel_center(target.unravel(i));
    for (int a = 0; a < 3; ++a) q[a] = std::min(std::max(q[a], lo[a]), hi[a]);
    out.data.col(i) = trilinear_sample(v, q);
  });
  return out;
}

ChannelVolume block_downsample(const ChannelVolume& v, double factor) {
  if (!(factor >= 1.0))
    throw InvalidArgument("block_downsample: factor must be >= 1");
  if (factor < 1.0 + 1e-9) {
    ChannelVolume out = v;  // window equals the source voxel
    return out;
  }
  const VolumeGrid& g = v.grid;
  const Vec3 voxel_t = g.voxel_size * factor;
  Vec3i shape_t;
  for (int a = 0; a < 3; ++a) {
    const double extent = g.shape[a] * g.voxel_size[a];
    shape_t[a] = std::max(2, int(std::llround(extent / voxel_t[a])));
  }
  const VolumeGrid target =
      make_grid(shape_t, voxel_t, g.world_min() + 0.5 * voxel_t);

  const Vec3 lo = g.world_min();
  const Vec3 hi = g.world_max();
  constexpr int kSub = 4;  // supersamples per axis
  ChannelVolume out = make_volume(target, v.channels());
  parallel_for(target.num_voxels(), [&](std::int64_t i) {
    const Vec3 c = target.voxel_center(target.unravel(i));
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(v.channels());
    for (int sz = 0; sz < kSub; ++sz)
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          Vec3 q = c + voxel_t.cwiseProduct(
                           Vec3((sx + 0.5) / kSub - 0.5, (sy + 0.5) / kSub - 0.5,
                                (sz + 0.5) / kSub - 0.5));
          for (int a = 0; a < 3; ++a)
            q[a] = std::min(std::max(q[a], lo[a]), hi[a]);
          acc += trilinear_sample(v, q);
        }
    out.data.col(i) = acc / double(kSub * kSub * kSub);
  });
  return out;
}

}  // namespace fenri
