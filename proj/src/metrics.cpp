#include "fenri/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fenri/field.hpp"
#include "fenri/parallel.hpp"

namespace fenri::metrics {

double jensen_shannon(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size())
    throw InvalidArgument("jensen_shannon: size mismatch");
  double acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    // evaluate each term with sorted operands so jsd(p,q) == jsd(q,p) exactly
    const double lo = std::min(p[i], q[i]);
    const double hi = std::max(p[i], q[i]);
    const double m = 0.5 * (lo + hi);
    double term = 0.0;
    if (lo > 0) term += 0.5 * lo * std::log2(lo / m);
    if (hi > 0) term += 0.5 * hi * std::log2(hi / m);
    acc += term;
  }
  return std::max(0.0, acc);
}

Eigen::VectorXd density_from_amplitudes(const Eigen::VectorXd& amplitudes) {
  Eigen::VectorXd d = amplitudes.cwiseMax(0.0);
  const double total = d.sum();
  if (total <= 0)
    return Eigen::VectorXd::Constant(d.size(), 1.0 / double(d.size()));
  return d / total;
}

const sh::DirectionSet& msjsd_directions() {
  static const sh::DirectionSet dirs = sh::icosphere(6);
  return dirs;
}

double msjsd(const ChannelVolume& pred, const ChannelVolume& target,
             const sh::DirectionSet& dirs,
             const std::vector<std::int64_t>& mask) {
  if (!(pred.grid == target.grid))
    throw InvalidArgument("msjsd: grid mismatch");
  if (mask.empty()) throw InvalidArgument("msjsd: empty mask");
  const Eigen::MatrixXd basis = sh::basis_matrix(dirs, sh::kLmax);

  std::vector<double> scores(mask.size());
  parallel_for(std::int64_t(mask.size()), [&](std::int64_t i) {
    const std::int64_t v = mask[size_t(i)];
    const Eigen::VectorXd dp = density_from_amplitudes(basis * pred.data.col(v));
    const Eigen::VectorXd dt = density_from_amplitudes(basis * target.data.col(v));
    scores[size_t(i)] = jensen_shannon(dp, dt);
  });
  double acc = 0.0;
  for (double s : scores) acc += s;
  return acc / double(mask.size());
}

namespace {

double waae_voxel(const Eigen::VectorXd& pred_c, const Eigen::VectorXd& target_c,
                  const WaaeOptions& opts) {
  const auto& finder = sh::default_peak_finder();
  const sh::PeakSet tp = finder.find(target_c, opts.min_peak, opts.max_target_peaks);
  const sh::PeakSet pp = finder.find(pred_c, opts.min_peak, opts.max_pred_peaks);
  if (tp.empty() && pp.empty()) return 0.0;

  // greedy matching in descending target-amplitude order
  std::vector<bool> used(pp.size(), false);
  double err_sum = 0.0, weight_sum = 0.0;
  int matched = 0;
  for (const sh::Peak& t : tp) {
    int best = -1;
    double best_angle = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < pp.size(); ++j) {
      if (used[j]) continue;
      const double a = sh::axis_angle(t.direction, pp[j].direction);
      if (a < best_angle) {
        best_angle = a;
        best = int(j);
      }
    }
    if (best < 0) break;
    used[size_t(best)] = true;
    err_sum += t.amplitude * best_angle;
    weight_sum += t.amplitude;
    ++matched;
  }

  const int false_neg = int(tp.size()) - matched;
  const int false_pos = int(pp.size()) - matched;
  const double mean_w = matched > 0 ? weight_sum / matched : 1.0;
  err_sum += (false_neg + false_pos) * mean_w * opts.penalty;
  weight_sum += (false_neg + false_pos) * mean_w;
  return weight_sum > 0 ? err_sum / weight_sum : 0.0;
}

}  // namespace

double waae(const ChannelVolume& pred, const ChannelVolume& target,
            const std::vector<std::int64_t>& mask, const WaaeOptions& opts) {
  if (!(pred.grid == target.grid))
    throw InvalidArgument("waae: grid mismatch");
  if (mask.empty()) throw InvalidArgument("waae: empty mask");
  std::vector<double> scores(mask.size());
  parallel_for(std::int64_t(mask.size()), [&](std::int64_t i) {
    const std::int64_t v = mask[size_t(i)];
    scores[size_t(i)] = waae_voxel(pred.data.col(v), target.data.col(v), opts);
  });
  double acc = 0.0;
  for (double s : scores) acc += s;
  return acc / double(mask.size());
}

std::vector<std::uint8_t> voxelize_streamlines(const StreamlineSet& lines,
                                               const VolumeGrid& grid) {
  std::vector<std::uint8_t> covered(size_t(grid.num_voxels()), 0);

  auto mark = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= grid.shape.x() || y >= grid.shape.y() ||
        z >= grid.shape.z())
      return;
    covered[size_t(grid.linear_index(Vec3i(x, y, z)))] = 1;
  };

  for (const Streamline& line : lines.lines) {
    for (size_t i = 0; i + 1 < line.points.size(); ++i) {
      // Amanatides-Woo traversal in grid-cell coordinates (voxel v spans
      // [v-0.5, v+0.5) around its center).
      Vec3 a = grid.world_to_grid(line.points[i]).array() + 0.5;
      Vec3 b = grid.world_to_grid(line.points[i + 1]).array() + 0.5;
      const Vec3 d = b - a;
      const double seg_len = d.norm();
      Vec3i cell(int(std::floor(a.x())), int(std::floor(a.y())),
                 int(std::floor(a.z())));
      const Vec3i cell_end(int(std::floor(b.x())), int(std::floor(b.y())),
                           int(std::floor(b.z())));
      mark(cell.x(), cell.y(), cell.z());
      if (seg_len <= 0) continue;

      Vec3i step;
      Vec3 t_max, t_delta;
      for (int ax = 0; ax < 3; ++ax) {
        if (d[ax] > 0) {
          step[ax] = 1;
          t_delta[ax] = 1.0 / d[ax];
          t_max[ax] = (std::floor(a[ax]) + 1.0 - a[ax]) / d[ax];
        } else if (d[ax] < 0) {
          step[ax] = -1;
          t_delta[ax] = -1.0 / d[ax];
          t_max[ax] = (a[ax] - std::floor(a[ax])) / -d[ax];
        } else {
          step[ax] = 0;
          t_delta[ax] = std::numeric_limits<double>::infinity();
          t_max[ax] = std::numeric_limits<double>::infinity();
        }
      }
      for (int guard = 0; guard < 4 * (grid.shape.sum() + 3); ++guard) {
        if (cell == cell_end) break;
        int ax = 0;
        if (t_max.y() < t_max[ax]) ax = 1;
        if (t_max.z() < t_max[ax]) ax = 2;
        if (t_max[ax] > 1.0) break;  // segment ends inside current cell
        cell[ax] += step[ax];
        t_max[ax] += t_delta[ax];
        mark(cell.x(), cell.y(), cell.z());
      }
    }
  }
  return covered;
}

TractScoreReport tract_scores(const StreamlineSet& candidate,
                              const ChannelVolume& gt_mask) {
  const std::vector<std::int64_t> gt = mask_indices(gt_mask);
  if (gt.empty()) throw InvalidArgument("tract_scores: empty ground-truth mask");
  const std::vector<std::uint8_t> covered =
      voxelize_streamlines(candidate, gt_mask.grid);

  std::vector<std::uint8_t> in_gt(covered.size(), 0);
  for (std::int64_t v : gt) in_gt[size_t(v)] = 1;

  std::int64_t n_cov = 0, n_inter = 0, n_over = 0;
  for (size_t v = 0; v < covered.size(); ++v) {
    if (!covered[v]) continue;
    ++n_cov;
    if (in_gt[v])
      ++n_inter;
    else
      ++n_over;
  }
  TractScoreReport r;
  const double n_gt = double(gt.size());
  r.ol = double(n_inter) / n_gt;
  r.or_ = double(n_over) / n_gt;
  r.dice = (n_cov + gt.size()) > 0
               ? 2.0 * double(n_inter) / double(n_cov + std::int64_t(gt.size()))
               : 0.0;
  return r;
}

std::vector<std::int64_t> mask_indices(const ChannelVolume& mask) {
  std::vector<std::int64_t> out;
  for (std::int64_t v = 0; v < mask.grid.num_voxels(); ++v)
    if (mask.data(0, v) > 0.5) out.push_back(v);
  return out;
}

std::vector<std::int64_t> nonzero_c0_mask(const ChannelVolume& sh_volume) {
  std::vector<std::int64_t> out;
  for (std::int64_t v = 0; v < sh_volume.grid.num_voxels(); ++v)
    if (std::abs(sh_volume.data(0, v)) > 1e-12) out.push_back(v);
  return out;
}

OdfScoreReport score_odf_volumes(const ChannelVolume& pred,
                                 const ChannelVolume& target,
                                 const std::vector<std::int64_t>& mask,
                                 const Eigen::VectorXd& degree_scales) {
  if (!(pred.grid == target.grid))
    throw InvalidArgument("score_odf_volumes: grid mismatch");
  if (mask.empty()) throw InvalidArgument("score_odf_volumes: empty mask");
  OdfScoreReport r;
  Eigen::MatrixXd p(pred.data.rows(), Eigen::Index(mask.size()));
  Eigen::MatrixXd t(target.data.rows(), Eigen::Index(mask.size()));
  for (size_t i = 0; i < mask.size(); ++i) {
    p.col(Eigen::Index(i)) = pred.data.col(mask[i]);
    t.col(Eigen::Index(i)) = target.data.col(mask[i]);
  }
  r.wmse = field::wmse(p, t, degree_scales);
  r.msjsd = msjsd(pred, target, msjsd_directions(), mask);
  r.waae = waae(pred, target, mask);
  return r;
}

}  // namespace fenri::metrics
