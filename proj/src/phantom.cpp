#include "fenri/phantom.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>

#include "fenri/parallel.hpp"
#include "fenri/rng.hpp"

namespace fenri::phantom {

AcquisitionScheme make_scheme(const Eigen::VectorXd& bvalues,
                              const Eigen::Matrix3Xd& gradients) {
  if (bvalues.size() != gradients.cols())
    throw InvalidArgument("scheme: bvalue/gradient count mismatch");
  AcquisitionScheme s{bvalues, gradients};
  for (int i = 0; i < s.size(); ++i) {
    const double n = gradients.col(i).norm();
    if (s.is_b0(i)) continue;
    if (std::abs(n - 1.0) > 1e-6)
      throw InvalidArgument("scheme: non-unit gradient at volume " +
                            std::to_string(i));
  }
  return s;
}

AcquisitionScheme standard_scheme(
    int n_b0, const std::vector<std::pair<double, int>>& shells) {
  int total = n_b0;
  for (const auto& [b, n] : shells) total += n;
  Eigen::VectorXd bvals(total);
  Eigen::Matrix3Xd grads = Eigen::Matrix3Xd::Zero(3, total);
  int k = 0;
  for (int i = 0; i < n_b0; ++i) bvals[k++] = 0.0;
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  for (const auto& [b, n] : shells) {
    for (int i = 0; i < n; ++i) {
      const double z = (i + 0.5) / n;  // Fibonacci hemisphere
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = 2.0 * kPi * std::fmod(i * golden, 1.0);
      grads.col(k) = Vec3(r * std::cos(phi), r * std::sin(phi), z);
      bvals[k] = b;
      ++k;
    }
  }
  return make_scheme(bvals, grads);
}

Curve::Curve(const std::vector<Vec3>& control, double sample_step_mm) {
  if (control.size() < 2)
    throw InvalidArgument("curve: need at least 2 control points");
  if (!(sample_step_mm > 0))
    throw InvalidArgument("curve: sample step must be positive");

  const int nseg = int(control.size()) - 1;
  auto ctrl = [&](int i) {
    return control[size_t(std::clamp(i, 0, int(control.size()) - 1))];
  };
  auto eval = [&](int seg, double t) -> Vec3 {
    const Vec3 p0 = ctrl(seg - 1), p1 = ctrl(seg), p2 = ctrl(seg + 1),
               p3 = ctrl(seg + 2);
    const double t2 = t * t, t3 = t2 * t;
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * t +
                  (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
  };

  pts_.push_back(control.front());
  for (int seg = 0; seg < nseg; ++seg) {
    const double approx = (ctrl(seg + 1) - ctrl(seg)).norm();
    const int n = std::max(2, int(std::ceil(approx / sample_step_mm)));
    for (int i = 1; i <= n; ++i) pts_.push_back(eval(seg, double(i) / n));
  }

  const int n = int(pts_.size());
  arclen_.resize(n);
  arclen_[0] = 0.0;
  for (int i = 1; i < n; ++i)
    arclen_[i] = arclen_[i - 1] + (pts_[i] - pts_[i - 1]).norm();

  tan_.resize(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 a = pts_[std::max(0, i - 1)];
    const Vec3 b = pts_[std::min(n - 1, i + 1)];
    tan_[i] = (b - a).normalized();
  }

  // rotation-minimizing frames by double reflection
  n1_.resize(n);
  n2_.resize(n);
  const Vec3 e = std::abs(tan_[0].x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  n1_[0] = tan_[0].cross(e).normalized();
  n2_[0] = tan_[0].cross(n1_[0]);
  for (int i = 0; i + 1 < n; ++i) {
    const Vec3 v1 = pts_[i + 1] - pts_[i];
    const double c1 = v1.squaredNorm();
    if (c1 < 1e-24) {
      n1_[i + 1] = n1_[i];
      n2_[i + 1] = n2_[i];
      continue;
    }
    const Vec3 nl = n1_[i] - (2.0 / c1) * v1.dot(n1_[i]) * v1;
    const Vec3 tl = tan_[i] - (2.0 / c1) * v1.dot(tan_[i]) * v1;
    const Vec3 v2 = tan_[i + 1] - tl;
    const double c2 = v2.squaredNorm();
    Vec3 next = c2 < 1e-24 ? nl : nl - (2.0 / c2) * v2.dot(nl) * v2;
    next -= next.dot(tan_[i + 1]) * tan_[i + 1];
    n1_[i + 1] = next.normalized();
    n2_[i + 1] = tan_[i + 1].cross(n1_[i + 1]);
  }
}

int Curve::segment_of(double s) const {
  const auto it = std::upper_bound(arclen_.begin(), arclen_.end(), s);
  int i = int(it - arclen_.begin()) - 1;
  return std::clamp(i, 0, int(pts_.size()) - 2);
}

Vec3 Curve::point_at(double s) const {
  s = std::clamp(s, 0.0, length());
  const int i = segment_of(s);
  const double seg = arclen_[i + 1] - arclen_[i];
  const double t = seg > 0 ? (s - arclen_[i]) / seg : 0.0;
  return (1.0 - t) * pts_[i] + t * pts_[i + 1];
}

Vec3 Curve::tangent_at(double s) const {
  s = std::clamp(s, 0.0, length());
  const int i = segment_of(s);
  const double seg = arclen_[i + 1] - arclen_[i];
  const double t = seg > 0 ? (s - arclen_[i]) / seg : 0.0;
  return ((1.0 - t) * tan_[i] + t * tan_[i + 1]).normalized();
}

void Curve::frame_at(double s, Vec3& n1, Vec3& n2) const {
  s = std::clamp(s, 0.0, length());
  const int i = segment_of(s);
  const double seg = arclen_[i + 1] - arclen_[i];
  const double t = seg > 0 ? (s - arclen_[i]) / seg : 0.0;
  n1 = ((1.0 - t) * n1_[i] + t * n1_[i + 1]).normalized();
  const Vec3 tt = tangent_at(s);
  n1 = (n1 - n1.dot(tt) * tt).normalized();
  n2 = tt.cross(n1);
}

Curve::Nearest Curve::nearest(const Vec3& q) const {
  Nearest best{0.0, pts_[0], tan_[0],
               std::numeric_limits<double>::infinity()};
  for (size_t i = 0; i + 1 < pts_.size(); ++i) {
    const Vec3 a = pts_[i], b = pts_[i + 1];
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec3 p = a + t * ab;
    const double d = (q - p).norm();
    if (d < best.distance) {
      best.distance = d;
      best.point = p;
      best.arclen = arclen_[i] + t * (arclen_[i + 1] - arclen_[i]);
      best.tangent = ((1.0 - t) * tan_[i] + t * tan_[i + 1]).normalized();
    }
  }
  return best;
}

std::optional<BundleLocal> bundle_at(const BundleSpec& b, const Curve& curve,
                                     const Vec3& q) {
  const Curve::Nearest n = curve.nearest(q);
  if (n.distance > b.radius) return std::nullopt;
  double frac = b.volume_fraction;
  if (b.profile == RadialProfile::kQuadratic) {
    const double r = n.distance / b.radius;
    frac *= 1.0 - r * r;
  }
  return BundleLocal{frac, n.tangent};
}

namespace {

// Quadrature rule for Watson projections, dense enough for kappa <= ~50.
struct WatsonQuad {
  sh::DirectionSet dirs;
  Eigen::VectorXd weights;
  WatsonQuad() { sh::gauss_legendre_sphere(24, 48, dirs, weights); }
};

const WatsonQuad& watson_quad() {
  static const WatsonQuad q;
  return q;
}

}  // namespace

double watson_normalization(double kappa) {
  if (!(kappa > 0)) throw InvalidArgument("watson: kappa must be positive");
  static std::map<double, double> cache;
  static std::mutex mtx;
  std::lock_guard lock(mtx);
  auto it = cache.find(kappa);
  if (it != cache.end()) return it->second;
  const auto& q = watson_quad();
  double integral = 0.0;
  for (int i = 0; i < q.dirs.size(); ++i) {
    const double t = q.dirs.at(i).z();
    integral += q.weights[i] * std::exp(kappa * t * t);
  }
  const double c = 1.0 / integral;
  cache.emplace(kappa, c);
  return c;
}

Eigen::VectorXd watson_sh(double kappa, const Vec3& mu) {
  const auto& q = watson_quad();
  const double c = watson_normalization(kappa);
  const Vec3 u = mu.normalized();
  Eigen::VectorXd values(q.dirs.size());
  for (int i = 0; i < q.dirs.size(); ++i) {
    const double t = u.dot(q.dirs.at(i));
    values[i] = c * std::exp(kappa * t * t);
  }
  return sh::project_function_to_sh(values, q.dirs, q.weights, sh::kLmax);
}

PhantomSampler::PhantomSampler(const Phantom& ph) : ph_(ph) {
  for (const auto& b : ph_.bundles) curves_.emplace_back(b.centerline);
}

Eigen::VectorXd PhantomSampler::ground_truth_fodf(const Vec3& q) const {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(sh::kNumCoeffs);
  for (size_t k = 0; k < ph_.bundles.size(); ++k) {
    const auto local = bundle_at(ph_.bundles[k], curves_[k], q);
    if (!local) continue;
    c += local->fraction * watson_sh(ph_.bundles[k].kappa, local->tangent);
  }
  return c;
}

ChannelVolume PhantomSampler::ground_truth_sh_volume(
    const VolumeGrid& target) const {
  ChannelVolume out = make_volume(target, sh::kNumCoeffs);
  parallel_for(target.num_voxels(), [&](std::int64_t i) {
    out.data.col(i) = ground_truth_fodf(target.voxel_center(target.unravel(i)));
  });
  return out;
}

ChannelVolume PhantomSampler::simulate_dwi(const AcquisitionScheme& scheme) const {
  const VolumeGrid& g = ph_.grid;
  ChannelVolume out = make_volume(g, scheme.size());
  std::atomic<bool> overflow{false};
  parallel_for(g.num_voxels(), [&](std::int64_t v) {
    const Vec3 x = g.voxel_center(g.unravel(v));
    std::vector<BundleLocal> locals;
    double total = 0.0;
    for (size_t k = 0; k < ph_.bundles.size(); ++k) {
      auto local = bundle_at(ph_.bundles[k], curves_[k], x);
      if (local) {
        locals.push_back(*local);
        total += local->fraction;
      } else {
        locals.push_back(BundleLocal{0.0, Vec3::UnitZ()});
      }
    }
    if (total > 1.0 + 1e-9) {
      overflow = true;
      return;
    }
    const double f_bg = 1.0 - total;
    for (int i = 0; i < scheme.size(); ++i) {
      if (scheme.is_b0(i)) {
        out.data(i, v) = ph_.s0;
        continue;
      }
      const double b = scheme.bvalues[i];
      const Vec3 gdir = scheme.gradients.col(i);
      double sig = f_bg * std::exp(-b * ph_.background_diffusivity);
      for (size_t k = 0; k < ph_.bundles.size(); ++k) {
        if (locals[k].fraction <= 0) continue;
        const auto& spec = ph_.bundles[k];
        const double tg = locals[k].tangent.dot(gdir);
        const double adc = spec.radial_diffusivity +
                           (spec.axial_diffusivity - spec.radial_diffusivity) *
                               tg * tg;
        sig += locals[k].fraction * std::exp(-b * adc);
      }
      out.data(i, v) = ph_.s0 * sig;
    }
  });
  if (overflow)
    throw InvalidArgument("simulate_dwi: bundle fractions exceed 1");
  return out;
}

ChannelVolume PhantomSampler::bundle_mask(int bundle) const {
  // a voxel belongs to the bundle when its cube intersects the tube, the
  // same geometric predicate segment-voxelized streamlines satisfy
  const VolumeGrid& g = ph_.grid;
  const auto& spec = ph_.bundles[size_t(bundle)];
  const Curve& curve = curves_[size_t(bundle)];
  const double step = 0.2;  // mm along the centerline
  std::vector<Vec3> samples;
  for (double s = 0.0; s <= curve.length(); s += step)
    samples.push_back(curve.point_at(s));
  samples.push_back(curve.point_at(curve.length()));

  ChannelVolume out = make_volume(g, 1);
  parallel_for(g.num_voxels(), [&](std::int64_t v) {
    const Vec3 center = g.voxel_center(g.unravel(v));
    const Vec3 half = 0.5 * g.voxel_size;
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& p : samples) {
      Vec3 delta = p - center;
      for (int a = 0; a < 3; ++a)
        delta[a] = std::max(0.0, std::abs(delta[a]) - half[a]);
      best = std::min(best, delta.squaredNorm());
      if (best == 0.0) break;
    }
    out.data(0, v) = std::sqrt(best) <= spec.radius ? 1.0 : 0.0;
  });
  return out;
}

StreamlineSet PhantomSampler::ground_truth_streamlines(int bundle, int n,
                                                       uint64_t seed) const {
  if (n < 1) throw InvalidArgument("ground_truth_streamlines: n must be >= 1");
  const auto& spec = ph_.bundles[size_t(bundle)];
  const Curve& curve = curves_[size_t(bundle)];
  Rng rng(seed);

  StreamlineSet set;
  set.source = "ground_truth";
  const double step = 0.5;  // mm along the offset curve
  const double ds = 0.05;   // densification step on the centerline
  const int nd = std::max(2, int(std::ceil(curve.length() / ds)) + 1);

  for (int line = 0; line < n; ++line) {
    const double r = spec.radius * std::sqrt(rng.uniform()) * (1.0 - 1e-9);
    const double psi = 2.0 * kPi * rng.uniform();

    // dense offset polyline
    std::vector<Vec3> dense(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) {
      const double s = curve.length() * i / (nd - 1);
      Vec3 n1, n2;
      curve.frame_at(s, n1, n2);
      dense[size_t(i)] = curve.point_at(s) +
                         r * (std::cos(psi) * n1 + std::sin(psi) * n2);
    }
    std::vector<double> cum(static_cast<size_t>(nd), 0.0);
    for (int i = 1; i < nd; ++i)
      cum[size_t(i)] = cum[size_t(i - 1)] + (dense[size_t(i)] - dense[size_t(i - 1)]).norm();
    const double total = cum.back();

    auto at = [&](double s) {
      const auto it = std::upper_bound(cum.begin(), cum.end(), s);
      int i = std::clamp(int(it - cum.begin()) - 1, 0, nd - 2);
      const double seg = cum[size_t(i + 1)] - cum[size_t(i)];
      const double t = seg > 0 ? (s - cum[size_t(i)]) / seg : 0.0;
      return Vec3((1.0 - t) * dense[size_t(i)] + t * dense[size_t(i + 1)]);
    };

    Streamline sl;
    sl.seed_index = line;
    for (double s = 0.0; s < total; s += step) sl.points.push_back(at(s));
    sl.points.push_back(dense.back());
    sl.seed = at(total / 2.0);
    set.lines.push_back(std::move(sl));
  }
  return set;
}

ChannelVolume add_rician_noise_sigma(const ChannelVolume& v, double sigma,
                                     uint64_t seed) {
  if (!(sigma >= 0))
    throw InvalidArgument("add_rician_noise: sigma must be >= 0");
  ChannelVolume out = v;
  const int ch = v.channels();
  parallel_for(v.grid.num_voxels(), [&](std::int64_t vox) {
    for (int c = 0; c < ch; ++c) {
      double g1, g2;
      counter_gaussian_pair(seed, std::uint64_t(vox) * ch + c, g1, g2);
      const double s = v.data(c, vox);
      out.data(c, vox) = std::hypot(s + sigma * g1, sigma * g2);
    }
  });
  return out;
}

double rician_sigma_for_snr(const ChannelVolume& v,
                            const AcquisitionScheme& scheme, double snr_db) {
  if (!std::isfinite(snr_db))
    return 0.0;
  if (scheme.size() != v.channels())
    throw InvalidArgument("rician noise: scheme does not match volume channels");
  std::vector<int> b0s;
  for (int i = 0; i < scheme.size(); ++i)
    if (scheme.is_b0(i)) b0s.push_back(i);
  if (b0s.empty()) throw InvalidArgument("rician noise: scheme has no b0");
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::int64_t vox = 0; vox < v.grid.num_voxels(); ++vox) {
    double m = 0.0;
    for (int i : b0s) m += v.data(i, vox);
    m /= double(b0s.size());
    if (m > 0) {
      sum += m;
      ++count;
    }
  }
  if (count == 0) throw InvalidArgument("rician noise: empty foreground");
  const double s_ref = sum / double(count);
  return s_ref * std::pow(10.0, -snr_db / 20.0);
}

ChannelVolume add_rician_noise(const ChannelVolume& v,
                               const AcquisitionScheme& scheme, double snr_db,
                               uint64_t seed) {
  return add_rician_noise_sigma(v, rician_sigma_for_snr(v, scheme, snr_db), seed);
}

std::pair<ChannelVolume, AcquisitionScheme> degrade(
    const ChannelVolume& v, const AcquisitionScheme& scheme,
    double target_voxel_mm, const std::vector<int>& keep, double snr_db,
    uint64_t seed) {
  if (scheme.size() != v.channels())
    throw InvalidArgument("degrade: scheme does not match volume channels");
  if (keep.empty()) throw InvalidArgument("degrade: empty channel subset");
  for (int i : keep)
    if (i < 0 || i >= v.channels())
      throw InvalidArgument("degrade: keep index out of range");

  ChannelVolume subset;
  subset.grid = v.grid;
  subset.data.resize(Eigen::Index(keep.size()), v.data.cols());
  Eigen::VectorXd bvals(Eigen::Index(keep.size()));
  Eigen::Matrix3Xd grads(3, Eigen::Index(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k) {
    subset.data.row(Eigen::Index(k)) = v.data.row(keep[k]);
    bvals[Eigen::Index(k)] = scheme.bvalues[keep[k]];
    grads.col(Eigen::Index(k)) = scheme.gradients.col(keep[k]);
  }
  const AcquisitionScheme sub = make_scheme(bvals, grads);

  const Vec3 vox = v.grid.voxel_size;
  if (std::abs(vox.x() - vox.y()) > 1e-9 || std::abs(vox.x() - vox.z()) > 1e-9)
    throw InvalidArgument("degrade: requires isotropic source voxels");
  const double factor = target_voxel_mm / vox.x();
  ChannelVolume coarse = block_downsample(subset, factor);
  return {add_rician_noise(coarse, sub, snr_db, seed), sub};
}

std::vector<int> keep_first_channels(
    const AcquisitionScheme& scheme, int n_b0,
    const std::vector<std::pair<double, int>>& shells) {
  std::vector<int> keep;
  int found_b0 = 0;
  for (int i = 0; i < scheme.size() && found_b0 < n_b0; ++i)
    if (scheme.is_b0(i)) {
      keep.push_back(i);
      ++found_b0;
    }
  if (found_b0 < n_b0)
    throw InvalidArgument("keep_first_channels: not enough b0 volumes");
  for (const auto& [b, n] : shells) {
    int found = 0;
    for (int i = 0; i < scheme.size() && found < n; ++i)
      if (!scheme.is_b0(i) && std::abs(scheme.bvalues[i] - b) < 0.5) {
        keep.push_back(i);
        ++found;
      }
    if (found < n)
      throw InvalidArgument("keep_first_channels: not enough directions at b=" +
                            std::to_string(b));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

ChannelVolume normalize_by_b0(const ChannelVolume& v,
                              const AcquisitionScheme& scheme) {
  // Reuses the SNR reference: foreground-mean b0.
  const double sigma_ref = rician_sigma_for_snr(v, scheme, 0.0);  // = S_ref
  if (!(sigma_ref > 0))
    throw InvalidArgument("normalize_by_b0: nonpositive b0 reference");
  ChannelVolume out = v;
  out.data /= sigma_ref;
  return out;
}

}  // namespace fenri::phantom
