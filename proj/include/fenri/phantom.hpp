#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fenri/grid.hpp"
#include "fenri/sh.hpp"
#include "fenri/streamline.hpp"
#include "fenri/types.hpp"

namespace fenri::phantom {

struct AcquisitionScheme {
  Eigen::VectorXd bvalues;     // s/mm^2, 0 for b0
  Eigen::Matrix3Xd gradients;  // unit columns, zero for b0

  int size() const { return int(bvalues.size()); }
  bool is_b0(int i) const { return bvalues[i] <= 1e-9; }
};

/// Validates counts and norms; gradients must be unit (1e-6) or zero.
AcquisitionScheme make_scheme(const Eigen::VectorXd& bvalues,
                              const Eigen::Matrix3Xd& gradients);

/// n_b0 zero gradients followed by one shell per (bvalue, count) pair with
/// deterministic Fibonacci-hemisphere directions.
AcquisitionScheme standard_scheme(int n_b0,
                                  const std::vector<std::pair<double, int>>& shells);

enum class RadialProfile { kFlat, kQuadratic };

struct BundleSpec {
  std::vector<Vec3> centerline;  // control points, interpolated by Catmull-Rom
  double radius = 4.0;           // mm
  double kappa = 20.0;           // Watson concentration of the fiber spread
  double volume_fraction = 0.75; // peak anisotropic fraction
  RadialProfile profile = RadialProfile::kFlat;
  double axial_diffusivity = 1.7e-3;   // mm^2/s
  double radial_diffusivity = 0.2e-3;  // mm^2/s
};

struct Phantom {
  std::vector<BundleSpec> bundles;
  double background_diffusivity = 3.0e-3;  // isotropic compartment, mm^2/s
  double s0 = 1000.0;                      // baseline (b=0) signal
  VolumeGrid grid;
};

/// Cubic Catmull-Rom curve through control points with clamped ends,
/// densified to a fine polyline with rotation-minimizing frames.
class Curve {
 public:
  explicit Curve(const std::vector<Vec3>& control, double sample_step_mm = 0.05);

  struct Nearest {
    double arclen;
    Vec3 point;
    Vec3 tangent;
    double distance;
  };
  Nearest nearest(const Vec3& q) const;

  double length() const { return arclen_.back(); }
  Vec3 point_at(double s) const;
  Vec3 tangent_at(double s) const;
  /// Rotation-minimizing normal frame (n1, n2) at arc length s.
  void frame_at(double s, Vec3& n1, Vec3& n2) const;

 private:
  std::vector<Vec3> pts_, tan_, n1_, n2_;
  std::vector<double> arclen_;
  int segment_of(double s) const;
};

/// Bundle volume fraction and local tangent at a world point, if inside.
struct BundleLocal {
  double fraction;
  Vec3 tangent;
};
std::optional<BundleLocal> bundle_at(const BundleSpec& b, const Curve& curve,
                                     const Vec3& q);

/// Phantom with precomputed bundle curves.
class PhantomSampler {
 public:
  explicit PhantomSampler(const Phantom& ph);

  const Phantom& spec() const { return ph_; }
  const Curve& curve(int bundle) const { return curves_[size_t(bundle)]; }

  /// Anisotropic ground-truth fODF: per bundle containing q, the fraction-
  /// weighted SH projection (numeric quadrature) of a Watson kernel aligned
  /// with the bundle tangent. Zero outside all bundles; the isotropic
  /// background compartment contributes signal but no fODF.
  Eigen::VectorXd ground_truth_fodf(const Vec3& q) const;

  /// Multi-tensor forward signal on the phantom grid.
  ChannelVolume simulate_dwi(const AcquisitionScheme& scheme) const;

  /// Ground-truth SH coefficients at every voxel center of target.
  ChannelVolume ground_truth_sh_volume(const VolumeGrid& target) const;

  /// Binary mask (1 channel) of voxels within the bundle radius.
  ChannelVolume bundle_mask(int bundle) const;

  /// n curves parallel to the centerline at uniform-in-disk radial offsets,
  /// resampled at 0.5 mm of their own arc length; seed = arc-length midpoint.
  StreamlineSet ground_truth_streamlines(int bundle, int n, uint64_t seed) const;

 private:
  Phantom ph_;
  std::vector<Curve> curves_;
};

/// Normalization constant so that C(kappa) exp(kappa t^2) integrates to 1
/// over the sphere (cached per kappa).
double watson_normalization(double kappa);

/// SH projection (numeric quadrature) of the unit-mass Watson kernel with
/// concentration kappa about axis mu.
Eigen::VectorXd watson_sh(double kappa, const Vec3& mu);

/// Rician degradation: s' = sqrt((s + n1)^2 + n2^2) with per-sample
/// counter-based gaussian draws of standard deviation sigma.
ChannelVolume add_rician_noise_sigma(const ChannelVolume& v, double sigma,
                                     uint64_t seed);

/// Sigma from an SNR in dB relative to the mean b0 intensity over the
/// foreground (positive mean-b0 voxels).
double rician_sigma_for_snr(const ChannelVolume& v,
                            const AcquisitionScheme& scheme, double snr_db);

ChannelVolume add_rician_noise(const ChannelVolume& v,
                               const AcquisitionScheme& scheme, double snr_db,
                               uint64_t seed);

/// The degradation recipe: keep a channel subset, block-downsample to the
/// target voxel size, then add Rician noise. Returns the degraded volume and
/// the subset scheme.
std::pair<ChannelVolume, AcquisitionScheme> degrade(
    const ChannelVolume& v, const AcquisitionScheme& scheme,
    double target_voxel_mm, const std::vector<int>& keep, double snr_db,
    uint64_t seed);

/// First n_b0 b0 channels and the first n per (bvalue, n) shell, in original
/// channel order.
std::vector<int> keep_first_channels(const AcquisitionScheme& scheme, int n_b0,
                                     const std::vector<std::pair<double, int>>& shells);

/// Divides every channel by the foreground-mean b0 intensity (the model-input
/// normalization).
ChannelVolume normalize_by_b0(const ChannelVolume& v,
                              const AcquisitionScheme& scheme);

}  // namespace fenri::phantom
