#pragma once

#include <vector>

#include "fenri/types.hpp"

namespace fenri::sh {

// Real, orthonormal, even-degree spherical harmonics up to lmax = 8.
// Convention (the one common fODF tooling uses): with theta the polar angle
// from +z, phi the azimuth from +x, and P_l^m the associated Legendre
// functions including the Condon-Shortley phase,
//
//   Y_{l,0}    =        N_{l,0}  P_l^0 (cos theta)
//   Y_{l,m>0}  = sqrt2  N_{l,m}  P_l^m (cos theta) cos(m phi)
//   Y_{l,m<0}  = sqrt2  N_{l,|m|} P_l^|m|(cos theta) sin(|m| phi)
//
//   N_{l,m} = sqrt( (2l+1)/(4 pi) * (l-m)! / (l+m)! )
//
// Coefficient ordering: ascending degree l in {0,2,4,6,8}, within each
// degree ascending order m in {-l..l}.  45 coefficients for lmax = 8.
// The full formula table is in the README.

constexpr int kLmax = 8;
constexpr int kNumCoeffs = 45;

/// Number of even-degree coefficients up to lmax.
int n_coeffs(int lmax);

/// Flat index of (l, m) in the coefficient ordering above.
int coeff_index(int l, int m);

/// Degree l of flat coefficient index i.
int coeff_degree(int i);

struct DirectionSet {
  Eigen::Matrix3Xd dirs;  // unit-norm columns
  bool antipodal_symmetric = false;

  int size() const { return static_cast<int>(dirs.cols()); }
  Vec3 at(int i) const { return dirs.col(i); }
};

/// Validates unit norms (1e-12) and wraps the matrix.
DirectionSet make_direction_set(const Eigen::Matrix3Xd& dirs,
                                bool antipodal_symmetric);

/// Geodesic sphere from a frequency-f subdivided icosahedron: 10 f^2 + 2
/// vertices, centrally symmetric. frequency 6 gives the 362-point sphere.
DirectionSet icosphere(int frequency);

/// One representative per antipodal pair (z > 0 side).
DirectionSet hemisphere(const DirectionSet& full);

/// The 181 hemisphere representatives of the 362-point icosphere, shared
/// default seed set for peak finding.
const DirectionSet& peak_seed_directions();

/// Gauss-Legendre x uniform-azimuth product quadrature. Exact for spherical
/// polynomials of degree <= min(2*n_theta - 1, n_phi - 1); weights sum to 4 pi.
void gauss_legendre_sphere(int n_theta, int n_phi, DirectionSet& dirs,
                           Eigen::VectorXd& weights);

/// Basis matrix, one direction per row, one coefficient per column.
Eigen::MatrixXd basis_matrix(const DirectionSet& dirs, int lmax);

/// Single basis row evaluated at one unit direction.
void basis_row(const Vec3& dir, int lmax, double* out);

/// Raw SH series at each direction; negative values are not clamped.
Eigen::VectorXd evaluate_odf(const Eigen::VectorXd& coeffs,
                             const DirectionSet& dirs);

/// Series value at a single direction.
double evaluate_odf(const Eigen::VectorXd& coeffs, const Vec3& dir);

/// SH coefficients of a sampled spherical function. With quadrature weights
/// the projection is the weighted inner product; without (weights of size 0)
/// it is the least-squares fit. Requires >= 2x as many directions as
/// coefficients.
Eigen::VectorXd project_function_to_sh(const Eigen::VectorXd& values,
                                       const DirectionSet& dirs,
                                       const Eigen::VectorXd& weights,
                                       int lmax);

struct Peak {
  Vec3 direction;    // unit, hemisphere representative
  double amplitude;  // ODF value at direction
};

/// Sorted by descending amplitude; no two peaks within 5 degrees after
/// antipodal identification.
using PeakSet = std::vector<Peak>;

struct RefineOptions {
  double grad_tol = 1e-6;
  int max_iters = 100;
};

/// Projected-gradient ascent of the SH series on the sphere. The returned
/// amplitude never falls below the amplitude at init.
Peak refine_peak(const Eigen::VectorXd& coeffs, const Vec3& init,
                 const RefineOptions& opts = {});

/// Precomputed seed geometry for repeated peak extraction over a volume.
class PeakFinder {
 public:
  explicit PeakFinder(const DirectionSet& seed_dirs);

  PeakSet find(const Eigen::VectorXd& coeffs, double min_amplitude,
               int max_peaks) const;

  const DirectionSet& seeds() const { return seeds_; }

 private:
  DirectionSet seeds_;
  Eigen::MatrixXd basis_;                   // seeds x coeffs
  std::vector<std::vector<int>> neighbors_;  // angular neighborhood graph
};

/// Shared finder over peak_seed_directions().
const PeakFinder& default_peak_finder();

/// Discrete local maxima over seed_dirs, each refined, deduplicated within
/// 5 degrees, filtered by min_amplitude, truncated to the max_peaks largest.
PeakSet find_peaks(const Eigen::VectorXd& coeffs, const DirectionSet& seed_dirs,
                   double min_amplitude, int max_peaks);

/// Angle in [0, pi/2] between two axes (antipodal identification).
double axis_angle(const Vec3& a, const Vec3& b);

}  // namespace fenri::sh
