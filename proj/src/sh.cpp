#include "fenri/sh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace fenri::sh {

int n_coeffs(int lmax) {
  if (lmax < 0 || lmax % 2 != 0)
    throw InvalidArgument("n_coeffs: lmax must be even and nonnegative");
  int n = 0;
  for (int l = 0; l <= lmax; l += 2) n += 2 * l + 1;
  return n;
}

int coeff_index(int l, int m) {
  int offset = 0;
  for (int d = 0; d < l; d += 2) offset += 2 * d + 1;
  return offset + (m + l);
}

int coeff_degree(int i) {
  int offset = 0;
  for (int l = 0; l <= kLmax; l += 2) {
    if (i < offset + 2 * l + 1) return l;
    offset += 2 * l + 1;
  }
  throw InvalidArgument("coeff_degree: index out of range");
}

DirectionSet make_direction_set(const Eigen::Matrix3Xd& dirs,
                                bool antipodal_symmetric) {
  for (int i = 0; i < dirs.cols(); ++i) {
    const double n = dirs.col(i).norm();
    if (std::abs(n - 1.0) > 1e-12)
      throw InvalidArgument("direction set: column " + std::to_string(i) +
                            " has norm " + std::to_string(n));
  }
  return DirectionSet{dirs, antipodal_symmetric};
}

namespace {

// Associated Legendre P_l^m(x) with Condon-Shortley phase, all l <= lmax for
// a fixed m, by the standard stable recurrence.
void assoc_legendre_column(int lmax, int m, double x, double* p /* size lmax+1 */) {
  const double somx2 = std::sqrt(std::max(0.0, 1.0 - x * x));
  double pmm = 1.0;
  double fact = 1.0;
  for (int i = 1; i <= m; ++i) {
    pmm *= -fact * somx2;  // (-1)^m (2m-1)!! (1-x^2)^{m/2}
    fact += 2.0;
  }
  for (int l = 0; l < m; ++l) p[l] = 0.0;
  p[m] = pmm;
  if (m == lmax) return;
  double pmmp1 = x * (2.0 * m + 1.0) * pmm;
  p[m + 1] = pmmp1;
  for (int l = m + 2; l <= lmax; ++l) {
    const double pl =
        ((2.0 * l - 1.0) * x * pmmp1 - (l + m - 1.0) * pmm) / (l - m);
    pmm = pmmp1;
    pmmp1 = pl;
    p[l] = pl;
  }
}

double norm_factor(int l, int m) {
  double ratio = 1.0;  // (l-m)! / (l+m)!
  for (int k = l - m + 1; k <= l + m; ++k) ratio /= k;
  return std::sqrt((2.0 * l + 1.0) / (4.0 * kPi) * ratio);
}

struct BasisTables {
  // norm[m][l] for the active lmax
  double norm[kLmax + 1][kLmax + 1];
  BasisTables() {
    for (int m = 0; m <= kLmax; ++m)
      for (int l = m; l <= kLmax; ++l) norm[m][l] = norm_factor(l, m);
  }
};

const BasisTables& tables() {
  static const BasisTables t;
  return t;
}

}  // namespace

void basis_row(const Vec3& dir, int lmax, double* out) {
  if (lmax < 0 || lmax % 2 != 0 || lmax > kLmax)
    throw InvalidArgument("basis_row: lmax must be even and <= 8");
  const double n = dir.norm();
  if (n < 1e-12) throw InvalidArgument("basis_row: zero-norm direction");
  const Vec3 u = dir / n;

  const double ct = std::clamp(u.z(), -1.0, 1.0);
  const double phi = std::atan2(u.y(), u.x());

  double plm[kLmax + 1][kLmax + 1];  // [m][l]
  for (int m = 0; m <= lmax; ++m) assoc_legendre_column(lmax, m, ct, plm[m]);

  const auto& tab = tables();
  const double sqrt2 = std::sqrt(2.0);
  int idx = 0;
  for (int l = 0; l <= lmax; l += 2) {
    for (int m = -l; m <= l; ++m) {
      const int am = std::abs(m);
      const double base = tab.norm[am][l] * plm[am][l];
      double v;
      if (m == 0)
        v = base;
      else if (m > 0)
        v = sqrt2 * base * std::cos(m * phi);
      else
        v = sqrt2 * base * std::sin(am * phi);
      out[idx++] = v;
    }
  }
}

Eigen::MatrixXd basis_matrix(const DirectionSet& dirs, int lmax) {
  if (dirs.size() == 0) throw InvalidArgument("basis_matrix: empty directions");
  const int nc = n_coeffs(lmax);
  Eigen::MatrixXd B(dirs.size(), nc);
  std::vector<double> row(static_cast<size_t>(nc));
  for (int i = 0; i < dirs.size(); ++i) {
    basis_row(dirs.at(i), lmax, row.data());
    for (int j = 0; j < nc; ++j) B(i, j) = row[j];
  }
  return B;
}

Eigen::VectorXd evaluate_odf(const Eigen::VectorXd& coeffs,
                             const DirectionSet& dirs) {
  const int lmax = [&] {
    for (int l = 0; l <= kLmax; l += 2)
      if (n_coeffs(l) == coeffs.size()) return l;
    throw InvalidArgument("evaluate_odf: coefficient count is not a valid "
                          "even-degree size");
  }();
  return basis_matrix(dirs, lmax) * coeffs;
}

double evaluate_odf(const Eigen::VectorXd& coeffs, const Vec3& dir) {
  double row[kNumCoeffs];
  int lmax = -1;
  for (int l = 0; l <= kLmax; l += 2)
    if (n_coeffs(l) == coeffs.size()) lmax = l;
  if (lmax < 0)
    throw InvalidArgument("evaluate_odf: coefficient count is not a valid "
                          "even-degree size");
  basis_row(dir, lmax, row);
  double acc = 0.0;
  for (int j = 0; j < coeffs.size(); ++j) acc += row[j] * coeffs[j];
  return acc;
}

Eigen::VectorXd project_function_to_sh(const Eigen::VectorXd& values,
                                       const DirectionSet& dirs,
                                       const Eigen::VectorXd& weights,
                                       int lmax) {
  const int nc = n_coeffs(lmax);
  if (values.size() != dirs.size())
    throw InvalidArgument("project_function_to_sh: values/directions mismatch");
  if (dirs.size() < 2 * nc)
    throw InvalidArgument(
        "project_function_to_sh: underdetermined; need at least 2x as many "
        "directions as coefficients");
  const Eigen::MatrixXd B = basis_matrix(dirs, lmax);
  if (weights.size() == 0) return B.colPivHouseholderQr().solve(values);
  if (weights.size() != dirs.size())
    throw InvalidArgument("project_function_to_sh: weights/directions mismatch");
  return B.transpose() * weights.cwiseProduct(values).matrix();
}

DirectionSet icosphere(int frequency) {
  if (frequency < 1) throw InvalidArgument("icosphere: frequency must be >= 1");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  Eigen::Matrix3Xd v(3, 12);
  int k = 0;
  for (double s1 : {-1.0, 1.0})
    for (double s2 : {-1.0, 1.0}) {
      v.col(k++) = Vec3(0, s1, s2 * phi);
      v.col(k++) = Vec3(s1, s2 * phi, 0);
      v.col(k++) = Vec3(s2 * phi, 0, s1);
    }
  for (int i = 0; i < 12; ++i) v.col(i).normalize();

  // Faces via edge adjacency: a triple of vertices pairwise separated by the
  // icosahedron edge chord is a face.
  std::vector<std::array<int, 3>> tri;
  const double edge = 2.0 / std::sqrt(phi * phi + 1.0);  // unit-sphere edge chord
  const double edge_tol = 1e-6;
  for (int a = 0; a < 12; ++a)
    for (int b = a + 1; b < 12; ++b)
      for (int c = b + 1; c < 12; ++c) {
        const double ab = (v.col(a) - v.col(b)).norm();
        const double bc = (v.col(b) - v.col(c)).norm();
        const double ca = (v.col(c) - v.col(a)).norm();
        if (std::abs(ab - edge) < edge_tol && std::abs(bc - edge) < edge_tol &&
            std::abs(ca - edge) < edge_tol)
          tri.push_back({a, b, c});
      }
  if (tri.size() != 20) throw NumericError("icosphere: face construction failed");

  std::map<std::array<long long, 3>, int> dedup;
  std::vector<Vec3> out;
  auto add_point = [&](const Vec3& p) {
    const Vec3 u = p.normalized();
    std::array<long long, 3> key{
        static_cast<long long>(std::llround(u.x() * 1e7)),
        static_cast<long long>(std::llround(u.y() * 1e7)),
        static_cast<long long>(std::llround(u.z() * 1e7))};
    auto it = dedup.find(key);
    if (it != dedup.end()) return;
    dedup.emplace(key, static_cast<int>(out.size()));
    out.push_back(u);
  };

  const int f = frequency;
  for (const auto& t : tri) {
    // accumulate corners in global vertex order so shared lattice points
    // are bitwise identical across faces
    std::array<int, 3> idx = t;
    std::sort(idx.begin(), idx.end());
    for (int i = 0; i <= f; ++i)
      for (int j = 0; j <= f - i; ++j) {
        const int kk = f - i - j;
        Vec3 p = (double(i) * v.col(idx[0]) + double(j) * v.col(idx[1]) +
                  double(kk) * v.col(idx[2])) /
                 double(f);
        add_point(p);
      }
  }

  Eigen::Matrix3Xd m(3, static_cast<int>(out.size()));
  for (int i = 0; i < static_cast<int>(out.size()); ++i) m.col(i) = out[i];
  return make_direction_set(m, /*antipodal_symmetric=*/true);
}

DirectionSet hemisphere(const DirectionSet& full) {
  std::vector<int> keep;
  for (int i = 0; i < full.size(); ++i) {
    const Vec3 d = full.at(i);
    const double tol = 1e-9;
    bool upper = d.z() > tol ||
                 (std::abs(d.z()) <= tol &&
                  (d.y() > tol || (std::abs(d.y()) <= tol && d.x() > 0)));
    if (upper) keep.push_back(i);
  }
  Eigen::Matrix3Xd m(3, static_cast<int>(keep.size()));
  for (size_t i = 0; i < keep.size(); ++i) m.col(i) = full.at(keep[i]);
  return DirectionSet{m, /*antipodal_symmetric=*/true};
}

const DirectionSet& peak_seed_directions() {
  static const DirectionSet seeds = hemisphere(icosphere(6));
  return seeds;
}

void gauss_legendre_sphere(int n_theta, int n_phi, DirectionSet& dirs,
                           Eigen::VectorXd& weights) {
  if (n_theta < 1 || n_phi < 1)
    throw InvalidArgument("gauss_legendre_sphere: node counts must be >= 1");
  // Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
  Eigen::VectorXd x(n_theta), w(n_theta);
  for (int i = 0; i < n_theta; ++i) {
    double xi = std::cos(kPi * (i + 0.75) / (n_theta + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = xi;
      if (n_theta == 1) {
        p1 = xi;
      }
      for (int l = 2; l <= n_theta; ++l) {
        const double p2 = ((2.0 * l - 1.0) * xi * p1 - (l - 1.0) * p0) / l;
        p0 = p1;
        p1 = p2;
      }
      // p1 = P_n(xi), p0 = P_{n-1}(xi)
      dp = n_theta * (xi * p1 - p0) / (xi * xi - 1.0);
      const double dx = p1 / dp;
      xi -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    x[i] = xi;
    w[i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
  }

  const int n = n_theta * n_phi;
  Eigen::Matrix3Xd d(3, n);
  weights.resize(n);
  int k = 0;
  for (int i = 0; i < n_theta; ++i) {
    const double ct = x[i];
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * kPi * j / n_phi;
      d.col(k) = Vec3(st * std::cos(phi), st * std::sin(phi), ct);
      weights[k] = w[i] * (2.0 * kPi / n_phi);
      ++k;
    }
  }
  dirs = make_direction_set(d, /*antipodal_symmetric=*/false);
}

double axis_angle(const Vec3& a, const Vec3& b) {
  const double c = std::clamp(std::abs(a.dot(b)), 0.0, 1.0);
  return std::acos(c);
}

namespace {

// Orthonormal tangent basis at a unit direction.
void tangent_basis(const Vec3& d, Vec3& t1, Vec3& t2) {
  const Vec3 e = std::abs(d.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  t1 = d.cross(e).normalized();
  t2 = d.cross(t1);
}

}  // namespace

Peak refine_peak(const Eigen::VectorXd& coeffs, const Vec3& init,
                 const RefineOptions& opts) {
  Vec3 d = init.normalized();
  double f = evaluate_odf(coeffs, d);
  const double h = 1e-5;
  double step = 0.1;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    Vec3 t1, t2;
    tangent_basis(d, t1, t2);
    const double g1 = (evaluate_odf(coeffs, (d + h * t1).normalized()) -
                       evaluate_odf(coeffs, (d - h * t1).normalized())) /
                      (2.0 * h);
    const double g2 = (evaluate_odf(coeffs, (d + h * t2).normalized()) -
                       evaluate_odf(coeffs, (d - h * t2).normalized())) /
                      (2.0 * h);
    const Vec3 g = g1 * t1 + g2 * t2;
    if (g.norm() < opts.grad_tol) break;

    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      const Vec3 trial = (d + step * g).normalized();
      const double ft = evaluate_odf(coeffs, trial);
      if (ft > f) {
        d = trial;
        f = ft;
        step = std::min(step * 1.5, 10.0);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // numerically at the top
  }
  return Peak{d, f};
}

PeakFinder::PeakFinder(const DirectionSet& seed_dirs) : seeds_(seed_dirs) {
  basis_ = basis_matrix(seeds_, kLmax);
  const int n = seeds_.size();
  neighbors_.resize(n);
  // Neighborhood radius: 1.6x the typical seed spacing, so a discrete local
  // maximum must beat the full first ring.
  double min_gap = kPi;
  for (int i = 0; i < std::min(n, 32); ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      min_gap = std::min(min_gap, axis_angle(seeds_.at(i), seeds_.at(j)));
    }
  }
  const double radius = 1.6 * min_gap;
  const double cos_radius = std::cos(radius);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (std::abs(seeds_.at(i).dot(seeds_.at(j))) > cos_radius)
        neighbors_[i].push_back(j);
    }
}

PeakSet PeakFinder::find(const Eigen::VectorXd& coeffs, double min_amplitude,
                         int max_peaks) const {
  if (coeffs.size() != basis_.cols())
    throw InvalidArgument("find_peaks: coefficient size mismatch");
  if (max_peaks <= 0) return {};
  const Eigen::VectorXd amp = basis_ * coeffs;

  PeakSet refined;
  for (int i = 0; i < seeds_.size(); ++i) {
    // at least as large as every neighbor, strictly larger than one: exact
    // ties happen when a peak sits on a symmetry plane of the seed set, and
    // a constant function must yield no candidates at all
    bool is_max = true;
    bool beats_one = false;
    for (int j : neighbors_[i]) {
      if (amp[j] > amp[i]) {
        is_max = false;
        break;
      }
      if (amp[j] < amp[i]) beats_one = true;
    }
    if (!is_max || !beats_one) continue;
    Peak p = refine_peak(coeffs, seeds_.at(i));
    if (p.direction.z() < 0 ||
        (p.direction.z() == 0 &&
         (p.direction.y() < 0 ||
          (p.direction.y() == 0 && p.direction.x() < 0))))
      p.direction = -p.direction;  // hemisphere representative
    if (p.amplitude >= min_amplitude) refined.push_back(p);
  }

  std::sort(refined.begin(), refined.end(),
            [](const Peak& a, const Peak& b) { return a.amplitude > b.amplitude; });

  const double dedup = 5.0 * kPi / 180.0;
  PeakSet kept;
  for (const Peak& p : refined) {
    bool dup = false;
    for (const Peak& q : kept)
      if (axis_angle(p.direction, q.direction) < dedup) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(p);
    if (static_cast<int>(kept.size()) >= max_peaks) break;
  }
  return kept;
}

const PeakFinder& default_peak_finder() {
  static const PeakFinder finder(peak_seed_directions());
  return finder;
}

PeakSet find_peaks(const Eigen::VectorXd& coeffs, const DirectionSet& seed_dirs,
                   double min_amplitude, int max_peaks) {
  PeakFinder finder(seed_dirs);
  return finder.find(coeffs, min_amplitude, max_peaks);
}

}  // namespace fenri::sh
