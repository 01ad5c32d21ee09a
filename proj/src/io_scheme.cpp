#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "fenri/io.hpp"

namespace fenri::io {

phantom::AcquisitionScheme read_scheme(const std::string& bvals_path,
                                       const std::string& bvecs_path) {
  std::ifstream bv(bvals_path);
  if (!bv) throw CorruptFile("scheme: cannot open " + bvals_path);
  std::vector<double> bvals;
  double b;
  while (bv >> b) bvals.push_back(b);
  if (!bv.eof()) throw InvalidArgument("scheme: malformed b-value file");

  std::ifstream gv(bvecs_path);
  if (!gv) throw CorruptFile("scheme: cannot open " + bvecs_path);
  std::vector<Vec3> grads;
  double x, y, z;
  while (gv >> x >> y >> z) grads.emplace_back(x, y, z);
  if (!gv.eof()) throw InvalidArgument("scheme: malformed gradient file");

  if (bvals.size() != grads.size())
    throw InvalidArgument("scheme: " + std::to_string(bvals.size()) +
                          " b-values vs " + std::to_string(grads.size()) +
                          " gradients");
  if (bvals.empty()) throw InvalidArgument("scheme: empty files");

  Eigen::VectorXd bv_out(Eigen::Index(bvals.size()));
  Eigen::Matrix3Xd g_out(3, Eigen::Index(bvals.size()));
  for (size_t i = 0; i < bvals.size(); ++i) {
    bv_out[Eigen::Index(i)] = bvals[i];
    Vec3 g = grads[i];
    const double n = g.norm();
    if (bvals[i] > 1e-9) {
      if (n <= 1e-12)
        throw InvalidArgument("scheme: zero gradient with nonzero b-value");
      if (std::abs(n - 1.0) > 1e-6) {
        std::cerr << "scheme: normalizing non-unit gradient " << i
                  << " (norm " << n << ")\n";
        g /= n;
      }
    }
    g_out.col(Eigen::Index(i)) = g;
  }
  return phantom::make_scheme(bv_out, g_out);
}

void write_scheme(const phantom::AcquisitionScheme& s,
                  const std::string& bvals_path, const std::string& bvecs_path) {
  std::ostringstream bv, gv;
  bv.precision(17);
  gv.precision(17);
  for (int i = 0; i < s.size(); ++i) {
    bv << s.bvalues[i] << "\n";
    gv << s.gradients(0, i) << " " << s.gradients(1, i) << " "
       << s.gradients(2, i) << "\n";
  }
  write_file_atomic(bvals_path, bv.str());
  write_file_atomic(bvecs_path, gv.str());
}

}  // namespace fenri::io
