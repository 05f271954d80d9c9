#include "meshfix/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace meshfix {

std::string to_string(Layout l) {
  return l == Layout::Rectangular ? "rectangular" : "triangular";
}

Layout layout_from_string(const std::string& s) {
  if (s == "rectangular" || s == "clements") return Layout::Rectangular;
  if (s == "triangular" || s == "reck") return Layout::Triangular;
  throw std::invalid_argument("unknown layout: " + s);
}

int Topology::n_columns() const {
  int c = 0;
  for (const auto& p : mzis) c = std::max(c, p.col + 1);
  return c;
}

int Topology::find(int col, int top_mode) const {
  for (int i = 0; i < size(); ++i)
    if (mzis[i].col == col && mzis[i].top_mode == top_mode) return i;
  return -1;
}

Topology make_topology(int n, Layout layout) {
  if (n < 1) throw std::invalid_argument("mesh needs at least one mode");
  Topology t;
  t.n = n;
  t.layout = layout;
  if (layout == Layout::Rectangular) {
    for (int c = 0; c < n; ++c)
      for (int m = c % 2; m <= n - 2; m += 2) t.mzis.push_back({c, m});
  } else {
    for (int k = n - 2; k >= 0; --k)
      for (int m = k; m <= n - 2; ++m) t.mzis.push_back({n - 2 + m - 2 * k, m});
  }
  return t;
}

int triangular_diagonal(int n, const Placement& p) {
  return (n - 2 + p.top_mode - p.col) / 2;
}

MeshProgram make_program(const Topology& topo) {
  MeshProgram p;
  p.topology = topo;
  p.settings.assign(topo.mzis.size(), MziSettings{});
  p.output_phases.assign(topo.n, 0.0);
  return p;
}

void apply_rows(CMatrix& M, int m, const Mat2& T) {
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    const cd a = M(m, j), b = M(m + 1, j);
    M(m, j) = T(0, 0) * a + T(0, 1) * b;
    M(m + 1, j) = T(1, 0) * a + T(1, 1) * b;
  }
}

void apply_cols(CMatrix& M, int m, const Mat2& T) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const cd a = M(i, m), b = M(i, m + 1);
    M(i, m) = a * T(0, 0) + b * T(1, 0);
    M(i, m + 1) = a * T(0, 1) + b * T(1, 1);
  }
}

static void check_program(const MeshProgram& p, const ErrorMap* errors) {
  const auto n = p.topology.mzis.size();
  if (p.settings.size() != n) throw std::invalid_argument("settings/topology size mismatch");
  if (static_cast<int>(p.output_phases.size()) != p.topology.n)
    throw std::invalid_argument("output phase count must equal N");
  if (errors && errors->size() != n) throw std::invalid_argument("error map/topology size mismatch");
}

static Mat2 device(const MeshProgram& p, const ErrorMap* errors, int i) {
  return errors ? imperfect_mzi(p.settings[i], (*errors)[i]) : ideal_mzi(p.settings[i]);
}

static CMatrix mesh_unitary_impl(const MeshProgram& p, const ErrorMap* errors) {
  check_program(p, errors);
  const int n = p.topology.n;
  CMatrix U = CMatrix::Identity(n, n);
  for (int i = 0; i < p.topology.size(); ++i)
    apply_rows(U, p.topology.mzis[i].top_mode, device(p, errors, i));
  for (int r = 0; r < n; ++r) U.row(r) *= std::polar(1.0, p.output_phases[r]);
  return U;
}

CMatrix mesh_unitary(const MeshProgram& p) { return mesh_unitary_impl(p, nullptr); }

CMatrix mesh_unitary(const MeshProgram& p, const ErrorMap& errors) {
  return mesh_unitary_impl(p, &errors);
}

CVector propagate(const MeshProgram& p, const ErrorMap* errors, const CVector& x) {
  check_program(p, errors);
  if (x.size() != p.topology.n) throw std::invalid_argument("input length must equal N");
  CVector y = x;
  for (int i = 0; i < p.topology.size(); ++i) {
    const int m = p.topology.mzis[i].top_mode;
    const Mat2 T = device(p, errors, i);
    const cd a = y(m), b = y(m + 1);
    y(m) = T(0, 0) * a + T(0, 1) * b;
    y(m + 1) = T(1, 0) * a + T(1, 1) * b;
  }
  for (int r = 0; r < p.topology.n; ++r) y(r) *= std::polar(1.0, p.output_phases[r]);
  return y;
}

double matrix_error(const CMatrix& hw, const CMatrix& target) {
  if (hw.rows() != target.rows() || hw.cols() != target.cols() || hw.rows() != hw.cols())
    throw std::invalid_argument("matrix_error needs equal square matrices");
  return std::sqrt((hw - target).squaredNorm() / static_cast<double>(hw.rows()));
}

double unitarity_defect(const CMatrix& U) {
  if (U.rows() != U.cols()) return INFINITY;
  const CMatrix d = U * U.adjoint() - CMatrix::Identity(U.rows(), U.cols());
  return d.cwiseAbs().maxCoeff();
}

bool is_unitary(const CMatrix& U, double tol) { return unitarity_defect(U) < tol; }

bool equal_up_to_global_phase(const CMatrix& a, const CMatrix& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  const cd overlap = (b.adjoint() * a).trace();
  const cd ph = std::abs(overlap) > 0 ? overlap / std::abs(overlap) : cd(1.0);
  return (a - ph * b).cwiseAbs().maxCoeff() < tol;
}

CMatrix haar_random_unitary(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXcd z(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double re = g(rng);
      z(i, j) = cd(re, g(rng));
    }
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    const cd d = r(j, j);
    q.col(j) *= std::abs(d) > 0 ? d / std::abs(d) : cd(1.0);
  }
  return q;
}

}  // namespace meshfix
