#include "meshfix/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace meshfix {
namespace {

constexpr double kDegenerate = 1e-14;

struct Step {
  int m;  // top mode
  MziSettings s;
};

// Settings of T such that (U·T⁻¹)(row, m) = 0, acting on columns (m, m+1).
MziSettings null_right(const CMatrix& U, int row, int m) {
  const cd a = U(row, m), b = U(row, m + 1);
  if (std::abs(a) < kDegenerate) return {kPi, 0.0};
  if (std::abs(b) < kDegenerate) return {0.0, 0.0};
  return {2 * std::atan2(std::abs(b), std::abs(a)), wrap_2pi(std::arg(-a / b))};
}

// Settings of T such that (T·U)(m+1, col) = 0, acting on rows (m, m+1).
MziSettings null_left(const CMatrix& U, int m, int col) {
  const cd a = U(m, col), b = U(m + 1, col);
  if (std::abs(b) < kDegenerate) return {kPi, 0.0};
  if (std::abs(a) < kDegenerate) return {0.0, 0.0};
  return {2 * std::atan2(std::abs(a), std::abs(b)), wrap_2pi(std::arg(b) - std::arg(a))};
}

void check_unitary(const CMatrix& U, double tol) {
  if (U.rows() != U.cols() || U.rows() < 1) throw std::invalid_argument("target must be square");
  const double d = unitarity_defect(U);
  if (!(d < tol)) throw UnitarityError("target is not unitary (defect " + std::to_string(d) + ")");
}

// T(θ,φ)⁻¹·diag(e^{ia}, e^{ib}) = diag(e^{i(b−φ−θ+π)}, e^{i(b−θ+π)})·T(θ, a−b)
MziSettings push_through(const MziSettings& s, std::vector<double>& d, int m) {
  const double a = d[m], b = d[m + 1];
  d[m] = b - s.phi - s.theta + kPi;
  d[m + 1] = b - s.theta + kPi;
  return {s.theta, wrap_2pi(a - b)};
}

// Packs devices given in propagation order into the layout's slots,
// scheduling each as early as its two modes allow.
MeshProgram place(int n, Layout layout, const std::vector<Step>& seq, const std::vector<double>& d) {
  const Topology topo = make_topology(n, layout);
  MeshProgram p = make_program(topo);
  std::vector<int> level(n, 0);
  std::vector<char> used(topo.size(), 0);
  for (const Step& st : seq) {
    int col = std::max(level[st.m], level[st.m + 1]);
    const int parity = layout == Layout::Rectangular ? st.m : n - 2 + st.m;
    if ((col - parity) % 2 != 0) ++col;
    const int slot = topo.find(col, st.m);
    if (slot < 0 || used[slot])
      throw std::logic_error("decomposition produced a device outside the layout");
    used[slot] = 1;
    p.settings[slot] = st.s;
    level[st.m] = level[st.m + 1] = col + 1;
  }
  for (int i = 0; i < n; ++i) p.output_phases[i] = wrap_2pi(d[i]);
  return p;
}

DecompositionResult finish(const CMatrix& U, MeshProgram p) {
  DecompositionResult r;
  r.residual = (mesh_unitary(p) - U).cwiseAbs().maxCoeff();
  r.program = std::move(p);
  return r;
}

}  // namespace

DecompositionResult clements_decompose(const CMatrix& U, double tol) {
  check_unitary(U, tol);
  const int n = static_cast<int>(U.rows());
  CMatrix W = U;
  std::vector<Step> right, left;  // right: in propagation order; left: in application order
  for (int i = 0; i + 1 < n; ++i) {
    if (i % 2 == 0) {
      for (int j = 0; j <= i; ++j) {
        const int m = i - j;
        const MziSettings s = null_right(W, n - 1 - j, m);
        apply_cols(W, m, ideal_mzi(s).adjoint());
        right.push_back({m, s});
      }
    } else {
      for (int j = 1; j <= i + 1; ++j) {
        const int m = n + j - i - 3;
        const MziSettings s = null_left(W, m, j - 1);
        apply_rows(W, m, ideal_mzi(s));
        left.push_back({m, s});
      }
    }
  }
  // W = L_k⋯L_1·U·R_1⁻¹⋯R_p⁻¹ is now diagonal, so
  // U = L_1⁻¹⋯L_k⁻¹·W·R_p⋯R_1; walk the L's through W from the innermost out.
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = std::arg(W(i, i));
  std::vector<Step> seq = right;
  std::vector<Step> moved;
  for (auto it = left.rbegin(); it != left.rend(); ++it)
    moved.push_back({it->m, push_through(it->s, d, it->m)});
  // moved[0] sits next to the R's, so it propagates first.
  seq.insert(seq.end(), moved.begin(), moved.end());
  return finish(U, place(n, Layout::Rectangular, seq, d));
}

DecompositionResult reck_decompose(const CMatrix& U, double tol) {
  check_unitary(U, tol);
  const int n = static_cast<int>(U.rows());
  CMatrix W = U;
  std::vector<Step> left;
  for (int k = 0; k + 1 < n; ++k)
    for (int m = n - 2; m >= k; --m) {
      const MziSettings s = null_left(W, m, k);
      apply_rows(W, m, ideal_mzi(s));
      left.push_back({m, s});
    }
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = std::arg(W(i, i));
  std::vector<Step> seq;
  for (auto it = left.rbegin(); it != left.rend(); ++it)
    seq.push_back({it->m, push_through(it->s, d, it->m)});
  return finish(U, place(n, Layout::Triangular, seq, d));
}

DecompositionResult decompose(const CMatrix& U, Layout layout, double tol) {
  return layout == Layout::Rectangular ? clements_decompose(U, tol) : reck_decompose(U, tol);
}

}  // namespace meshfix
