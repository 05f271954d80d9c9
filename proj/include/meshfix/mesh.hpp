#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshfix/mzi.hpp"
#include "meshfix/types.hpp"

namespace meshfix {

enum class Layout { Rectangular, Triangular };

std::string to_string(Layout l);
Layout layout_from_string(const std::string& s);

struct Placement {
  int col = 0;
  int top_mode = 0;  // couples modes (top_mode, top_mode + 1)
};

// Devices are listed in light-propagation order.
//  Rectangular: column by column, top to bottom inside a column.
//  Triangular: diagonal k = N-2 down to 0, each diagonal a chain over
//  top modes k..N-2; diagonal 0 is the last stage before the outputs.
struct Topology {
  int n = 0;
  Layout layout = Layout::Rectangular;
  std::vector<Placement> mzis;

  int size() const { return static_cast<int>(mzis.size()); }
  int n_columns() const;
  // Index in propagation order of the device at (col, top_mode), or -1.
  int find(int col, int top_mode) const;
};

Topology make_topology(int n, Layout layout);

// Diagonal index of a triangular placement.
int triangular_diagonal(int n, const Placement& p);

struct MeshProgram {
  Topology topology;
  std::vector<MziSettings> settings;
  std::vector<double> output_phases;  // the diagonal D
};

using ErrorMap = std::vector<SplitterErrors>;

MeshProgram make_program(const Topology& topo);

// Left-multiplies rows (m, m+1) of M by T.
void apply_rows(CMatrix& M, int m, const Mat2& T);
// Right-multiplies columns (m, m+1) of M by T.
void apply_cols(CMatrix& M, int m, const Mat2& T);

CMatrix mesh_unitary(const MeshProgram& p);
CMatrix mesh_unitary(const MeshProgram& p, const ErrorMap& errors);
// Field propagation of a single input vector, O(#devices).
CVector propagate(const MeshProgram& p, const ErrorMap* errors, const CVector& x);

double matrix_error(const CMatrix& hw, const CMatrix& target);
bool is_unitary(const CMatrix& U, double tol);
double unitarity_defect(const CMatrix& U);
bool equal_up_to_global_phase(const CMatrix& a, const CMatrix& b, double tol);

CMatrix haar_random_unitary(int n, std::uint64_t seed);

}  // namespace meshfix
