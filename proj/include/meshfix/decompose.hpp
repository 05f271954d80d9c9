#pragma once

#include "meshfix/mesh.hpp"

namespace meshfix {

struct DecompositionResult {
  MeshProgram program;
  double residual = 0.0;  // max |reconstructed − U| entry
};

// Both throw UnitarityError if ‖UU† − I‖_max ≥ tol.
DecompositionResult clements_decompose(const CMatrix& U, double unitarity_tol = 1e-8);
DecompositionResult reck_decompose(const CMatrix& U, double unitarity_tol = 1e-8);
DecompositionResult decompose(const CMatrix& U, Layout layout, double unitarity_tol = 1e-8);

inline CMatrix reconstruct(const MeshProgram& p) { return mesh_unitary(p); }

}  // namespace meshfix
