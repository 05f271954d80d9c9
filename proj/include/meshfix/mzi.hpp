#pragma once

#include "meshfix/types.hpp"

namespace meshfix {

struct MziSettings {
  double theta = 0.0;  // internal phase
  double phi = 0.0;    // external phase, top input arm
};

// Coupler deviations from 50-50; alpha on the input coupler, beta on the output.
struct SplitterErrors {
  double alpha = 0.0;
  double beta = 0.0;
};

// Directional coupler [[cos(π/4+x), i sin(π/4+x)], [i sin(π/4+x), cos(π/4+x)]].
Mat2 splitter(double x);
// diag(e^{ip}, 1)
Mat2 phase_top(double p);

Mat2 ideal_mzi(double theta, double phi);
Mat2 ideal_mzi(const MziSettings& s);

// Closed form of S(β)·P(θ)·S(α)·P(φ).
Mat2 imperfect_mzi(double theta, double phi, double alpha, double beta);
Mat2 imperfect_mzi(const MziSettings& s, const SplitterErrors& e);

// Same device written as B(β)·T(θ,φ)·A(α,φ): error couplers wrapped around the ideal gate.
Mat2 imperfect_mzi_factored(double theta, double phi, double alpha, double beta);

}  // namespace meshfix
