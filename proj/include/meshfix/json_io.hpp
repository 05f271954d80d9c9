#pragma once

#include <json.hpp>

#include "meshfix/correct.hpp"
#include "meshfix/mesh.hpp"

namespace meshfix {

using json = nlohmann::json;

// {"n", "layout", "mzis": [{"col", "top_mode", "theta", "phi", "alpha", "beta"}], "output_phases"}
json program_to_json(const MeshProgram& p, const ErrorMap* errors = nullptr);
// Entries may come in any order; each must name a slot of the layout exactly once.
// Missing alpha/beta read as 0. Throws std::invalid_argument on malformed input.
MeshProgram program_from_json(const json& j, ErrorMap* errors = nullptr);

// 2-D array of [re, im] pairs.
json matrix_to_json(const CMatrix& m);
CMatrix matrix_from_json(const json& j);

const char* to_string(Clip c);
json report_to_json(const CorrectionReport& r);

}  // namespace meshfix
