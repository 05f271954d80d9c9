#include "meshfix/json_io.hpp"

namespace meshfix {

json program_to_json(const MeshProgram& p, const ErrorMap* errors) {
  json mzis = json::array();
  for (int i = 0; i < p.topology.size(); ++i) {
    const auto& pl = p.topology.mzis[i];
    json e = {{"col", pl.col},
              {"top_mode", pl.top_mode},
              {"theta", p.settings[i].theta},
              {"phi", p.settings[i].phi},
              {"alpha", errors ? (*errors)[i].alpha : 0.0},
              {"beta", errors ? (*errors)[i].beta : 0.0}};
    mzis.push_back(std::move(e));
  }
  return {{"n", p.topology.n},
          {"layout", to_string(p.topology.layout)},
          {"mzis", std::move(mzis)},
          {"output_phases", p.output_phases}};
}

MeshProgram program_from_json(const json& j, ErrorMap* errors) {
  try {
    const int n = j.at("n").get<int>();
    const Topology topo = make_topology(n, layout_from_string(j.at("layout").get<std::string>()));
    MeshProgram p = make_program(topo);
    ErrorMap em(topo.mzis.size());
    std::vector<char> seen(topo.mzis.size(), 0);
    const auto& mzis = j.at("mzis");
    if (mzis.size() != topo.mzis.size()) throw std::invalid_argument("mzi count does not match layout");
    for (const auto& e : mzis) {
      const int slot = topo.find(e.at("col").get<int>(), e.at("top_mode").get<int>());
      if (slot < 0 || seen[slot]) throw std::invalid_argument("mzi placement not in layout or repeated");
      seen[slot] = 1;
      p.settings[slot] = {e.at("theta").get<double>(), e.at("phi").get<double>()};
      em[slot] = {e.value("alpha", 0.0), e.value("beta", 0.0)};
    }
    if (j.contains("output_phases")) {
      p.output_phases = j.at("output_phases").get<std::vector<double>>();
      if (static_cast<int>(p.output_phases.size()) != n)
        throw std::invalid_argument("output_phases length must equal n");
    }
    if (errors) *errors = std::move(em);
    return p;
  } catch (const json::exception& ex) {
    throw std::invalid_argument(std::string("bad program json: ") + ex.what());
  }
}

json matrix_to_json(const CMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back({m(i, k).real(), m(i, k).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

CMatrix matrix_from_json(const json& j) {
  try {
    if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a non-empty array");
    const auto r = static_cast<Eigen::Index>(j.size());
    const auto c = static_cast<Eigen::Index>(j[0].size());
    CMatrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      if (static_cast<Eigen::Index>(j[i].size()) != c) throw std::invalid_argument("ragged matrix");
      for (Eigen::Index k = 0; k < c; ++k) {
        const auto& z = j[i][k];
        if (!z.is_array() || z.size() != 2) throw std::invalid_argument("entries must be [re, im]");
        m(i, k) = cd(z[0].get<double>(), z[1].get<double>());
      }
    }
    return m;
  } catch (const json::exception& ex) {
    throw std::invalid_argument(std::string("bad matrix json: ") + ex.what());
  }
}

const char* to_string(Clip c) {
  switch (c) {
    case Clip::ClippedToCross: return "cross";
    case Clip::ClippedToBar: return "bar";
    default: return "none";
  }
}

json report_to_json(const CorrectionReport& r) {
  json devs = json::array();
  const auto& topo = r.corrected_program.topology;
  for (std::size_t i = 0; i < r.devices.size(); ++i) {
    const auto& d = r.devices[i];
    devs.push_back({{"col", topo.mzis[i].col},
                    {"top_mode", topo.mzis[i].top_mode},
                    {"theta_prime", d.theta_prime},
                    {"phi_prime", d.phi_prime},
                    {"psi1", d.psi1},
                    {"psi2", d.psi2},
                    {"clipped", to_string(d.clipped)}});
  }
  return {{"devices", std::move(devs)},
          {"n_clipped", r.n_clipped},
          {"predicted_residual", r.predicted_residual},
          {"output_phases", r.corrected_program.output_phases}};
}

}  // namespace meshfix
