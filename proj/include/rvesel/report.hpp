#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>

#include "rvesel/config.hpp"
#include "rvesel/oracles.hpp"
#include "rvesel/svg.hpp"

namespace rvesel {

// Fixed samples.csv schema; absent values stay as empty cells.
inline constexpr const char* kCsvHeader =
    "sample_index,accepted,F_avg,F_2pt_11,F_2pt_12,F_2pt_21,F_2pt_22,a_11,a_12,a_21,a_22,iters";

namespace detail {

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::optional<double> component_of(const FVector& F, FLabel label) {
  for (std::size_t k = 0; k < F.labels.size(); ++k)
    if (F.labels[k] == label) return F.components[static_cast<Eigen::Index>(k)];
  return std::nullopt;
}

inline void csv_row(std::string& out, const RveSample& s) {
  out += std::to_string(s.seed.sample_index);
  out += s.accepted ? ",true" : ",false";
  for (FLabel l : {FLabel::Avg, FLabel::TwoPoint11, FLabel::TwoPoint12, FLabel::TwoPoint21,
                   FLabel::TwoPoint22}) {
    out += ',';
    if (const auto v = component_of(s.F, l)) out += csv_num(*v);
  }
  for (int e = 0; e < 4; ++e) {
    out += ',';
    if (s.a_rve) out += csv_num((*s.a_rve)(e / 2, e % 2));
  }
  out += ',';
  if (s.a_rve) out += std::to_string(s.solver_iters);
  out += '\n';
}

}  // namespace detail

inline void write_samples_csv(const std::filesystem::path& path,
                              std::span<const RveSample> plain,
                              std::span<const RveSample> selected) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const RveSample& s : plain) detail::csv_row(out, s);
  for (const RveSample& s : selected) detail::csv_row(out, s);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  file << out;
}

namespace detail {

inline nlohmann::ordered_json matrix2_json(const Eigen::Matrix2d& m) {
  return nlohmann::ordered_json::array(
      {nlohmann::ordered_json::array({m(0, 0), m(0, 1)}),
       nlohmann::ordered_json::array({m(1, 0), m(1, 1)})});
}

inline nlohmann::ordered_json vector_json(const Eigen::VectorXd& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) arr.push_back(v[k]);
  return arr;
}

inline nlohmann::ordered_json matrixx_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

inline nlohmann::ordered_json stats_to_json(const EnsembleStats& st) {
  nlohmann::ordered_json j;
  j["n_samples"] = st.n_samples;
  j["n_candidates"] = st.n_candidates;
  j["acceptance_rate"] = st.acceptance_rate;
  std::vector<std::string> labels;
  for (FLabel l : st.labels) labels.push_back(to_string(l));
  j["labels"] = labels;
  j["mean_a"] = detail::matrix2_json(st.mean_a);
  j["mean_a_se"] = detail::matrix2_json(st.mean_a_se);
  j["var_a"] = detail::matrix2_json(st.var_a);
  j["var_a_se"] = detail::matrix2_json(st.var_a_se);
  j["mean_F"] = detail::vector_json(st.mean_F);
  j["cov_F"] = detail::matrixx_json(st.cov_F);
  auto cov_aF = nlohmann::ordered_json::array();
  auto cov_aF_se = nlohmann::ordered_json::array();
  for (int e = 0; e < 4; ++e) {
    cov_aF.push_back(detail::vector_json(st.cov_aF[static_cast<std::size_t>(e)]));
    cov_aF_se.push_back(detail::vector_json(st.cov_aF_se[static_cast<std::size_t>(e)]));
  }
  j["cov_aF"] = cov_aF;
  j["cov_aF_se"] = cov_aF_se;
  j["rho2"] = detail::matrix2_json(st.rho2);
  j["rho2_se"] = detail::matrix2_json(st.rho2_se);
  j["rho2_defined"] = detail::matrix2_json(st.rho2_defined);
  j["kappa"] = detail::matrix2_json(st.kappa);
  j["r_var"] = detail::matrix2_json(st.r_var);
  if (st.vrf) j["vrf"] = detail::matrix2_json(*st.vrf);
  if (st.vrf_se) j["vrf_se"] = detail::matrix2_json(*st.vrf_se);
  return j;
}

inline nlohmann::ordered_json compare_to_json(const CompareReport& rep) {
  nlohmann::ordered_json j;
  j["delta"] = rep.delta;
  j["vrf"] = detail::matrix2_json(rep.vrf);
  j["vrf_se"] = detail::matrix2_json(rep.vrf_se);
  j["predicted_bound"] = detail::matrix2_json(rep.predicted_bound);
  j["mean_shift"] = detail::matrix2_json(rep.mean_shift);
  j["mean_shift_se"] = detail::matrix2_json(rep.mean_shift_se);
  j["entry_defined"] = detail::matrix2_json(rep.entry_defined);
  j["vrf_within_bound"] = detail::matrix2_json(rep.vrf_within_bound);
  j["mean_shift_within_3se"] = detail::matrix2_json(rep.mean_shift_within_3se);
  j["pass"] = rep.pass;
  return j;
}

inline nlohmann::ordered_json selection_to_json(const SelectionSpec& spec) {
  nlohmann::ordered_json j;
  std::vector<std::string> labels;
  for (FLabel l : spec.labels) labels.push_back(to_string(l));
  j["labels"] = labels;
  j["delta"] = spec.delta;
  j["calib_mean"] = detail::vector_json(spec.calib_mean);
  j["calib_cov"] = detail::matrixx_json(spec.calib_cov);
  return j;
}

inline nlohmann::ordered_json estimate_to_json(const Estimate& e) {
  return nlohmann::ordered_json{{"value", e.value}, {"se", e.se}};
}

inline nlohmann::ordered_json gaussianity_to_json(const GaussianityReport& rep) {
  nlohmann::ordered_json j;
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : rep.entries)
    entries.push_back({{"name", e.name},
                       {"skewness", e.skewness},
                       {"excess_kurtosis", e.excess_kurtosis},
                       {"degenerate", e.degenerate}});
  j["entries"] = entries;
  j["names"] = rep.names;
  j["correlation"] = detail::matrixx_json(rep.correlation);
  return j;
}

inline nlohmann::ordered_json tail_to_json(const TailReport& rep) {
  nlohmann::ordered_json j;
  j["sd_plain"] = rep.sd_plain;
  j["sd_reduced"] = rep.sd_reduced;
  auto points = nlohmann::ordered_json::array();
  for (const auto& p : rep.points)
    points.push_back({{"s", p.s},
                      {"p_plain", estimate_to_json(p.p_plain)},
                      {"p_selected", estimate_to_json(p.p_selected)},
                      {"gaussian_plain", p.gaussian_plain},
                      {"gaussian_reduced", p.gaussian_reduced},
                      {"selected_vs_reduced", p.selected_vs_reduced}});
  j["points"] = points;
  return j;
}

inline nlohmann::ordered_json probe_to_json(const ScalarCovProbe& p) {
  nlohmann::ordered_json j;
  j["kappa"] = p.kappa;
  j["n"] = p.n;
  j["cov_trace_favg"] = estimate_to_json(p.cov);
  j["rho_trace_favg"] = estimate_to_json(p.rho);
  j["var_trace"] = estimate_to_json(p.var_trace);
  j["var_favg"] = estimate_to_json(p.var_favg);
  j["var_a11"] = estimate_to_json(p.var_a11);
  return j;
}

inline void write_json_file(const std::filesystem::path& path,
                            const nlohmann::ordered_json& j) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  file << j.dump(2) << '\n';
}

}  // namespace rvesel
