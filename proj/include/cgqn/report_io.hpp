#pragma once

#include <string>

#include "cgqn/problem_io.hpp"
#include "cgqn/verify.hpp"

namespace cgqn {

inline json check_to_json(const Check& c) {
  json j;
  j["ok"] = c.ok;
  if (!c.ok) {
    j["witness"] = c.witness;
    j["residual"] = c.residual;
  }
  return j;
}

template <Field T>
json optional_scalar_to_json(const std::optional<T>& x) {
  return x ? scalar_to_json(*x) : json(nullptr);
}

template <Field T>
json frame_to_json(const std::array<T, 3>& m) {
  return json::array({scalar_to_json(m[0]), scalar_to_json(m[1]), scalar_to_json(m[2])});
}

template <Field T>
json update_to_json(const BroydenUpdate<T>& u) {
  json j;
  j["phi"] = scalar_to_json(u.phi);
  j["pHp"] = scalar_to_json(u.pHp);
  j["pBp"] = scalar_to_json(u.pBp);
  j["U"] = matrix_to_json(u.U);
  j["frame_hb"] = frame_to_json(u.frame_hb);
  j["frame_gg"] = frame_to_json(u.frame_gg);
  return j;
}

template <Field T>
json record_to_json(const IterationRecord<T>& r) {
  json j;
  j["k"] = r.k;
  j["x"] = vector_to_json(r.x);
  j["g"] = vector_to_json(r.g);
  j["p"] = vector_to_json(r.p);
  j["alpha"] = scalar_to_json(r.alpha);
  if (r.beta_prev) j["beta_prev"] = scalar_to_json(*r.beta_prev);
  if (r.beta_prev_hessian) j["beta_prev_hessian"] = scalar_to_json(*r.beta_prev_hessian);
  if (r.B) j["B"] = matrix_to_json(*r.B);
  if (r.update) j["update"] = update_to_json(*r.update);
  return j;
}

template <Field T>
json trace_to_json(const Trace<T>& t) {
  json j;
  j["method"] = t.method;
  j["scalar_mode"] = scalar_traits<T>::mode_name;
  j["termination"] = termination_name(t.termination);
  j["iterations"] = json::array();
  for (const auto& r : t.iterations) j["iterations"].push_back(record_to_json(r));
  j["x_final"] = vector_to_json(t.x_final);
  j["g_final"] = vector_to_json(t.g_final);
  return j;
}

template <Field T>
json breakdown_to_json(const BreakdownEvent<T>& b) {
  json j;
  j["kind"] = breakdown_name(b.kind);
  j["k"] = b.k;
  j["predicted"] = b.predicted;
  j["detail"] = b.detail;
  j["phi"] = optional_scalar_to_json(b.phi);
  j["degenerate_phi"] = optional_scalar_to_json(b.degenerate_phi);
  j["previous_step"] = optional_scalar_to_json(b.previous_step);
  j["determinant"] = optional_scalar_to_json(b.determinant);
  if (b.condition_estimate) j["condition_estimate"] = *b.condition_estimate;
  return j;
}

template <Field T>
json iteration_report_to_json(const IterationReport<T>& ir) {
  json j;
  j["k"] = ir.k;
  j["phi"] = optional_scalar_to_json(ir.phi);
  j["delta_measured"] = optional_scalar_to_json(ir.delta_measured);
  j["delta_predicted"] = optional_scalar_to_json(ir.delta_predicted);
  j["delta_deviation"] = optional_scalar_to_json(ir.delta_deviation);
  j["angle"] = ir.angle;
  j["positive_definite"] = ir.positive_definite;
  if (ir.first_nonpositive_minor) j["first_nonpositive_minor"] = *ir.first_nonpositive_minor;
  json checks;
  ir.for_each_check([&](const char* name, const Check& c) { checks[name] = check_to_json(c); });
  j["checks"] = std::move(checks);
  return j;
}

/// Self-describing report: `config` is embedded verbatim. No clocks or host
/// data, so equal inputs give byte-identical output.
template <Field T>
json report_to_json(const VerificationReport<T>& rep, const json& config) {
  json j;
  j["config"] = config;
  j["scalar_mode"] = scalar_traits<T>::mode_name;
  j["schedule"] = rep.schedule;
  j["n"] = rep.n;
  j["verdict"] = rep.verdict ? "pass" : "fail";
  j["cg_iterations"] = rep.cg_iterations;
  j["qn_iterations"] = rep.qn_iterations;
  j["cg_termination"] = termination_name(rep.cg_termination);
  j["qn_termination"] = termination_name(rep.qn_termination);
  j["max_angle"] = rep.max_angle;
  j["max_delta_deviation"] = optional_scalar_to_json(rep.max_delta_deviation);
  j["breakdown"] = rep.breakdown ? breakdown_to_json(*rep.breakdown) : json(nullptr);
  json global;
  rep.for_each_global_check([&](const char* name, const Check& c) { global[name] = check_to_json(c); });
  j["cg_checks"] = std::move(global);
  // range / null-space / hereditary are sufficient for p_k || p_k^CG, not necessary
  j["update_conditions"] = "sufficient";
  j["iterations"] = json::array();
  for (const auto& ir : rep.iterations) j["iterations"].push_back(iteration_report_to_json(ir));
  return j;
}

}  // namespace cgqn
