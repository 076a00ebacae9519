#pragma once

#include <algorithm>
#include <atomic>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "cgqn/generate.hpp"
#include "cgqn/report_io.hpp"

namespace cgqn::cli {

enum ExitCode : int { Pass = 0, VerificationFailure = 1, UsageError = 2 };

class UsageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parsed command line for one invocation.
struct RunConfig {
  std::string command;
  std::optional<std::string> mode;
  std::optional<std::string> problem_file;
  std::optional<std::string> spec;
  std::string method = "qn";
  std::vector<std::string> phis;
  std::optional<double> tol;
  std::optional<double> phi_tol;
  std::optional<double> singular_tol;
  std::optional<double> stop_tol;
  std::optional<std::size_t> max_iter;
  std::size_t seeds = 0;
  std::uint64_t first_seed = 1;
  std::size_t threads = 0;
  std::optional<std::string> output;
  std::string cg_variant = "three-term";

  [[nodiscard]] bool any_tolerance() const { return tol || phi_tol || singular_tol || stop_tol; }
};

inline json config_to_json(const RunConfig& c, const std::string& mode) {
  json j;
  j["command"] = c.command;
  j["mode"] = mode;
  if (c.problem_file) j["problem_file"] = *c.problem_file;
  if (c.spec) j["spec"] = *c.spec;
  if (c.command == "run") j["method"] = c.method;
  if (c.command != "generate") j["cg_variant"] = c.cg_variant;
  if (c.command != "generate") {
    if (c.command == "sweep") j["phi_grid"] = c.phis;
    else if (!c.phis.empty()) j["phi"] = c.phis.front();
  }
  if (c.command == "sweep") {
    j["seeds"] = c.seeds;
    j["first_seed"] = c.first_seed;
  }
  if (mode == "float") {
    const VerifyOptions d;
    json t;
    t["check_rel"] = c.tol.value_or(d.tol.rel);
    t["phi_rel"] = c.phi_tol.value_or(d.qn.tol.rel);
    t["singular_rel"] = c.singular_tol.value_or(d.qn.singular_tol.rel);
    t["stop_rel"] = c.stop_tol.value_or(d.qn.stop.rel_tol);
    j["tolerances"] = std::move(t);
  }
  if (c.max_iter) j["max_iter"] = *c.max_iter;
  return j;
}

namespace detail {

inline void emit(const RunConfig& c, const std::string& text, std::ostream& out) {
  if (c.output && *c.output != "-") write_text_file(*c.output, text);
  else out << text;
}

inline VerifyOptions options_of(const RunConfig& c) {
  VerifyOptions o;
  if (c.tol) o.tol.rel = *c.tol;
  if (c.phi_tol) o.qn.tol.rel = *c.phi_tol;
  if (c.singular_tol) o.qn.singular_tol.rel = *c.singular_tol;
  if (c.stop_tol) o.qn.stop.rel_tol = *c.stop_tol;
  o.qn.stop.max_iterations = c.max_iter;
  o.cg_variant = c.cg_variant == "reconjugated" ? CgVariant::Reconjugated : CgVariant::ThreeTerm;
  return o;
}

/// Mode from --mode, else from the problem file, else rational.
inline std::string resolve_mode(const RunConfig& c, const std::optional<json>& doc) {
  if (c.mode) return *c.mode;
  if (doc) return problem_scalar_mode(*doc);
  return "rational";
}

template <Field T>
QuadraticProblem<T> load_problem(const RunConfig& c, const std::optional<json>& doc) {
  if (doc) {
    if (problem_scalar_mode(*doc) == "rational") return convert_problem<T>(problem_from_json<Rational>(*doc));
    return convert_problem<T>(problem_from_json<double>(*doc));
  }
  return generate<T>(parse_problem_spec(*c.spec));
}

template <Field T>
int run_typed(const RunConfig& c, const std::string& mode, const std::optional<json>& doc, std::ostream& out,
              std::ostream& err) {
  const QuadraticProblem<T> prob = load_problem<T>(c, doc);
  const VerifyOptions opts = options_of(c);

  if (c.command == "generate") {
    emit(c, serialize(problem_to_json(prob)), out);
    return Pass;
  }
  if (c.command == "run") {
    json j;
    j["config"] = config_to_json(c, mode);
    j["problem"] = problem_to_json(prob);
    if (c.method == "cg") {
      j["trace"] = trace_to_json(cg_run(prob, opts.qn.stop, opts.cg_variant));
    } else {
      const auto run = qn_run(prob, parse_schedule<T>(c.phis.front()), opts.qn);
      j["trace"] = trace_to_json(run.trace);
      if (run.breakdown) {
        const auto& b = *run.breakdown;
        j["breakdown"] = breakdown_to_json(BreakdownEvent<T>{b.kind, b.k, false, b.detail, b.phi, b.degenerate_phi,
                                                             b.previous_step, b.determinant, b.condition_estimate});
        j["breakdown"].erase("predicted");
      }
    }
    emit(c, serialize(j), out);
    return Pass;
  }
  // verify
  const auto rep = verify_equivalence(prob, parse_schedule<T>(c.phis.front()), opts);
  json j = report_to_json(rep, config_to_json(c, mode));
  j["problem"] = problem_to_json(prob);
  emit(c, serialize(j), out);
  if (!rep.verdict) err << "verification failed; see report\n";
  return rep.verdict ? Pass : VerificationFailure;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

struct SweepRow {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::string phi_rule;
  std::size_t iterations = 0;
  double max_angle = 0.0;
  std::string max_delta_dev;
  std::string breakdowns;
  bool verdict = false;
  std::string error;
};

template <Field T>
SweepRow sweep_cell(const ProblemSpec& base, std::uint64_t seed, const PhiSchedule<T>& sched,
                    const VerifyOptions& opts) {
  ProblemSpec spec = base;
  spec.seed = seed;
  SweepRow row;
  row.seed = seed;
  row.phi_rule = sched.describe();
  try {
    const QuadraticProblem<T> prob = generate<T>(spec);
    row.n = prob.dimension();
    const auto rep = verify_equivalence(prob, sched, opts);
    row.iterations = rep.qn_iterations;
    row.max_angle = rep.max_angle;
    row.max_delta_dev = rep.max_delta_deviation ? to_string(*rep.max_delta_deviation) : "";
    if (rep.breakdown)
      row.breakdowns = std::string(breakdown_name(rep.breakdown->kind)) + "@" + std::to_string(rep.breakdown->k) +
                       (rep.breakdown->predicted ? "(predicted)" : "(unexpected)");
    else
      row.breakdowns = "none";
    row.verdict = rep.verdict;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

template <Field T>
int sweep_typed(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.phis.empty()) throw UsageFailure("sweep needs at least one --phi");
  if (c.seeds == 0) throw UsageFailure("sweep needs --seeds >= 1");
  const ProblemSpec base = parse_problem_spec(*c.spec);
  std::vector<PhiSchedule<T>> grid;
  for (const auto& s : c.phis) grid.push_back(parse_schedule<T>(s));
  const VerifyOptions opts = options_of(c);

  const std::size_t cells = c.seeds * grid.size();
  std::vector<SweepRow> rows(cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells; i = next++)
      rows[i] = sweep_cell<T>(base, c.first_seed + i / grid.size(), grid[i % grid.size()], opts);
  };
  std::size_t nthreads = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min(nthreads, cells);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  // Cells are stored by (seed, grid position), so the output order does not
  // depend on completion order.
  std::ostringstream csv;
  csv << "seed,n,phi_rule,iterations,max_angle,max_delta_dev,breakdowns,verdict\n";
  bool all_ok = true;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      err << "seed " << r.seed << ", " << r.phi_rule << ": " << r.error << "\n";
      all_ok = false;
    }
    csv << r.seed << ',' << r.n << ',' << csv_field(r.phi_rule) << ',' << r.iterations << ','
        << scalar_traits<double>::to_string(r.max_angle) << ',' << csv_field(r.max_delta_dev) << ','
        << csv_field(r.error.empty() ? r.breakdowns : "error") << ',' << (r.verdict ? "pass" : "fail") << '\n';
  }
  emit(c, csv.str(), out);
  return all_ok ? Pass : UsageError;
}

}  // namespace detail

/// Executes a parsed configuration. Exit code 0 pass, 1 verification
/// failure, 2 usage or I/O error.
inline int execute(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    if (c.problem_file && c.spec) throw UsageFailure("give either --problem or --spec, not both");
    if (!c.problem_file && !c.spec) throw UsageFailure("a problem is required (--problem FILE or --spec SPEC)");
    if (c.command == "sweep" && !c.spec) throw UsageFailure("sweep generates its problems and needs --spec");
    if (c.command == "generate" && !c.spec) throw UsageFailure("generate needs --spec");
    if ((c.command == "verify" || (c.command == "run" && c.method == "qn")) && c.phis.size() != 1)
      throw UsageFailure("give exactly one --phi");

    std::optional<json> doc;
    if (c.problem_file) doc = read_json_file(*c.problem_file);
    const std::string mode = detail::resolve_mode(c, doc);
    if (mode == "rational" && c.any_tolerance())
      throw UsageFailure("tolerance flags are meaningless in rational mode (all tests are exact)");

    if (c.command == "sweep")
      return mode == "rational" ? detail::sweep_typed<Rational>(c, out, err)
                                : detail::sweep_typed<double>(c, out, err);
    return mode == "rational" ? detail::run_typed<Rational>(c, mode, doc, out, err)
                              : detail::run_typed<double>(c, mode, doc, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return UsageError;
  }
}

/// Parses argv (argv[0] is the program name) and executes it.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Check conjugate gradients against Broyden-family quasi-Newton methods on quadratics"};
  app.require_subcommand(1);
  RunConfig c;

  auto add_common = [&](CLI::App* sub, bool problem, bool phi, bool tolerances) {
    sub->add_option("--mode", c.mode, "Scalar field")->check(CLI::IsMember({"rational", "float"}));
    sub->add_option("-o,--output", c.output, "Output file (default stdout)");
    if (problem) {
      sub->add_option("--problem", c.problem_file, "Problem JSON file");
      sub->add_option("--spec", c.spec, "Generator spec, e.g. random-spd:n=5,seed=3");
    }
    if (phi) sub->add_option("--phi", c.phis, "Phi schedule: bfgs, sr1, const:q, seq:q1,q2,..., degenerate-probe:k");
    if (tolerances) {
      sub->add_option("--tol", c.tol, "Relative tolerance of the checks (float mode)");
      sub->add_option("--phi-tol", c.phi_tol, "Relative tolerance of phi well-definedness tests (float mode)");
      sub->add_option("--singular-tol", c.singular_tol, "Pivot threshold of the symmetric solve (float mode)");
      sub->add_option("--stop-tol", c.stop_tol, "Stop when |g| <= stop-tol |g0| (float mode)");
      sub->add_option("--max-iter", c.max_iter, "Iteration cap (default n)");
      sub->add_option("--cg-variant", c.cg_variant, "Conjugate gradient recurrence: three-term or reconjugated")
          ->check(CLI::IsMember({"three-term", "reconjugated"}));
    }
  };

  auto* gen = app.add_subcommand("generate", "Write a generated problem as JSON");
  gen->add_option("--spec", c.spec, "Generator spec")->required();
  gen->add_option("--mode", c.mode, "Scalar field")->check(CLI::IsMember({"rational", "float"}));
  gen->add_option("-o,--output", c.output, "Output file (default stdout)");

  auto* run_cmd = app.add_subcommand("run", "Run one method and write its trace");
  add_common(run_cmd, true, true, true);
  run_cmd->add_option("--method", c.method, "cg or qn")->check(CLI::IsMember({"cg", "qn"}));

  auto* ver = app.add_subcommand("verify", "Run both methods and write the verification report");
  add_common(ver, true, true, true);

  auto* sweep = app.add_subcommand("sweep", "Verify a grid of seeds x phi schedules, CSV summary");
  add_common(sweep, true, true, true);
  sweep->add_option("--seeds", c.seeds, "Number of seeds")->required();
  sweep->add_option("--first-seed", c.first_seed, "First seed (default 1)");
  sweep->add_option("--threads", c.threads, "Worker threads (default: hardware)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? Pass : UsageError;
  }
  for (auto* sub : {gen, run_cmd, ver, sweep})
    if (sub->parsed()) c.command = sub->get_name();
  if (c.command == "run" && c.method == "qn" && c.phis.empty()) c.phis.push_back("bfgs");
  if (c.command == "verify" && c.phis.empty()) c.phis.push_back("bfgs");
  return execute(c, out, err);
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"cgqn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cgqn::cli
