#include <gtest/gtest.h>

#include "cgqn/report_io.hpp"
#include "support.hpp"

using namespace cgqn;
using namespace cgqn::testing;

TEST(CheckParallel, Examples) {
  const auto pcg = qvec({3, 4, q(1, 2)});
  const auto same = check_parallel(pcg, pcg);
  EXPECT_TRUE(same.ok);
  EXPECT_EQ(*same.delta, 1);
  const auto neg = check_parallel(Vector<Rational>(q(-3) * pcg), pcg);
  EXPECT_TRUE(neg.ok);
  EXPECT_EQ(*neg.delta, -3);
  // p_cg + e_1 ||p_cg|| with ||[3,4]|| = 5
  const auto off = check_parallel(qvec({8, 4}), qvec({3, 4}));
  EXPECT_FALSE(off.ok);
  EXPECT_GT(off.residual, 0.0);
  EXPECT_FALSE(check_parallel(Vector<Rational>(2), qvec({1, 1})).ok);
  EXPECT_THROW(check_parallel(qvec({1, 1}), Vector<Rational>(2)), std::invalid_argument);
}

TEST(CheckParallel, FloatAngleAndLeastSquaresDelta) {
  const Vector<double> pcg{1.0, 2.0, -2.0};
  const auto r = check_parallel(Vector<double>(-0.5 * pcg), pcg, Tolerance{1e-12, 0.0});
  EXPECT_TRUE(r.ok);
  EXPECT_NEAR(*r.delta, -0.5, 1e-15);
  const Vector<double> off{1.0 + 3.0, 2.0, -2.0};
  EXPECT_FALSE(check_parallel(off, pcg, Tolerance{1e-12, 0.0}).ok);
  const Vector<double> tiny{1.0, 2.0 + 1e-9, -2.0};
  EXPECT_TRUE(check_parallel(tiny, pcg, Tolerance{1e-12, 0.0}).ok);
  EXPECT_FALSE(check_parallel(tiny, pcg, Tolerance{1e-20, 0.0}).ok);
}

namespace {

struct TrajectoryStep {
  QuadraticProblem<Rational> prob;
  QnRun<Rational> run;
};

TrajectoryStep trajectory(std::uint64_t seed, std::size_t n, const PhiSchedule<Rational>& sched) {
  auto prob = random_problem(seed, n);
  auto run = qn_run(prob, sched);
  return {std::move(prob), std::move(run)};
}

std::vector<Vector<Rational>> directions_until(const Trace<Rational>& t, std::size_t k) {
  std::vector<Vector<Rational>> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(t.iterations[i].p);
  return out;
}

}  // namespace

TEST(CheckUpdateConditions, FamilyUpdatesPassAllThree) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto tr = trajectory(seed, 3 + seed % 6, random_phi_schedule(seed));
    ASSERT_FALSE(tr.run.breakdown.has_value());
    const auto& its = tr.run.trace.iterations;
    for (std::size_t k = 1; k < its.size(); ++k) {
      const auto cond = check_update_conditions(its[k].update->U, its[k - 1].g, its[k].g, directions_until(tr.run.trace, k),
                                                *its[k - 1].B, tr.prob.hessian());
      EXPECT_TRUE(cond.all()) << "seed " << seed << " k " << k;
    }
  }
}

TEST(CheckUpdateConditions, IdentityFailsRange) {
  const auto tr = trajectory(5, 4, PhiSchedule<Rational>::bfgs());
  const auto& its = tr.run.trace.iterations;
  ASSERT_GE(its.size(), 3u);
  const std::size_t k = 2;
  const auto cond = check_update_conditions(SymMatrix<Rational>::identity(4), its[k - 1].g, its[k].g,
                                            directions_until(tr.run.trace, k), *its[k - 1].B, tr.prob.hessian());
  EXPECT_FALSE(cond.range.ok);
  EXPECT_FALSE(cond.range.witness.empty());
}

TEST(CheckUpdateConditions, ZeroUpdateFailsQuasiNewton) {
  const auto tr = trajectory(6, 4, PhiSchedule<Rational>::bfgs());
  const auto& its = tr.run.trace.iterations;
  const std::size_t k = 1;
  const auto cond = check_update_conditions(SymMatrix<Rational>(4), its[k - 1].g, its[k].g,
                                            directions_until(tr.run.trace, k), *its[k - 1].B, tr.prob.hessian());
  EXPECT_TRUE(cond.range.ok);
  EXPECT_TRUE(cond.nullspace.ok);
  EXPECT_FALSE(cond.quasi_newton.ok);
  EXPECT_GT(cond.quasi_newton.residual, 0.0);
}

TEST(GramSchmidt, ConjugateInputIsUnchanged) {
  const auto H = SymMatrix<Rational>::diagonal(qvec({1, 2, 3}));
  const std::vector<Vector<Rational>> a{qvec({1, 0, 0}), qvec({0, 5, 0}), qvec({0, 0, q(1, 2)})};
  EXPECT_EQ(gram_schmidt_conjugate(a, H), a);
}

TEST(GramSchmidt, NegativeGradientsReproduceCgDirections) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto prob = random_problem(seed, 2 + seed % 7);
    const auto cg = cg_run(prob);
    std::vector<Vector<Rational>> a;
    for (const auto& r : cg.iterations) a.push_back(-r.g);
    const auto p = gram_schmidt_conjugate(a, prob.hessian());
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_TRUE(check_parallel(p[i], cg.iterations[i].p).ok);
  }
}

TEST(GramSchmidt, DependenceDetected) {
  const auto H = SymMatrix<Rational>::identity(2);
  EXPECT_THROW(gram_schmidt_conjugate(std::vector<Vector<Rational>>{qvec({1, 2}), qvec({2, 4})}, H),
               LinearDependenceError);
}

TEST(SubspaceMinimizer, ReferenceFirstStep) {
  const auto prob = reference_problem();
  const std::vector<Vector<Rational>> basis{qvec({2, 4})};
  EXPECT_EQ(subspace_minimizer(prob, std::span<const Vector<Rational>>(basis)), qvec({q(5, 9), q(10, 9)}));
  EXPECT_TRUE(check_subspace_minimizer(qvec({q(5, 9), q(10, 9)}), prob, basis).ok);
  EXPECT_FALSE(check_subspace_minimizer(qvec({q(5, 9), q(11, 9)}), prob, basis).ok);
}

TEST(SubspaceMinimizer, FullBasisGivesMinimizer) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const std::size_t n = 2 + seed % 7;
    const auto prob = random_problem(seed, n);
    std::vector<Vector<Rational>> basis;
    for (std::size_t i = 0; i < n; ++i) basis.push_back(Vector<Rational>::unit(n, i));
    EXPECT_TRUE(check_subspace_minimizer(minimizer(prob), prob, basis).ok);
    EXPECT_TRUE(check_subspace_minimizer(cg_run(prob).x_final, prob, basis).ok);
  }
}

TEST(SubspaceMinimizer, DependentBasisRejected) {
  const auto prob = reference_problem();
  const std::vector<Vector<Rational>> basis{qvec({1, 1}), qvec({2, 2})};
  EXPECT_THROW(check_subspace_minimizer(qvec({1, 1}), prob, basis), ReducedSystemSingular);
}

TEST(Verify, ReferenceBfgsAllChecksAndUnitDelta) {
  const auto rep = verify_equivalence(reference_problem(), PhiSchedule<Rational>::bfgs());
  EXPECT_TRUE(rep.verdict);
  ASSERT_EQ(rep.iterations.size(), 2u);
  for (const auto& ir : rep.iterations) {
    EXPECT_TRUE(ir.all_ok());
    EXPECT_EQ(*ir.delta_measured, 1);
    EXPECT_TRUE(ir.positive_definite);
  }
  EXPECT_FALSE(rep.breakdown.has_value());
}

TEST(Verify, ReferenceConstantPhiDeltaLaw) {
  const auto rep = verify_equivalence(reference_problem(), PhiSchedule<Rational>::constant(1));
  EXPECT_TRUE(rep.verdict);
  ASSERT_EQ(rep.iterations.size(), 2u);
  EXPECT_EQ(*rep.iterations[1].delta_measured, q(81, 85));
  EXPECT_EQ(*rep.iterations[1].delta_predicted, q(81, 85));
  EXPECT_EQ(*rep.max_delta_deviation, 0);
}

TEST(Verify, Sr1TrapRecordsPredictedBreakdown) {
  const auto prob = generate<Rational>(parse_problem_spec("sr1-trap:n=2"));
  const auto rep = verify_equivalence(prob, PhiSchedule<Rational>::sr1());
  ASSERT_TRUE(rep.breakdown.has_value());
  EXPECT_EQ(rep.breakdown->kind, BreakdownKind::Sr1Undefined);
  EXPECT_EQ(rep.breakdown->k, 1u);
  EXPECT_TRUE(rep.breakdown->predicted);
  EXPECT_TRUE(rep.verdict);
  ASSERT_EQ(rep.iterations.size(), 1u);
  EXPECT_TRUE(rep.iterations[0].all_ok());
}

TEST(Verify, DegeneratePhiIsPredicted) {
  const auto rep = verify_equivalence(reference_problem(), parse_schedule<Rational>("const:-20.25"));
  ASSERT_TRUE(rep.breakdown.has_value());
  EXPECT_EQ(rep.breakdown->kind, BreakdownKind::DegeneratePhi);
  EXPECT_TRUE(rep.breakdown->predicted);
  EXPECT_EQ(*rep.breakdown->determinant, 0);
  EXPECT_TRUE(rep.verdict);
}

TEST(Verify, RandomSchedulesPassEveryCheck) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto prob = random_problem(seed, 2 + seed % 7);
    const auto rep = verify_equivalence(prob, random_phi_schedule(seed));
    EXPECT_TRUE(rep.verdict) << "seed " << seed;
    for (const auto& ir : rep.iterations) {
      ir.for_each_check([&](const char* name, const Check& c) { EXPECT_TRUE(c.ok) << seed << " " << name; });
      EXPECT_EQ(*ir.delta_measured, *ir.delta_predicted);
      EXPECT_NE(*ir.delta_measured, 0);
    }
  }
}

TEST(Verify, NegativePhiCanLosePositiveDefiniteness) {
  // Not a failure: the expectation only binds for phi >= 0.
  bool seen_indefinite = false;
  for (std::uint64_t seed = 1; seed <= 20 && !seen_indefinite; ++seed) {
    const auto rep = verify_equivalence(random_problem(seed, 5), parse_schedule<Rational>("const:-5"));
    EXPECT_TRUE(rep.verdict);
    for (const auto& ir : rep.iterations) seen_indefinite = seen_indefinite || !ir.positive_definite;
  }
  EXPECT_TRUE(seen_indefinite);
}

namespace {

// A state at k = 2 on a BFGS trajectory of an n-dimensional problem.
struct FuzzState {
  QuadraticProblem<Rational> prob;
  Trace<Rational> trace;
};

FuzzState fuzz_state(std::uint64_t seed, std::size_t n) {
  auto prob = random_problem(seed, n);
  auto trace = qn_run(prob, PhiSchedule<Rational>::bfgs()).trace;
  return {std::move(prob), std::move(trace)};
}

}  // namespace

TEST(Completeness, EachViolatedConditionGetsItsWitness) {
  SeededRng rng(31);
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 30; ++seed) {
    const std::size_t n = 4 + seed % 4;
    const auto st = fuzz_state(seed, n);
    if (st.trace.iteration_count() < 3) continue;
    const std::size_t k = 2;
    const auto& its = st.trace.iterations;
    const auto& B = *its[k - 1].B;
    const auto& p = its[k - 1].p;
    const auto& H = st.prob.hessian();
    const std::vector<Vector<Rational>> earlier{its[0].p};
    const auto base = broyden_update(B, p, H, random_rational(rng, -5, 5)).U;
    const Rational eps = random_rational(rng, 1, 3);

    // null-space: q in K_2 with q orthogonal to p_1 but not to p_0
    const auto& p0 = its[0].p;
    const Vector<Rational> qv = p0 - Rational(inner(p0, p) / inner(p, p)) * p;
    ASSERT_NE(inner(qv, p0), 0);
    const auto ns = extract_phi(SymMatrix<Rational>(base + SymMatrix<Rational>::outer(qv, eps)), B, p, H, earlier);
    ASSERT_FALSE(ns.ok());
    EXPECT_EQ(ns.witness->kind, WitnessClass::NullSpace);

    // quasi-Newton: a g_{k-1} g_{k-1}^T term
    const auto qn = extract_phi(SymMatrix<Rational>(base + SymMatrix<Rational>::outer(its[k - 1].g, eps)), B, p, H, earlier);
    ASSERT_FALSE(qn.ok());
    EXPECT_EQ(qn.witness->kind, WitnessClass::QuasiNewton);

    // range: v orthogonal to p_0, p_1 and outside span{g_2}
    std::vector<Vector<Rational>> cols{p0, p, its[k].g};
    Vector<Rational> v;
    for (std::size_t i = 0; i < n && v.size() == 0; ++i) {
      Vector<Rational> e = Vector<Rational>::unit(n, i);
      // orthogonalize e against p0 and p exactly
      const Vector<Rational> w0 = p0;
      const Vector<Rational> w1 = p - Rational(inner(p, w0) / inner(w0, w0)) * w0;
      e = e - Rational(inner(e, w0) / inner(w0, w0)) * w0;
      e = e - Rational(inner(e, w1) / inner(w1, w1)) * w1;
      if (!e.is_zero() && !in_span(e, std::vector<Vector<Rational>>{its[k].g})) v = e;
    }
    ASSERT_GT(v.size(), 0u);
    const auto rg = extract_phi(SymMatrix<Rational>(base + SymMatrix<Rational>::outer(v, eps)), B, p, H, earlier);
    ASSERT_FALSE(rg.ok());
    EXPECT_EQ(rg.witness->kind, WitnessClass::Range);
    ++checked;
  }
}

TEST(Report, DeterministicAndSelfDescribing) {
  const auto prob = random_problem(7, 5);
  const json config = {{"note", "test"}};
  const auto a = report_to_json(verify_equivalence(prob, PhiSchedule<Rational>::constant(q(3, 2))), config);
  const auto b = report_to_json(verify_equivalence(prob, PhiSchedule<Rational>::constant(q(3, 2))), config);
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a["config"], config);
  EXPECT_EQ(a["verdict"], "pass");
}

TEST(Report, FailedChecksCarryWitnesses) {
  const auto prob = generate<double>(parse_problem_spec("hilbert-like:n=12"));
  const auto rep = verify_equivalence(prob, PhiSchedule<double>::bfgs());
  EXPECT_FALSE(rep.verdict);
  int failures = 0;
  auto check = [&](const char*, const Check& c) {
    if (!c.ok) {
      ++failures;
      EXPECT_FALSE(c.witness.empty());
    }
  };
  rep.for_each_global_check(check);
  for (const auto& ir : rep.iterations) ir.for_each_check(check);
  EXPECT_GT(failures, 0);
  const auto j = report_to_json(rep, json::object());
  EXPECT_EQ(j["verdict"], "fail");
}

TEST(Verify, FloatReferenceProblemPasses) {
  const auto rep = verify_equivalence(convert_problem<double>(reference_problem()), PhiSchedule<double>::constant(1.0));
  EXPECT_TRUE(rep.verdict);
  EXPECT_NEAR(*rep.iterations[1].delta_measured, 81.0 / 85.0, 1e-14);
}
