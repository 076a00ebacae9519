// Conjugate gradients and three Broyden-family members on
// min 1/2 x^T diag(2,4) x - [2,4]^T x from x0 = 0, in exact arithmetic.
#include <iostream>

#include "cgqn/verify.hpp"

using namespace cgqn;

namespace {

std::string show(const Vector<Rational>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i].get_str();
  return s + "]";
}

}  // namespace

int main() {
  const QuadraticProblem<Rational> prob(SymMatrix<Rational>::diagonal(Vector<Rational>({2, 4})),
                                        Vector<Rational>({-2, -4}), Vector<Rational>(2));

  const Trace<Rational> cg = cg_run(prob);
  std::cout << "conjugate gradients\n";
  for (const auto& r : cg.iterations)
    std::cout << "  k=" << r.k << "  x=" << show(r.x) << "  g=" << show(r.g) << "  p=" << show(r.p)
              << "  alpha=" << r.alpha << "\n";
  std::cout << "  final x=" << show(cg.x_final) << "\n\n";

  for (const auto& sched : {PhiSchedule<Rational>::bfgs(), PhiSchedule<Rational>::constant(1),
                            PhiSchedule<Rational>::sr1()}) {
    const auto rep = verify_equivalence(prob, sched);
    std::cout << sched.describe() << ": verdict " << (rep.verdict ? "pass" : "fail") << "\n";
    for (const auto& ir : rep.iterations)
      std::cout << "  k=" << ir.k << "  phi=" << (ir.phi ? ir.phi->get_str() : "-")
                << "  delta=" << ir.delta_measured->get_str() << "\n";
  }

  const Rational phi_deg = make_rational(-81, 4);
  const auto rep = verify_equivalence(prob, PhiSchedule<Rational>::constant(phi_deg));
  std::cout << "const:" << phi_deg << ": " << breakdown_name(rep.breakdown->kind) << " at k=" << rep.breakdown->k
            << (rep.breakdown->predicted ? " (predicted)" : " (unexpected)") << ", det B_1 = " << *rep.breakdown->determinant
            << "\n";
}
