// Angle between float BFGS directions and two float conjugate gradient
// recurrences on random SPD problems of growing condition number.
#include <cstdio>

#include "cgqn/generate.hpp"
#include "cgqn/verify.hpp"

using namespace cgqn;

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 50;
  std::printf("%8s %12s %12s %12s\n", "cond", "three-term", "reconjugated", "qn iters");
  for (const double cond : {1e1, 1e2, 1e3, 1e4, 1e6}) {
    ProblemSpec spec;
    spec.kind = ProblemKind::RandomSpd;
    spec.n = n;
    spec.seed = 1;
    spec.condition = cond;
    const auto prob = generate<double>(spec);
    QnOptions opts;
    opts.stop.rel_tol = 1e-10;
    const auto qn = qn_run(prob, PhiSchedule<double>::bfgs(), opts).trace;
    double worst[2] = {0.0, 0.0};
    int i = 0;
    for (const auto variant : {CgVariant::ThreeTerm, CgVariant::Reconjugated}) {
      const auto cg = cg_run(prob, opts.stop, variant);
      for (std::size_t k = 0; k < std::min(cg.iteration_count(), qn.iteration_count()); ++k)
        worst[i] = std::max(worst[i], angle_between(qn.iterations[k].p, cg.iterations[k].p));
      ++i;
    }
    std::printf("%8.0e %12.2e %12.2e %12zu\n", cond, worst[0], worst[1], qn.iteration_count());
  }
}
