#pragma once

#include <bsum/surrogates.hpp>

/// Classical methods written as a driver plus a surrogate.
namespace bsum::classic {

/// x^{r+1} = argmin_x f(x) + ||x - x^r||^2 / (2 c(r)), one SUM step per iteration.
template <Objective F>
SolveResult proximal_point_solve(F f, InnerSolver inner, const Point& x0, CoefficientSchedule c,
                                 const SolveOptions& opts = {}) {
    const ProximalSurrogate<F> u(f, std::move(inner), std::move(c));
    return run_sum(f, u, x0, opts);
}

template <Objective F>
SolveResult proximal_point_solve(F f, InnerSolver inner, const Point& x0, double c, const SolveOptions& opts = {}) {
    return proximal_point_solve(std::move(f), std::move(inner), x0, constant_coefficient(c), opts);
}

/// Block-wise proximal minimization cycling through the blocks of x0.
template <Objective F>
SolveResult alternating_proximal_solve(F f, InnerSolver inner, const Point& x0, double c,
                                       const SolveOptions& opts = {}) {
    const ProximalSurrogate<F> u(f, std::move(inner), c);
    return run_bsum(f, u, x0, opts);
}

/// x^{r+1} = prox_{gamma f1}(x^r - gamma grad f2(x^r)). The trace holds f1 + f2.
/// With gamma in (1/beta, 2/beta) the step is taken but descent is not guaranteed.
inline SolveResult forward_backward_solve(ProxFunction f1, FunctionObjective f2, double beta, double gamma,
                                          const Point& x0, const SolveOptions& opts = {}) {
    const LipschitzQuadraticSurrogate s(std::move(f1), std::move(f2), beta, gamma);
    return run_sum(s, s, x0, opts);
}

/// Block version: one prox term, Lipschitz constant and step per block, blocks updated cyclically.
inline SolveResult block_forward_backward_solve(std::vector<ProxFunction> f1, FunctionObjective f2,
                                                std::vector<double> beta, std::vector<double> gamma,
                                                const Point& x0, const SolveOptions& opts = {}) {
    const LipschitzQuadraticSurrogate s(std::move(f1), std::move(f2), std::move(beta), std::move(gamma));
    return run_bsum(s, s, x0, opts);
}

/// Concave-convex procedure: solve grad f_cvx(x^{r+1}) = -grad f_cve(x^r).
/// With block_mode the linearized subproblem is solved one block at a time.
inline SolveResult cccp_solve(const DcLinearization& p, const Point& x0, const SolveOptions& opts = {},
                              bool block_mode = false) {
    return block_mode ? run_bsum(p, p, x0, opts) : run_sum(p, p, x0, opts);
}

} // namespace bsum::classic
