#pragma once

#include <bsum/engine.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace bsum {

/// Per-block inner solver: argmin over the group coordinates of
/// f(y with group free) + ||x_G - y_G||^2 / (2c). c = +inf asks for exact minimization of f.
using InnerSolver = std::function<Vector(const BlockSet&, const Point&, double)>;

/// Coefficient schedule c(r) of a proximal term.
using CoefficientSchedule = std::function<double(std::size_t)>;

inline CoefficientSchedule constant_coefficient(double c) {
    if (!(c > 0.0)) throw InvalidArgument("proximal coefficient must be positive");
    return [c](std::size_t) { return c; };
}

namespace detail {

inline std::vector<Eigen::Index> coordinates(const BlockStructure& s, const BlockSet& group) {
    std::vector<Eigen::Index> idx;
    idx.reserve(s.group_dim(group));
    for (std::size_t i : group)
        for (std::size_t k = 0; k < s.dim(i); ++k) idx.push_back(static_cast<Eigen::Index>(s.offset(i) + k));
    return idx;
}

} // namespace detail

/// Closed-form block minimizer for QuadraticObjective. Solves
/// (Q_GG + I/c) x_G = b_G - Q_{G,-G} y_{-G} + y_G / c. Ignores feasible sets.
inline InnerSolver quadratic_block_solver(const QuadraticObjective& q) {
    return [q](const BlockSet& group, const Point& y, double c) -> Vector {
        const auto idx = detail::coordinates(y.structure(), group);
        const auto g = static_cast<Eigen::Index>(idx.size());
        Vector masked = y.values();
        for (auto k : idx) masked[k] = 0.0;
        const Vector coupling = q.Q * masked;
        Matrix lhs(g, g);
        Vector rhs(g);
        for (Eigen::Index a = 0; a < g; ++a) {
            rhs[a] = q.b[idx[a]] - coupling[idx[a]];
            for (Eigen::Index b = 0; b < g; ++b) lhs(a, b) = q.Q(idx[a], idx[b]);
        }
        if (std::isfinite(c)) {
            lhs.diagonal().array() += 1.0 / c;
            for (Eigen::Index a = 0; a < g; ++a) rhs[a] += y[static_cast<std::size_t>(idx[a])] / c;
        }
        Eigen::LDLT<Matrix> ldlt(lhs);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            (ldlt.vectorD().array() <= 1e-14 * std::max(1.0, lhs.diagonal().cwiseAbs().maxCoeff())).any())
            throw SolverError("quadratic block subproblem is not strictly convex");
        return ldlt.solve(rhs);
    };
}

/// argmin over X_i of f(y with block i free) + ||x_i - y_i||^2 / (2c).
inline Vector proximal_minimize(std::size_t i, const Point& y, double c, const InnerSolver& inner) {
    if (!(c > 0.0)) throw InvalidArgument("proximal coefficient must be positive");
    Vector out = inner({i}, y, c);
    if (!out.allFinite()) throw SolverError("proximal inner solver returned a non-finite value");
    return out;
}

// =======================================================================
// Proximal surrogate
// =======================================================================

/// u_i(x_i, y) = f(y with x_i) + ||x_i - y_i||^2 / (2 c(r)).
template <Objective F>
class ProximalSurrogate {
public:
    ProximalSurrogate(F f, InnerSolver inner, CoefficientSchedule c)
        : f_(std::move(f)), inner_(std::move(inner)), c_(std::move(c)) {}

    ProximalSurrogate(F f, InnerSolver inner, double c)
        : ProximalSurrogate(std::move(f), std::move(inner), constant_coefficient(c)) {}

    double coefficient(std::size_t r) const {
        const double c = c_(r);
        if (!(c > 0.0)) throw InvalidArgument("proximal coefficient must be positive");
        return c;
    }

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t r) const {
        return f_.value(y.with_group(b, xb)) + (xb - y.gather(b)).squaredNorm() / (2.0 * coefficient(r));
    }

    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        Vector xb = inner_(b, y, coefficient(r));
        const double v = eval(b, xb, y, r);
        return {std::move(xb), v};
    }

    const F& objective() const { return f_; }

private:
    F f_;
    InnerSolver inner_;
    CoefficientSchedule c_;
};

/// u_i = f itself (exact block minimization).
template <Objective F>
class ExactSurrogate {
public:
    ExactSurrogate(F f, InnerSolver inner) : f_(std::move(f)), inner_(std::move(inner)) {}

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t) const {
        return f_.value(y.with_group(b, xb));
    }

    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        Vector xb = inner_(b, y, std::numeric_limits<double>::infinity());
        const double v = eval(b, xb, y, r);
        return {std::move(xb), v};
    }

private:
    F f_;
    InnerSolver inner_;
};

// =======================================================================
// DC linearization (CCCP)
// =======================================================================

/// f = f_cvx + f_cve with f_cve concave. The surrogate linearizes f_cve at the anchor:
/// g_i(x_i, y) = f_cvx(y with x_i) + (x_i - y_i)^T grad_i f_cve(y) + f_cve(y).
struct DcLinearization {
    std::function<double(const Point&)> f_cvx;
    /// argmin over the group of f_cvx(y with group free) + a^T x_G.
    std::function<Vector(const BlockSet&, const Point&, const Vector&)> cvx_linear_argmin;
    std::function<double(const Point&)> f_cve;
    std::function<Vector(const Point&)> grad_cve;

    double value(const Point& x) const { return f_cvx(x) + f_cve(x); }

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t) const {
        const Point grad_point = y.with_values(grad_cve(y));
        return f_cvx(y.with_group(b, xb)) + (xb - y.gather(b)).dot(grad_point.gather(b)) + f_cve(y);
    }

    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        const Point grad_point = y.with_values(grad_cve(y));
        Vector xb = cvx_linear_argmin(b, y, grad_point.gather(b));
        if (!xb.allFinite()) throw SolverError("linearized DC subproblem is unbounded");
        const double v = eval(b, xb, y, r);
        return {std::move(xb), v};
    }
};

/// Minimizer of the fully linearized problem g(., y).
inline Point dc_minimize(const Point& y, const DcLinearization& d) {
    const BlockSet all = y.structure().all_blocks();
    return y.with_group(all, d.minimize(all, y, 1).argmin);
}

/// f(x) = sum x_k^4 / 4 - ||x||^2 / 2 split as convex quartic plus concave quadratic.
/// The linearized update is x_k <- cbrt(y_k).
inline DcLinearization quartic_dc_toy() {
    DcLinearization d;
    d.f_cvx = [](const Point& x) { return x.values().array().pow(4).sum() / 4.0; };
    d.cvx_linear_argmin = [](const BlockSet&, const Point&, const Vector& a) -> Vector {
        return (-a).unaryExpr([](double v) { return std::cbrt(v); });
    };
    d.f_cve = [](const Point& x) { return -0.5 * x.values().squaredNorm(); };
    d.grad_cve = [](const Point& x) -> Vector { return -x.values(); };
    return d;
}

// =======================================================================
// Proximity operators and forward-backward surrogate
// =======================================================================

/// Convex lower-semicontinuous term with a closed-form proximity operator
/// prox_{gamma f}(v) = argmin_y gamma f(y) + ||y - v||^2 / 2.
struct ProxFunction {
    std::string name;
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&, double)> prox;

    static ProxFunction zero() {
        return {"zero", [](const Vector&) { return 0.0; }, [](const Vector& v, double) { return v; }};
    }

    /// weight * ||x||_1; prox is soft thresholding at gamma * weight.
    static ProxFunction l1(double weight = 1.0) {
        if (weight < 0.0) throw InvalidArgument("l1 weight must be non-negative");
        return {"l1", [weight](const Vector& v) { return weight * v.lpNorm<1>(); },
                [weight](const Vector& v, double gamma) -> Vector {
                    const double t = gamma * weight;
                    return v.unaryExpr([t](double a) { return a > t ? a - t : (a < -t ? a + t : 0.0); });
                }};
    }

    /// Indicator of a feasible set; prox is the projection.
    static ProxFunction indicator(FeasibleSet set) {
        return {"indicator:" + set.name,
                [set](const Vector& v) {
                    return set.contains(v, kAbsTol) ? 0.0 : std::numeric_limits<double>::infinity();
                },
                [set](const Vector& v, double) { return set.project(v); }};
    }
};

inline Vector soft_threshold(const Vector& v, double t) { return ProxFunction::l1(1.0).prox(v, t); }

/// Surrogate for min sum_i f_i(x_i) + f_s(x) with f_s smooth and blockwise
/// beta_i-Lipschitz gradient:
/// u_G(x_G, y) = sum_{i not in G} f_i(y_i) + sum_{i in G} [f_i(x_i) + ||x_i - y_i||^2 / (2 gamma_i)]
///             + <x_G - y_G, grad_G f_s(y)> + f_s(y).
/// A global upper bound when gamma_i <= 1 / beta_i.
class LipschitzQuadraticSurrogate {
public:
    LipschitzQuadraticSurrogate(std::vector<ProxFunction> f1, FunctionObjective f2, std::vector<double> beta,
                                std::vector<double> gamma, double eps = 1e-6)
        : f1_(std::move(f1)), f2_(std::move(f2)), beta_(std::move(beta)), gamma_(std::move(gamma)) {
        if (f1_.empty() || f1_.size() != beta_.size() || f1_.size() != gamma_.size())
            throw InvalidArgument("one prox term, beta and gamma per block required");
        if (!f2_.has_gradient()) throw InvalidArgument("smooth part needs a gradient");
        if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
        for (std::size_t i = 0; i < beta_.size(); ++i) {
            if (!(beta_[i] > 0.0)) throw InvalidArgument("Lipschitz constant must be positive");
            if (!(gamma_[i] >= eps && gamma_[i] <= 2.0 / beta_[i] - eps))
                throw InvalidArgument("step gamma must lie in [eps, 2/beta - eps]");
        }
    }

    /// Single-block form.
    LipschitzQuadraticSurrogate(ProxFunction f1, FunctionObjective f2, double beta, double gamma, double eps = 1e-6)
        : LipschitzQuadraticSurrogate(std::vector<ProxFunction>{std::move(f1)}, std::move(f2),
                                      std::vector<double>{beta}, std::vector<double>{gamma}, eps) {}

    std::size_t num_blocks() const { return f1_.size(); }
    double gamma(std::size_t i) const { return gamma_.at(i); }
    double beta(std::size_t i) const { return beta_.at(i); }
    bool is_upper_bound() const {
        for (std::size_t i = 0; i < beta_.size(); ++i)
            if (gamma_[i] > 1.0 / beta_[i]) return false;
        return true;
    }

    double nonsmooth_value(const Point& x) const {
        check(x);
        double v = 0.0;
        for (std::size_t i = 0; i < f1_.size(); ++i) v += f1_[i].value(Vector(x.block(i)));
        return v;
    }
    double smooth_value(const Point& x) const { return f2_.value(x); }

    /// f_1 + ... + f_n + f_s.
    double value(const Point& x) const { return nonsmooth_value(x) + f2_.value(x); }

    /// The smooth part u_0 of u (everything but the f_i of the updated blocks).
    double eval_smooth(const BlockSet& b, const Vector& xb, const Point& y, std::size_t r) const {
        const Point x = y.with_group(b, xb);
        double v = eval(b, xb, y, r);
        for (std::size_t i : b) v -= f1_[i].value(Vector(x.block(i)));
        return v;
    }

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t) const {
        check(y);
        const Point x = y.with_group(b, xb);
        const Vector grad = f2_.gradient(y);
        double v = f2_.value(y);
        std::vector<bool> in_group(f1_.size(), false);
        for (std::size_t i : b) in_group[i] = true;
        const auto& s = y.structure();
        for (std::size_t i = 0; i < f1_.size(); ++i) {
            if (!in_group[i]) {
                v += f1_[i].value(Vector(y.block(i)));
                continue;
            }
            const Vector diff = x.block(i) - y.block(i);
            v += f1_[i].value(Vector(x.block(i))) + diff.squaredNorm() / (2.0 * gamma_[i]) +
                 diff.dot(grad.segment(static_cast<Eigen::Index>(s.offset(i)), diff.size()));
        }
        return v;
    }

    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        check(y);
        const Vector grad = f2_.gradient(y);
        const auto& s = y.structure();
        Vector xb(static_cast<Eigen::Index>(s.group_dim(b)));
        Eigen::Index pos = 0;
        for (std::size_t i : b) {
            const auto d = static_cast<Eigen::Index>(s.dim(i));
            const Vector forward = y.block(i) - gamma_[i] * grad.segment(static_cast<Eigen::Index>(s.offset(i)), d);
            xb.segment(pos, d) = f1_[i].prox(forward, gamma_[i]);
            pos += d;
        }
        const double v = eval(b, xb, y, r);
        return {std::move(xb), v};
    }

private:
    void check(const Point& y) const {
        if (y.num_blocks() != f1_.size()) throw InvalidArgument("point block count does not match surrogate");
    }

    std::vector<ProxFunction> f1_;
    FunctionObjective f2_;
    std::vector<double> beta_;
    std::vector<double> gamma_;
};

/// x^{r+1} = prox_{gamma f_1}(x^r - gamma grad f_2(x^r)) on every block.
inline Point forward_backward_step(const Point& x, const LipschitzQuadraticSurrogate& s) {
    const BlockSet all = x.structure().all_blocks();
    return x.with_group(all, s.minimize(all, x, 1).argmin);
}

/// x_i^{r+1} = prox_{gamma_i f_i}(x_i^r - gamma_i grad_i f_s(x^r)).
inline Vector block_forward_backward_step(const Point& x, std::size_t i, const LipschitzQuadraticSurrogate& s) {
    return s.minimize({i}, x, 1).argmin;
}

// =======================================================================
// Quadratic approximation for BSCA
// =======================================================================

/// h_i(x_i, y) = f(y) + grad_i f(y)^T (x_i - y_i) + ||x_i - y_i||^2 / (2t).
/// Its minimizer over a box or ball is the projection of y_i - t grad_i f(y).
template <SmoothObjective F>
class QuadraticApprox {
public:
    QuadraticApprox(F f, double t, Constraints sets = {}) : f_(std::move(f)), t_(t), sets_(std::move(sets)) {
        if (!(t_ > 0.0)) throw InvalidArgument("curvature scalar t must be positive");
    }

    double t() const { return t_; }

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t) const {
        const Point grad = y.with_values(f_.gradient(y));
        const Vector diff = xb - y.gather(b);
        return f_.value(y) + grad.gather(b).dot(diff) + diff.squaredNorm() / (2.0 * t_);
    }

    Vector argmin(const BlockSet& b, const Point& y, std::size_t) const {
        Point step = y.with_values(y.values() - t_ * f_.gradient(y));
        if (!sets_.empty()) step = project(step, sets_);
        return step.gather(b);
    }

    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        Vector xb = argmin(b, y, r);
        const double v = eval(b, xb, y, r);
        return {std::move(xb), v};
    }

private:
    F f_;
    double t_;
    Constraints sets_;
};

} // namespace bsum
