#pragma once

#include <bsum/engine.hpp>
#include <bsum/rng.hpp>

#include <json.hpp>

#include <array>
#include <span>

/// Sampling-based falsification of the surrogate conditions: tightness at the
/// anchor, global upper bound, and first-order agreement with f. A passing
/// report is evidence, not proof. Continuity of u is assumed, not tested.
namespace bsum::verify {

struct Witness {
    std::size_t sample = 0;
    std::size_t block = 0;
    double gap = 0.0;
};

struct Report {
    std::string check;
    std::size_t n_samples = 0;
    std::size_t n_violations = 0;
    double worst_gap = 0.0;
    std::vector<Witness> witnesses;

    bool passed() const { return n_violations == 0; }

    nlohmann::json to_json() const {
        nlohmann::json w = nlohmann::json::array();
        for (const auto& x : witnesses) w.push_back({{"sample", x.sample}, {"block", x.block}, {"gap", x.gap}});
        return {{"check", check},
                {"n_samples", n_samples},
                {"n_violations", n_violations},
                {"worst_gap", worst_gap},
                {"witnesses", w}};
    }
};

/// Draws a feasible point.
using Sampler = std::function<Point(RngStream&)>;

/// Uniform over [lo, hi]^m, then projected onto the feasible sets.
inline Sampler box_sampler(std::shared_ptr<const BlockStructure> structure, double lo = -5.0, double hi = 5.0,
                           Constraints sets = {}) {
    return [structure = std::move(structure), lo, hi, sets = std::move(sets)](RngStream& rng) {
        Vector v(static_cast<Eigen::Index>(structure->total()));
        for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.uniform(lo, hi);
        return project(Point(structure, std::move(v)), sets);
    };
}

namespace detail {

inline std::vector<std::size_t> default_blocks(const Point& p) {
    std::vector<std::size_t> out(p.num_blocks());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

constexpr std::size_t kMaxWitnesses = 16;

inline void add_violation(Report& r, std::size_t sample, std::size_t block, double gap) {
    ++r.n_violations;
    if (r.witnesses.size() < kMaxWitnesses) r.witnesses.push_back({sample, block, gap});
}

} // namespace detail

/// |u_i(y_i, y) - f(y)| <= tol (1 + |f(y)|) for every sample and block.
/// worst_gap is the largest absolute gap.
template <class U, Objective F>
Report check_tightness(const U& u, const F& f, std::span<const Point> samples, double tol = 1e-10,
                       std::size_t iteration = 1) {
    Report rep{"tightness", samples.size(), 0, 0.0, {}};
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const Point& y = samples[s];
        const double fy = f.value(y);
        for (std::size_t i : detail::default_blocks(y)) {
            const double gap = u.eval({i}, Vector(y.block(i)), y, iteration) - fy;
            rep.worst_gap = std::max(rep.worst_gap, std::abs(gap));
            if (!(std::abs(gap) <= tol * (1.0 + std::abs(fy)))) detail::add_violation(rep, s, i, gap);
        }
    }
    return rep;
}

/// u_i(x_i, y) - f(y with x_i) >= -tol on n_samples random pairs (x, y).
/// worst_gap is the smallest gap observed.
template <class U, Objective F>
Report check_upper_bound(const U& u, const F& f, const Sampler& sampler, RngStream& rng, std::size_t n_samples,
                         double tol = 1e-9, std::size_t iteration = 1) {
    Report rep{"upper_bound", n_samples, 0, std::numeric_limits<double>::infinity(), {}};
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Point y = sampler(rng);
        const Point x = sampler(rng);
        for (std::size_t i : detail::default_blocks(y)) {
            const Vector xi = x.block(i);
            const double gap = u.eval({i}, xi, y, iteration) - f.value(y.with_group({i}, xi));
            rep.worst_gap = std::min(rep.worst_gap, gap);
            if (!(gap >= -tol)) detail::add_violation(rep, s, i, gap);
        }
    }
    if (n_samples == 0) rep.worst_gap = 0.0;
    return rep;
}

inline constexpr std::array<double, 3> kFdSteps = {1e-3, 1e-4, 1e-5};

/// Compares central difference quotients of u_i(., y) at y_i and of f at y
/// along d restricted to block i, for h in {1e-3, 1e-4, 1e-5}. The test uses the
/// finest h: |u' - f'| <= tol max(1, |f'|). worst_gap is the largest such ratio.
/// Both y_i + h d_i and y_i - h d_i must be feasible.
template <class U, Objective F>
Report check_first_order_match(const U& u, const F& f, std::span<const Point> samples,
                               std::span<const Vector> directions, double tol = 1e-4, std::size_t iteration = 1) {
    if (samples.size() != directions.size()) throw InvalidArgument("one direction per sample required");
    Report rep{"first_order_match", samples.size(), 0, 0.0, {}};
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const Point& y = samples[s];
        if (directions[s].size() != y.values().size()) throw InvalidArgument("direction length mismatch");
        const Point dir = y.with_values(directions[s]);
        for (std::size_t i : detail::default_blocks(y)) {
            const Vector yi = y.block(i);
            const Vector di = dir.block(i);
            if (di.squaredNorm() == 0.0) continue;
            if (!std::isfinite(u.eval({i}, yi, y, iteration)) || !std::isfinite(f.value(y)))
                throw NumericFailure("non-finite evaluation in first-order check");
            double du = 0.0;
            double df = 0.0;
            for (double h : kFdSteps) {
                const Vector xp = yi + h * di;
                const Vector xm = yi - h * di;
                const double up = u.eval({i}, xp, y, iteration);
                const double um = u.eval({i}, xm, y, iteration);
                const double fp = f.value(y.with_group({i}, xp));
                const double fm = f.value(y.with_group({i}, xm));
                if (!std::isfinite(up) || !std::isfinite(um) || !std::isfinite(fp) || !std::isfinite(fm))
                    throw NumericFailure("non-finite evaluation in first-order check");
                du = (up - um) / (2.0 * h);
                df = (fp - fm) / (2.0 * h);
            }
            const double err = std::abs(du - df) / std::max(1.0, std::abs(df));
            rep.worst_gap = std::max(rep.worst_gap, err);
            if (!(err <= tol)) detail::add_violation(rep, s, i, du - df);
        }
    }
    return rep;
}

/// Surrogate view u - c(x) where c is a term shared by u and f.
template <class U>
struct MinusCommon {
    const U& u;
    std::function<double(const Point&)> common;

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t r) const {
        return u.eval(b, xb, y, r) - common(y.with_group(b, xb));
    }
};

/// Composite mode: when u = u_0 + g and f = f_0 + g share the nonsmooth term g,
/// the first-order condition is checked on the smooth parts u_0 and f_0 only.
template <class U, Objective F>
Report check_first_order_match_composite(const U& u, const F& f, std::function<double(const Point&)> common,
                                         std::span<const Point> samples, std::span<const Vector> directions,
                                         double tol = 1e-4, std::size_t iteration = 1) {
    MinusCommon<U> u0{u, common};
    FunctionObjective f0{[&f, common](const Point& x) { return f.value(x) - common(x); }, {}};
    Report rep = check_first_order_match(u0, f0, samples, directions, tol, iteration);
    rep.check = "first_order_match_composite";
    return rep;
}

/// Spot check of quasi-convexity of u_i(., y) on random segments:
/// u(midpoint) <= max(u(a), u(b)) + tol.
template <class U>
Report check_quasi_convexity(const U& u, const Sampler& sampler, RngStream& rng, std::size_t n_samples,
                             double tol = 1e-10, std::size_t iteration = 1) {
    Report rep{"quasi_convexity", n_samples, 0, -std::numeric_limits<double>::infinity(), {}};
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Point y = sampler(rng);
        const Point a = sampler(rng);
        const Point b = sampler(rng);
        for (std::size_t i : detail::default_blocks(y)) {
            const Vector ai = a.block(i);
            const Vector bi = b.block(i);
            const double ua = u.eval({i}, ai, y, iteration);
            const double ub = u.eval({i}, bi, y, iteration);
            const double um = u.eval({i}, Vector(0.5 * (ai + bi)), y, iteration);
            const double gap = um - std::max(ua, ub);
            rep.worst_gap = std::max(rep.worst_gap, gap);
            if (!(gap <= tol * (1.0 + std::abs(std::max(ua, ub))))) detail::add_violation(rep, s, i, gap);
        }
    }
    if (n_samples == 0) rep.worst_gap = 0.0;
    return rep;
}

/// Strict convexity spot check for BSCA approximations: for x != x',
/// h(midpoint) < (h(x) + h(x')) / 2 - margin.
template <class H>
Report check_strict_convexity(const H& h, const Sampler& sampler, RngStream& rng, std::size_t n_samples,
                              double margin = 1e-12, std::size_t iteration = 1) {
    Report rep{"strict_convexity", n_samples, 0, std::numeric_limits<double>::infinity(), {}};
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Point y = sampler(rng);
        const Point a = sampler(rng);
        const Point b = sampler(rng);
        for (std::size_t i : detail::default_blocks(y)) {
            const Vector ai = a.block(i);
            const Vector bi = b.block(i);
            if ((ai - bi).norm() == 0.0) continue;
            const double gap = 0.5 * (h.eval({i}, ai, y, iteration) + h.eval({i}, bi, y, iteration)) -
                               h.eval({i}, Vector(0.5 * (ai + bi)), y, iteration);
            rep.worst_gap = std::min(rep.worst_gap, gap);
            if (!(gap > margin)) detail::add_violation(rep, s, i, gap);
        }
    }
    if (n_samples == 0) rep.worst_gap = 0.0;
    return rep;
}

/// Flags every iteration whose objective exceeds the previous one by more than
/// slack (1 + |f_prev|). The initial objective, when recorded, is the first reference.
inline Report audit_trace(const Trace& t, double slack = 1e-12) {
    Report rep{"audit_trace", t.records.size(), 0, 0.0, {}};
    std::optional<double> prev = t.initial_objective;
    for (std::size_t k = 0; k < t.records.size(); ++k) {
        const double f = t.records[k].objective;
        if (prev) {
            const double rise = f - *prev;
            rep.worst_gap = std::max(rep.worst_gap, rise);
            if (!(rise <= slack * (1.0 + std::abs(*prev))))
                detail::add_violation(rep, t.records[k].iter, static_cast<std::size_t>(std::max(0L, t.records[k].block)),
                                      rise);
        }
        prev = f;
    }
    return rep;
}

} // namespace bsum::verify
