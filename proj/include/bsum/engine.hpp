#pragma once

#include <bsum/core.hpp>

#include <chrono>
#include <set>
#include <sstream>

namespace bsum {

// =======================================================================
// Oracle concepts
// =======================================================================

struct BlockMinimum {
    Vector argmin;
    double value = 0.0;
};

/// Block surrogate u_i(x_i, y): tight at the anchor and a global upper bound in
/// the block. `r` is the iteration index, for iteration-dependent surrogates.
template <class U>
concept BlockSurrogate = requires(const U& u, const BlockSet& b, const Vector& xb, const Point& y,
                                  std::size_t r) {
    { u.eval(b, xb, y, r) } -> std::convertible_to<double>;
    { u.minimize(b, y, r) } -> std::convertible_to<BlockMinimum>;
};

/// Strictly convex block approximation h_i(x_i, y) with a first-order match to f.
template <class H>
concept ConvexApproximation = requires(const H& h, const BlockSet& b, const Vector& xb, const Point& y,
                                       std::size_t r) {
    { h.eval(b, xb, y, r) } -> std::convertible_to<double>;
    { h.argmin(b, y, r) } -> std::convertible_to<Vector>;
};

/// Surrogate assembled from callables.
struct FunctionSurrogate {
    std::function<double(const BlockSet&, const Vector&, const Point&, std::size_t)> eval_fn;
    std::function<BlockMinimum(const BlockSet&, const Point&, std::size_t)> minimize_fn;

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t r) const {
        return eval_fn(b, xb, y, r);
    }
    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        return minimize_fn(b, y, r);
    }
};

// =======================================================================
// Schedule
// =======================================================================

class Schedule {
public:
    enum class Kind { cyclic, essentially_cyclic, max_improvement };

    static Schedule cyclic() { return Schedule(Kind::cyclic, {}, 0); }
    static Schedule max_improvement() { return Schedule(Kind::max_improvement, {}, 1); }

    /// Groups are visited in order and repeat; every window of `period`
    /// consecutive groups must cover all blocks.
    static Schedule essentially_cyclic(std::vector<BlockSet> groups, std::size_t period) {
        return Schedule(Kind::essentially_cyclic, std::move(groups), period);
    }

    Kind kind() const { return kind_; }
    const std::vector<BlockSet>& groups() const { return groups_; }

    void validate(std::size_t n) const {
        if (n == 0) throw InvalidSchedule("schedule needs at least one block");
        if (kind_ != Kind::essentially_cyclic) return;
        if (groups_.empty()) throw InvalidSchedule("essentially cyclic schedule has no groups");
        if (period_ == 0) throw InvalidSchedule("essentially cyclic period must be positive");
        for (const auto& g : groups_) {
            if (g.empty()) throw InvalidSchedule("empty block group");
            std::set<std::size_t> seen;
            for (std::size_t i : g) {
                if (i >= n) throw InvalidSchedule("block index out of range in group");
                if (!seen.insert(i).second) throw InvalidSchedule("duplicate block index in group");
            }
        }
        const std::size_t count = groups_.size();
        for (std::size_t start = 0; start < count; ++start) {
            std::vector<bool> covered(n, false);
            for (std::size_t k = 0; k < period_; ++k)
                for (std::size_t i : groups_[(start + k) % count]) covered[i] = true;
            for (std::size_t i = 0; i < n; ++i) {
                if (!covered[i]) {
                    std::ostringstream os;
                    os << "block " << i << " is not updated within " << period_
                       << " consecutive groups starting at group " << start;
                    throw InvalidSchedule(os.str());
                }
            }
        }
    }

    /// Blocks updated at iteration r >= 1. Cyclic order is 0, 1, ..., n-1
    /// starting at r = 1. Max-improvement returns an empty set ("all"); the
    /// driver selects.
    BlockSet next(std::size_t r, std::size_t n) const {
        if (r == 0) throw InvalidArgument("iterations are counted from 1");
        switch (kind_) {
        case Kind::cyclic: return {(r - 1) % n};
        case Kind::essentially_cyclic: return groups_[(r - 1) % groups_.size()];
        case Kind::max_improvement: return {};
        }
        return {};
    }

    /// Trace label for iteration r: the block for cyclic updates, the group position otherwise.
    long label(std::size_t r, std::size_t n) const {
        if (kind_ == Kind::essentially_cyclic) return static_cast<long>((r - 1) % groups_.size());
        return static_cast<long>((r - 1) % n);
    }

    std::size_t period(std::size_t n) const {
        switch (kind_) {
        case Kind::cyclic: return n;
        case Kind::essentially_cyclic: return period_;
        case Kind::max_improvement: return 1;
        }
        return 1;
    }

private:
    Schedule(Kind kind, std::vector<BlockSet> groups, std::size_t period)
        : kind_(kind), groups_(std::move(groups)), period_(period) {}

    Kind kind_;
    std::vector<BlockSet> groups_;
    std::size_t period_;
};

// =======================================================================
// Options
// =======================================================================

struct ArmijoParams {
    double alpha_init = 1.0;
    double beta = 0.5;
    double sigma = 0.01;
    int max_backtracks = 60;

    void validate() const {
        if (!(alpha_init > 0.0)) throw InvalidArgument("armijo alpha_init must be positive");
        if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("armijo beta must lie in (0,1)");
        if (!(sigma > 0.0 && sigma < 1.0)) throw InvalidArgument("armijo sigma must lie in (0,1)");
        if (max_backtracks < 0) throw InvalidArgument("armijo max_backtracks must be non-negative");
    }
};

/// Called after every iteration with the new record and iterate.
using Observer = std::function<void(const TraceRecord&, const Point&)>;

struct SolveOptions {
    std::size_t max_iters = 1000;
    /// Stop once |f(x^r) - f(x^{r-1})| <= tol (1 + |f(x^r)|) for a full schedule period.
    double tol = 1e-10;
    ArmijoParams armijo;
    Schedule schedule = Schedule::cyclic();
    /// Keep every record; otherwise only the last one is retained.
    bool record_trace = true;
    /// Fill elapsed_ns from a steady clock; off by default so traces are reproducible.
    bool record_timing = false;
    /// Stop as soon as f(x^r) <= target.
    std::optional<double> target;
    Constraints feasible_sets;
    Observer observer;

    void validate() const {
        if (max_iters < 1) throw InvalidArgument("max_iters must be at least 1");
        if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
        armijo.validate();
    }
};

struct SolveResult {
    Point x;
    Trace trace;
    /// max_i [f(x) - R_i(x)] at the returned point (block-cyclic drivers).
    std::optional<double> stationarity_gap;
};

namespace detail {

class Progress {
public:
    Progress(const SolveOptions& opts, double f0, std::size_t period)
        : opts_(opts), period_(std::max<std::size_t>(period, 1)), previous_(f0),
          start_(std::chrono::steady_clock::now()) {
        trace_.initial_objective = f0;
    }

    /// Appends a record; returns true when the driver should stop.
    bool record(TraceRecord rec, const Point& x) {
        if (opts_.record_timing)
            rec.elapsed_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count();
        const double f = rec.objective;
        if (!std::isfinite(f)) throw NumericFailure("objective became non-finite at iteration " +
                                                    std::to_string(rec.iter));
        trace_.iterations = rec.iter;
        if (opts_.observer) opts_.observer(rec, x);
        if (opts_.record_trace || trace_.records.empty())
            trace_.records.push_back(std::move(rec));
        else
            trace_.records.back() = std::move(rec);

        if (opts_.target && f <= *opts_.target) {
            trace_.status = Status::converged;
            return true;
        }
        stall_ = std::abs(f - previous_) <= opts_.tol * (1.0 + std::abs(f)) ? stall_ + 1 : 0;
        previous_ = f;
        if (stall_ >= period_) {
            trace_.status = Status::converged;
            return true;
        }
        trace_.status = Status::max_iters;
        return false;
    }

    void force_converged() { trace_.status = Status::converged; }

    Trace finish() { return std::move(trace_); }

private:
    const SolveOptions& opts_;
    std::size_t period_;
    double previous_;
    std::size_t stall_ = 0;
    Trace trace_;
    std::chrono::steady_clock::time_point start_;
};

/// Runs an oracle call, stamping the iteration on failures.
template <class Fn>
auto guarded(std::size_t iter, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (SolverError& e) {
        if (e.iteration() == 0) e.set_iteration(iter);
        throw;
    } catch (const std::exception& e) {
        throw SolverError(std::string("subproblem oracle failed: ") + e.what(), iter);
    }
}

inline void check_minimum(const BlockMinimum& m, std::size_t expected_dim, std::size_t iter) {
    if (static_cast<std::size_t>(m.argmin.size()) != expected_dim)
        throw SolverError("subproblem minimizer has wrong dimension", iter);
    if (!m.argmin.allFinite() || !std::isfinite(m.value))
        throw SolverError("subproblem minimum not attained (non-finite minimizer or value)", iter);
}

inline void check_start(const Point& x0, const SolveOptions& opts) {
    opts.validate();
    if (!is_feasible(x0, opts.feasible_sets)) throw InvalidArgument("initial point is infeasible");
}

template <Objective F, BlockSurrogate U>
std::optional<double> stationarity_gap(const F& f, const U& u, const Point& x, std::size_t r) {
    const double fx = f.value(x);
    double gap = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.num_blocks(); ++i) {
        const BlockMinimum m = guarded(r, [&] { return BlockMinimum(u.minimize({i}, x, r)); });
        gap = std::max(gap, fx - m.value);
    }
    return gap;
}

} // namespace detail

// =======================================================================
// Drivers
// =======================================================================

/// Successive upper-bound minimization: x^r = argmin_x u(x, x^{r-1}) over all blocks at once.
template <Objective F, BlockSurrogate U>
SolveResult run_sum(const F& f, const U& u, const Point& x0, const SolveOptions& opts) {
    detail::check_start(x0, opts);
    const BlockSet all = x0.structure().all_blocks();
    const long label = x0.num_blocks() == 1 ? 0 : -1;
    Point x = x0;
    detail::Progress progress(opts, f.value(x), 1);
    for (std::size_t r = 1; r <= opts.max_iters; ++r) {
        const BlockMinimum m = detail::guarded(r, [&] { return BlockMinimum(u.minimize(all, x, r)); });
        detail::check_minimum(m, x.size(), r);
        x.scatter(all, m.argmin);
        TraceRecord rec;
        rec.iter = r;
        rec.block = label;
        rec.objective = f.value(x);
        if (progress.record(std::move(rec), x)) break;
    }
    return {std::move(x), progress.finish(), std::nullopt};
}

/// Block successive upper-bound minimization with a cyclic or essentially cyclic schedule.
template <Objective F, BlockSurrogate U>
SolveResult run_bsum(const F& f, const U& u, const Point& x0, const SolveOptions& opts) {
    detail::check_start(x0, opts);
    const std::size_t n = x0.num_blocks();
    const Schedule& schedule = opts.schedule;
    if (schedule.kind() == Schedule::Kind::max_improvement)
        throw InvalidSchedule("run_bsum needs a cyclic or essentially cyclic schedule");
    schedule.validate(n);

    Point x = x0;
    detail::Progress progress(opts, f.value(x), schedule.period(n));
    std::size_t r = 1;
    for (; r <= opts.max_iters; ++r) {
        const BlockSet group = schedule.next(r, n);
        const BlockMinimum m = detail::guarded(r, [&] { return BlockMinimum(u.minimize(group, x, r)); });
        detail::check_minimum(m, x.structure().group_dim(group), r);
        x.scatter(group, m.argmin);
        TraceRecord rec;
        rec.iter = r;
        rec.block = schedule.label(r, n);
        rec.objective = f.value(x);
        if (progress.record(std::move(rec), x)) break;
    }
    Trace trace = progress.finish();
    const std::size_t next_r = trace.iterations + 1;
    auto gap = detail::stationarity_gap(f, u, x, next_r);
    return {std::move(x), std::move(trace), gap};
}

/// Maximum-improvement successive upper-bound minimization: update only the
/// block with the smallest surrogate minimum R_i (ties to the lowest index).
template <Objective F, BlockSurrogate U>
SolveResult run_misum(const F& f, const U& u, const Point& x0, const SolveOptions& opts) {
    detail::check_start(x0, opts);
    const std::size_t n = x0.num_blocks();
    Point x = x0;
    detail::Progress progress(opts, f.value(x), 1);
    for (std::size_t r = 1; r <= opts.max_iters; ++r) {
        std::vector<BlockMinimum> minima;
        minima.reserve(n);
        std::size_t best = 0;
        for (std::size_t i = 0; i < n; ++i) {
            minima.push_back(detail::guarded(r, [&] { return BlockMinimum(u.minimize({i}, x, r)); }));
            detail::check_minimum(minima.back(), x.structure().dim(i), r);
            if (minima[i].value < minima[best].value) best = i;
        }
        x.set_block(best, minima[best].argmin);
        TraceRecord rec;
        rec.iter = r;
        rec.block = static_cast<long>(best);
        rec.objective = f.value(x);
        if (opts.record_trace) {
            rec.improvements.reserve(n);
            for (const auto& m : minima) rec.improvements.push_back(m.value);
        }
        if (progress.record(std::move(rec), x)) break;
    }
    Trace trace = progress.finish();
    auto gap = detail::stationarity_gap(f, u, x, trace.iterations + 1);
    return {std::move(x), std::move(trace), gap};
}

// =======================================================================
// Armijo line search
// =======================================================================

struct ArmijoResult {
    double alpha;
    Point x_new;
    int backtracks;
};

/// Largest alpha in {alpha_init beta^j : j <= max_backtracks} with
/// f(x) - f(x + alpha d) >= -sigma alpha f'(x; d).
template <Objective F>
ArmijoResult armijo_step(const F& f, const Point& x, const Vector& d, double fprime, const ArmijoParams& p,
                         std::optional<double> fx = std::nullopt) {
    p.validate();
    if (fprime > 0.0) throw InvalidDescentDirection("directional derivative is positive");
    if (d.size() != x.values().size()) throw InvalidArgument("direction length mismatch");
    if (d.squaredNorm() == 0.0) throw InvalidArgument("zero search direction");
    const double f0 = fx ? *fx : f.value(x);
    double alpha = p.alpha_init;
    for (int j = 0; j <= p.max_backtracks; ++j) {
        Point trial = x.with_values(x.values() + alpha * d);
        const double f1 = f.value(trial);
        if (std::isfinite(f1) && f0 - f1 >= -p.sigma * alpha * fprime) return {alpha, std::move(trial), j};
        alpha *= p.beta;
    }
    throw LineSearchFailure("armijo backtracking budget exhausted");
}

// =======================================================================
// Block successive convex approximation
// =======================================================================

/// Per scheduled block: y_i = argmin h_i(., x), d = y_i - x_i, Armijo step along d.
template <Objective F, ConvexApproximation H>
SolveResult run_bsca(const F& f, const H& h, const Point& x0, const SolveOptions& opts) {
    if (!has_gradient(f)) throw InvalidArgument("run_bsca requires a gradient oracle");
    detail::check_start(x0, opts);
    const std::size_t n = x0.num_blocks();
    const Schedule& schedule = opts.schedule;
    if (schedule.kind() == Schedule::Kind::max_improvement)
        throw InvalidSchedule("run_bsca needs a cyclic or essentially cyclic schedule");
    schedule.validate(n);

    const auto& structure = x0.structure();
    // Direction restricted to a group, embedded in R^m.
    auto direction = [&](const BlockSet& group, const Point& x, std::size_t r) {
        const Vector y = detail::guarded(r, [&] { return Vector(h.argmin(group, x, r)); });
        if (static_cast<std::size_t>(y.size()) != structure.group_dim(group) || !y.allFinite())
            throw SolverError("approximation minimizer is invalid", r);
        Point delta = Point::zeros(x.structure_ptr());
        delta.scatter(group, y - x.gather(group));
        return Vector(delta.values());
    };

    Point x = x0;
    double fx = f.value(x);
    detail::Progress progress(opts, fx, schedule.period(n));
    for (std::size_t r = 1; r <= opts.max_iters; ++r) {
        const BlockSet group = schedule.next(r, n);
        const Vector d = direction(group, x, r);
        TraceRecord rec;
        rec.iter = r;
        rec.block = schedule.label(r, n);

        bool stationary = false;
        if (d.norm() <= opts.tol) {
            stationary = true;
            for (std::size_t i = 0; i < n && stationary; ++i)
                stationary = direction({i}, x, r).norm() <= opts.tol;
            rec.step_size = 0.0;
        } else {
            const double fprime = f.gradient(x).dot(d);
            if (fprime > 0.0)
                throw SolverError("approximation produced an ascent direction", r);
            try {
                ArmijoResult step = armijo_step(f, x, d, fprime, opts.armijo, fx);
                x = std::move(step.x_new);
                rec.step_size = step.alpha;
            } catch (const LineSearchFailure&) {
                throw SolverError("armijo line search failed with a non-negligible direction", r);
            }
        }
        fx = f.value(x);
        rec.objective = fx;
        const bool stop = progress.record(std::move(rec), x);
        if (stationary) {
            progress.force_converged();
            break;
        }
        if (stop) break;
    }
    return {std::move(x), progress.finish(), std::nullopt};
}

} // namespace bsum
