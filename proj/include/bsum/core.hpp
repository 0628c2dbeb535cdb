#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bsum {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Indices of the blocks updated together; a singleton for plain block updates.
using BlockSet = std::vector<std::size_t>;

// =======================================================================
// Errors
// =======================================================================

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidSchedule : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class InvalidDescentDirection : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LineSearchFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure inside a subproblem solve. `iteration()` is 0 when raised outside a driver;
/// drivers stamp the iteration index before rethrowing.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(std::string message, std::size_t iteration = 0)
        : std::runtime_error(message), message_(std::move(message)) {
        set_iteration(iteration);
    }

    const char* what() const noexcept override { return full_.c_str(); }
    const std::string& message() const { return message_; }
    std::size_t iteration() const { return iteration_; }

    void set_iteration(std::size_t iteration) {
        iteration_ = iteration;
        full_ = iteration == 0 ? message_ : message_ + " (iteration " + std::to_string(iteration) + ")";
    }

private:
    std::string message_;
    std::string full_;
    std::size_t iteration_ = 0;
};

class ComponentCollapse : public SolverError {
public:
    using SolverError::SolverError;
};

// =======================================================================
// Tolerances
// =======================================================================

inline constexpr double kAbsTol = 1e-10;
inline constexpr double kRelTol = 1e-10;

inline bool approx_equal(double a, double b, double abs_tol = kAbsTol, double rel_tol = kRelTol) {
    return std::abs(a - b) <= abs_tol + rel_tol * std::max(std::abs(a), std::abs(b));
}

// =======================================================================
// BlockStructure
// =======================================================================

/// Partition of R^m into n consecutive blocks of sizes m_1..m_n.
class BlockStructure {
public:
    explicit BlockStructure(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        if (dims_.empty()) throw InvalidArgument("block structure needs at least one block");
        offsets_.reserve(dims_.size());
        for (std::size_t d : dims_) {
            if (d == 0) throw InvalidArgument("block dimensions must be positive");
            offsets_.push_back(total_);
            total_ += d;
        }
    }

    std::size_t num_blocks() const { return dims_.size(); }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }
    std::size_t offset(std::size_t i) const { return offsets_.at(i); }
    std::size_t total() const { return total_; }
    const std::vector<std::size_t>& dims() const { return dims_; }
    const std::vector<std::size_t>& offsets() const { return offsets_; }

    std::size_t group_dim(const BlockSet& group) const {
        std::size_t d = 0;
        for (std::size_t i : group) d += dim(i);
        return d;
    }

    BlockSet all_blocks() const {
        BlockSet all(dims_.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }

    friend bool operator==(const BlockStructure& a, const BlockStructure& b) { return a.dims_ == b.dims_; }

private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    std::size_t total_ = 0;
};

inline std::shared_ptr<const BlockStructure> make_block_structure(std::vector<std::size_t> dims) {
    return std::make_shared<const BlockStructure>(std::move(dims));
}

// =======================================================================
// Point
// =======================================================================

/// A vector in R^m together with its block partition.
class Point {
public:
    Point(std::shared_ptr<const BlockStructure> structure, Vector values)
        : structure_(std::move(structure)), values_(std::move(values)) {
        if (!structure_) throw InvalidArgument("point requires a block structure");
        if (static_cast<std::size_t>(values_.size()) != structure_->total())
            throw InvalidArgument("point length does not match block structure");
    }

    static Point zeros(std::shared_ptr<const BlockStructure> structure) {
        const auto m = static_cast<Eigen::Index>(structure->total());
        return Point(std::move(structure), Vector::Zero(m));
    }

    const BlockStructure& structure() const { return *structure_; }
    const std::shared_ptr<const BlockStructure>& structure_ptr() const { return structure_; }
    std::size_t num_blocks() const { return structure_->num_blocks(); }
    std::size_t size() const { return structure_->total(); }

    const Vector& values() const { return values_; }
    double operator[](std::size_t k) const { return values_[static_cast<Eigen::Index>(k)]; }

    auto block(std::size_t i) const {
        return values_.segment(static_cast<Eigen::Index>(structure_->offset(i)),
                               static_cast<Eigen::Index>(structure_->dim(i)));
    }

    void set_block(std::size_t i, const Vector& v) {
        if (static_cast<std::size_t>(v.size()) != structure_->dim(i))
            throw InvalidArgument("block value has wrong dimension");
        values_.segment(static_cast<Eigen::Index>(structure_->offset(i)), v.size()) = v;
    }

    void set_values(const Vector& v) {
        if (v.size() != values_.size()) throw InvalidArgument("point length mismatch");
        values_ = v;
    }

    /// Concatenated coordinates of the blocks in `group`, in group order.
    Vector gather(const BlockSet& group) const {
        Vector out(static_cast<Eigen::Index>(structure_->group_dim(group)));
        Eigen::Index pos = 0;
        for (std::size_t i : group) {
            const auto d = static_cast<Eigen::Index>(structure_->dim(i));
            out.segment(pos, d) = block(i);
            pos += d;
        }
        return out;
    }

    void scatter(const BlockSet& group, const Vector& v) {
        if (static_cast<std::size_t>(v.size()) != structure_->group_dim(group))
            throw InvalidArgument("group value has wrong dimension");
        Eigen::Index pos = 0;
        for (std::size_t i : group) {
            const auto d = static_cast<Eigen::Index>(structure_->dim(i));
            values_.segment(static_cast<Eigen::Index>(structure_->offset(i)), d) = v.segment(pos, d);
            pos += d;
        }
    }

    /// Copy of this point with the coordinates of `group` replaced.
    Point with_group(const BlockSet& group, const Vector& v) const {
        Point out = *this;
        out.scatter(group, v);
        return out;
    }

    Point with_values(Vector v) const { return Point(structure_, std::move(v)); }

private:
    std::shared_ptr<const BlockStructure> structure_;
    Vector values_;
};

// =======================================================================
// Feasible sets
// =======================================================================

/// Closed convex set X_i given by a membership test and the Euclidean projection.
struct FeasibleSet {
    std::string name;
    std::function<bool(const Vector&, double)> contains;
    std::function<Vector(const Vector&)> project;

    static FeasibleSet unconstrained() {
        return {"unconstrained",
                [](const Vector& v, double) { return v.allFinite(); },
                [](const Vector& v) { return v; }};
    }

    static FeasibleSet box(double lo, double hi) {
        if (!(lo <= hi)) throw InvalidArgument("box requires lo <= hi");
        return {"box",
                [lo, hi](const Vector& v, double tol) {
                    return ((v.array() >= lo - tol) && (v.array() <= hi + tol)).all();
                },
                [lo, hi](const Vector& v) -> Vector { return v.cwiseMax(lo).cwiseMin(hi); }};
    }

    static FeasibleSet lower_bound(double lo) {
        return {"lower_bound",
                [lo](const Vector& v, double tol) { return (v.array() >= lo - tol).all(); },
                [lo](const Vector& v) -> Vector { return v.cwiseMax(lo); }};
    }

    /// Euclidean ball of the given radius centred at the origin.
    static FeasibleSet ball(double radius) {
        if (!(radius > 0.0)) throw InvalidArgument("ball radius must be positive");
        return {"ball",
                [radius](const Vector& v, double tol) { return v.norm() <= radius + tol; },
                [radius](const Vector& v) -> Vector {
                    const double n = v.norm();
                    return n <= radius ? v : Vector(v * (radius / n));
                }};
    }

    /// Probability simplex {v >= 0, sum v = 1}.
    static FeasibleSet simplex() {
        return {"simplex",
                [](const Vector& v, double tol) {
                    return (v.array() >= -tol).all() && std::abs(v.sum() - 1.0) <= tol * (1.0 + v.size());
                },
                [](const Vector& v) -> Vector {
                    // Sort-based projection (Held, Wolfe, Crowder).
                    std::vector<double> u(v.data(), v.data() + v.size());
                    std::sort(u.begin(), u.end(), std::greater<>());
                    double cumsum = 0.0;
                    double theta = 0.0;
                    for (std::size_t j = 0; j < u.size(); ++j) {
                        cumsum += u[j];
                        const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
                        if (u[j] - t > 0.0) theta = t;
                    }
                    return (v.array() - theta).cwiseMax(0.0).matrix();
                }};
    }
};

/// One feasible set per block; an empty list means unconstrained.
using Constraints = std::vector<FeasibleSet>;

inline bool is_feasible(const Point& x, const Constraints& sets, double tol = kAbsTol) {
    if (!x.values().allFinite()) return false;
    if (sets.empty()) return true;
    if (sets.size() != x.num_blocks()) throw InvalidArgument("one feasible set per block required");
    for (std::size_t i = 0; i < sets.size(); ++i)
        if (!sets[i].contains(Vector(x.block(i)), tol)) return false;
    return true;
}

inline Point project(const Point& x, const Constraints& sets) {
    if (sets.empty()) return x;
    if (sets.size() != x.num_blocks()) throw InvalidArgument("one feasible set per block required");
    Point out = x;
    for (std::size_t i = 0; i < sets.size(); ++i) out.set_block(i, sets[i].project(Vector(x.block(i))));
    return out;
}

// =======================================================================
// Objectives
// =======================================================================

template <class F>
concept Objective = requires(const F& f, const Point& x) {
    { f.value(x) } -> std::convertible_to<double>;
};

template <class F>
concept SmoothObjective = Objective<F> && requires(const F& f, const Point& x) {
    { f.gradient(x) } -> std::convertible_to<Vector>;
};

/// Runtime check for a gradient; type-erased objectives may lack one.
template <Objective F>
bool has_gradient(const F& f) {
    if constexpr (requires { { f.has_gradient() } -> std::convertible_to<bool>; })
        return f.has_gradient();
    else
        return SmoothObjective<F>;
}

/// Objective assembled from callables.
struct FunctionObjective {
    std::function<double(const Point&)> eval;
    std::function<Vector(const Point&)> grad;

    double value(const Point& x) const { return eval(x); }
    Vector gradient(const Point& x) const {
        if (!grad) throw InvalidArgument("objective has no gradient oracle");
        return grad(x);
    }
    bool has_gradient() const { return static_cast<bool>(grad); }
};

/// f(x) = x^T Q x / 2 - b^T x + c0.
struct QuadraticObjective {
    Matrix Q;
    Vector b;
    double c0 = 0.0;

    double value(const Point& x) const {
        const Vector& v = x.values();
        return 0.5 * v.dot(Q * v) - b.dot(v) + c0;
    }
    Vector gradient(const Point& x) const { return Q * x.values() - b; }
};

/// One-sided difference quotient (f(x + h d) - f(x)) / h.
template <Objective F>
double directional_derivative_fd(const F& f, const Point& x, const Vector& d, double h) {
    if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    if (d.size() != x.values().size()) throw InvalidArgument("direction length mismatch");
    const double f0 = f.value(x);
    const double f1 = f.value(x.with_values(x.values() + h * d));
    if (!std::isfinite(f0) || !std::isfinite(f1))
        throw NumericFailure("non-finite objective value in directional derivative");
    return (f1 - f0) / h;
}

// =======================================================================
// Trace
// =======================================================================

enum class Status { converged, max_iters, error };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::converged: return "converged";
    case Status::max_iters: return "max_iters";
    case Status::error: return "error";
    }
    return "unknown";
}

/// Record flag: a variable was clamped to a bound inside the subproblem.
inline constexpr std::uint32_t kFlagClamped = 1u;

struct TraceRecord {
    std::size_t iter = 0;
    /// Block index for single-block updates; group position for overlapping schedules.
    long block = 0;
    double objective = 0.0;
    std::optional<double> step_size;
    std::int64_t elapsed_ns = 0;
    /// R_i for every block (max-improvement driver only).
    std::vector<double> improvements;
    std::uint32_t flags = 0;
};

struct Trace {
    std::vector<TraceRecord> records;
    Status status = Status::max_iters;
    std::optional<double> initial_objective;
    std::size_t iterations = 0;

    bool empty() const { return records.empty(); }
    double final_objective() const {
        if (!records.empty()) return records.back().objective;
        return initial_objective.value_or(std::numeric_limits<double>::quiet_NaN());
    }
};

} // namespace bsum
