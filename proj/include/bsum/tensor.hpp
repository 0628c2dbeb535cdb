#pragma once

#include <bsum/engine.hpp>
#include <bsum/rng.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

/// Order-3 CP decomposition by block successive upper-bound minimization over
/// the factor blocks {A, B, C}.
namespace bsum::tensor {

/// Dense I x J x K tensor, lexicographic layout with the last index fastest.
class DenseTensor3 {
public:
    DenseTensor3() = default;

    DenseTensor3(std::size_t I, std::size_t J, std::size_t K)
        : I_(I), J_(J), K_(K), values_(I * J * K, 0.0) {}

    DenseTensor3(std::size_t I, std::size_t J, std::size_t K, std::vector<double> values)
        : I_(I), J_(J), K_(K), values_(std::move(values)) {
        if (values_.size() != I_ * J_ * K_) throw InvalidArgument("tensor value count does not match dims");
        for (double v : values_)
            if (!std::isfinite(v)) throw InvalidArgument("tensor entries must be finite");
    }

    std::size_t I() const { return I_; }
    std::size_t J() const { return J_; }
    std::size_t K() const { return K_; }
    const std::vector<double>& values() const { return values_; }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) { return values_[(i * J_ + j) * K_ + k]; }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const { return values_[(i * J_ + j) * K_ + k]; }

    double norm() const {
        double s = 0.0;
        for (double v : values_) s += v * v;
        return std::sqrt(s);
    }

private:
    std::size_t I_ = 0, J_ = 0, K_ = 0;
    std::vector<double> values_;
};

struct CpFactors {
    Matrix A, B, C;

    Eigen::Index rank() const { return A.cols(); }

    void validate() const {
        if (A.cols() != B.cols() || A.cols() != C.cols()) throw InvalidArgument("factor column counts differ");
    }

    const Matrix& factor(int mode) const {
        switch (mode) {
        case 1: return A;
        case 2: return B;
        case 3: return C;
        default: throw InvalidArgument("mode must be 1, 2 or 3");
        }
    }
    Matrix& factor(int mode) { return const_cast<Matrix&>(std::as_const(*this).factor(mode)); }
};

/// Column-wise Kronecker product; row a*q + b of column r is U(a,r) V(b,r).
inline Matrix khatri_rao(const Matrix& U, const Matrix& V) {
    if (U.cols() != V.cols()) throw InvalidArgument("khatri_rao needs equal column counts");
    const Eigen::Index p = U.rows(), q = V.rows();
    Matrix out(p * q, U.cols());
    for (Eigen::Index r = 0; r < U.cols(); ++r)
        for (Eigen::Index a = 0; a < p; ++a) out.col(r).segment(a * q, q) = U(a, r) * V.col(r);
    return out;
}

/// Mode-n matricization with columns ordered so that
/// unfold(X,1) = A kr(C,B)^T, unfold(X,2) = B kr(C,A)^T, unfold(X,3) = C kr(B,A)^T.
inline Matrix unfold(const DenseTensor3& t, int mode) {
    const auto I = static_cast<Eigen::Index>(t.I()), J = static_cast<Eigen::Index>(t.J()),
               K = static_cast<Eigen::Index>(t.K());
    Matrix out;
    switch (mode) {
    case 1: out.resize(I, J * K); break;
    case 2: out.resize(J, I * K); break;
    case 3: out.resize(K, I * J); break;
    default: throw InvalidArgument("mode must be 1, 2 or 3");
    }
    for (Eigen::Index i = 0; i < I; ++i)
        for (Eigen::Index j = 0; j < J; ++j)
            for (Eigen::Index k = 0; k < K; ++k) {
                const double v = t(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k));
                if (mode == 1)
                    out(i, k * J + j) = v;
                else if (mode == 2)
                    out(j, k * I + i) = v;
                else
                    out(k, j * I + i) = v;
            }
    return out;
}

/// (A;B;C) = sum_r a_r o b_r o c_r.
inline DenseTensor3 reconstruct(const CpFactors& F) {
    F.validate();
    DenseTensor3 t(static_cast<std::size_t>(F.A.rows()), static_cast<std::size_t>(F.B.rows()),
                   static_cast<std::size_t>(F.C.rows()));
    for (Eigen::Index i = 0; i < F.A.rows(); ++i)
        for (Eigen::Index j = 0; j < F.B.rows(); ++j)
            for (Eigen::Index k = 0; k < F.C.rows(); ++k)
                t(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) =
                    (F.A.row(i).array() * F.B.row(j).array() * F.C.row(k).array()).sum();
    return t;
}

inline void check_dims(const DenseTensor3& t, const CpFactors& F) {
    F.validate();
    if (static_cast<std::size_t>(F.A.rows()) != t.I() || static_cast<std::size_t>(F.B.rows()) != t.J() ||
        static_cast<std::size_t>(F.C.rows()) != t.K())
        throw InvalidArgument("factor rows do not match tensor dims");
}

/// Frobenius norm of X - (A;B;C).
inline double cp_residual(const DenseTensor3& t, const CpFactors& F) {
    check_dims(t, F);
    const DenseTensor3 r = reconstruct(F);
    double s = 0.0;
    for (std::size_t k = 0; k < t.values().size(); ++k) {
        const double d = t.values()[k] - r.values()[k];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Largest Gram condition number accepted without a proximal term.
inline constexpr double kMaxGramCondition = 1e12;

/// Exact minimizer over one factor of ||X - (A;B;C)||^2 + lambda ||F_mode - F_mode^r||^2.
/// Mode 1: A+ = [X_(1) kr(C,B) + lambda A] [(C^T C) * (B^T B) + lambda I]^{-1}.
inline Matrix als_factor_update(const DenseTensor3& t, const CpFactors& F, int mode, double lambda) {
    check_dims(t, F);
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
    const Matrix* P = nullptr;
    const Matrix* Q = nullptr;
    switch (mode) {
    case 1: P = &F.C; Q = &F.B; break;
    case 2: P = &F.C; Q = &F.A; break;
    case 3: P = &F.B; Q = &F.A; break;
    default: throw InvalidArgument("mode must be 1, 2 or 3");
    }
    const Matrix& current = F.factor(mode);
    const Eigen::Index R = F.rank();
    Matrix gram = (P->transpose() * *P).cwiseProduct(Q->transpose() * *Q);
    Matrix rhs = unfold(t, mode) * khatri_rao(*P, *Q);
    if (lambda > 0.0) {
        gram.diagonal().array() += lambda;
        rhs += lambda * current;
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > kMaxGramCondition) {
            std::ostringstream os;
            os << "Gram matrix for mode " << mode << " is singular or ill-conditioned (condition "
               << (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) << "); use lambda > 0";
            throw SolverError(os.str());
        }
    }
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw SolverError("Gram factorization failed");
    Matrix out = llt.solve(rhs.transpose()).transpose();
    if (out.rows() != current.rows() || out.cols() != R) throw SolverError("factor update has wrong shape");
    return out;
}

// =======================================================================
// Proximal weight schedule
// =======================================================================

struct LambdaSchedule {
    enum class Mode { constant, diminishing };
    Mode mode = Mode::constant;
    double lambda = 0.0;
    double lambda0 = 1e-7;
    double lambda1 = 0.1;

    static LambdaSchedule constant(double lambda) { return {Mode::constant, lambda, 0.0, 0.0}; }
    static LambdaSchedule diminishing(double lambda0, double lambda1) {
        return {Mode::diminishing, 0.0, lambda0, lambda1};
    }

    void validate() const {
        if (!(lambda >= 0.0 && lambda0 >= 0.0 && lambda1 >= 0.0))
            throw InvalidArgument("lambda parameters must be non-negative");
    }
};

/// lambda for constant mode; lambda0 + lambda1 ||X - (A;B;C)|| / ||X|| otherwise.
inline double lambda_value(const LambdaSchedule& s, const DenseTensor3& t, const CpFactors& F) {
    s.validate();
    if (s.mode == LambdaSchedule::Mode::constant) return s.lambda;
    const double tn = t.norm();
    if (!(tn > 0.0)) throw InvalidArgument("diminishing lambda needs a non-zero tensor");
    return s.lambda0 + s.lambda1 * cp_residual(t, F) / tn;
}

// =======================================================================
// Instances
// =======================================================================

/// The 2x3x3 swamp example: A is 2x3, B is 3x3, C the 3x3 identity.
inline CpFactors swamp_factors(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    CpFactors F;
    F.A.resize(2, 3);
    F.A << 1, c, 0,
           0, s, 1;
    F.B.resize(3, 3);
    F.B << 3, std::numbers::sqrt2 * c, 0,
           0, s, 1,
           0, s, 0;
    F.C = Matrix::Identity(3, 3);
    return F;
}

inline DenseTensor3 build_swamp_instance(double theta) { return reconstruct(swamp_factors(theta)); }

inline constexpr double kDefaultSwampTheta = std::numbers::pi / 36.0;

/// Tensor from factors with i.i.d. standard normal entries.
inline DenseTensor3 random_rank_instance(std::size_t I, std::size_t J, std::size_t K, std::size_t R, RngStream& rng) {
    if (R == 0) throw InvalidArgument("rank must be at least 1");
    auto draw = [&](std::size_t rows) {
        Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(R));
        for (auto& v : M.reshaped()) v = rng.normal();
        return M;
    };
    CpFactors F;
    F.A = draw(I);
    F.B = draw(J);
    F.C = draw(K);
    return reconstruct(F);
}

// =======================================================================
// Text format: line 1 "I J K", then values in layout order.
// =======================================================================

inline DenseTensor3 read_tensor(std::istream& in) {
    std::size_t I = 0, J = 0, K = 0;
    if (!(in >> I >> J >> K)) throw InvalidArgument("tensor file: expected header 'I J K'");
    if (I == 0 || J == 0 || K == 0) throw InvalidArgument("tensor file: dims must be positive");
    std::vector<double> values;
    values.reserve(I * J * K);
    double v = 0.0;
    while (in >> v) values.push_back(v);
    if (!in.eof()) throw InvalidArgument("tensor file: malformed value");
    if (values.size() != I * J * K)
        throw InvalidArgument("tensor file: expected " + std::to_string(I * J * K) + " values, got " +
                              std::to_string(values.size()));
    return DenseTensor3(I, J, K, std::move(values));
}

inline void write_tensor(std::ostream& out, const DenseTensor3& t) {
    out << t.I() << ' ' << t.J() << ' ' << t.K() << '\n';
    out << std::setprecision(17);
    const auto& v = t.values();
    for (std::size_t n = 0; n < v.size(); ++n) out << v[n] << ((n + 1) % t.K() == 0 ? '\n' : ' ');
}

// =======================================================================
// Solver
// =======================================================================

enum class CpMode { als, const_prox, dim_prox, mbi, misum };

inline const char* to_string(CpMode m) {
    switch (m) {
    case CpMode::als: return "als";
    case CpMode::const_prox: return "const_prox";
    case CpMode::dim_prox: return "dim_prox";
    case CpMode::mbi: return "mbi";
    case CpMode::misum: return "misum";
    }
    return "unknown";
}

inline CpMode parse_cp_mode(const std::string& s) {
    for (CpMode m : {CpMode::als, CpMode::const_prox, CpMode::dim_prox, CpMode::mbi, CpMode::misum})
        if (s == to_string(m)) return m;
    throw InvalidArgument("unknown cp mode '" + s + "'");
}

/// Max-improvement modes update one block per iteration; the others sweep A, B, C.
inline bool is_max_improvement(CpMode m) { return m == CpMode::mbi || m == CpMode::misum; }

struct CpOptions {
    /// Natural iterations: sweeps for cyclic modes, single-block steps for mbi/misum.
    std::size_t max_iters = 3000;
    /// Stop once ||X - (A;B;C)|| < eps.
    double eps = 1e-5;
    double tol = 1e-15;
    double lambda = 0.1;
    double lambda0 = 1e-7;
    double lambda1 = 0.1;
    bool record_trace = true;
};

/// Iterate layout: vec(A), vec(B), vec(C), column-major.
class CpLayout {
public:
    CpLayout(std::size_t I, std::size_t J, std::size_t K, std::size_t R)
        : dims_{I, J, K}, R_(R), structure_(make_block_structure({I * R, J * R, K * R})) {}

    const std::shared_ptr<const BlockStructure>& structure() const { return structure_; }

    Point pack(const CpFactors& F) const {
        Vector v(static_cast<Eigen::Index>(structure_->total()));
        Eigen::Index pos = 0;
        for (const Matrix* M : {&F.A, &F.B, &F.C}) {
            v.segment(pos, M->size()) = M->reshaped();
            pos += M->size();
        }
        return Point(structure_, std::move(v));
    }

    CpFactors unpack(const Point& x) const {
        CpFactors F;
        F.A = block_matrix(x, 0);
        F.B = block_matrix(x, 1);
        F.C = block_matrix(x, 2);
        return F;
    }

    Matrix block_matrix(const Point& x, std::size_t i) const {
        return x.block(i).reshaped(static_cast<Eigen::Index>(dims_[i]), static_cast<Eigen::Index>(R_));
    }

private:
    std::array<std::size_t, 3> dims_;
    std::size_t R_;
    std::shared_ptr<const BlockStructure> structure_;
};

/// f = ||X - (A;B;C)||^2 on the packed iterate.
class CpObjective {
public:
    CpObjective(const DenseTensor3& t, CpLayout layout) : t_(&t), layout_(std::move(layout)) {}
    double value(const Point& x) const {
        const double r = cp_residual(*t_, layout_.unpack(x));
        return r * r;
    }

private:
    const DenseTensor3* t_;
    CpLayout layout_;
};

/// u_i(F_i, Y) = ||X - (.. F_i ..)||^2 + lambda(Y) ||F_i - Y_i||^2, lambda evaluated at the anchor.
class CpSurrogate {
public:
    CpSurrogate(const DenseTensor3& t, CpLayout layout, LambdaSchedule schedule)
        : t_(&t), layout_(std::move(layout)), schedule_(schedule) {
        schedule_.validate();
    }

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t) const {
        const std::size_t i = single(b);
        const CpFactors Y = layout_.unpack(y);
        const double lambda = lambda_value(schedule_, *t_, Y);
        const Point x = y.with_group(b, xb);
        const double r = cp_residual(*t_, layout_.unpack(x));
        return r * r + lambda * (xb - Vector(y.block(i))).squaredNorm();
    }

    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        const std::size_t i = single(b);
        const CpFactors Y = layout_.unpack(y);
        const double lambda = lambda_value(schedule_, *t_, Y);
        const Matrix updated = als_factor_update(*t_, Y, static_cast<int>(i) + 1, lambda);
        Vector xb = updated.reshaped();
        const double v = eval(b, xb, y, r);
        return {std::move(xb), v};
    }

private:
    static std::size_t single(const BlockSet& b) {
        if (b.size() != 1 || b[0] > 2) throw InvalidArgument("cp surrogate updates one factor at a time");
        return b[0];
    }

    const DenseTensor3* t_;
    CpLayout layout_;
    LambdaSchedule schedule_;
};

struct CpResult {
    CpFactors factors;
    /// Objective column holds ||X - (A;B;C)|| (unsquared).
    Trace trace;
    /// Natural iterations until the objective dropped below eps (or the budget).
    std::size_t iterations = 0;
    bool reached = false;
};

/// Factors with i.i.d. uniform [0, 1] entries.
inline CpFactors uniform_init(std::size_t I, std::size_t J, std::size_t K, std::size_t R, RngStream& rng) {
    auto draw = [&](std::size_t rows) {
        Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(R));
        for (auto& v : M.reshaped()) v = rng.uniform();
        return M;
    };
    CpFactors F;
    F.A = draw(I);
    F.B = draw(J);
    F.C = draw(K);
    return F;
}

inline CpResult run_cp(const DenseTensor3& t, std::size_t R, CpMode mode, const CpOptions& opts, RngStream& rng) {
    if (R == 0) throw InvalidArgument("rank must be at least 1");
    if (!(opts.eps > 0.0)) throw InvalidArgument("eps must be positive");
    const CpLayout layout(t.I(), t.J(), t.K(), R);
    const CpFactors init = uniform_init(t.I(), t.J(), t.K(), R, rng);

    LambdaSchedule schedule = LambdaSchedule::constant(0.0);
    if (mode == CpMode::const_prox) schedule = LambdaSchedule::constant(opts.lambda);
    if (mode == CpMode::dim_prox || mode == CpMode::misum)
        schedule = LambdaSchedule::diminishing(opts.lambda0, opts.lambda1);

    const CpObjective f(t, layout);
    const CpSurrogate u(t, layout, schedule);
    SolveOptions so;
    so.tol = opts.tol;
    so.target = opts.eps * opts.eps;
    so.record_trace = opts.record_trace;
    const bool greedy = is_max_improvement(mode);
    so.max_iters = greedy ? opts.max_iters : 3 * opts.max_iters;
    so.schedule = greedy ? Schedule::max_improvement() : Schedule::cyclic();

    SolveResult res = greedy ? run_misum(f, u, layout.pack(init), so) : run_bsum(f, u, layout.pack(init), so);
    if (res.trace.initial_objective) *res.trace.initial_objective = std::sqrt(*res.trace.initial_objective);
    for (auto& rec : res.trace.records) {
        rec.objective = std::sqrt(rec.objective);
        for (auto& v : rec.improvements) v = std::sqrt(std::max(v, 0.0));
    }

    CpResult out;
    out.factors = layout.unpack(res.x);
    out.reached = res.trace.final_objective() < opts.eps;
    const std::size_t steps = res.trace.iterations;
    out.iterations = greedy ? steps : (steps + 2) / 3;
    out.trace = std::move(res.trace);
    return out;
}

} // namespace bsum::tensor
