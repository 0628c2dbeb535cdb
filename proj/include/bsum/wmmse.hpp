#pragma once

#include <bsum/engine.hpp>
#include <bsum/rng.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <complex>

/// Multi-cell MIMO sum-rate maximization by alternating MMSE receivers and
/// weighted-MSE transmit beamformers (WMMSE).
namespace bsum::wmmse {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;

struct NetworkSpec {
    std::size_t K = 1;
    std::vector<std::size_t> users_per_cell{1};
    /// Antennas at both ends.
    std::size_t N = 1;
    /// Streams per user.
    std::size_t d = 1;
    /// Noise power per user, flattened cell-major.
    std::vector<double> sigma2{1.0};
    /// Power budget per cell.
    std::vector<double> power{1.0};

    static NetworkSpec uniform(std::size_t K, std::size_t users, std::size_t N, std::size_t d, double sigma2,
                               double power) {
        NetworkSpec s;
        s.K = K;
        s.users_per_cell.assign(K, users);
        s.N = N;
        s.d = d;
        s.sigma2.assign(K * users, sigma2);
        s.power.assign(K, power);
        s.validate();
        return s;
    }

    std::size_t num_users() const {
        std::size_t n = 0;
        for (auto u : users_per_cell) n += u;
        return n;
    }

    /// Cell of flattened user q.
    std::size_t cell_of(std::size_t q) const {
        for (std::size_t k = 0; k < K; ++k) {
            if (q < users_per_cell[k]) return k;
            q -= users_per_cell[k];
        }
        throw InvalidArgument("user index out of range");
    }

    std::vector<std::size_t> users_of(std::size_t k) const {
        std::size_t first = 0;
        for (std::size_t c = 0; c < k; ++c) first += users_per_cell[c];
        std::vector<std::size_t> out(users_per_cell.at(k));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = first + i;
        return out;
    }

    void validate() const {
        if (K == 0 || N == 0 || d == 0) throw InvalidArgument("K, N and d must be positive");
        if (d > N) throw InvalidArgument("streams per user cannot exceed antennas");
        if (users_per_cell.size() != K) throw InvalidArgument("users_per_cell needs one entry per cell");
        for (auto u : users_per_cell)
            if (u == 0) throw InvalidArgument("every cell needs at least one user");
        if (sigma2.size() != num_users()) throw InvalidArgument("sigma2 needs one entry per user");
        if (power.size() != K) throw InvalidArgument("power needs one entry per cell");
        for (double s : sigma2)
            if (!(s > 0.0)) throw InvalidArgument("noise powers must be positive");
        for (double p : power)
            if (!(p > 0.0)) throw InvalidArgument("power budgets must be positive");
    }
};

/// H[q][j]: channel from transmitter (cell) j to receiver q, N x N.
using ChannelSet = std::vector<std::vector<CMatrix>>;
/// One N x d matrix per user.
using Beamformers = std::vector<CMatrix>;

struct TransceiverState {
    Beamformers V, U;
};

inline ChannelSet gen_channels(const NetworkSpec& spec, RngStream& rng) {
    spec.validate();
    const auto N = static_cast<Eigen::Index>(spec.N);
    const double s = std::sqrt(0.5);
    ChannelSet H(spec.num_users(), std::vector<CMatrix>(spec.K));
    for (auto& row : H)
        for (auto& M : row) {
            M.resize(N, N);
            for (auto& v : M.reshaped()) {
                const double re = rng.normal(), im = rng.normal();
                v = Complex(s * re, s * im);
            }
        }
    return H;
}

/// log det of a Hermitian positive definite matrix via Cholesky.
inline double logdet_hpd(const CMatrix& M) {
    Eigen::LLT<CMatrix> llt(M);
    if (llt.info() != Eigen::Success) throw NumericFailure("matrix is not Hermitian positive definite");
    double s = 0.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        const double p = llt.matrixL()(i, i).real();
        if (!(p > 0.0)) throw NumericFailure("non-positive Cholesky pivot");
        s += 2.0 * std::log(p);
    }
    return s;
}

namespace detail {

inline void check_shapes(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& V) {
    spec.validate();
    const std::size_t Q = spec.num_users();
    const auto N = static_cast<Eigen::Index>(spec.N), d = static_cast<Eigen::Index>(spec.d);
    if (H.size() != Q) throw InvalidArgument("channel set needs one row per user");
    for (const auto& row : H) {
        if (row.size() != spec.K) throw InvalidArgument("channel row needs one matrix per cell");
        for (const auto& M : row)
            if (M.rows() != N || M.cols() != N) throw InvalidArgument("channel matrices must be N x N");
    }
    if (V.size() != Q) throw InvalidArgument("need one beamformer per user");
    for (const auto& M : V)
        if (M.rows() != N || M.cols() != d) throw InvalidArgument("beamformers must be N x d");
}

/// sigma^2 I + sum over all users l of H_{q,cell(l)} V_l V_l^H H^H.
inline CMatrix received_covariance(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& V,
                                   std::size_t q, bool include_self) {
    const auto N = static_cast<Eigen::Index>(spec.N);
    CMatrix J = spec.sigma2[q] * CMatrix::Identity(N, N);
    for (std::size_t l = 0; l < V.size(); ++l) {
        if (l == q && !include_self) continue;
        const CMatrix S = H[q][spec.cell_of(l)] * V[l];
        J.noalias() += S * S.adjoint();
    }
    return J;
}

} // namespace detail

/// Rate of user q in nats, interference treated as noise.
inline double user_rate(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& V, std::size_t q) {
    const CMatrix C = detail::received_covariance(spec, H, V, q, false);
    const CMatrix S = H[q][spec.cell_of(q)] * V[q];
    return logdet_hpd(C + S * S.adjoint()) - logdet_hpd(C);
}

inline double sum_rate(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& V) {
    detail::check_shapes(spec, H, V);
    double s = 0.0;
    for (std::size_t q = 0; q < V.size(); ++q) s += user_rate(spec, H, V, q);
    return s;
}

/// E = (I - U^H H V)(I - U^H H V)^H + sum_{l != q} U^H H V_l V_l^H H^H U + sigma^2 U^H U.
inline CMatrix mse_matrix(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& V, const CMatrix& U,
                          std::size_t q) {
    const auto d = static_cast<Eigen::Index>(spec.d);
    const CMatrix J = detail::received_covariance(spec, H, V, q, true);
    const CMatrix G = U.adjoint() * H[q][spec.cell_of(q)] * V[q];
    CMatrix E = CMatrix::Identity(d, d) - G - G.adjoint() + U.adjoint() * J * U;
    return 0.5 * (E + E.adjoint());
}

/// U = (sigma^2 I + sum_l H V_l V_l^H H^H)^{-1} H V_q.
inline CMatrix mmse_receiver(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& V, std::size_t q) {
    const CMatrix J = detail::received_covariance(spec, H, V, q, true);
    Eigen::LLT<CMatrix> llt(J);
    if (llt.info() != Eigen::Success) throw NumericFailure("received covariance is not positive definite");
    return llt.solve(H[q][spec.cell_of(q)] * V[q]);
}

/// log det(E_hat) + tr[E_hat^{-1} (E - E_hat)], the tangent of the concave log det at E_hat.
inline double logdet_surrogate(const CMatrix& E, const CMatrix& E_hat) {
    if (E.rows() != E_hat.rows() || E.cols() != E_hat.cols()) throw InvalidArgument("shape mismatch");
    Eigen::LLT<CMatrix> llt(E_hat);
    if (llt.info() != Eigen::Success) throw InvalidArgument("E_hat must be positive definite");
    double ld = 0.0;
    for (Eigen::Index i = 0; i < E_hat.rows(); ++i) {
        const double p = llt.matrixL()(i, i).real();
        if (!(p > 0.0)) throw InvalidArgument("E_hat must be positive definite");
        ld += 2.0 * std::log(p);
    }
    return ld + llt.solve(E - E_hat).trace().real();
}

inline double cell_power(const NetworkSpec& spec, const Beamformers& V, std::size_t k) {
    double p = 0.0;
    for (std::size_t q : spec.users_of(k)) p += V[q].squaredNorm();
    return p;
}

inline double max_power_violation(const NetworkSpec& spec, const Beamformers& V) {
    double worst = 0.0;
    for (std::size_t k = 0; k < spec.K; ++k) worst = std::max(worst, cell_power(spec, V, k) - spec.power[k]);
    return worst;
}

inline constexpr double kPowerSlack = 1e-9;

/// Per-cell minimizer of sum_q tr(W_q E_q) over V subject to the power budgets.
/// V_q(mu) = (A_k + mu I)^{-1} H_{qk}^H U_q W_q, mu found by bisection when the budget binds.
inline Beamformers update_transmitters(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& U,
                                       const std::vector<CMatrix>& W) {
    const std::size_t Q = spec.num_users();
    if (U.size() != Q || W.size() != Q) throw InvalidArgument("need U and W for every user");
    const auto N = static_cast<Eigen::Index>(spec.N), d = static_cast<Eigen::Index>(spec.d);
    Beamformers V(Q);
    for (std::size_t k = 0; k < spec.K; ++k) {
        CMatrix A = CMatrix::Zero(N, N);
        for (std::size_t l = 0; l < Q; ++l) {
            const CMatrix T = H[l][k].adjoint() * U[l];
            A.noalias() += T * W[l] * T.adjoint();
        }
        A = 0.5 * (A + A.adjoint());
        const auto users = spec.users_of(k);
        CMatrix B(N, d * static_cast<Eigen::Index>(users.size()));
        for (std::size_t i = 0; i < users.size(); ++i)
            B.middleCols(static_cast<Eigen::Index>(i) * d, d) = H[users[i]][k].adjoint() * U[users[i]] * W[users[i]];

        Eigen::SelfAdjointEigenSolver<CMatrix> eig(A);
        if (eig.info() != Eigen::Success) throw SolverError("eigendecomposition failed in transmitter update");
        const Vector lam = eig.eigenvalues();
        const CMatrix QB = eig.eigenvectors().adjoint() * B;
        const Vector weight = QB.rowwise().squaredNorm();
        const double floor = 1e-12 * std::max(lam.maxCoeff(), 0.0);
        auto power_at = [&](double mu) {
            double p = 0.0;
            for (Eigen::Index m = 0; m < N; ++m) {
                const double den = lam[m] + mu;
                if (mu == 0.0 && lam[m] <= floor) continue;
                p += weight[m] / (den * den);
            }
            return p;
        };
        const double budget = spec.power[k];
        double mu = 0.0;
        if (power_at(0.0) > budget) {
            double lo = 0.0, hi = 1.0;
            int grow = 0;
            while (power_at(hi) >= budget) {
                lo = hi;
                hi *= 2.0;
                if (++grow > 200) throw SolverError("power bisection bracket not found");
            }
            // Bisect to full precision: a looser multiplier leaves a visible gap to the surrogate minimizer.
            for (int it = 0; it < 2000; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                if (power_at(mid) > budget)
                    lo = mid;
                else
                    hi = mid;
            }
            mu = hi;
        }
        Vector inv(N);
        for (Eigen::Index m = 0; m < N; ++m)
            inv[m] = (mu == 0.0 && lam[m] <= floor) ? 0.0 : 1.0 / (lam[m] + mu);
        const CMatrix Vk = eig.eigenvectors() * (inv.cast<Complex>().asDiagonal() * QB);
        for (std::size_t i = 0; i < users.size(); ++i) V[users[i]] = Vk.middleCols(static_cast<Eigen::Index>(i) * d, d);
    }
    return V;
}

/// V_q = sqrt(P_k / (I_k d)) times the first d columns of a random unitary.
inline Beamformers init_transmitters(const NetworkSpec& spec, RngStream& rng) {
    spec.validate();
    const auto N = static_cast<Eigen::Index>(spec.N), d = static_cast<Eigen::Index>(spec.d);
    Beamformers V(spec.num_users());
    for (std::size_t q = 0; q < V.size(); ++q) {
        CMatrix G(N, N);
        for (auto& v : G.reshaped()) {
            const double re = rng.normal(), im = rng.normal();
            v = Complex(re, im);
        }
        const CMatrix Qm = Eigen::HouseholderQR<CMatrix>(G).householderQ() * CMatrix::Identity(N, N);
        const std::size_t k = spec.cell_of(q);
        const double scale = std::sqrt(spec.power[k] / static_cast<double>(spec.users_per_cell[k] * spec.d));
        V[q] = scale * Qm.leftCols(d);
    }
    return V;
}

// =======================================================================
// Engine binding: iterate = [U block, V block], complex entries packed as (re, im).
// =======================================================================

class WmmseLayout {
public:
    explicit WmmseLayout(const NetworkSpec& spec)
        : Q_(spec.num_users()), N_(static_cast<Eigen::Index>(spec.N)), d_(static_cast<Eigen::Index>(spec.d)),
          structure_(make_block_structure({2 * Q_ * spec.N * spec.d, 2 * Q_ * spec.N * spec.d})) {}

    const std::shared_ptr<const BlockStructure>& structure() const { return structure_; }

    Vector pack_block(const Beamformers& M) const {
        const Eigen::Index per = N_ * d_;
        Vector v(2 * per * static_cast<Eigen::Index>(Q_));
        for (std::size_t q = 0; q < Q_; ++q) {
            const Eigen::Index base = 2 * per * static_cast<Eigen::Index>(q);
            v.segment(base, per) = M[q].real().reshaped();
            v.segment(base + per, per) = M[q].imag().reshaped();
        }
        return v;
    }

    Beamformers unpack_block(const Eigen::Ref<const Vector>& v) const {
        const Eigen::Index per = N_ * d_;
        Beamformers out(Q_);
        for (std::size_t q = 0; q < Q_; ++q) {
            const Eigen::Index base = 2 * per * static_cast<Eigen::Index>(q);
            out[q].resize(N_, d_);
            out[q].real() = v.segment(base, per).reshaped(N_, d_);
            out[q].imag() = v.segment(base + per, per).reshaped(N_, d_);
        }
        return out;
    }

    Point pack(const Beamformers& U, const Beamformers& V) const {
        Vector v(static_cast<Eigen::Index>(structure_->total()));
        const Eigen::Index half = v.size() / 2;
        v.head(half) = pack_block(U);
        v.tail(half) = pack_block(V);
        return Point(structure_, std::move(v));
    }

    Beamformers U(const Point& x) const { return unpack_block(x.block(0)); }
    Beamformers V(const Point& x) const { return unpack_block(x.block(1)); }

private:
    std::size_t Q_;
    Eigen::Index N_, d_;
    std::shared_ptr<const BlockStructure> structure_;
};

/// Transformed objective sum_q log det E_q(U, V).
inline double transformed_objective(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& U,
                                    const Beamformers& V) {
    double s = 0.0;
    for (std::size_t q = 0; q < U.size(); ++q) s += logdet_hpd(mse_matrix(spec, H, V, U[q], q));
    return s;
}

class WmmseObjective {
public:
    WmmseObjective(const NetworkSpec& spec, const ChannelSet& H) : spec_(&spec), H_(&H), layout_(spec) {}
    double value(const Point& x) const { return transformed_objective(*spec_, *H_, layout_.U(x), layout_.V(x)); }

private:
    const NetworkSpec* spec_;
    const ChannelSet* H_;
    WmmseLayout layout_;
};

/// Block 0 (U): the objective itself, minimized by MMSE receivers.
/// Block 1 (V): log det linearized at E(U, V^r), minimized by the weighted-MSE transmitters.
class WmmseSurrogate {
public:
    WmmseSurrogate(const NetworkSpec& spec, const ChannelSet& H) : spec_(&spec), H_(&H), layout_(spec) {}

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t) const {
        const std::size_t i = single(b);
        const Beamformers U = layout_.U(y), Vy = layout_.V(y);
        if (i == 0) return transformed_objective(*spec_, *H_, layout_.unpack_block(xb), Vy);
        const Beamformers V = layout_.unpack_block(xb);
        double s = 0.0;
        for (std::size_t q = 0; q < U.size(); ++q)
            s += logdet_surrogate(mse_matrix(*spec_, *H_, V, U[q], q), mse_matrix(*spec_, *H_, Vy, U[q], q));
        return s;
    }

    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        const std::size_t i = single(b);
        const Beamformers U = layout_.U(y), Vy = layout_.V(y);
        Vector xb;
        if (i == 0) {
            Beamformers Un(U.size());
            for (std::size_t q = 0; q < U.size(); ++q) Un[q] = mmse_receiver(*spec_, *H_, Vy, q);
            xb = layout_.pack_block(Un);
        } else {
            std::vector<CMatrix> W(U.size());
            for (std::size_t q = 0; q < U.size(); ++q) {
                const CMatrix E = mse_matrix(*spec_, *H_, Vy, U[q], q);
                Eigen::LLT<CMatrix> llt(E);
                if (llt.info() != Eigen::Success) throw NumericFailure("MSE matrix is not positive definite");
                W[q] = llt.solve(CMatrix::Identity(E.rows(), E.cols()));
                W[q] = 0.5 * (W[q] + W[q].adjoint());
            }
            xb = layout_.pack_block(update_transmitters(*spec_, *H_, U, W));
        }
        const double v = eval(b, xb, y, r);
        return {std::move(xb), v};
    }

private:
    static std::size_t single(const BlockSet& b) {
        if (b.size() != 1 || b[0] > 1) throw InvalidArgument("wmmse surrogate updates U or V, one at a time");
        return b[0];
    }

    const NetworkSpec* spec_;
    const ChannelSet* H_;
    WmmseLayout layout_;
};

struct WmmseOptions {
    /// Half-steps; each U-step or V-step counts as one iteration.
    std::size_t max_iters = 2000;
    double tol = 1e-10;
    bool record_trace = true;
};

/// Per half-step diagnostics alongside the engine trace.
struct WmmseRecord {
    std::size_t iter = 0;
    long block = 0;
    double objective = 0.0;
    double sum_rate = 0.0;
    double max_power_violation = 0.0;
    /// After a U-step: |sum_q log det E_q^{-1} - sum_rate|.
    std::optional<double> identity_gap;
};

struct WmmseResult {
    TransceiverState state;
    Trace trace;
    std::vector<WmmseRecord> records;
    double sum_rate = 0.0;
};

inline WmmseResult run_wmmse(const NetworkSpec& spec, const ChannelSet& H, const Beamformers& V0,
                             const WmmseOptions& opts = {}) {
    detail::check_shapes(spec, H, V0);
    if (max_power_violation(spec, V0) > kPowerSlack) throw InvalidArgument("initial beamformers violate the power budget");
    const WmmseLayout layout(spec);
    Beamformers U0(V0.size(), CMatrix::Zero(static_cast<Eigen::Index>(spec.N), static_cast<Eigen::Index>(spec.d)));

    WmmseResult out;
    SolveOptions so;
    so.max_iters = opts.max_iters;
    so.tol = opts.tol;
    so.record_trace = opts.record_trace;
    so.observer = [&](const TraceRecord& rec, const Point& x) {
        const Beamformers V = layout.V(x);
        WmmseRecord w;
        w.iter = rec.iter;
        w.block = rec.block;
        w.objective = rec.objective;
        w.sum_rate = sum_rate(spec, H, V);
        w.max_power_violation = max_power_violation(spec, V);
        if (rec.block == 0) w.identity_gap = std::abs(-rec.objective - w.sum_rate);
        if (!opts.record_trace) out.records.clear();
        out.records.push_back(w);
    };
    const WmmseObjective f(spec, H);
    const WmmseSurrogate u(spec, H);
    SolveResult res = run_bsum(f, u, layout.pack(U0, V0), so);
    out.state.U = layout.U(res.x);
    out.state.V = layout.V(res.x);
    out.sum_rate = sum_rate(spec, H, out.state.V);
    out.trace = std::move(res.trace);
    return out;
}

} // namespace bsum::wmmse
