#pragma once

#include <bsum/engine.hpp>
#include <bsum/rng.hpp>

#include <istream>
#include <numbers>

/// EM and block EM for one-dimensional Gaussian mixtures, run as SUM / BSUM on
/// the Jensen upper bound of the negative log-likelihood.
namespace bsum::gmm {

struct GmmParams {
    Vector weights;
    Vector means;
    Vector variances;

    std::size_t components() const { return static_cast<std::size_t>(weights.size()); }

    void validate() const {
        if (weights.size() == 0 || means.size() != weights.size() || variances.size() != weights.size())
            throw InvalidArgument("weights, means and variances need one entry per component");
        if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12)
            throw InvalidArgument("weights must lie on the simplex");
        if (!(variances.array() > 0.0).all()) throw InvalidArgument("variances must be positive");
        if (!means.allFinite()) throw InvalidArgument("means must be finite");
    }
};

enum class EmMode { full, block };

inline EmMode parse_em_mode(const std::string& s) {
    if (s == "full") return EmMode::full;
    if (s == "block") return EmMode::block;
    throw InvalidArgument("em mode must be 'full' or 'block'");
}

inline double log_normal_pdf(double w, double mean, double var) {
    const double d = w - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

/// -ln p(w | theta), computed with log-sum-exp.
inline double negative_log_likelihood(const Vector& data, const GmmParams& p) {
    const auto J = static_cast<Eigen::Index>(p.components());
    double nll = 0.0;
    Vector terms(J);
    for (double w : data) {
        for (Eigen::Index j = 0; j < J; ++j)
            terms[j] = p.weights[j] > 0.0 ? std::log(p.weights[j]) + log_normal_pdf(w, p.means[j], p.variances[j])
                                          : -std::numeric_limits<double>::infinity();
        const double m = terms.maxCoeff();
        if (!std::isfinite(m)) return std::numeric_limits<double>::infinity();
        nll -= m + std::log((terms.array() - m).exp().sum());
    }
    return nll;
}

/// Posterior component probabilities, one row per observation.
inline Matrix responsibilities(const Vector& data, const GmmParams& p) {
    const auto J = static_cast<Eigen::Index>(p.components());
    Matrix g(data.size(), J);
    for (Eigen::Index n = 0; n < data.size(); ++n) {
        for (Eigen::Index j = 0; j < J; ++j)
            g(n, j) = p.weights[j] > 0.0 ? std::log(p.weights[j]) + log_normal_pdf(data[n], p.means[j], p.variances[j])
                                         : -std::numeric_limits<double>::infinity();
        const double m = g.row(n).maxCoeff();
        if (!std::isfinite(m)) throw NumericFailure("observation has zero likelihood under every component");
        g.row(n) = (g.row(n).array() - m).exp();
        g.row(n) /= g.row(n).sum();
    }
    return g;
}

/// Iterate layout: (pi, mu, s), one block in full mode and three blocks in block mode.
class GmmLayout {
public:
    GmmLayout(std::size_t J, EmMode mode)
        : J_(J), structure_(mode == EmMode::full ? make_block_structure({3 * J}) : make_block_structure({J, J, J})) {}

    const std::shared_ptr<const BlockStructure>& structure() const { return structure_; }
    std::size_t components() const { return J_; }

    Point pack(const GmmParams& p) const {
        const auto J = static_cast<Eigen::Index>(J_);
        Vector v(3 * J);
        v << p.weights, p.means, p.variances;
        return Point(structure_, std::move(v));
    }

    GmmParams unpack(const Vector& v) const {
        const auto J = static_cast<Eigen::Index>(J_);
        return {v.segment(0, J), v.segment(J, J), v.segment(2 * J, J)};
    }
    GmmParams unpack(const Point& x) const { return unpack(x.values()); }

private:
    std::size_t J_;
    std::shared_ptr<const BlockStructure> structure_;
};

inline constexpr double kCollapseMass = 1e-12;

class GmmObjective {
public:
    GmmObjective(const Vector& data, GmmLayout layout) : data_(&data), layout_(std::move(layout)) {}
    double value(const Point& x) const { return negative_log_likelihood(*data_, layout_.unpack(x)); }

private:
    const Vector* data_;
    GmmLayout layout_;
};

/// u(theta, theta^r) = -sum_n sum_j g_nj ln(pi_j N(w_n; mu_j, s_j)) + sum_n sum_j g_nj ln g_nj,
/// g the responsibilities at theta^r. Tight at theta = theta^r by Jensen.
class JensenSurrogate {
public:
    JensenSurrogate(const Vector& data, GmmLayout layout, double s_floor)
        : data_(&data), layout_(std::move(layout)), s_floor_(s_floor) {
        if (!(s_floor > 0.0)) throw InvalidArgument("variance floor must be positive");
    }

    double eval(const BlockSet& b, const Vector& xb, const Point& y, std::size_t) const {
        const Matrix g = responsibilities(*data_, layout_.unpack(y));
        const GmmParams p = layout_.unpack(y.with_group(b, xb));
        double u = 0.0;
        for (Eigen::Index n = 0; n < g.rows(); ++n)
            for (Eigen::Index j = 0; j < g.cols(); ++j) {
                const double gnj = g(n, j);
                if (gnj == 0.0) continue;
                if (!(p.weights[j] > 0.0) || !(p.variances[j] > 0.0)) return std::numeric_limits<double>::infinity();
                u -= gnj * (std::log(p.weights[j]) + log_normal_pdf((*data_)[n], p.means[j], p.variances[j]));
                u += gnj * std::log(gnj);
            }
        return u;
    }

    BlockMinimum minimize(const BlockSet& b, const Point& y, std::size_t r) const {
        const GmmParams cur = layout_.unpack(y);
        const Matrix g = responsibilities(*data_, cur);
        const Vector mass = g.colwise().sum().transpose();
        for (Eigen::Index j = 0; j < mass.size(); ++j)
            if (mass[j] < kCollapseMass)
                throw ComponentCollapse("component " + std::to_string(j) + " lost all responsibility mass");
        const double n = static_cast<double>(data_->size());
        const Vector new_weights = mass / n;
        const Vector new_means = (g.transpose() * *data_).cwiseQuotient(mass);
        auto variances_about = [&](const Vector& mu) {
            Vector s(mu.size());
            for (Eigen::Index j = 0; j < mu.size(); ++j)
                s[j] = std::max(s_floor_, (g.col(j).array() * (data_->array() - mu[j]).square()).sum() / mass[j]);
            return s;
        };

        GmmParams next = cur;
        const std::size_t blocks = y.num_blocks();
        for (std::size_t i : b) {
            if (blocks == 1) {
                next.weights = new_weights;
                next.means = new_means;
                next.variances = variances_about(new_means);
            } else if (i == 0) {
                next.weights = new_weights;
            } else if (i == 1) {
                next.means = new_means;
            } else {
                next.variances = variances_about(cur.means);
            }
        }
        Vector xb = layout_.pack(next).gather(b);
        const double v = eval(b, xb, y, r);
        return {std::move(xb), v};
    }

private:
    const Vector* data_;
    GmmLayout layout_;
    double s_floor_;
};

inline double sample_variance(const Vector& data) {
    if (data.size() == 0) throw InvalidArgument("empty data");
    const double mean = data.mean();
    return (data.array() - mean).square().sum() / static_cast<double>(data.size());
}

/// 1e-6 times the data variance.
inline double default_variance_floor(const Vector& data) {
    const double v = sample_variance(data);
    return v > 0.0 ? 1e-6 * v : 1e-12;
}

struct EmOptions {
    std::size_t max_iters = 1000;
    double tol = 1e-12;
    std::optional<double> s_floor;
    bool record_trace = true;
};

struct EmResult {
    GmmParams params;
    /// Objective is -ln p(w | theta); kFlagClamped marks iterates with a variance at the floor.
    Trace trace;
};

inline EmResult em_gmm(const Vector& data, std::size_t J, const GmmParams& theta0, EmMode mode,
                       const EmOptions& opts = {}) {
    if (J == 0) throw InvalidArgument("need at least one component");
    if (static_cast<std::size_t>(data.size()) < J) throw InvalidArgument("need at least J observations");
    if (!data.allFinite()) throw InvalidArgument("observations must be finite");
    theta0.validate();
    if (theta0.components() != J) throw InvalidArgument("theta0 has the wrong number of components");
    const double s_floor = opts.s_floor.value_or(default_variance_floor(data));

    const GmmLayout layout(J, mode);
    const GmmObjective f(data, layout);
    const JensenSurrogate u(data, layout, s_floor);
    std::vector<std::size_t> clamped;
    SolveOptions so;
    so.max_iters = opts.max_iters;
    so.tol = opts.tol;
    so.record_trace = opts.record_trace;
    so.observer = [&](const TraceRecord& rec, const Point& x) {
        if ((layout.unpack(x).variances.array() <= s_floor).any()) clamped.push_back(rec.iter);
    };
    SolveResult res = mode == EmMode::full ? run_sum(f, u, layout.pack(theta0), so)
                                           : run_bsum(f, u, layout.pack(theta0), so);
    for (auto& rec : res.trace.records)
        if (std::binary_search(clamped.begin(), clamped.end(), rec.iter)) rec.flags |= kFlagClamped;
    return {layout.unpack(res.x), std::move(res.trace)};
}

/// Equal weights, means at J distinct random observations, variances at the data variance.
inline GmmParams init_params(const Vector& data, std::size_t J, RngStream& rng) {
    if (static_cast<std::size_t>(data.size()) < J || J == 0) throw InvalidArgument("need at least J observations");
    const auto Jn = static_cast<Eigen::Index>(J);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<Eigen::Index>(k);
    // Partial Fisher-Yates.
    for (std::size_t k = 0; k < J; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(idx.size() - k));
        std::swap(idx[k], idx[std::min(pick, idx.size() - 1)]);
    }
    GmmParams p;
    p.weights = Vector::Constant(Jn, 1.0 / static_cast<double>(J));
    p.means.resize(Jn);
    for (Eigen::Index j = 0; j < Jn; ++j) p.means[j] = data[idx[static_cast<std::size_t>(j)]];
    p.variances = Vector::Constant(Jn, std::max(sample_variance(data), default_variance_floor(data)));
    return p;
}

/// One observation per line; blank lines are skipped.
inline Vector read_observations(std::istream& in) {
    std::vector<double> values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(line, &used);
            if (line.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("trailing");
            values.push_back(v);
        } catch (const std::exception&) {
            throw InvalidArgument("observation file line " + std::to_string(lineno) + ": not a number");
        }
    }
    return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

} // namespace bsum::gmm
