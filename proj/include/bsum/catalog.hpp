#pragma once

#include <bsum/gmm.hpp>
#include <bsum/surrogates.hpp>
#include <bsum/verify.hpp>
#include <bsum/wmmse.hpp>

/// Canned instances of every shipped surrogate, run through the verifier.
namespace bsum::catalog {

inline const std::vector<std::string>& surrogate_names() {
    static const std::vector<std::string> names = {"proximal", "dc",       "lipschitz",
                                                   "logdet",   "quadratic_approx", "jensen"};
    return names;
}

struct CheckSettings {
    std::size_t n_samples = 1000;
    double tightness_tol = 1e-10;
    double upper_bound_tol = 1e-9;
    double first_order_tol = 1e-4;
};

namespace detail {

inline std::vector<Vector> unit_directions(const std::vector<Point>& samples, RngStream& rng) {
    std::vector<Vector> out;
    out.reserve(samples.size());
    for (const auto& p : samples) {
        Vector d(p.values().size());
        for (auto& v : d) v = rng.normal();
        out.push_back(d / d.norm());
    }
    return out;
}

template <class U, Objective F>
std::vector<verify::Report> standard_checks(const U& u, const F& f, const verify::Sampler& sampler, RngStream& rng,
                                            const CheckSettings& cs, std::function<double(const Point&)> common = {}) {
    std::vector<Point> samples;
    samples.reserve(cs.n_samples);
    for (std::size_t s = 0; s < cs.n_samples; ++s) samples.push_back(sampler(rng));
    const auto dirs = unit_directions(samples, rng);
    std::vector<verify::Report> out;
    out.push_back(verify::check_tightness(u, f, samples, cs.tightness_tol));
    out.push_back(verify::check_upper_bound(u, f, sampler, rng, cs.n_samples, cs.upper_bound_tol));
    if (common)
        out.push_back(verify::check_first_order_match_composite(u, f, common, samples, dirs, cs.first_order_tol));
    else
        out.push_back(verify::check_first_order_match(u, f, samples, dirs, cs.first_order_tol));
    return out;
}

inline Matrix random_spd(RngStream& rng, Eigen::Index n, double shift) {
    Matrix G(n, n);
    for (auto& v : G.reshaped()) v = rng.normal();
    return G * G.transpose() / static_cast<double>(n) + shift * Matrix::Identity(n, n);
}

} // namespace detail

/// Runs tightness, upper bound and first-order checks on the named surrogate.
/// The instance is drawn from `rng`, then the samples.
inline std::vector<verify::Report> verify_surrogate(const std::string& name, RngStream& rng,
                                                    const CheckSettings& cs = {}) {
    if (name == "proximal") {
        // f = x^T Q x / 2 - b^T x + sum cos(x_k) on blocks [1, 2, 1].
        auto s = make_block_structure({1, 2, 1});
        const Matrix Q = detail::random_spd(rng, 4, 1.0);
        Vector b(4);
        for (auto& v : b) v = rng.normal();
        FunctionObjective f{[Q, b](const Point& x) {
                                const Vector& v = x.values();
                                return 0.5 * v.dot(Q * v) - b.dot(v) + v.array().cos().sum();
                            },
                            {}};
        const InnerSolver unused = [](const BlockSet& g, const Point& y, double) { return y.gather(g); };
        const ProximalSurrogate u(f, unused, 0.7);
        return detail::standard_checks(u, f, verify::box_sampler(s), rng, cs);
    }
    if (name == "dc") {
        const auto dc = quartic_dc_toy();
        return detail::standard_checks(dc, dc, verify::box_sampler(make_block_structure({1, 1, 1})), rng, cs);
    }
    if (name == "lipschitz") {
        // f = ||x||_1 + ||A x - c||^2 / 2 with gamma_i = 1 / beta_i on blocks [2, 1].
        auto s = make_block_structure({2, 1});
        Matrix A(4, 3);
        for (auto& v : A.reshaped()) v = rng.normal();
        Vector c(4);
        for (auto& v : c) v = rng.normal();
        FunctionObjective f2{[A, c](const Point& x) { return 0.5 * (A * x.values() - c).squaredNorm(); },
                             [A, c](const Point& x) -> Vector { return A.transpose() * (A * x.values() - c); }};
        std::vector<double> beta, gamma;
        for (std::size_t i = 0; i < s->num_blocks(); ++i) {
            const auto cols = A.middleCols(static_cast<Eigen::Index>(s->offset(i)), static_cast<Eigen::Index>(s->dim(i)));
            const Matrix G = cols.transpose() * cols;
            beta.push_back(Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues().maxCoeff());
            gamma.push_back(1.0 / beta.back());
        }
        const LipschitzQuadraticSurrogate u({ProxFunction::l1(), ProxFunction::l1()}, f2, beta, gamma);
        return detail::standard_checks(u, u, verify::box_sampler(s), rng, cs,
                                       [](const Point& x) { return x.values().lpNorm<1>(); });
    }
    if (name == "logdet") {
        const auto spec = wmmse::NetworkSpec::uniform(2, 1, 2, 1, 1.0, 1.0);
        const auto H = wmmse::gen_channels(spec, rng);
        const wmmse::WmmseLayout layout(spec);
        const wmmse::WmmseObjective f(spec, H);
        const wmmse::WmmseSurrogate u(spec, H);
        return detail::standard_checks(u, f, verify::box_sampler(layout.structure(), -1.0, 1.0), rng, cs);
    }
    if (name == "quadratic_approx") {
        // f = x^T Q x / 2 + sum log(1 + x_k^2): block gradients are (lambda_max(Q_ii) + 2)-Lipschitz.
        auto s = make_block_structure({2, 2});
        const Matrix Q = detail::random_spd(rng, 4, 0.5);
        FunctionObjective f{[Q](const Point& x) {
                                const Vector& v = x.values();
                                return 0.5 * v.dot(Q * v) + (1.0 + v.array().square()).log().sum();
                            },
                            [Q](const Point& x) -> Vector {
                                const Vector& v = x.values();
                                return Q * v + (2.0 * v.array() / (1.0 + v.array().square())).matrix();
                            }};
        double L = 0.0;
        for (std::size_t i = 0; i < 2; ++i) {
            const auto o = static_cast<Eigen::Index>(s->offset(i));
            const Matrix Qii = Q.block(o, o, 2, 2);
            L = std::max(L, Eigen::SelfAdjointEigenSolver<Matrix>(Qii).eigenvalues().maxCoeff() + 2.0);
        }
        const QuadraticApprox h(f, 1.0 / L);
        return detail::standard_checks(h, f, verify::box_sampler(s), rng, cs);
    }
    if (name == "jensen") {
        Vector data(200);
        for (Eigen::Index n = 0; n < data.size(); ++n) data[n] = (n % 2 == 0 ? -3.0 : 3.0) + rng.normal();
        const gmm::GmmLayout layout(2, gmm::EmMode::block);
        const gmm::GmmObjective f(data, layout);
        const gmm::JensenSurrogate u(data, layout, 1e-6);
        verify::Sampler sampler = [&layout](RngStream& r) {
            const double a = r.uniform(0.05, 0.95);
            gmm::GmmParams p;
            p.weights = (Vector(2) << a, 1.0 - a).finished();
            p.means = (Vector(2) << r.uniform(-5, 5), r.uniform(-5, 5)).finished();
            p.variances = (Vector(2) << r.uniform(0.3, 4), r.uniform(0.3, 4)).finished();
            return layout.pack(p);
        };
        return detail::standard_checks(u, f, sampler, rng, cs);
    }
    throw InvalidArgument("unknown surrogate '" + name + "'");
}

} // namespace bsum::catalog
