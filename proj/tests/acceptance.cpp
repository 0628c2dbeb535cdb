// Acceptance gate: runs each criterion and prints one PASS/FAIL line.
//
//   acceptance [--only N ...] [--expect-fail N ...]
//
// Exit status is 0 when the set of failing criteria equals the expected-fail set.

#include <bsum/catalog.hpp>
#include <bsum/classic.hpp>
#include <bsum/experiment.hpp>
#include <bsum/gmm.hpp>
#include <bsum/tensor.hpp>
#include <bsum/verify.hpp>
#include <bsum/wmmse.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>

using namespace bsum;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Point scalar_point(double v) { return Point(make_block_structure({1}), Vector::Constant(1, v)); }

/// Traces gathered by the other criteria, audited together.
struct Audit {
    std::vector<std::pair<std::string, Trace>> traces;
    void add(std::string name, const Trace& t) { traces.emplace_back(std::move(name), t); }
};

Audit g_audit;

// ---------------------------------------------------------------------------

Outcome surrogate_validity() {
    const catalog::CheckSettings cs; // 1000 samples, 1e-10 / 1e-9 / 1e-4
    std::size_t total = 0, bad = 0;
    std::string worst;
    for (const auto& name : catalog::surrogate_names()) {
        RngStream rng(0);
        for (const auto& r : catalog::verify_surrogate(name, rng, cs)) {
            ++total;
            if (!r.passed()) {
                ++bad;
                worst += " " + name + "/" + r.check;
            }
        }
    }
    return {bad == 0, fmt("%zu checks over %zu surrogates, %zu failed%s", total, catalog::surrogate_names().size(),
                          bad, worst.c_str())};
}

// ---------------------------------------------------------------------------

Outcome swamp_benchmark() {
    tensor::CpOptions o;
    o.record_trace = false;
    auto run_modes = [&](double theta, std::size_t seeds) {
        const auto t = tensor::build_swamp_instance(theta);
        std::vector<experiment::RunOutcome> runs;
        for (const char* m : {"als", "const_prox", "dim_prox", "mbi", "misum"})
            for (std::uint64_t s = 0; s < seeds; ++s) {
                RngStream rng(s);
                const auto res = tensor::run_cp(t, 3, tensor::parse_cp_mode(m), o, rng);
                runs.push_back({m, s, res.iterations, res.reached, std::nullopt});
            }
        return experiment::summarize(runs);
    };
    auto by = [](const std::vector<experiment::ModeSummary>& rows, const std::string& m) {
        return *std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.mode == m; });
    };

    // Informational: a wider angle where every mode leaves the swamp.
    const auto wide = run_modes(std::numbers::pi / 4, 20);
    std::cout << "      info theta=pi/4, 20 seeds, medians:";
    for (const auto& r : wide) std::cout << ' ' << r.mode << '=' << r.median;
    std::cout << '\n';

    const auto rows = run_modes(tensor::kDefaultSwampTheta, 100);
    std::cout << experiment::summary_table(rows);
    const auto als = by(rows, "als"), cp = by(rows, "const_prox"), dp = by(rows, "dim_prox"), mbi = by(rows, "mbi");
    const bool order = dp.median < cp.median && cp.median < als.median;
    const bool mean_ok = dp.mean >= 10.0 && dp.mean <= 500.0;
    const bool als_mbi = als.median < mbi.median;
    return {order && mean_ok && als_mbi,
            fmt("theta=pi/36 medians dim_prox=%.1f const_prox=%.1f als=%.1f mbi=%.1f; dim_prox mean=%.1f "
                "(%zu/100 reached); ordering %s, mean %s, als<mbi %s",
                dp.median, cp.median, als.median, mbi.median, dp.mean, dp.converged, order ? "ok" : "violated",
                mean_ok ? "ok" : "out of range", als_mbi ? "ok" : "violated")};
}

// ---------------------------------------------------------------------------

Outcome cccp_quartic() {
    const auto dc = quartic_dc_toy();
    SolveOptions o;
    o.max_iters = 60;
    o.tol = 1e-300;
    std::vector<double> xs;
    o.observer = [&](const TraceRecord&, const Point& x) { xs.push_back(x[0]); };
    const auto res = classic::cccp_solve(dc, scalar_point(8.0), o);
    g_audit.add("cccp x0=8", res.trace);
    double oracle = 8.0, max_dev = 0.0;
    for (double x : xs) {
        oracle = std::cbrt(oracle);
        max_dev = std::max(max_dev, std::abs(x - oracle));
    }
    const double err = std::abs(res.x[0] - 1.0);
    for (double x0 : {-3.0, 0.5}) g_audit.add("cccp x0=" + std::to_string(x0), classic::cccp_solve(dc, scalar_point(x0), o).trace);
    return {err <= 1e-8 && max_dev <= 1e-12 && xs.size() <= 60,
            fmt("%zu iterations, |x-1|=%.2e, max deviation from cube-root oracle %.2e", xs.size(), err, max_dev)};
}

// ---------------------------------------------------------------------------

/// Solves 0 in lambda sign(x) + x - a by checking each branch of the subdifferential.
double lasso_oracle(double lambda, double a) {
    if (a - lambda > 0.0) return a - lambda;
    if (a + lambda < 0.0) return a + lambda;
    return 0.0;
}

Outcome forward_backward_lasso() {
    FunctionObjective f2{[](const Point& x) { return 0.5 * (x[0] - 2) * (x[0] - 2); },
                         [](const Point& x) -> Vector { return Vector::Constant(1, x[0] - 2); }};
    double worst = 0.0;
    for (double x0 : {0.0, -5.0, 7.0}) {
        const auto res = classic::forward_backward_solve(ProxFunction::l1(), f2, 1.0, 1.0, scalar_point(x0));
        g_audit.add("forward-backward x0=" + std::to_string(x0), res.trace);
        worst = std::max(worst, std::abs(res.x[0] - lasso_oracle(1.0, 2.0)));
    }
    return {worst <= 1e-10, fmt("oracle x*=%.1f, worst |x-x*|=%.2e over 3 starts", lasso_oracle(1.0, 2.0), worst)};
}

// ---------------------------------------------------------------------------

Outcome wmmse_network() {
    auto spec = wmmse::NetworkSpec::uniform(2, 1, 2, 1, 1.0, 1.0);
    RngStream rng(0);
    const auto H = wmmse::gen_channels(spec, rng);
    const auto res = wmmse::run_wmmse(spec, H, wmmse::init_transmitters(spec, rng));
    g_audit.add("wmmse K=2 seed 0", res.trace);
    const bool monotone = verify::audit_trace(res.trace, 1e-12).passed();
    double power = 0.0, gap = 0.0;
    std::size_t usteps = 0;
    for (const auto& r : res.records) {
        power = std::max(power, r.max_power_violation);
        if (r.identity_gap) {
            ++usteps;
            gap = std::max(gap, *r.identity_gap);
        }
    }
    const bool feasible = power <= wmmse::kPowerSlack;

    // K = 1: brute-force power split over the two eigenmodes of H^H H.
    double oracle_gap = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto one = wmmse::NetworkSpec::uniform(1, 1, 2, 1, 1.0, 1.0);
        RngStream r1(seed);
        const auto H1 = wmmse::gen_channels(one, r1);
        const auto res1 = wmmse::run_wmmse(one, H1, wmmse::init_transmitters(one, r1));
        g_audit.add("wmmse K=1 seed " + std::to_string(seed), res1.trace);
        const wmmse::CMatrix M = H1[0][0].adjoint() * H1[0][0];
        const double a = M(0, 0).real(), c = M(1, 1).real(), b2 = std::norm(M(0, 1));
        const double l1 = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b2);
        const double l2 = 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + b2);
        double best = 0.0;
        for (int g = 0; g <= 1000; ++g) {
            const double p = g * 1e-3;
            best = std::max(best, std::log(1.0 + p * l1 + (1.0 - p) * l2));
        }
        oracle_gap = std::max(oracle_gap, std::abs(res1.sum_rate - best));
    }
    return {monotone && feasible && gap <= 1e-9 && usteps > 0 && oracle_gap <= 1e-3,
            fmt("K=2: %zu iterations, rate %.6f nats, monotone %s, max power violation %.1e, "
                "max identity gap %.1e over %zu U-steps; K=1 worst grid gap %.1e",
                res.trace.iterations, res.sum_rate, monotone ? "yes" : "no", power, gap, usteps, oracle_gap)};
}

// ---------------------------------------------------------------------------

Outcome em_mixture() {
    const Vector data = experiment::cluster_data({-5.0, 5.0}, 1.0, 500, 0);
    const double m0 = data.head(500).mean(), m1 = data.tail(500).mean();
    gmm::EmOptions o;
    o.max_iters = 5000;
    o.tol = 1e-15;
    double nll[2] = {0, 0}, mean_err = 0.0;
    bool monotone = true;
    for (int k = 0; k < 2; ++k) {
        const auto mode = k == 0 ? gmm::EmMode::full : gmm::EmMode::block;
        RngStream rng(0);
        const auto theta0 = gmm::init_params(data, 2, rng);
        const auto res = gmm::em_gmm(data, 2, theta0, mode, o);
        g_audit.add(k == 0 ? "em full" : "em block", res.trace);
        monotone = monotone && verify::audit_trace(res.trace, 1e-12).passed();
        nll[k] = res.trace.final_objective();
        Vector mu = res.params.means;
        std::sort(mu.begin(), mu.end());
        mean_err = std::max({mean_err, std::abs(mu[0] - m0), std::abs(mu[1] - m1)});
    }
    for (std::uint64_t seed = 1; seed < 3; ++seed) {
        RngStream rng(seed);
        g_audit.add("em block seed " + std::to_string(seed),
                    gmm::em_gmm(data, 2, gmm::init_params(data, 2, rng), gmm::EmMode::block, o).trace);
    }
    const double dn = std::abs(nll[0] - nll[1]);
    return {monotone && mean_err <= 0.1 && dn <= 1e-6,
            fmt("monotone %s, worst mean error %.1e, NLL full=%.10f block=%.10f (diff %.1e)", monotone ? "yes" : "no",
                mean_err, nll[0], nll[1], dn)};
}

// ---------------------------------------------------------------------------

Outcome alternating_proximal() {
    const QuadraticObjective f{Matrix::Constant(2, 2, 2.0), Vector::Constant(2, 2.0), 1.0}; // (x1 + x2 - 1)^2
    const Point x0(make_block_structure({1, 1}), Vector::Zero(2));
    SolveOptions o;
    o.max_iters = 1000;
    o.target = 1e-12;
    const auto res = classic::alternating_proximal_solve(f, quadratic_block_solver(f), x0, 1.0, o);
    g_audit.add("alternating proximal", res.trace);
    const double fv = f.value(res.x);
    const QuadraticObjective sq{Matrix::Constant(1, 1, 2.0), Vector::Zero(1), 0.0};
    SolveOptions po;
    po.max_iters = 100;
    g_audit.add("proximal point x^2", classic::proximal_point_solve(sq, quadratic_block_solver(sq), scalar_point(3.0), 1.0, po).trace);
    return {fv <= 1e-12, fmt("f=%.2e after %zu iterations at (%.6f, %.6f)", fv, res.trace.iterations, res.x[0], res.x[1])};
}

// ---------------------------------------------------------------------------

Outcome bsca_quartic() {
    const FunctionObjective f{
        [](const Point& x) { return std::pow(x[0] - 1, 4) + (x[1] + 2) * (x[1] + 2) + x[0] * x[1] / 10; },
        [](const Point& x) -> Vector {
            return (Vector(2) << 4 * std::pow(x[0] - 1, 3) + x[1] / 10, 2 * (x[1] + 2) + x[0] / 10).finished();
        }};
    const QuadraticApprox h(f, 0.25);
    const Point x0(make_block_structure({1, 1}), (Vector(2) << 3.0, 3.0).finished());
    SolveOptions o;
    o.max_iters = 200000;
    // The stall rule compares objective changes, which shrink like |grad|^2; keep it well below 1e-12.
    o.tol = 1e-14;
    std::size_t steps = 0, violations = 0;
    Point prev = x0;
    o.observer = [&](const TraceRecord& rec, const Point& x) {
        if (rec.step_size && *rec.step_size > 0.0) {
            // Recompute the direction and the sufficient-decrease test from scratch.
            const auto i = static_cast<std::size_t>(rec.block);
            Point d = Point::zeros(prev.structure_ptr());
            d.scatter({i}, h.argmin({i}, prev, rec.iter) - prev.gather({i}));
            const double fprime = f.gradient(prev).dot(d.values());
            const double alpha = *rec.step_size;
            ++steps;
            if (!(f.value(prev) - f.value(x) >= -o.armijo.sigma * alpha * fprime)) ++violations;
        }
        prev = x;
    };
    const auto res = run_bsca(f, h, x0, o);
    g_audit.add("bsca quartic", res.trace);
    const double gnorm = f.gradient(res.x).norm();
    return {violations == 0 && steps > 0 && gnorm <= 1e-6,
            fmt("%zu accepted steps, %zu Armijo violations, final |grad|=%.2e (%s)", steps, violations, gnorm,
                to_string(res.trace.status))};
}

// ---------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism() {
    const auto root = std::filesystem::temp_directory_path() / "bsum_acceptance_det";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
    const std::vector<std::pair<std::string, std::string>> configs = {
        {"cp", R"({"experiment": "cp", "seeds": [0, 1], "params": {"theta": 0.7853981633974483, "max_iters": 500}})"},
        {"wmmse", R"({"experiment": "wmmse", "seeds": [0, 1], "params": {"K": 3, "N": 2}})"},
        {"em", R"({"experiment": "em", "seeds": [0, 1], "params": {"per_cluster": 200}})"},
        {"toy", R"({"experiment": "toy", "seeds": [0, 1, 2]})"},
    };
    std::size_t files = 0;
    std::string mismatch;
    for (const auto& [name, text] : configs) {
        const auto cfg = root / (name + ".json");
        std::ofstream(cfg) << text;
        for (int pass = 0; pass < 2; ++pass) {
            const auto out = root / (name + std::to_string(pass));
            const std::string cmd = std::string(BSUM_CLI_PATH) + " " + name + " --config " + cfg.string() +
                                    " --out " + out.string() + " > /dev/null";
            if (std::system(cmd.c_str()) != 0) return {false, "cli failed: " + cmd};
        }
        for (const auto& e : std::filesystem::directory_iterator(root / (name + "0"))) {
            if (e.path().extension() != ".csv") continue;
            ++files;
            const auto other = root / (name + "1") / e.path().filename();
            if (slurp(e.path()) != slurp(other)) mismatch += " " + e.path().filename().string();
        }
    }
    return {mismatch.empty() && files > 0, fmt("%zu CSV files compared across two CLI runs%s%s", files,
                                               mismatch.empty() ? "" : ", differing:", mismatch.c_str())};
}

// ---------------------------------------------------------------------------

Outcome monotone_descent() {
    // Its own instances, so the criterion holds even when run alone; the other criteria add more.
    tensor::CpOptions o;
    o.max_iters = 300;
    const auto t = tensor::build_swamp_instance(std::numbers::pi / 4);
    for (std::uint64_t seed : {7, 8, 9})
        for (const char* m : {"als", "const_prox", "dim_prox", "mbi", "misum"}) {
            RngStream rng(seed);
            g_audit.add(std::string("cp ") + m + " seed " + std::to_string(seed),
                        tensor::run_cp(t, 3, tensor::parse_cp_mode(m), o, rng).trace);
        }
    const auto dc = quartic_dc_toy();
    SolveOptions so;
    so.max_iters = 200;
    for (double a : {2.0, -0.5, 3.0}) {
        const Point x3(make_block_structure({1, 1, 1}), (Vector(3) << a, -a / 2, a + 1).finished());
        g_audit.add("cccp block mode " + std::to_string(a), classic::cccp_solve(dc, x3, so, true).trace);
    }
    const Vector data = experiment::cluster_data({-2.0, 0.0, 3.0}, 1.0, 100, 5);
    for (std::uint64_t seed : {3, 4}) {
        RngStream rng(seed);
        g_audit.add("em full 3 clusters seed " + std::to_string(seed),
                    gmm::em_gmm(data, 3, gmm::init_params(data, 3, rng), gmm::EmMode::full).trace);
    }
    for (std::uint64_t seed : {0, 1, 2}) {
        const auto spec = wmmse::NetworkSpec::uniform(3, 2, 3, 1, 0.5, 2.0);
        RngStream rng(seed);
        const auto H = wmmse::gen_channels(spec, rng);
        g_audit.add("wmmse K=3 seed " + std::to_string(seed),
                    wmmse::run_wmmse(spec, H, wmmse::init_transmitters(spec, rng)).trace);
    }

    std::size_t bad = 0;
    std::string which;
    for (const auto& [name, t] : g_audit.traces)
        if (!verify::audit_trace(t, 1e-12).passed()) {
            ++bad;
            which += " [" + name + "]";
        }
    return {bad == 0 && g_audit.traces.size() >= 20,
            fmt("%zu traces audited at slack 1e-12, %zu with ascent%s", g_audit.traces.size(), bad, which.c_str())};
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> only, expect_fail;
    for (int a = 1; a < argc; ++a) {
        const std::string arg = argv[a];
        if ((arg == "--only" || arg == "--expect-fail") && a + 1 < argc)
            (arg == "--only" ? only : expect_fail).insert(std::stoi(argv[++a]));
        else {
            std::cerr << "usage: acceptance [--only N]... [--expect-fail N]...\n";
            return 2;
        }
    }

    // Criterion 2 audits traces produced by the others, so it runs last.
    const std::vector<std::pair<int, std::pair<const char*, Outcome (*)()>>> criteria = {
        {1, {"surrogate validity suite", surrogate_validity}},
        {3, {"CP swamp benchmark", swamp_benchmark}},
        {4, {"CCCP quartic toy", cccp_quartic}},
        {5, {"forward-backward 1-D lasso", forward_backward_lasso}},
        {6, {"WMMSE small network", wmmse_network}},
        {7, {"EM / block EM mixture", em_mixture}},
        {8, {"alternating proximal", alternating_proximal}},
        {9, {"BSCA quartic with Armijo", bsca_quartic}},
        {10, {"CLI determinism", cli_determinism}},
        {2, {"monotone descent audit", monotone_descent}},
    };
    std::map<int, std::string> lines;
    std::set<int> failed;
    for (const auto& [id, c] : criteria) {
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = c.second();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!r.pass) failed.insert(id);
        lines[id] = fmt("%s %2d  %-28s %7.2fs  %s", r.pass ? "PASS" : "FAIL", id, c.first, secs, r.detail.c_str());
        std::cout << "  .. " << lines[id] << std::endl;
    }
    std::cout << "\nacceptance summary\n";
    for (const auto& [id, line] : lines) std::cout << line << '\n';
    std::cout << failed.size() << " of " << lines.size() << " criteria failed\n";

    std::set<int> expected;
    for (int id : expect_fail)
        if (lines.count(id)) expected.insert(id);
    for (int id : failed)
        if (!expected.count(id)) return 1;
    for (int id : expected)
        if (!failed.count(id)) std::cout << "note: criterion " << id << " was expected to fail but passed\n";
    if (!expected.empty()) std::cout << "failures match the expected set\n";
    return 0;
}
