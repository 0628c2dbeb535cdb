#include <bsum/engine.hpp>
#include <bsum/rng.hpp>
#include <bsum/surrogates.hpp>
#include <bsum/verify.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace bsum;

namespace {

Point scalar_point(double v) { return Point(make_block_structure({1}), Vector::Constant(1, v)); }

QuadraticObjective square() { return {Matrix::Constant(1, 1, 2.0), Vector::Zero(1), 0.0}; }

// f = sum_i w_i (x_i - a_i)^2 over scalar blocks.
QuadraticObjective weighted_separable(const Vector& w, const Vector& a) {
    Matrix Q = Matrix::Zero(w.size(), w.size());
    Q.diagonal() = 2.0 * w;
    return {Q, 2.0 * w.cwiseProduct(a), w.dot(a.cwiseProduct(a))};
}

// Random strictly convex quadratic on `n` scalar blocks.
QuadraticObjective random_quadratic(RngStream& rng, Eigen::Index n) {
    Matrix M(n, n);
    for (auto& v : M.reshaped()) v = rng.normal();
    Vector b(n);
    for (auto& v : b) v = rng.normal();
    return {M.transpose() * M + 0.1 * Matrix::Identity(n, n), b, 0.0};
}

} // namespace

// -----------------------------------------------------------------------
// Schedule
// -----------------------------------------------------------------------

TEST(Schedule, CyclicPeriodN) {
    const auto s = Schedule::cyclic();
    EXPECT_EQ(s.next(1, 3), BlockSet{0});
    EXPECT_EQ(s.next(2, 3), BlockSet{1});
    EXPECT_EQ(s.next(3, 3), BlockSet{2});
    EXPECT_EQ(s.next(4, 3), BlockSet{0});
    EXPECT_EQ(s.period(3), 3u);
}

TEST(Schedule, EssentiallyCyclicValid) {
    const auto s = Schedule::essentially_cyclic({{0, 1}, {1, 2}}, 2);
    EXPECT_NO_THROW(s.validate(3));
    EXPECT_EQ(s.next(1, 3), (BlockSet{0, 1}));
    EXPECT_EQ(s.next(2, 3), (BlockSet{1, 2}));
    EXPECT_EQ(s.next(3, 3), (BlockSet{0, 1}));
}

TEST(Schedule, EssentiallyCyclicMissingBlock) {
    const auto s = Schedule::essentially_cyclic({{0}, {1}}, 2);
    EXPECT_THROW(s.validate(3), InvalidSchedule);
}

TEST(Schedule, EssentiallyCyclicWindowTooShort) {
    // Union of groups covers everything, but not within every window of 2.
    const auto s = Schedule::essentially_cyclic({{0}, {1}, {2}}, 2);
    EXPECT_THROW(s.validate(3), InvalidSchedule);
    EXPECT_NO_THROW(Schedule::essentially_cyclic({{0}, {1}, {2}}, 3).validate(3));
}

TEST(Schedule, RejectsBadGroups) {
    EXPECT_THROW(Schedule::essentially_cyclic({{0, 0}, {1}}, 2).validate(2), InvalidSchedule);
    EXPECT_THROW(Schedule::essentially_cyclic({{0}, {}}, 2).validate(1), InvalidSchedule);
    EXPECT_THROW(Schedule::essentially_cyclic({{5}}, 1).validate(2), InvalidSchedule);
    EXPECT_THROW(Schedule::essentially_cyclic({}, 1).validate(2), InvalidSchedule);
}

TEST(Schedule, CoverageProperty) {
    // Every window of period length contains every block.
    RngStream rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.next_u64() % 5;
        const auto s = Schedule::cyclic();
        for (std::size_t start = 1; start < 20; ++start) {
            std::vector<bool> seen(n, false);
            for (std::size_t r = start; r < start + s.period(n); ++r)
                for (auto i : s.next(r, n)) seen[i] = true;
            for (bool b : seen) EXPECT_TRUE(b);
        }
    }
    const auto g = Schedule::essentially_cyclic({{0, 1}, {1, 2}, {3}}, 3);
    g.validate(4);
    for (std::size_t start = 1; start < 20; ++start) {
        std::vector<bool> seen(4, false);
        for (std::size_t r = start; r < start + 3; ++r)
            for (auto i : g.next(r, 4)) seen[i] = true;
        for (bool b : seen) EXPECT_TRUE(b);
    }
}

TEST(Schedule, MaxImprovementSentinel) {
    EXPECT_TRUE(Schedule::max_improvement().next(1, 4).empty());
}

// -----------------------------------------------------------------------
// SUM
// -----------------------------------------------------------------------

TEST(RunSum, ProximalOnSquare) {
    const auto f = square();
    ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
    SolveOptions opts;
    opts.max_iters = 200;
    opts.tol = 1e-14;
    const auto res = run_sum(f, u, scalar_point(2.0), opts);
    ASSERT_GE(res.trace.records.size(), 3u);
    // Oracle: 3x - 2y = 0 gives x^r = 2 / 3^r.
    for (std::size_t r = 0; r < 10 && r < res.trace.records.size(); ++r) {
        const double xr = 2.0 / std::pow(3.0, static_cast<double>(r + 1));
        EXPECT_NEAR(res.trace.records[r].objective, xr * xr, 1e-14);
    }
    EXPECT_NEAR(res.x[0], 0.0, 1e-6);
    EXPECT_TRUE(verify::audit_trace(res.trace, 1e-12).passed());
}

TEST(RunSum, FirstIterateTwoThirds) {
    const auto f = square();
    ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
    SolveOptions opts;
    opts.max_iters = 1;
    const auto res = run_sum(f, u, scalar_point(2.0), opts);
    EXPECT_NEAR(res.x[0], 2.0 / 3.0, 1e-15);
    EXPECT_EQ(res.trace.status, Status::max_iters);
}

TEST(RunSum, ConstantObjectiveStopsImmediately) {
    QuadraticObjective f{Matrix::Zero(1, 1), Vector::Zero(1), 3.0};
    ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
    const auto res = run_sum(f, u, scalar_point(1.5), SolveOptions{});
    EXPECT_EQ(res.trace.iterations, 1u);
    EXPECT_EQ(res.trace.status, Status::converged);
    EXPECT_DOUBLE_EQ(res.x[0], 1.5);
}

TEST(RunSum, QuarticDcCubeRoot) {
    const auto dc = quartic_dc_toy();
    FunctionObjective f{[&dc](const Point& x) { return dc.value(x); }, {}};
    SolveOptions opts;
    opts.max_iters = 100;
    opts.tol = 1e-15;
    const auto res = run_sum(f, dc, scalar_point(8.0), opts);
    // Oracle: x^{r+1} = cbrt(x^r).
    double x = 8.0;
    for (std::size_t r = 0; r < res.trace.records.size(); ++r) {
        x = std::cbrt(x);
        EXPECT_NEAR(res.trace.records[r].objective, x * x * x * x / 4.0 - x * x / 2.0, 1e-12);
    }
    EXPECT_NEAR(std::cbrt(8.0), 2.0, 0.0);
    EXPECT_NEAR(res.x[0], 1.0, 1e-6);
}

TEST(RunSum, TargetStopsEarly) {
    const auto f = square();
    ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
    SolveOptions opts;
    opts.target = 1e-3;
    const auto res = run_sum(f, u, scalar_point(2.0), opts);
    EXPECT_EQ(res.trace.status, Status::converged);
    EXPECT_LE(res.trace.final_objective(), 1e-3);
    // x^r = 2/3^r and f = x^2: first r with 4/9^r <= 1e-3 is r = 4.
    EXPECT_EQ(res.trace.iterations, 4u);
}

TEST(RunSum, OracleFailureCarriesIteration) {
    const auto f = square();
    FunctionSurrogate u{[](const BlockSet&, const Vector& v, const Point&, std::size_t) { return v[0]; },
                        [](const BlockSet&, const Point& y, std::size_t r) -> BlockMinimum {
                            if (r == 3) throw std::runtime_error("boom");
                            return {Vector(y.values() * 0.5), 0.0};
                        }};
    try {
        run_sum(f, u, scalar_point(1.0), SolveOptions{});
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_EQ(e.iteration(), 3u);
    }
}

TEST(RunSum, UnattainedMinimumIsSolverError) {
    const auto f = square();
    FunctionSurrogate u{[](const BlockSet&, const Vector&, const Point&, std::size_t) { return 0.0; },
                        [](const BlockSet&, const Point&, std::size_t) -> BlockMinimum {
                            return {Vector::Constant(1, -INFINITY), -INFINITY};
                        }};
    EXPECT_THROW(run_sum(f, u, scalar_point(1.0), SolveOptions{}), SolverError);
}

TEST(RunSum, RejectsBadOptions) {
    const auto f = square();
    ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
    SolveOptions opts;
    opts.max_iters = 0;
    EXPECT_THROW(run_sum(f, u, scalar_point(1.0), opts), InvalidArgument);
    opts.max_iters = 10;
    opts.tol = 0.0;
    EXPECT_THROW(run_sum(f, u, scalar_point(1.0), opts), InvalidArgument);
}

// -----------------------------------------------------------------------
// BSUM
// -----------------------------------------------------------------------

TEST(RunBsum, ProximalSeparable) {
    const Vector a = (Vector(2) << 1, 2).finished();
    const auto f = weighted_separable(Vector::Ones(2), a);
    ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
    SolveOptions opts;
    opts.max_iters = 500;
    opts.tol = 1e-15;
    const auto s = make_block_structure({1, 1});
    const auto res = run_bsum(f, u, Point(s, Vector::Zero(2)), opts);

    // Oracle: the updated block moves to (2 a_i + y_i) / 3.
    Vector x = Vector::Zero(2);
    for (std::size_t r = 0; r < 6; ++r) {
        const std::size_t i = r % 2;
        x[static_cast<Eigen::Index>(i)] = (2.0 * a[static_cast<Eigen::Index>(i)] + x[static_cast<Eigen::Index>(i)]) / 3.0;
        const double fx = (x - a).squaredNorm();
        EXPECT_NEAR(res.trace.records[r].objective, fx, 1e-14);
        EXPECT_EQ(res.trace.records[r].block, static_cast<long>(i));
    }
    EXPECT_NEAR(res.x[0], 1.0, 1e-6);
    EXPECT_NEAR(res.x[1], 2.0, 1e-6);
    EXPECT_TRUE(verify::audit_trace(res.trace, 1e-12).passed());
    ASSERT_TRUE(res.stationarity_gap.has_value());
    EXPECT_LT(*res.stationarity_gap, 1e-10);
}

TEST(RunBsum, SingleBlockMatchesSum) {
    const auto f = square();
    ProximalSurrogate u(f, quadratic_block_solver(f), 0.7);
    SolveOptions opts;
    opts.max_iters = 40;
    const auto a = run_sum(f, u, scalar_point(3.0), opts);
    const auto b = run_bsum(f, u, scalar_point(3.0), opts);
    ASSERT_EQ(a.trace.records.size(), b.trace.records.size());
    for (std::size_t k = 0; k < a.trace.records.size(); ++k) {
        EXPECT_EQ(a.trace.records[k].objective, b.trace.records[k].objective);
        EXPECT_EQ(a.trace.records[k].block, b.trace.records[k].block);
        EXPECT_EQ(a.trace.records[k].iter, b.trace.records[k].iter);
    }
    EXPECT_EQ(a.trace.status, b.trace.status);
}

TEST(RunBsum, ExactSurrogateOneCycle) {
    const auto f = weighted_separable(Vector::Ones(2), (Vector(2) << 1, -1).finished());
    ExactSurrogate u(f, quadratic_block_solver(f));
    const auto s = make_block_structure({1, 1});
    const auto res = run_bsum(f, u, Point(s, Vector::Zero(2)), SolveOptions{});
    ASSERT_GE(res.trace.records.size(), 2u);
    EXPECT_EQ(res.trace.records[1].objective, 0.0);
    EXPECT_EQ(res.x.values(), (Vector(2) << 1, -1).finished());
    EXPECT_EQ(res.trace.status, Status::converged);
}

TEST(RunBsum, InfeasibleStartRejected) {
    const auto f = weighted_separable(Vector::Ones(2), Vector::Zero(2));
    ExactSurrogate u(f, quadratic_block_solver(f));
    SolveOptions opts;
    opts.feasible_sets = {FeasibleSet::box(0, 1), FeasibleSet::box(0, 1)};
    const auto s = make_block_structure({1, 1});
    EXPECT_THROW(run_bsum(f, u, Point(s, Vector::Constant(2, 3.0)), opts), InvalidArgument);
}

TEST(RunBsum, RejectsMaxImprovementSchedule) {
    const auto f = square();
    ExactSurrogate u(f, quadratic_block_solver(f));
    SolveOptions opts;
    opts.schedule = Schedule::max_improvement();
    EXPECT_THROW(run_bsum(f, u, scalar_point(1.0), opts), InvalidSchedule);
}

TEST(RunBsum, OverlappingGroupsConverge) {
    RngStream rng(21);
    const auto f = random_quadratic(rng, 3);
    ExactSurrogate u(f, quadratic_block_solver(f));
    SolveOptions opts;
    opts.schedule = Schedule::essentially_cyclic({{0, 1}, {1, 2}}, 2);
    opts.max_iters = 5000;
    opts.tol = 1e-15;
    const auto s = make_block_structure({1, 1, 1});
    const auto res = run_bsum(f, u, Point(s, Vector::Zero(3)), opts);
    const Vector xstar = f.Q.ldlt().solve(f.b);
    EXPECT_LT((res.x.values() - xstar).norm(), 1e-6);
    EXPECT_TRUE(verify::audit_trace(res.trace, 1e-12).passed());
    EXPECT_EQ(res.trace.records[0].block, 0);
    EXPECT_EQ(res.trace.records[1].block, 1);
}

TEST(RunBsum, MonotoneOnRandomQuadratics) {
    RngStream rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = random_quadratic(rng, 4);
        ProximalSurrogate u(f, quadratic_block_solver(f), 0.5);
        SolveOptions opts;
        opts.max_iters = 300;
        const auto s = make_block_structure({2, 1, 1});
        Vector x0(4);
        for (auto& v : x0) v = rng.uniform(-3, 3);
        const auto res = run_bsum(f, u, Point(s, x0), opts);
        EXPECT_TRUE(verify::audit_trace(res.trace, 1e-12).passed()) << "trial " << trial;
    }
}

TEST(RunBsum, Deterministic) {
    RngStream rng(5);
    const auto f = random_quadratic(rng, 3);
    ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
    const auto s = make_block_structure({1, 1, 1});
    const Point x0(s, Vector::Ones(3));
    const auto a = run_bsum(f, u, x0, SolveOptions{});
    const auto b = run_bsum(f, u, x0, SolveOptions{});
    ASSERT_EQ(a.trace.records.size(), b.trace.records.size());
    for (std::size_t k = 0; k < a.trace.records.size(); ++k) {
        EXPECT_EQ(a.trace.records[k].objective, b.trace.records[k].objective);
        EXPECT_EQ(a.trace.records[k].elapsed_ns, 0);
    }
    EXPECT_EQ(a.x.values(), b.x.values());
}

TEST(RunBsum, IterationDependentCoefficient) {
    const auto f = weighted_separable(Vector::Ones(2), (Vector(2) << 1, 2).finished());
    CoefficientSchedule c = [](std::size_t r) { return 1.0 / static_cast<double>(r); };
    ProximalSurrogate u(f, quadratic_block_solver(f), c);
    SolveOptions opts;
    opts.max_iters = 2000;
    const auto s = make_block_structure({1, 1});
    const auto res = run_bsum(f, u, Point(s, Vector::Zero(2)), opts);
    EXPECT_TRUE(verify::audit_trace(res.trace, 1e-12).passed());
}

// -----------------------------------------------------------------------
// MISUM
// -----------------------------------------------------------------------

TEST(RunMisum, PicksLargestImprovement) {
    const auto f = weighted_separable((Vector(2) << 1, 2).finished(), Vector::Ones(2));
    ExactSurrogate u(f, quadratic_block_solver(f));
    SolveOptions opts;
    opts.max_iters = 1;
    const auto s = make_block_structure({1, 1});
    const auto res = run_misum(f, u, Point(s, Vector::Zero(2)), opts);
    ASSERT_EQ(res.trace.records.size(), 1u);
    const auto& rec = res.trace.records[0];
    ASSERT_EQ(rec.improvements.size(), 2u);
    // R_1 = f(1, 0) = 2 and R_2 = f(0, 1) = 1.
    EXPECT_DOUBLE_EQ(rec.improvements[0], 2.0);
    EXPECT_DOUBLE_EQ(rec.improvements[1], 1.0);
    EXPECT_EQ(rec.block, 1);
}

TEST(RunMisum, TieGoesToLowestIndex) {
    const auto f = weighted_separable(Vector::Ones(2), Vector::Ones(2));
    ExactSurrogate u(f, quadratic_block_solver(f));
    SolveOptions opts;
    opts.max_iters = 1;
    const auto s = make_block_structure({1, 1});
    const auto res = run_misum(f, u, Point(s, Vector::Zero(2)), opts);
    EXPECT_EQ(res.trace.records[0].block, 0);
}

TEST(RunMisum, SingleBlockMatchesSum) {
    const auto f = square();
    ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
    SolveOptions opts;
    opts.max_iters = 30;
    const auto a = run_sum(f, u, scalar_point(2.0), opts);
    const auto b = run_misum(f, u, scalar_point(2.0), opts);
    ASSERT_EQ(a.trace.records.size(), b.trace.records.size());
    for (std::size_t k = 0; k < a.trace.records.size(); ++k)
        EXPECT_EQ(a.trace.records[k].objective, b.trace.records[k].objective);
}

TEST(RunMisum, ImprovementDominance) {
    RngStream rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const auto f = random_quadratic(rng, 4);
        ProximalSurrogate u(f, quadratic_block_solver(f), 1.0);
        SolveOptions opts;
        opts.max_iters = 60;
        const auto s = make_block_structure({1, 1, 1, 1});
        Vector x0(4);
        for (auto& v : x0) v = rng.uniform(-2, 2);
        Point x(s, x0);
        const auto res = run_misum(f, u, x, opts);
        EXPECT_TRUE(verify::audit_trace(res.trace, 1e-12).passed());
        // Replay: the chosen block has the smallest R_i, recomputed independently.
        for (const auto& rec : res.trace.records) {
            double best = INFINITY;
            std::size_t arg = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                const double ri = u.minimize({i}, x, rec.iter).value;
                if (ri < best) {
                    best = ri;
                    arg = i;
                }
            }
            EXPECT_EQ(static_cast<long>(arg), rec.block);
            x.set_block(arg, u.minimize({arg}, x, rec.iter).argmin);
            EXPECT_LE(rec.objective, best + 1e-12 * (1 + std::abs(best)));
            for (double ri : rec.improvements) EXPECT_LE(best, ri);
        }
    }
}

// -----------------------------------------------------------------------
// Armijo
// -----------------------------------------------------------------------

TEST(Armijo, FullStepAccepted) {
    FunctionObjective f{[](const Point& x) { return x[0] * x[0]; }, {}};
    ArmijoParams p{1.0, 0.5, 0.5, 60};
    const auto res = armijo_step(f, scalar_point(1.0), Vector::Constant(1, -1.0), -2.0, p);
    EXPECT_EQ(res.alpha, 1.0);
    EXPECT_EQ(res.x_new[0], 0.0);
}

TEST(Armijo, BacktracksToScannedValue) {
    FunctionObjective f{[](const Point& x) { return x[0] * x[0]; }, {}};
    ArmijoParams p{2.0, 0.5, 0.99, 60};
    // Brute-force scan of {2 * 0.5^j} for the first alpha meeting the inequality.
    double expected = -1.0;
    for (int j = 0; j <= 60; ++j) {
        const double a = 2.0 * std::pow(0.5, j);
        const double lhs = 1.0 - (1.0 - a) * (1.0 - a);
        if (lhs >= 0.99 * a * 2.0) {
            expected = a;
            break;
        }
    }
    ASSERT_EQ(expected, 0.015625);
    const auto res = armijo_step(f, scalar_point(1.0), Vector::Constant(1, -1.0), -2.0, p);
    EXPECT_EQ(res.alpha, expected);
    EXPECT_EQ(res.backtracks, 7);
}

TEST(Armijo, Errors) {
    FunctionObjective f{[](const Point& x) { return x[0] * x[0]; }, {}};
    ArmijoParams p;
    EXPECT_THROW(armijo_step(f, scalar_point(1.0), Vector::Constant(1, 1.0), 2.0, p), InvalidDescentDirection);
    EXPECT_THROW(armijo_step(f, scalar_point(1.0), Vector::Zero(1), 0.0, p), InvalidArgument);
    // A direction that never decreases enough exhausts the budget.
    ArmijoParams tight{1.0, 0.5, 0.5, 3};
    EXPECT_THROW(armijo_step(f, scalar_point(1.0), Vector::Constant(1, 1.0), -2.0, tight), LineSearchFailure);
    ArmijoParams bad;
    bad.beta = 1.0;
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

// -----------------------------------------------------------------------
// BSCA
// -----------------------------------------------------------------------

TEST(RunBsca, GradientStepOnSquare) {
    const auto f = square();
    QuadraticApprox h(f, 0.5);
    const auto res = run_bsca(f, h, scalar_point(1.0), SolveOptions{});
    EXPECT_LE(res.trace.iterations, 2u);
    EXPECT_LE(std::abs(res.x[0]), 1e-12);
    EXPECT_EQ(res.trace.records[0].step_size.value(), 1.0);
    EXPECT_EQ(res.trace.status, Status::converged);
}

TEST(RunBsca, UnitCurvatureBlocks) {
    QuadraticObjective f{Matrix::Identity(2, 2), Vector::Zero(2), 0.0};
    QuadraticApprox h(f, 1.0);
    const auto s = make_block_structure({1, 1});
    const auto res = run_bsca(f, h, Point(s, Vector::Ones(2)), SolveOptions{});
    EXPECT_EQ(res.trace.records[0].objective, 0.5);  // block 1 exact: (0, 1)
    EXPECT_EQ(res.trace.records[1].objective, 0.0);
    EXPECT_EQ(res.x.values(), Vector::Zero(2));
}

TEST(RunBsca, StationaryStart) {
    const auto f = weighted_separable(Vector::Ones(2), Vector::Ones(2));
    QuadraticApprox h(f, 0.3);
    const auto s = make_block_structure({1, 1});
    const auto res = run_bsca(f, h, Point(s, Vector::Ones(2)), SolveOptions{});
    EXPECT_EQ(res.trace.iterations, 1u);
    EXPECT_EQ(res.trace.status, Status::converged);
}

TEST(RunBsca, MissingGradient) {
    FunctionObjective f{[](const Point& x) { return x[0] * x[0]; }, {}};
    struct Dummy {
        double eval(const BlockSet&, const Vector&, const Point&, std::size_t) const { return 0.0; }
        Vector argmin(const BlockSet&, const Point& y, std::size_t) const { return y.values(); }
    };
    EXPECT_THROW(run_bsca(f, Dummy{}, scalar_point(1.0), SolveOptions{}), InvalidArgument);
}

TEST(RunBsca, ArmijoInequalityHoldsOnReplay) {
    // f = (x1 - 1)^4 + (x2 + 2)^2 + x1 x2 / 10 with deliberately large t.
    FunctionObjective f{
        [](const Point& x) { return std::pow(x[0] - 1, 4) + std::pow(x[1] + 2, 2) + x[0] * x[1] / 10; },
        [](const Point& x) -> Vector {
            return (Vector(2) << 4 * std::pow(x[0] - 1, 3) + x[1] / 10, 2 * (x[1] + 2) + x[0] / 10).finished();
        }};
    QuadraticApprox h(f, 2.0);
    const auto s = make_block_structure({1, 1});
    SolveOptions opts;
    opts.max_iters = 5000;
    opts.tol = 1e-14;
    Point x(s, (Vector(2) << 3, 3).finished());
    const auto res = run_bsca(f, h, x, opts);
    for (const auto& rec : res.trace.records) {
        const std::size_t i = static_cast<std::size_t>(rec.block);
        const Vector y = h.argmin({i}, x, rec.iter);
        Point d = Point::zeros(s);
        d.set_block(i, y - Vector(x.block(i)));
        const double alpha = rec.step_size.value();
        if (alpha == 0.0) continue;
        const double fprime = f.gradient(x).dot(d.values());
        const Point next = x.with_values(x.values() + alpha * d.values());
        EXPECT_GE(f.value(x) - f.value(next), -opts.armijo.sigma * alpha * fprime);
        x = next;
    }
    EXPECT_LE(f.gradient(res.x).norm(), 1e-6);
}
