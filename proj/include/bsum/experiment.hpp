#pragma once

#include <bsum/catalog.hpp>
#include <bsum/classic.hpp>
#include <bsum/gmm.hpp>
#include <bsum/tensor.hpp>
#include <bsum/verify.hpp>
#include <bsum/wmmse.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

/// Config-driven experiment runner: per-seed trace CSVs, summary.json and
/// verifier reports.
namespace bsum::experiment {

using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitSolver = 3;

// =======================================================================
// Config errors with source line numbers
// =======================================================================

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string& message)
        : std::runtime_error(line ? "config line " + std::to_string(line) + ": " + message : "config: " + message),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Maps JSON pointers ("/params/modes/1") to the 1-based line where the key or
/// array element starts in the source text.
class JsonLineIndex {
public:
    JsonLineIndex() = default;

    explicit JsonLineIndex(std::string_view text) {
        struct Frame {
            bool object;
            bool expect_key = true;
            std::size_t index = 0;
            std::string key;
            std::string pointer;
        };
        std::vector<Frame> stack;
        std::size_t line = 1;
        auto element_pointer = [&]() -> std::optional<std::string> {
            if (stack.empty()) return std::string{};
            const Frame& f = stack.back();
            if (f.object) return f.expect_key ? std::nullopt : std::optional(f.pointer + "/" + escape(f.key));
            return f.pointer + "/" + std::to_string(f.index);
        };
        auto mark_value = [&]() {
            if (!stack.empty() && !stack.back().object) {
                const auto p = element_pointer();
                if (p) lines_.emplace(*p, line);
            }
        };
        for (std::size_t k = 0; k < text.size(); ++k) {
            const char c = text[k];
            if (c == '\n') {
                ++line;
                continue;
            }
            if (c == ' ' || c == '\t' || c == '\r' || c == ':') continue;
            if (c == '{' || c == '[') {
                mark_value();
                const std::string ptr = element_pointer().value_or(std::string{});
                stack.push_back({c == '{', true, 0, {}, ptr});
                continue;
            }
            if (c == '}' || c == ']') {
                if (!stack.empty()) stack.pop_back();
                continue;
            }
            if (c == ',') {
                if (!stack.empty()) {
                    if (stack.back().object)
                        stack.back().expect_key = true;
                    else
                        ++stack.back().index;
                }
                continue;
            }
            if (c == '"') {
                std::string s;
                const std::size_t start_line = line;
                for (++k; k < text.size() && text[k] != '"'; ++k) {
                    if (text[k] == '\\' && k + 1 < text.size()) {
                        s.push_back(text[++k]);
                        continue;
                    }
                    if (text[k] == '\n') ++line;
                    s.push_back(text[k]);
                }
                if (!stack.empty() && stack.back().object && stack.back().expect_key) {
                    Frame& f = stack.back();
                    f.key = s;
                    f.expect_key = false;
                    lines_.emplace(f.pointer + "/" + escape(s), start_line);
                } else if (!stack.empty() && !stack.back().object) {
                    lines_.emplace(stack.back().pointer + "/" + std::to_string(stack.back().index), start_line);
                }
                continue;
            }
            // Bare scalar token.
            mark_value();
            while (k + 1 < text.size() && std::string_view(",]}\n \t\r").find(text[k + 1]) == std::string_view::npos)
                ++k;
        }
    }

    /// Line of the pointer, or of its nearest recorded ancestor; 0 when unknown.
    std::size_t line_of(std::string pointer) const {
        while (!pointer.empty()) {
            if (auto it = lines_.find(pointer); it != lines_.end()) return it->second;
            pointer.erase(pointer.rfind('/'));
        }
        return 0;
    }

    static std::string escape(const std::string& key) {
        std::string out;
        for (char c : key) {
            if (c == '~')
                out += "~0";
            else if (c == '/')
                out += "~1";
            else
                out.push_back(c);
        }
        return out;
    }

private:
    std::map<std::string, std::size_t> lines_;
};

/// Typed access to a JSON object with line-numbered errors.
class Fields {
public:
    Fields(const json& obj, std::string pointer, const JsonLineIndex& lines)
        : obj_(&obj), pointer_(std::move(pointer)), lines_(&lines) {
        if (!obj.is_object()) fail(pointer_, "expected an object");
        for (auto it = obj.begin(); it != obj.end(); ++it) unused_.insert(it.key());
    }

    [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
        throw ConfigError(lines_->line_of(pointer), (pointer.empty() ? std::string("/") : pointer) + ": " + message);
    }

    std::string child(const std::string& key) const { return pointer_ + "/" + JsonLineIndex::escape(key); }
    bool has(const std::string& key) const { return obj_->contains(key); }

    const json& raw(const std::string& key) {
        if (!obj_->contains(key)) fail(pointer_, "missing required field '" + key + "'");
        unused_.erase(key);
        return obj_->at(key);
    }

    double number(const std::string& key, std::optional<double> def = std::nullopt) {
        if (!has(key)) {
            if (def) return *def;
            raw(key);
        }
        const json& v = raw(key);
        if (!v.is_number()) fail(child(key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(child(key), "expected a finite number");
        return d;
    }

    double positive(const std::string& key, std::optional<double> def = std::nullopt) {
        const double d = number(key, def);
        if (!(d > 0.0)) fail(child(key), "must be positive");
        return d;
    }

    std::size_t count(const std::string& key, std::optional<std::size_t> def = std::nullopt, std::size_t min = 1) {
        if (!has(key)) {
            if (def) return *def;
            raw(key);
        }
        const json& v = raw(key);
        if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
            fail(child(key), "expected an integer >= " + std::to_string(min));
        return v.get<std::size_t>();
    }

    std::string text(const std::string& key, std::optional<std::string> def = std::nullopt) {
        if (!has(key)) {
            if (def) return *def;
            raw(key);
        }
        const json& v = raw(key);
        if (!v.is_string()) fail(child(key), "expected a string");
        return v.get<std::string>();
    }

    bool flag(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_boolean()) fail(child(key), "expected true or false");
        return v.get<bool>();
    }

    std::string choice(const std::string& key, const std::vector<std::string>& allowed, std::optional<std::string> def) {
        const std::string s = text(key, std::move(def));
        if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) fail(child(key), "unknown value '" + s + "'");
        return s;
    }

    std::vector<std::string> choices(const std::string& key, const std::vector<std::string>& allowed,
                                     std::vector<std::string> def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_array() || v.empty()) fail(child(key), "expected a non-empty array of strings");
        std::vector<std::string> out;
        for (std::size_t k = 0; k < v.size(); ++k) {
            const std::string ptr = child(key) + "/" + std::to_string(k);
            if (!v[k].is_string()) fail(ptr, "expected a string");
            const auto s = v[k].get<std::string>();
            if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) fail(ptr, "unknown value '" + s + "'");
            if (std::find(out.begin(), out.end(), s) != out.end()) fail(ptr, "duplicate value '" + s + "'");
            out.push_back(s);
        }
        return out;
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_array() || v.empty()) fail(child(key), "expected a non-empty array of numbers");
        std::vector<double> out;
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (!v[k].is_number()) fail(child(key) + "/" + std::to_string(k), "expected a number");
            out.push_back(v[k].get<double>());
        }
        return out;
    }

    /// Rejects keys nobody asked for.
    void finish() const {
        if (!unused_.empty()) fail(child(*unused_.begin()), "unknown field");
    }

private:
    const json* obj_;
    std::string pointer_;
    const JsonLineIndex* lines_;
    std::set<std::string> unused_;
};

// =======================================================================
// Output helpers
// =======================================================================

/// Shortest-exact decimal: 17 significant digits.
inline std::string format_double(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << v;
    return os.str();
}

/// Writes to a temporary sibling, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// Columns: iter, block, objective, step_size, elapsed_ns. The initial objective is row 0.
inline std::string trace_csv(const Trace& t) {
    std::ostringstream os;
    os << "iter,block,objective,step_size,elapsed_ns\n";
    if (t.initial_objective) os << "0,," << format_double(*t.initial_objective) << ",,0\n";
    for (const auto& r : t.records) {
        os << r.iter << ',' << r.block << ',' << format_double(r.objective) << ','
           << (r.step_size ? format_double(*r.step_size) : std::string{}) << ',' << r.elapsed_ns << '\n';
    }
    return os.str();
}

// =======================================================================
// Summaries
// =======================================================================

struct RunOutcome {
    std::string mode;
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    bool converged = false;
    std::optional<std::string> error;
};

struct ModeSummary {
    std::string mode;
    std::size_t count = 0;
    std::size_t converged = 0;
    std::size_t censored = 0;
    std::size_t failed = 0;
    /// Over converged runs only; NaN when none converged.
    double mean = std::numeric_limits<double>::quiet_NaN();
    /// Median, min and max over converged and censored runs, censored runs counting as their iteration budget.
    double median = std::numeric_limits<double>::quiet_NaN();
    double min = std::numeric_limits<double>::quiet_NaN();
    double max = std::numeric_limits<double>::quiet_NaN();

    json to_json() const {
        auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
        return {{"mode", mode},     {"count", count},         {"converged", converged}, {"censored", censored},
                {"failed", failed}, {"mean", num(mean)},      {"median", num(median)},  {"min", num(min)},
                {"max", num(max)}};
    }
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-mode statistics in order of first appearance.
inline std::vector<ModeSummary> summarize(const std::vector<RunOutcome>& runs) {
    std::vector<ModeSummary> out;
    std::map<std::string, std::vector<const RunOutcome*>> by_mode;
    for (const auto& r : runs) {
        if (!by_mode.count(r.mode)) out.push_back({r.mode});
        by_mode[r.mode].push_back(&r);
    }
    for (auto& s : out) {
        std::vector<double> done, all;
        for (const RunOutcome* r : by_mode[s.mode]) {
            ++s.count;
            if (r->error) {
                ++s.failed;
                continue;
            }
            const auto it = static_cast<double>(r->iterations);
            all.push_back(it);
            if (r->converged) {
                ++s.converged;
                done.push_back(it);
            } else {
                ++s.censored;
            }
        }
        if (!done.empty()) {
            double sum = 0.0;
            for (double v : done) sum += v;
            s.mean = sum / static_cast<double>(done.size());
        }
        if (!all.empty()) {
            s.median = median_of(all);
            s.min = *std::min_element(all.begin(), all.end());
            s.max = *std::max_element(all.begin(), all.end());
        }
    }
    return out;
}

inline std::string summary_table(const std::vector<ModeSummary>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(18) << "mode" << std::right << std::setw(7) << "runs" << std::setw(7) << "conv"
       << std::setw(7) << "cens" << std::setw(7) << "fail" << std::setw(12) << "mean" << std::setw(10) << "median"
       << std::setw(8) << "min" << std::setw(8) << "max" << '\n';
    auto cell = [](double v, int w, int prec) {
        std::ostringstream c;
        if (std::isfinite(v))
            c << std::fixed << std::setprecision(prec) << v;
        else
            c << '-';
        return (std::ostringstream() << std::setw(w) << c.str()).str();
    };
    for (const auto& r : rows)
        os << std::left << std::setw(18) << r.mode << std::right << std::setw(7) << r.count << std::setw(7)
           << r.converged << std::setw(7) << r.censored << std::setw(7) << r.failed << cell(r.mean, 12, 2)
           << cell(r.median, 10, 1) << cell(r.min, 8, 0) << cell(r.max, 8, 0) << '\n';
    return os.str();
}

// =======================================================================
// Experiment definitions
// =======================================================================

struct Overrides {
    std::optional<std::string> experiment;
    std::optional<std::vector<std::uint64_t>> seeds;
    std::optional<std::string> output_dir;
    /// Merged into "params" before validation.
    json params = json::object();
};

/// One seed's work: outcomes plus files to write.
struct SeedResult {
    std::vector<RunOutcome> outcomes;
    std::vector<std::pair<std::string, std::string>> files;
    json reports = json::array();
    bool solver_error = false;
};

using SeedJob = std::function<SeedResult(std::uint64_t seed)>;

struct Plan {
    std::string experiment;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path output_dir;
    bool report = false;
    SeedJob job;
};

inline std::string error_text(const std::exception& e) { return e.what(); }

/// Runs fn and turns solver-side exceptions into a failed outcome.
template <class Fn>
void guarded_run(SeedResult& out, RunOutcome base, Fn&& fn) {
    try {
        fn();
    } catch (const InvalidArgument&) {
        throw;
    } catch (const SolverError& e) {
        base.error = error_text(e);
    } catch (const NumericFailure& e) {
        base.error = error_text(e);
    } catch (const LineSearchFailure& e) {
        base.error = error_text(e);
    }
    if (base.error) {
        out.solver_error = true;
        out.outcomes.push_back(std::move(base));
    }
}

inline void add_trace(SeedResult& out, const std::string& stem, const Trace& t, bool report, const std::string& mode,
                      std::uint64_t seed) {
    out.files.emplace_back(stem + ".csv", trace_csv(t));
    if (report) {
        json j = verify::audit_trace(t, 1e-12).to_json();
        j["mode"] = mode;
        j["seed"] = seed;
        out.reports.push_back(std::move(j));
    }
}

inline std::string seed_stem(const std::string& prefix, const std::string& mode, std::uint64_t seed) {
    return prefix + (mode.empty() ? "" : "_" + mode) + "_seed" + std::to_string(seed);
}

inline SeedJob plan_cp(Fields& p, bool report) {
    const std::vector<std::string> all_modes = {"als", "const_prox", "dim_prox", "mbi", "misum"};
    const auto modes = p.choices("modes", all_modes, all_modes);
    const std::string instance = p.choice("instance", {"swamp", "random", "file"}, "swamp");
    tensor::CpOptions o;
    o.eps = p.positive("eps", 1e-5);
    o.max_iters = p.count("max_iters", 3000);
    o.tol = p.positive("tol", 1e-15);
    o.lambda = p.positive("lambda", 0.1);
    o.lambda0 = p.positive("lambda0", 1e-7);
    o.lambda1 = p.positive("lambda1", 0.1);
    const std::size_t rank = p.count("rank", 3);
    auto t = std::make_shared<tensor::DenseTensor3>();
    if (instance == "swamp") {
        *t = tensor::build_swamp_instance(p.number("theta", tensor::kDefaultSwampTheta));
    } else if (instance == "random") {
        const auto dims = p.numbers("dims", {4, 4, 4});
        if (dims.size() != 3 || std::any_of(dims.begin(), dims.end(), [](double d) { return d < 1 || d != std::floor(d); }))
            p.fail(p.child("dims"), "expected three positive integers");
        const std::size_t true_rank = p.count("true_rank", rank);
        RngStream gen(static_cast<std::uint64_t>(p.count("instance_seed", 0, 0)));
        *t = tensor::random_rank_instance(static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                                          static_cast<std::size_t>(dims[2]), true_rank, gen);
    } else {
        const std::string path = p.text("tensor_file");
        std::ifstream in(path);
        if (!in) p.fail(p.child("tensor_file"), "cannot open '" + path + "'");
        try {
            *t = tensor::read_tensor(in);
        } catch (const InvalidArgument& e) {
            p.fail(p.child("tensor_file"), e.what());
        }
    }
    o.record_trace = true;
    return [=](std::uint64_t seed) {
        SeedResult out;
        for (const auto& m : modes) {
            guarded_run(out, {m, seed, 0, false, std::nullopt}, [&] {
                RngStream rng(seed);
                auto res = tensor::run_cp(*t, rank, tensor::parse_cp_mode(m), o, rng);
                out.outcomes.push_back({m, seed, res.iterations, res.reached, std::nullopt});
                add_trace(out, seed_stem("cp", m, seed), res.trace, report, m, seed);
            });
        }
        return out;
    };
}

inline SeedJob plan_wmmse(Fields& p, bool report) {
    wmmse::NetworkSpec spec;
    try {
        spec = wmmse::NetworkSpec::uniform(p.count("K", 2), p.count("users_per_cell", 1), p.count("N", 2),
                                           p.count("d", 1), p.positive("sigma2", 1.0), p.positive("power", 1.0));
    } catch (const InvalidArgument& e) {
        p.fail("/params", e.what());
    }
    wmmse::WmmseOptions o;
    o.max_iters = p.count("max_iters", 2000);
    o.tol = p.positive("tol", 1e-10);
    return [=](std::uint64_t seed) {
        SeedResult out;
        guarded_run(out, {"wmmse", seed, 0, false, std::nullopt}, [&] {
            RngStream rng(seed);
            const auto H = wmmse::gen_channels(spec, rng);
            const auto V0 = wmmse::init_transmitters(spec, rng);
            auto res = wmmse::run_wmmse(spec, H, V0, o);
            out.outcomes.push_back(
                {"wmmse", seed, res.trace.iterations, res.trace.status == Status::converged, std::nullopt});
            const std::string stem = seed_stem("wmmse", "", seed);
            add_trace(out, stem, res.trace, report, "wmmse", seed);
            std::ostringstream m;
            m << "iter,objective,sum_rate_nats,max_power_violation\n";
            for (const auto& r : res.records)
                m << r.iter << ',' << format_double(r.objective) << ',' << format_double(r.sum_rate) << ','
                  << format_double(r.max_power_violation) << '\n';
            out.files.emplace_back(stem + "_metrics.csv", m.str());
        });
        return out;
    };
}

/// Two-cluster data: `per_cluster` draws around each mean with standard deviation sd.
inline Vector cluster_data(const std::vector<double>& means, double sd, std::size_t per_cluster, std::uint64_t seed) {
    RngStream rng(seed);
    Vector data(static_cast<Eigen::Index>(means.size() * per_cluster));
    Eigen::Index n = 0;
    for (double m : means)
        for (std::size_t k = 0; k < per_cluster; ++k) data[n++] = m + sd * rng.normal();
    return data;
}

inline SeedJob plan_em(Fields& p, bool report) {
    const auto modes = p.choices("modes", {"full", "block"}, {"full", "block"});
    const std::size_t J = p.count("components", 2);
    gmm::EmOptions o;
    o.max_iters = p.count("max_iters", 1000);
    o.tol = p.positive("tol", 1e-12);
    auto data = std::make_shared<Vector>();
    if (p.has("data_file")) {
        const std::string path = p.text("data_file");
        std::ifstream in(path);
        if (!in) p.fail(p.child("data_file"), "cannot open '" + path + "'");
        try {
            *data = gmm::read_observations(in);
        } catch (const InvalidArgument& e) {
            p.fail(p.child("data_file"), e.what());
        }
    } else {
        const auto means = p.numbers("cluster_means", {-5.0, 5.0});
        *data = cluster_data(means, p.positive("cluster_sd", 1.0), p.count("per_cluster", 500),
                             static_cast<std::uint64_t>(p.count("data_seed", 0, 0)));
    }
    if (static_cast<std::size_t>(data->size()) < J) p.fail("/params", "fewer observations than components");
    return [=](std::uint64_t seed) {
        SeedResult out;
        for (const auto& m : modes) {
            guarded_run(out, {m, seed, 0, false, std::nullopt}, [&] {
                RngStream rng(seed);
                const auto theta0 = gmm::init_params(*data, J, rng);
                auto res = gmm::em_gmm(*data, J, theta0, gmm::parse_em_mode(m), o);
                out.outcomes.push_back({m, seed, res.trace.iterations, res.trace.status == Status::converged, std::nullopt});
                add_trace(out, seed_stem("em", m, seed), res.trace, report, m, seed);
            });
        }
        return out;
    };
}

inline SeedJob plan_toy(Fields& p, bool report) {
    const std::vector<std::string> all = {"proximal", "alternating", "splitting", "cccp"};
    const auto problems = p.choices("problems", all, all);
    SolveOptions o;
    o.max_iters = p.count("max_iters", 200);
    o.tol = p.positive("tol", 1e-12);
    const std::optional<double> x0 = p.has("x0") ? std::optional(p.number("x0")) : std::nullopt;
    const double c = p.positive("c", 1.0);
    const double gamma = p.positive("gamma", 1.0);
    if (gamma > 2.0 - 1e-6) p.fail(p.child("gamma"), "must be below 2/beta = 2");
    return [=](std::uint64_t seed) {
        SeedResult out;
        RngStream rng(seed);
        const double start = x0 ? *x0 : rng.uniform(-8.0, 8.0);
        const double start2 = x0 ? *x0 : rng.uniform(-8.0, 8.0);
        for (const auto& name : problems) {
            guarded_run(out, {name, seed, 0, false, std::nullopt}, [&] {
                SolveResult res{Point(make_block_structure({1}), Vector::Zero(1)), {}, {}};
                const Point x(make_block_structure({1}), Vector::Constant(1, start));
                if (name == "proximal") {
                    const QuadraticObjective f{Matrix::Constant(1, 1, 2.0), Vector::Zero(1), 0.0};
                    res = classic::proximal_point_solve(f, quadratic_block_solver(f), x, c, o);
                } else if (name == "alternating") {
                    const QuadraticObjective f{Matrix::Constant(2, 2, 2.0), Vector::Constant(2, 2.0), 1.0};
                    const Point x2(make_block_structure({1, 1}), (Vector(2) << start, start2).finished());
                    res = classic::alternating_proximal_solve(f, quadratic_block_solver(f), x2, c, o);
                } else if (name == "splitting") {
                    FunctionObjective f2{[](const Point& y) { return 0.5 * (y[0] - 2) * (y[0] - 2); },
                                         [](const Point& y) -> Vector { return Vector::Constant(1, y[0] - 2); }};
                    res = classic::forward_backward_solve(ProxFunction::l1(), f2, 1.0, gamma, x, o);
                } else {
                    res = classic::cccp_solve(quartic_dc_toy(), x, o);
                }
                out.outcomes.push_back(
                    {name, seed, res.trace.iterations, res.trace.status == Status::converged, std::nullopt});
                add_trace(out, seed_stem("toy", name, seed), res.trace, report, name, seed);
            });
        }
        return out;
    };
}

inline SeedJob plan_verify(Fields& p) {
    const auto names = p.choices("surrogates", catalog::surrogate_names(), catalog::surrogate_names());
    catalog::CheckSettings cs;
    cs.n_samples = p.count("samples", 1000);
    cs.tightness_tol = p.positive("tightness_tol", cs.tightness_tol);
    cs.upper_bound_tol = p.positive("upper_bound_tol", cs.upper_bound_tol);
    cs.first_order_tol = p.positive("first_order_tol", cs.first_order_tol);
    return [=](std::uint64_t seed) {
        SeedResult out;
        for (const auto& name : names) {
            guarded_run(out, {name, seed, 0, false, std::nullopt}, [&] {
                RngStream rng(seed);
                const auto reports = catalog::verify_surrogate(name, rng, cs);
                bool ok = true;
                for (const auto& r : reports) {
                    json j = r.to_json();
                    j["surrogate"] = name;
                    j["seed"] = seed;
                    out.reports.push_back(std::move(j));
                    ok = ok && r.passed();
                }
                out.outcomes.push_back({name, seed, reports.size(), ok, std::nullopt});
            });
        }
        return out;
    };
}

inline std::vector<std::uint64_t> parse_seeds(const json& v, const std::string& ptr, const Fields& top) {
    std::vector<std::uint64_t> seeds;
    if (!v.is_array() || v.empty()) top.fail(ptr, "expected a non-empty array of non-negative integers");
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!v[k].is_number_unsigned()) top.fail(ptr + "/" + std::to_string(k), "expected a non-negative integer");
        const auto s = v[k].get<std::uint64_t>();
        if (std::find(seeds.begin(), seeds.end(), s) != seeds.end())
            top.fail(ptr + "/" + std::to_string(k), "duplicate seed");
        seeds.push_back(s);
    }
    return seeds;
}

/// Validates the config and builds the per-seed job. Throws ConfigError.
inline Plan make_plan(const std::string& text, const Overrides& ov = {}) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // e.byte is the 1-based offset of the offending character.
        const std::size_t upto = e.byte > 0 ? std::min<std::size_t>(e.byte - 1, text.size()) : 0;
        const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
        throw ConfigError(line, "malformed JSON");
    }
    const JsonLineIndex lines(text);
    if (!doc.is_object()) throw ConfigError(1, "top level must be an object");
    if (ov.experiment) {
        if (doc.contains("experiment") && doc["experiment"] != *ov.experiment)
            throw ConfigError(lines.line_of("/experiment"),
                              "/experiment: config is for '" + doc["experiment"].dump() + "', not '" + *ov.experiment + "'");
        doc["experiment"] = *ov.experiment;
    }
    if (!doc.contains("params")) doc["params"] = json::object();
    if (!doc["params"].is_object()) throw ConfigError(lines.line_of("/params"), "/params: expected an object");
    for (auto it = ov.params.begin(); it != ov.params.end(); ++it) doc["params"][it.key()] = it.value();
    if (ov.seeds) doc["seeds"] = *ov.seeds;
    if (ov.output_dir) doc["output_dir"] = *ov.output_dir;
    if (!doc.contains("seeds")) doc["seeds"] = json::array({std::uint64_t{0}});
    if (!doc.contains("output_dir")) doc["output_dir"] = "out";

    Fields top(doc, "", lines);
    Plan plan;
    plan.experiment = top.choice("experiment", {"cp", "wmmse", "em", "toy", "verify"}, std::nullopt);
    plan.seeds = parse_seeds(top.raw("seeds"), "/seeds", top);
    plan.output_dir = top.text("output_dir");
    plan.report = top.flag("report", false);
    Fields params(top.raw("params"), "/params", lines);
    if (plan.experiment == "cp")
        plan.job = plan_cp(params, plan.report);
    else if (plan.experiment == "wmmse")
        plan.job = plan_wmmse(params, plan.report);
    else if (plan.experiment == "em")
        plan.job = plan_em(params, plan.report);
    else if (plan.experiment == "toy")
        plan.job = plan_toy(params, plan.report);
    else
        plan.job = plan_verify(params);
    params.finish();
    top.finish();
    return plan;
}

/// Worker count: BSUM_THREADS when set and positive, else the hardware concurrency.
inline std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BSUM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) n = static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs every seed, writes artifacts and returns the exit code.
inline int execute(const Plan& plan, std::ostream& out, std::ostream& err) {
    std::filesystem::create_directories(plan.output_dir);
    std::vector<SeedResult> results(plan.seeds.size());
    std::vector<std::string> invalid(plan.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < plan.seeds.size(); k = next++) {
            try {
                results[k] = plan.job(plan.seeds[k]);
                for (const auto& [name, content] : results[k].files) write_atomic(plan.output_dir / name, content);
            } catch (const std::exception& e) {
                invalid[k] = e.what();
            }
        }
    };
    const std::size_t n_workers = worker_count(plan.seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (std::size_t k = 0; k < invalid.size(); ++k)
        if (!invalid[k].empty()) {
            err << "error: seed " << plan.seeds[k] << ": " << invalid[k] << '\n';
            return kExitInvalid;
        }

    std::vector<RunOutcome> runs;
    json failures = json::array();
    json reports = json::array();
    bool solver_error = false;
    for (auto& r : results) {
        solver_error = solver_error || r.solver_error;
        for (auto& o : r.outcomes) {
            if (o.error) {
                failures.push_back({{"mode", o.mode}, {"seed", o.seed}, {"error", *o.error}});
                err << "solver error: " << o.mode << " seed " << o.seed << ": " << *o.error << '\n';
            }
            runs.push_back(o);
        }
        for (auto& j : r.reports) reports.push_back(std::move(j));
    }
    const auto rows = summarize(runs);
    json summary = {{"experiment", plan.experiment}, {"seeds", plan.seeds}, {"failures", failures}};
    summary["modes"] = json::array();
    for (const auto& s : rows) summary["modes"].push_back(s.to_json());
    write_atomic(plan.output_dir / "summary.json", summary.dump(2) + "\n");
    if (plan.experiment == "verify" || plan.report) {
        std::size_t violations = 0;
        for (const auto& j : reports) violations += j.value("n_violations", std::size_t{0});
        write_atomic(plan.output_dir / "verify_report.json",
                     json({{"experiment", plan.experiment}, {"total_violations", violations}, {"reports", reports}})
                             .dump(2) +
                         "\n");
        out << "verifier: " << reports.size() << " reports, " << violations << " violations\n";
    }
    out << summary_table(rows);
    return solver_error ? kExitSolver : kExitOk;
}

/// Validates, runs and reports. Exit 0 on success, 2 on a config error, 3 on a solver error.
inline int run_experiment(const std::string& text, const Overrides& ov, std::ostream& out, std::ostream& err) {
    Plan plan;
    try {
        plan = make_plan(text, ov);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    try {
        return execute(plan, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
}

} // namespace bsum::experiment
