// bsum: run block successive upper-bound minimization experiments from JSON configs.

#include <bsum/experiment.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using bsum::experiment::json;
using bsum::experiment::Overrides;

struct Common {
    std::string config;
    std::vector<std::uint64_t> seed;
    std::string seed_range;
    std::size_t max_iters = 0;
    double tol = 0.0;
    std::string out;
    bool report = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "seed to run (repeatable)");
    cmd->add_option("--seeds", c.seed_range, "inclusive seed range A..B");
    cmd->add_option("--max-iters", c.max_iters, "iteration budget")->check(CLI::PositiveNumber);
    cmd->add_option("--tol", c.tol, "stall tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("-o,--out", c.out, "output directory");
    cmd->add_flag("--report", c.report, "audit every trace and write verify_report.json");
}

std::vector<std::uint64_t> parse_range(const std::string& s) {
    const auto dots = s.find("..");
    if (dots == std::string::npos) throw CLI::ValidationError("--seeds", "expected A..B");
    std::uint64_t a = 0, b = 0;
    try {
        std::size_t used = 0;
        a = std::stoull(s.substr(0, dots), &used);
        if (used != dots) throw std::invalid_argument("a");
        const std::string tail = s.substr(dots + 2);
        b = std::stoull(tail, &used);
        if (used != tail.size()) throw std::invalid_argument("b");
    } catch (const std::exception&) {
        throw CLI::ValidationError("--seeds", "expected non-negative integers A..B");
    }
    if (b < a) throw CLI::ValidationError("--seeds", "range end is below its start");
    std::vector<std::uint64_t> out;
    for (std::uint64_t k = a; k <= b; ++k) out.push_back(k);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run(const std::string& experiment, const Common& c, json params) {
    Overrides ov;
    ov.experiment = experiment;
    std::vector<std::uint64_t> seeds = c.seed;
    if (!c.seed_range.empty()) {
        const auto r = parse_range(c.seed_range);
        seeds.insert(seeds.end(), r.begin(), r.end());
    }
    if (!seeds.empty()) ov.seeds = seeds;
    if (!c.out.empty()) ov.output_dir = c.out;
    if (c.max_iters) params["max_iters"] = c.max_iters;
    if (c.tol > 0.0) params["tol"] = c.tol;
    ov.params = std::move(params);
    std::string text = c.config.empty() ? std::string("{}") : read_file(c.config);
    if (c.report) {
        // Top-level flag, not a params entry.
        try {
            json doc = json::parse(text);
            if (doc.is_object()) {
                doc["report"] = true;
                text = doc.dump(2);
            }
        } catch (const json::parse_error&) {
            // Leave the text alone so the runner reports the line.
        }
    }
    return bsum::experiment::run_experiment(text, ov, std::cout, std::cerr);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block successive upper-bound minimization experiments"};
    app.require_subcommand(1);

    Common cp_c, wm_c, em_c, toy_c, ver_c;
    std::optional<double> theta;
    auto* cp = app.add_subcommand("cp", "CP tensor decomposition benchmark");
    add_common(cp, cp_c);
    cp->add_option("--theta", theta, "swamp angle in radians");

    auto* wm = app.add_subcommand("wmmse", "WMMSE beamforming on a random interference network");
    add_common(wm, wm_c);

    std::optional<std::size_t> components;
    std::vector<std::string> em_modes;
    std::string data;
    auto* em = app.add_subcommand("em", "EM and block EM for Gaussian mixtures");
    add_common(em, em_c);
    em->add_option("--components", components, "mixture components")->check(CLI::PositiveNumber);
    em->add_option("--mode", em_modes, "full and/or block")->check(CLI::IsMember({"full", "block"}));
    em->add_option("--data", data, "observation file, one value per line")->check(CLI::ExistingFile);

    auto* toy = app.add_subcommand("toy", "classical special cases on small problems");
    add_common(toy, toy_c);

    auto* ver = app.add_subcommand("verify", "check surrogate conditions on canned instances");
    add_common(ver, ver_c);

    std::string kind = "swamp", path;
    double g_theta = bsum::tensor::kDefaultSwampTheta;
    std::size_t dim = 4, rank = 3;
    std::uint64_t g_seed = 0;
    auto* gen = app.add_subcommand("gen-tensor", "write a test tensor");
    gen->add_option("--kind", kind, "swamp or random")->check(CLI::IsMember({"swamp", "random"}));
    gen->add_option("--theta", g_theta, "swamp angle in radians");
    gen->add_option("--dim", dim, "side length for random tensors")->check(CLI::PositiveNumber);
    gen->add_option("--rank", rank, "rank for random tensors")->check(CLI::PositiveNumber);
    gen->add_option("--seed", g_seed, "seed for random tensors");
    gen->add_option("-o,--out", path, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : bsum::experiment::kExitInvalid;
    }

    try {
        if (*cp) {
            json p = json::object();
            if (theta) p["theta"] = *theta;
            return run("cp", cp_c, p);
        }
        if (*wm) return run("wmmse", wm_c, json::object());
        if (*em) {
            json p = json::object();
            if (components) p["components"] = *components;
            if (!em_modes.empty()) p["modes"] = em_modes;
            if (!data.empty()) p["data_file"] = data;
            return run("em", em_c, p);
        }
        if (*toy) return run("toy", toy_c, json::object());
        if (*ver) return run("verify", ver_c, json::object());
        if (*gen) {
            bsum::tensor::DenseTensor3 t;
            if (kind == "swamp") {
                t = bsum::tensor::build_swamp_instance(g_theta);
            } else {
                bsum::RngStream rng(g_seed);
                t = bsum::tensor::random_rank_instance(dim, dim, dim, rank, rng);
            }
            std::ostringstream os;
            bsum::tensor::write_tensor(os, t);
            bsum::experiment::write_atomic(path, os.str());
            return 0;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return bsum::experiment::kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return bsum::experiment::kExitInvalid;
    }
    return 0;
}
