// dbill: command-line front end for the billiard library.

#include "dbill/atlas.hpp"
#include "dbill/errors.hpp"
#include "dbill/json_io.hpp"
#include "dbill/render.hpp"
#include "dbill/rng.hpp"
#include "dbill/ucurve.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

using namespace dbill;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string command;
    std::string table;
    int k0{30};
    double delta{1e-4};
    std::string n{"auto"};
    std::uint64_t samples{1000};
    std::uint64_t seed{0};
    int k_cap{10000};
    std::string out;
    std::string format;
    int threads{0};
    // command specific
    int wall{0};
    double r{0.0};
    double phi{0.0};
    int steps{20};
    int level{-1};
    int resolution{200};
    std::string in;
    std::string kind{"phase"};
    bool anchored{false};
};

struct Flags {
    CLI::Option* seed{nullptr};
    CLI::Option* samples{nullptr};
    CLI::Option* wall{nullptr};
    CLI::Option* r{nullptr};
    CLI::Option* phi{nullptr};
    CLI::Option* n{nullptr};
};

constexpr const char* kCommands[] = {"validate", "orbit",     "singularities", "portrait",
                                     "evolve",   "grazing-sum", "expansion",   "render"};

const char* describe(std::string_view cmd) {
    if (cmd == "validate") return "check a table and print its geometric constants";
    if (cmd == "orbit") return "iterate the collision map from one phase point";
    if (cmd == "singularities") return "trace singularity curves of the map or its inverse";
    if (cmd == "portrait") return "velocity sectors at a point, with active ones marked";
    if (cmd == "evolve") return "grow a u-curve into its component tree";
    if (cmd == "grazing-sum") return "one-step nearly grazing sums over sampled u-curves";
    if (cmd == "expansion") return "fit constants, pick N and scan the expansion sums";
    return "draw an SVG from a JSON output";
}

bool has(const char* cmd, std::initializer_list<const char*> set) {
    for (const char* s : set)
        if (std::string_view(cmd) == s) return true;
    return false;
}

Flags add_flags(CLI::App* s, RunConfig& c, const char* cmd) {
    Flags f;
    s->add_option("--table", c.table, "table spec JSON (required)");
    s->add_option("--out", c.out, "output path (stdout when absent)");
    s->add_option("--format", c.format, "csv | json | svg");
    s->add_option("--threads", c.threads, "worker threads, 0 = auto")->check(CLI::NonNegativeNumber);
    s->add_option("--k0", c.k0, "first nearly grazing strip")->check(CLI::PositiveNumber);
    s->add_option("--k-cap", c.k_cap, "largest resolved strip index")->check(CLI::PositiveNumber);
    s->add_option("--delta", c.delta, "u-curve length")->check(CLI::PositiveNumber);
    f.n = s->add_option("--N", c.n, "iterations, or auto");
    f.samples = s->add_option("--samples", c.samples, "sample count")->check(CLI::PositiveNumber);
    f.seed = s->add_option("--seed", c.seed, "run seed");
    if (has(cmd, {"orbit", "portrait", "evolve"})) {
        f.wall = s->add_option("--wall", c.wall, "wall id")->check(CLI::NonNegativeNumber);
        f.r = s->add_option("--r", c.r, "arclength on the wall");
        f.phi = s->add_option("--phi", c.phi, "angle to the normal");
    }
    if (has(cmd, {"orbit"})) s->add_option("--steps", c.steps, "collisions")->check(CLI::PositiveNumber);
    if (has(cmd, {"singularities"})) {
        s->add_option("--level", c.level, "curve level, nonzero, |level| <= 6");
        s->add_option("--resolution", c.resolution, "seeds per seed line")->check(CLI::PositiveNumber);
    }
    if (has(cmd, {"render"})) {
        s->add_option("--in", c.in, "artifact JSON (required)");
        s->add_option("--kind", c.kind, "table | phase | portrait");
    }
    if (has(cmd, {"grazing-sum", "expansion"}))
        s->add_flag("--anchored", c.anchored, "center curves on grazing preimages");
    return f;
}

std::string option_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw UsageError("config values must be scalars");
}

/// Reads --config from argv without parsing the rest.
std::optional<json> prescan_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        std::string path;
        if (a == "--config" && i + 1 < argc) path = argv[i + 1];
        else if (a.rfind("--config=", 0) == 0) path = a.substr(9);
        else continue;
        json j;
        try {
            j = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw UsageError("config " + path + ": " + e.what());
        }
        if (!j.is_object()) throw UsageError("config " + path + " is not an object");
        return j;
    }
    return std::nullopt;
}

/// Config values apply where the command line left an option unset.
void apply_config(CLI::App* sub, const json& cfg) {
    for (const auto& [key, value] : cfg.items()) {
        if (key == "command" || key == "config") continue;
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr) throw UsageError("config key '" + key + "' is not a flag of " + sub->get_name());
        if (opt->count() > 0) continue;
        opt->add_result(option_text(value));
        opt->run_callback();
    }
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::NonDispersing:
        case ErrorKind::CuspDetected:
        case ErrorKind::NonSimpleCorner:
        case ErrorKind::UnboundedHorizon:
        case ErrorKind::OpenBoundary:
        case ErrorKind::InvalidSpec:
        case ErrorKind::OutOfRange:
        case ErrorKind::SingularInput:
        case ErrorKind::SingularSeed:
        case ErrorKind::NotUnstable: return 2;
        case ErrorKind::UnknownKind: return 1;
        default: return 3;
    }
}

void emit(const RunConfig& c, const std::string& content) {
    if (c.out.empty()) std::fwrite(content.data(), 1, content.size(), stdout);
    else write_file_atomic(c.out, content);
}

std::string pick_format(const RunConfig& c, std::initializer_list<const char*> allowed) {
    const std::string f = c.format.empty() ? *allowed.begin() : c.format;
    for (const char* a : allowed)
        if (f == a) return f;
    throw UsageError("format '" + f + "' not supported by " + c.command);
}

int thread_count(const RunConfig& c) {
    if (c.threads > 0) return c.threads;
    return std::max(1u, std::thread::hardware_concurrency());
}

void require_seed(const RunConfig& c, const Flags& f) {
    if (f.seed->count() == 0) throw UsageError(c.command + " is stochastic and needs --seed");
}

PhasePoint center(const RunConfig& c, const Flags& f) {
    if (f.wall->count() == 0 || f.r->count() == 0 || f.phi->count() == 0)
        throw UsageError(c.command + " needs --wall, --r and --phi");
    return {c.wall, c.r, c.phi};
}

int fixed_n(const RunConfig& c, const Flags& f, int fallback) {
    if (f.n->count() == 0) return fallback;
    try {
        std::size_t used = 0;
        const int n = std::stoi(c.n, &used);
        if (used == c.n.size() && n > 0) return n;
    } catch (const std::exception&) {
    }
    throw UsageError("--N must be a positive integer for " + c.command);
}

BilliardTable load(const RunConfig& c, const Flags& f, bool constants_from_flags) {
    BuildOptions o;
    if (constants_from_flags) {
        if (f.samples->count() > 0) o.constant_samples = c.samples;
        if (f.seed->count() > 0) o.constant_seed = c.seed;
    }
    return build_table(load_table_spec(c.table), o);
}

UCurveOptions curve_options(const RunConfig& c) {
    UCurveOptions o;
    o.k0 = c.k0;
    o.k_cap = c.k_cap;
    return o;
}

int cmd_validate(const RunConfig& c, const Flags& f) {
    const BilliardTable t = load(c, f, true);
    const TableConstants& k = t.constants;
    const json j = {{"table", c.table},
                    {"ambient", std::string(to_string(t.ambient))},
                    {"walls", t.walls.size()},
                    {"corners", t.corners.size()},
                    {"gamma_min", t.gamma_min()},
                    {"tau_max", k.tau_max},
                    {"tau_max_sampled", k.tau_max_sampled},
                    {"tau_star", k.tau_star},
                    {"kappa_min", k.kappa_min},
                    {"kappa_max", k.kappa_max},
                    {"diameter", k.diameter},
                    {"order1_bound", 2.0 * (k.tau_max / k.tau_star + 1.0)},
                    {"samples", k.samples},
                    {"seed", k.seed}};
    const std::string fmt = pick_format(c, {"json"});
    (void)fmt;
    for (const auto& [key, v] : j.items())
        std::printf("%-16s %s\n", key.c_str(), v.is_number_float() ? format_double(v.get<double>()).c_str()
                                                                    : option_text(v).c_str());
    if (!c.out.empty()) write_file_atomic(c.out, canonical_dump(j) + "\n");
    return 0;
}

int cmd_orbit(const RunConfig& c, const Flags& f) {
    const BilliardTable t = load(c, f, false);
    const PhasePoint z = center(c, f);
    const OrbitTrace trace = trace_orbit(t, z.wall_id, z.r, z.phi, c.steps);
    emit(c, pick_format(c, {"csv", "json"}) == "csv" ? orbit_csv(trace) : orbit_json(trace) + "\n");
    return 0;
}

int cmd_singularities(const RunConfig& c, const Flags& f) {
    const BilliardTable t = load(c, f, false);
    TraceOptions o;
    o.resolution = c.resolution;
    const auto curves = trace_singularity(t, c.level, o);
    if (pick_format(c, {"json", "csv"}) == "json") {
        emit(c, curves_json(curves, find_multiple_points(t, curves, o.map)) + "\n");
        return 0;
    }
    std::string out = "curve_id,level,origin,exhausted,wall_id,r,phi\n";
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& cv = curves[i];
        for (const auto& p : cv.nodes)
            out += std::to_string(i) + ',' + std::to_string(cv.level) + ',' + std::string(to_string(cv.origin)) + ',' +
                   (cv.exhausted ? "1" : "0") + ',' + std::to_string(p.wall_id) + ',' + format_double(p.r) + ',' +
                   format_double(p.phi) + '\n';
    }
    emit(c, out);
    return 0;
}

int cmd_portrait(const RunConfig& c, const Flags& f) {
    const BilliardTable t = load(c, f, false);
    SectorPortrait p = sector_portrait(t, center(c, f), fixed_n(c, f, 1), c.k0);
    classify_sectors(t, p);
    if (pick_format(c, {"json", "csv"}) == "json") {
        emit(c, portrait_json(p) + "\n");
        return 0;
    }
    std::string out = "sector,theta_lo,theta_hi,regular,active,type,quadrants,itinerary\n";
    for (std::size_t i = 0; i < p.sectors.size(); ++i) {
        const Sector& s = p.sectors[i];
        out += std::to_string(i) + ',' + format_double(s.theta_lo) + ',' + format_double(s.theta_hi) + ',' +
               (s.regular ? "1" : "0") + ',' + (s.active ? "1" : "0") + ',' + std::string(to_string(s.type)) + ',' +
               std::to_string(s.quadrants) + ",\"" + itinerary_text(s.itinerary) + "\"\n";
    }
    emit(c, out);
    return 0;
}

int cmd_evolve(const RunConfig& c, const Flags& f) {
    const BilliardTable t = load(c, f, false);
    const UCurveOptions o = curve_options(c);
    UCurve w;
    if (f.wall->count() + f.r->count() + f.phi->count() > 0) {
        w = seed_ucurve(t, center(c, f), c.delta, c.k0, 8, o.map);
    } else {
        require_seed(c, f);
        auto g = stream_rng(c.seed, 0);
        for (int attempt = 0;; ++attempt) {
            try {
                w = seed_ucurve(t, sample_phase_point(t, g), c.delta, c.k0, 8, o.map);
                break;
            } catch (const BilliardError& e) {
                if (e.kind() != ErrorKind::SingularSeed || attempt == 99) throw;
            }
        }
    }
    const ComponentTree tree = evolve_n(t, w, fixed_n(c, f, 1), o);
    const std::string tj = tree_json(tree, c.k0);
    if (pick_format(c, {"json", "csv"}) == "json") {
        emit(c, tj + "\n");
    } else {
        std::string out = "id,parent,generation,k,rank,regular,tail,lambda,inverse_expansion,length\n";
        const json parsed = json::parse(tj);
        for (const auto& x : parsed.at("components"))
            out += x.at("id").dump() + ',' + x.at("parent").dump() + ',' + x.at("generation").dump() + ',' +
                   x.at("k").dump() + ',' + x.at("rank").dump() + ',' + (x.at("regular").get<bool>() ? "1" : "0") +
                   ',' + (x.at("tail").get<bool>() ? "1" : "0") + ',' + format_double(x.at("lambda").get<double>()) +
                   ',' + format_double(x.at("inverse_expansion").get<double>()) + ',' +
                   format_double(x.at("length").get<double>()) + '\n';
        emit(c, out);
    }
    if (tree.exploded) {
        std::fprintf(stderr, "ComponentExplosion: more than %llu leaves, tree truncated\n",
                     static_cast<unsigned long long>(o.max_leaves));
        return 3;
    }
    return 0;
}

ScanConfig scan_config(const RunConfig& c, const BilliardTable& t, int n) {
    ScanConfig s;
    s.delta = c.delta;
    s.samples = c.samples;
    s.n = n;
    s.seed = c.seed;
    s.threads = thread_count(c);
    if (c.anchored) s.anchors = grazing_anchors(t);
    return s;
}

int finish_report(const RunConfig& c, const ExpansionReport& rep) {
    emit(c, pick_format(c, {"json", "csv"}) == "json" ? report_json(rep) + "\n" : report_csv(rep));
    if (!c.out.empty()) std::printf("%s\n", rep.verdict_text.c_str());
    return rep.failed_samples > 0 ? 3 : 0;
}

int cmd_grazing(const RunConfig& c, const Flags& f) {
    require_seed(c, f);
    const BilliardTable t = load(c, f, false);
    ExpansionReport rep = sup_scan(t, scan_config(c, t, 1), ScanConstants{}, curve_options(c));
    if (!c.out.empty()) std::printf("sup grazing sum %s\n", format_double(rep.sup_grazing).c_str());
    return finish_report(c, rep);
}

int cmd_expansion(const RunConfig& c, const Flags& f) {
    require_seed(c, f);
    const BilliardTable t = load(c, f, false);
    UCurveOptions o = curve_options(c);
    std::fprintf(stderr, "fitting constants\n");
    const ExpansionConstant ce = certify_expansion_constant(t, 20000, c.seed, o.map);
    const HyperbolicityFit hf = fit_hyperbolicity(t, 2000, 12, c.seed, o.map);
    const LengthRatioFit lf = fit_length_ratio(t, 200, 1e-6, 1e-3, c.seed, o);
    const std::vector<PhasePoint> pool = multiple_point_pool(t);
    const LinearComplexityFit xf = fit_linear_complexity(t, pool, pool.size(), 5, c.k0, c.seed);
    o.c_expansion = ce.c_hat;
    const ScanConstants sc{hf.c_hat, hf.lambda_hat};

    int n = 0;
    std::string source = "fixed";
    if (f.n->count() > 0 && c.n != "auto") {
        n = fixed_n(c, f, 1);
    } else {
        try {
            n = select_N(xf.xi_hat, hf.c_hat, hf.lambda_hat, 12);
            source = "select_N";
        } catch (const BilliardError& e) {
            if (e.kind() != ErrorKind::NoSuchN) throw;
            source = "empirical";
        }
    }
    ExpansionReport rep;
    if (n == 0) {
        // smallest N <= 12 with an empirical sup below 1; deeper scans reuse the same curves
        int depth = 2;
        for (;;) {
            std::fprintf(stderr, "scanning to depth %d\n", depth);
            rep = sup_scan(t, scan_config(c, t, depth), sc, o);
            if (rep.failed_samples > 0) break;
            for (int m = 1; m <= depth && n == 0; ++m)
                if (rep.sup_e[m] < 1.0) n = m;
            if (n > 0 || depth == 12) break;
            depth = std::min(2 * depth, 12);
        }
        if (n == 0) source = "empirical (none found)";
        else if (n != rep.n) rep = sup_scan(t, scan_config(c, t, n), sc, o);
    } else {
        rep = sup_scan(t, scan_config(c, t, n), sc, o);
    }
    rep.table_name = c.table;
    rep.c_len = lf.c_len;
    rep.xi_hat = xf.xi_hat;
    rep.k_hat = xf.k_hat_max.empty() ? 0 : *std::max_element(xf.k_hat_max.begin(), xf.k_hat_max.end());
    rep.n_source = source;
    return finish_report(c, rep);
}

int cmd_render(const RunConfig& c, const Flags& f) {
    pick_format(c, {"svg"});
    const BilliardTable t = load(c, f, false);
    json artifact;
    try {
        artifact = json::parse(read_file(c.in));
    } catch (const json::exception& e) {
        throw BilliardError(ErrorKind::InvalidSpec, c.in + ": " + e.what());
    }
    emit(c, render_svg(t, artifact, parse_render_kind(c.kind)));
    return 0;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    const std::optional<json> cfg = prescan_config(argc, argv);
    if (cfg && cfg->contains("command")) {
        const bool named = std::any_of(args.begin(), args.end(), [](const std::string& a) {
            return std::find(std::begin(kCommands), std::end(kCommands), a) != std::end(kCommands);
        });
        if (!named) args.insert(args.begin(), cfg->at("command").get<std::string>());
    }

    CLI::App app{"Dispersing billiards with corners: orbits, singularities, u-curve expansion scans"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file mirroring the flags");
    app.fallthrough();
    RunConfig c;
    std::vector<std::pair<CLI::App*, Flags>> subs;
    for (const char* name : kCommands) {
        CLI::App* s = app.add_subcommand(name, describe(name));
        subs.emplace_back(s, add_flags(s, c, name));
    }
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    for (auto& [s, f] : subs) {
        if (!s->parsed()) continue;
        c.command = s->get_name();
        if (cfg) apply_config(s, *cfg);
        if (c.table.empty()) throw UsageError("--table is required");
        if (c.command == "render" && c.in.empty()) throw UsageError("--in is required");
        const Flags& fl = f;
        if (c.command == "validate") return cmd_validate(c, fl);
        if (c.command == "orbit") return cmd_orbit(c, fl);
        if (c.command == "singularities") return cmd_singularities(c, fl);
        if (c.command == "portrait") return cmd_portrait(c, fl);
        if (c.command == "evolve") return cmd_evolve(c, fl);
        if (c.command == "grazing-sum") return cmd_grazing(c, fl);
        if (c.command == "expansion") return cmd_expansion(c, fl);
        if (c.command == "render") return cmd_render(c, fl);
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const BilliardError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
