#include "dbill/atlas.hpp"
#include "dbill/errors.hpp"
#include "dbill/json_io.hpp"
#include "dbill/rng.hpp"
#include "dbill/ucurve.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

namespace dbill {

namespace {

using nlohmann::json;

SampleRow run_sample(const BilliardTable& table, const ScanConfig& cfg, std::uint64_t id, const UCurveOptions& opts) {
    SampleRow row;
    row.sample_id = id;
    auto g = stream_rng(cfg.seed, id);
    UCurve w;
    bool seeded = false;
    for (int attempt = 0; attempt < 100 && !seeded; ++attempt) {
        if (cfg.anchors.empty())
            row.base = sample_phase_point(table, g);
        else
            row.base = cfg.anchors[std::min(cfg.anchors.size() - 1,
                                            static_cast<std::size_t>(uniform01(g) * cfg.anchors.size()))];
        try {
            w = seed_ucurve(table, row.base, cfg.delta, opts.k0, 8, opts.map);
            seeded = true;
        } catch (const BilliardError& e) {
            if (e.kind() != ErrorKind::SingularSeed) throw;
        }
    }
    if (!seeded) {
        row.error = "SingularSeed";
        return row;
    }
    row.length = w.length();
    try {
        const ComponentTree t = evolve_n(table, w, cfg.n, opts);
        row.leaf_count = t.leaf_count;
        row.k_n = t.regular_count;
        row.e_n = t.expansion_sum;
        row.exploded = t.exploded;
        if (t.exploded) row.error = "ComponentExplosion";
        if (t.levels.size() > 1) {
            for (const auto& c : t.levels[1])
                if (!c.regular) row.grazing_sum += c.inverse_expansion();
        } else {
            row.grazing_sum = one_step_grazing_sum(table, w, opts);
        }
    } catch (const BilliardError& e) {
        row.error = std::string(to_string(e.kind()));
    }
    return row;
}

// E_n <= K_n c L^-n + g sum_{r=1}^n K_{r-1} E^_{n-r}
double tree_rhs(const SampleRow& row, int n, double c, double lambda, double g, const std::vector<double>& sup_e) {
    double s = 0.0;
    for (int r = 1; r <= n; ++r) s += row.k_n[r - 1] * sup_e[n - r];
    return row.k_n[n] * c * std::pow(lambda, -n) + g * s;
}

json row_json(const SampleRow& r) {
    return json{{"sample_id", r.sample_id},
                {"length", r.length},
                {"base", {r.base.wall_id, r.base.r, r.base.phi}},
                {"leaf_count", r.leaf_count},
                {"K_n", r.k_n},
                {"E_n", r.e_n},
                {"grazing_sum", r.grazing_sum},
                {"exploded", r.exploded},
                {"error", r.error}};
}

}  // namespace

std::vector<PhasePoint> grazing_anchors(const BilliardTable& table, int resolution) {
    TraceOptions o;
    o.resolution = resolution;
    std::vector<PhasePoint> out;
    for (const auto& c : trace_singularity(table, -1, o)) {
        if (c.origin != CurveOrigin::GrazingPreimage || c.exhausted) continue;
        const std::size_t skip = c.nodes.size() / 10;
        for (std::size_t i = skip; i + skip < c.nodes.size(); ++i) out.push_back(c.nodes[i]);
    }
    return out;
}

ExpansionReport sup_scan(const BilliardTable& table, const ScanConfig& cfg, const ScanConstants& constants,
                         const UCurveOptions& opts) {
    if (cfg.n < 0 || !(cfg.delta > 0.0)) throw BilliardError(ErrorKind::OutOfRange, "need n >= 0 and delta > 0");
    ExpansionReport rep;
    rep.k0 = opts.k0;
    rep.k_cap = opts.k_cap;
    rep.delta = cfg.delta;
    rep.n = cfg.n;
    rep.samples = cfg.samples;
    rep.seed = cfg.seed;
    rep.c_hat = constants.c_hat;
    rep.lambda_hat = constants.lambda_hat;
    rep.c_expansion = opts.c_expansion;
    rep.rows.resize(cfg.samples);

    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    auto worker = [&] {
        for (std::uint64_t i = next++; i < cfg.samples; i = next++) {
            try {
                rep.rows[i] = run_sample(table, cfg, i, opts);
            } catch (...) {
                std::lock_guard lock(failure_lock);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, cfg.threads);
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    rep.sup_e.assign(cfg.n + 1, 0.0);
    rep.sup_k.assign(cfg.n + 1, 0);
    for (const auto& r : rep.rows) {
        if (!r.error.empty()) {
            ++rep.failed_samples;
            continue;
        }
        for (int m = 0; m <= cfg.n; ++m) {
            rep.sup_e[m] = std::max(rep.sup_e[m], r.e_n[m]);
            rep.sup_k[m] = std::max(rep.sup_k[m], r.k_n[m]);
        }
        rep.sup_grazing = std::max(rep.sup_grazing, r.grazing_sum);
    }

    const int N = std::max(1, cfg.n);
    const double g_assumed = constants.c_hat / N * std::pow(constants.lambda_hat, -2.0 * N);
    for (int m = 1; m <= cfg.n; ++m) {
        TreeCheck tc;
        tc.n = m;
        tc.holds_assumed = tc.holds_measured = true;
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& r : rep.rows) {
            if (!r.error.empty()) continue;
            const double rp = tree_rhs(r, m, constants.c_hat, constants.lambda_hat, g_assumed, rep.sup_e);
            const double rm = tree_rhs(r, m, constants.c_hat, constants.lambda_hat, rep.sup_grazing, rep.sup_e);
            tc.holds_assumed = tc.holds_assumed && r.e_n[m] <= rp;
            tc.holds_measured = tc.holds_measured && r.e_n[m] <= rm;
            if (r.e_n[m] - rm > worst) {
                worst = r.e_n[m] - rm;
                tc.lhs = r.e_n[m];
                tc.rhs_assumed = rp;
                tc.rhs_measured = rm;
            }
        }
        rep.tree_checks.push_back(tc);
    }

    const double e_final = rep.sup_e.empty() ? 0.0 : rep.sup_e.back();
    std::ostringstream text;
    if (rep.failed_samples > 0) {
        rep.verdict = false;
        text << "inconclusive: " << rep.failed_samples << " samples aborted";
    } else if (e_final < 1.0) {
        rep.verdict = true;
        text << "expansion estimate holds (empirical): sup E_" << cfg.n << " = " << format_double(e_final) << " < 1";
    } else {
        rep.verdict = false;
        text << "expansion estimate not observed: sup E_" << cfg.n << " = " << format_double(e_final) << " >= 1";
    }
    rep.verdict_text = text.str();
    return rep;
}

std::string report_json(const ExpansionReport& r) {
    json checks = json::array();
    for (const auto& c : r.tree_checks)
        checks.push_back({{"n", c.n},
                          {"lhs", c.lhs},
                          {"rhs_assumed", c.rhs_assumed},
                          {"rhs_measured", c.rhs_measured},
                          {"holds_assumed", c.holds_assumed},
                          {"holds_measured", c.holds_measured}});
    json rows = json::array();
    for (const auto& row : r.rows) rows.push_back(row_json(row));
    const json j{{"table", r.table_name},
                 {"k0", r.k0},
                 {"k_cap", r.k_cap},
                 {"delta", r.delta},
                 {"N", r.n},
                 {"samples", r.samples},
                 {"seed", r.seed},
                 {"c_hat", r.c_hat},
                 {"lambda_hat", r.lambda_hat},
                 {"c_expansion", r.c_expansion},
                 {"c_len", r.c_len},
                 {"xi_hat", r.xi_hat},
                 {"k_hat", r.k_hat},
                 {"n_source", r.n_source},
                 {"sup_E", r.sup_e},
                 {"sup_K", r.sup_k},
                 {"sup_grazing", r.sup_grazing},
                 {"tree_checks", checks},
                 {"failed_samples", r.failed_samples},
                 {"verdict", r.verdict},
                 {"verdict_text", r.verdict_text},
                 {"rows", rows}};
    return canonical_dump(j);
}

ExpansionReport parse_report(const std::string& text) {
    ExpansionReport r;
    try {
        const json j = json::parse(text);
        r.table_name = j.at("table").get<std::string>();
        r.k0 = j.at("k0").get<int>();
        r.k_cap = j.at("k_cap").get<int>();
        r.delta = j.at("delta").get<double>();
        r.n = j.at("N").get<int>();
        r.samples = j.at("samples").get<std::uint64_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.c_hat = j.at("c_hat").get<double>();
        r.lambda_hat = j.at("lambda_hat").get<double>();
        r.c_expansion = j.at("c_expansion").get<double>();
        r.c_len = j.at("c_len").get<double>();
        r.xi_hat = j.at("xi_hat").get<double>();
        r.k_hat = j.at("k_hat").get<int>();
        r.n_source = j.at("n_source").get<std::string>();
        r.sup_e = j.at("sup_E").get<std::vector<double>>();
        r.sup_k = j.at("sup_K").get<std::vector<int>>();
        r.sup_grazing = j.at("sup_grazing").get<double>();
        for (const auto& c : j.at("tree_checks"))
            r.tree_checks.push_back({c.at("n").get<int>(), c.at("lhs").get<double>(), c.at("rhs_assumed").get<double>(),
                                     c.at("rhs_measured").get<double>(), c.at("holds_assumed").get<bool>(),
                                     c.at("holds_measured").get<bool>()});
        r.failed_samples = j.at("failed_samples").get<int>();
        r.verdict = j.at("verdict").get<bool>();
        r.verdict_text = j.at("verdict_text").get<std::string>();
        for (const auto& x : j.at("rows")) {
            SampleRow s;
            s.sample_id = x.at("sample_id").get<std::uint64_t>();
            s.length = x.at("length").get<double>();
            const auto& b = x.at("base");
            s.base = {b.at(0).get<int>(), b.at(1).get<double>(), b.at(2).get<double>()};
            s.leaf_count = x.at("leaf_count").get<std::vector<int>>();
            s.k_n = x.at("K_n").get<std::vector<int>>();
            s.e_n = x.at("E_n").get<std::vector<double>>();
            s.grazing_sum = x.at("grazing_sum").get<double>();
            s.exploded = x.at("exploded").get<bool>();
            s.error = x.at("error").get<std::string>();
            r.rows.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw BilliardError(ErrorKind::InvalidSpec, std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string report_csv(const ExpansionReport& r) {
    std::string out = "sample_id,length,n,leaf_count,K_n,E_n,grazing_sum\n";
    for (const auto& row : r.rows) {
        for (std::size_t m = 0; m < row.e_n.size(); ++m) {
            out += std::to_string(row.sample_id) + ',' + format_double(row.length) + ',' + std::to_string(m) + ',' +
                   std::to_string(row.leaf_count[m]) + ',' + std::to_string(row.k_n[m]) + ',' +
                   format_double(row.e_n[m]) + ',' + format_double(row.grazing_sum) + '\n';
        }
    }
    return out;
}

}  // namespace dbill
