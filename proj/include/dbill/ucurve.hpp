#pragma once
/**
 * @file ucurve.hpp
 * @brief Unstable curves, their H-components under F^n and expansion sums.
 *
 * A u-curve is a polyline on one wall whose segments lie in the unstable
 * cone. One step of F cuts it where the itinerary symbol (wall, lattice
 * shift, corner branch, homogeneity strip) changes; each piece maps to an
 * H-component carrying the minimal expansion of F along it.
 */

#include "dbill/map.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dbill {

struct UCurve {
    std::vector<PhasePoint> nodes;  ///< r may run past the wall length on closed walls
    std::vector<Vec2> tangents;     ///< unit (dr, dphi) at each node
    double length() const;          ///< polyline length in (r, phi)
    int wall_id() const { return nodes.empty() ? -1 : nodes.front().wall_id; }
};

struct StepSymbol {
    int wall_id{-1};
    int shift_x{0}, shift_y{0};
    int branch{0};  ///< encoded corner branch trail, 0 for a regular hit
    int k{0};       ///< homogeneity strip index of the image
    bool operator==(const StepSymbol&) const = default;
};

struct HComponent {
    int id{0};
    int parent{-1};  ///< id in the previous generation, -1 for the seed
    int generation{0};
    UCurve curve;
    std::vector<StepSymbol> itinerary;
    std::vector<double> node_log_growth;  ///< accumulated log |DF^n t| per node
    int rank{0};                          ///< 0 when regular
    bool regular{true};
    /// Product of per-step minima of the expansion factor (certified lower bound).
    double lambda{1.0};
    /// Minimum over nodes of the accumulated expansion.
    double lambda_sampled{1.0};
    double preimage_length{0.0};  ///< length of the one-step preimage in the parent
    /// Aggregated strips beyond resolution or k_cap: contributes tail_bound
    /// instead of 1 / lambda and is not evolved further.
    bool tail{false};
    double tail_bound{0.0};
    int tail_k{0};  ///< smallest |k| inside the tail

    double inverse_expansion() const { return tail ? tail_bound : 1.0 / lambda; }
};

struct UCurveOptions {
    int k0{30};
    int k_cap{10000};
    /// Lower bound C in |DF v| >= C / cos(phi'); sets the strip tail bound.
    double c_expansion{0.05};
    double cut_tol{1e-12};      ///< absolute, along the curve
    double degenerate{1e-13};   ///< shorter preimages are merged
    double resolve_floor{1e-11};  ///< nearly grazing pieces shorter than this join the tail
    int min_samples{33};
    double ratio_refine{1.1};
    int max_refine{24};
    std::uint64_t max_leaves{10000000};
    MapOptions map;
};

struct StepResult {
    std::vector<HComponent> components;  ///< ordered along the curve
    int degenerate_merged{0};
};

/// Curve of length `length` centered at z, following the unstable cone bisector.
/// Throws SingularSeed near S_0, strip boundaries or where the cone cannot be followed.
UCurve seed_ucurve(const BilliardTable& table, const PhasePoint& z, double length, int k0 = 30, int segments = 8,
                   const MapOptions& opts = {});

/// True if every segment is strictly increasing and every node tangent lies in the unstable cone.
bool is_ucurve(const BilliardTable& table, const UCurve& w, const MapOptions& opts = {});

/// Point and tangent at arclength fraction u in [0, 1].
PhasePoint curve_at(const UCurve& w, double u, Vec2* tangent = nullptr);

/// H-components of F(parent.curve). Children inherit the parent's itinerary and growth.
StepResult evolve_one_step(const BilliardTable& table, const HComponent& parent, const UCurveOptions& opts);
StepResult evolve_one_step(const BilliardTable& table, const UCurve& w, const UCurveOptions& opts);

struct ComponentTree {
    std::vector<std::vector<HComponent>> levels;  ///< levels[n]: generation n, levels[0] is W
    std::vector<int> regular_count;               ///< K_n(W), K_0 = 1
    std::vector<double> expansion_sum;            ///< E_n(W), E_0 = 1
    std::vector<int> leaf_count;
    int degenerate_merged{0};
    bool exploded{false};
};

/// Breadth-first evolution to depth n. Tail components stay leaves and are
/// carried unchanged to deeper levels. Throws ComponentExplosion past max_leaves.
ComponentTree evolve_n(const BilliardTable& table, const UCurve& w, int n, const UCurveOptions& opts);

/// Sum of inverse expansions over the nearly grazing one-step components (tail included).
double one_step_grazing_sum(const BilliardTable& table, const UCurve& w, const UCurveOptions& opts);
/// E_N(W).
double n_step_expansion_sum(const BilliardTable& table, const UCurve& w, int n, const UCurveOptions& opts);

/// Smallest N <= n_cap with xi N < c^-1 lambda^N / 3. Throws NoSuchN.
int select_N(double xi, double c_hat, double lambda_hat, int n_cap = 12);

/// delta_n = (delta_0 c_len^-n)^(2^n) for n = 0..n_max.
std::vector<double> delta_schedule(double delta0, double c_len, int n_max);

struct LengthRatioFit {
    double c_len{0.0};  ///< max |W'| / |W|^(1/2)
    double worst_length{0.0};
    std::uint64_t samples{0};
};
/// Samples u-curves with log-uniform length in [lo, hi] and records the largest ratio |W'| / |W|^(1/2)
/// over connected components W' of FW: consecutive pieces landing on the same wall through the
/// same branch are joined across homogeneity strip boundaries. With anchors, curves are centered
/// on points drawn from them instead of on uniform base points.
LengthRatioFit fit_length_ratio(const BilliardTable& table, std::uint64_t samples, double lo, double hi,
                                std::uint64_t seed, const UCurveOptions& opts,
                                const std::vector<PhasePoint>& anchors = {});

struct ScanConfig {
    double delta{1e-4};
    std::uint64_t samples{1000};
    int n{1};
    std::uint64_t seed{0};
    int threads{1};
    /// When non-empty, curves are centered on points drawn from here instead of uniform base points.
    std::vector<PhasePoint> anchors;
};

/// Nodes of the traced grazing preimages S_-1, away from their ends: curves centered
/// here straddle a tangency and meet the nearly grazing strips.
std::vector<PhasePoint> grazing_anchors(const BilliardTable& table, int resolution = 200);

struct SampleRow {
    std::uint64_t sample_id{0};
    double length{0.0};
    PhasePoint base;
    std::vector<int> leaf_count;  ///< per n = 0..N
    std::vector<int> k_n;
    std::vector<double> e_n;
    double grazing_sum{0.0};
    bool exploded{false};
    std::string error;  ///< non-empty when the sample aborted
};

struct TreeCheck {
    int n{0};
    double lhs{0.0};
    double rhs_assumed{0.0};     ///< with the assumed grazing coefficient c N^-1 Lambda^-2N
    double rhs_measured{0.0};  ///< with the measured one-step grazing sup
    bool holds_assumed{false};
    bool holds_measured{false};
};

struct ExpansionReport {
    std::string table_name;
    int k0{30};
    int k_cap{10000};
    double delta{1e-4};
    int n{1};
    std::uint64_t samples{0};
    std::uint64_t seed{0};
    double c_hat{1.0};
    double lambda_hat{1.0};
    double c_expansion{0.0};
    double c_len{0.0};  ///< filled by callers that fit it
    double xi_hat{0.0};
    int k_hat{0};       ///< largest regular complexity seen while fitting xi_hat
    std::string n_source{"fixed"};  ///< "fixed", "select_N" or "empirical"
    std::vector<SampleRow> rows;
    std::vector<double> sup_e;  ///< per n
    std::vector<int> sup_k;     ///< per n
    double sup_grazing{0.0};
    std::vector<TreeCheck> tree_checks;  ///< worst case over samples per n
    int failed_samples{0};
    bool verdict{false};
    std::string verdict_text;
};

struct ScanConstants {
    double c_hat{1.0};
    double lambda_hat{1.0};
};

/// Seeds `samples` curves of length delta and evolves each to depth n.
/// Results depend only on the seed, not on the thread count.
ExpansionReport sup_scan(const BilliardTable& table, const ScanConfig& cfg, const ScanConstants& constants,
                         const UCurveOptions& opts);

std::string report_json(const ExpansionReport& r);
/// Inverse of report_json: report_json(parse_report(s)) == s.
ExpansionReport parse_report(const std::string& json);
/// sample_id,length,n,leaf_count,K_n,E_n,grazing_sum
std::string report_csv(const ExpansionReport& r);

}  // namespace dbill
