#pragma once
/**
 * @file atlas.hpp
 * @brief Singularity curves, multiple points and local sector portraits.
 *
 * S_l = F^l S_0 is traced by mapping seed lines of S_0 (the grazing lines
 * phi = +-pi/2 and the corner verticals) l times, branch by branch, and
 * cutting wherever the itinerary changes. Negative levels use F^{-1}.
 *
 * A sector portrait around z probes the circle z + rho (cos t, sin t) in the
 * (r, phi) plane and groups directions by their n-step itinerary. rho is
 * halved until two consecutive halvings give the same combinatorics.
 */

#include "dbill/map.hpp"

#include <array>
#include <string>
#include <vector>

namespace dbill {

enum class CurveOrigin { GrazingPreimage, CornerPreimage, StripBoundary };
std::string_view to_string(CurveOrigin o);

/// A seed line of S_0 (or of a strip boundary) evaluated at parameter s in [0, 1].
struct SeedLine {
    CurveOrigin origin{CurveOrigin::GrazingPreimage};
    int wall_id{0};
    bool vertical{false};  ///< r fixed, phi varies
    double fixed{0.0};     ///< the fixed coordinate
    double lo{0.0}, hi{1.0};  ///< range of the varying coordinate
    PhasePoint at(double s) const;
};

struct SingularityCurve {
    int level{0};
    CurveOrigin origin{CurveOrigin::GrazingPreimage};
    SeedLine seed{};
    std::string itinerary;
    std::vector<PhasePoint> nodes;
    std::vector<double> params;  ///< seed parameter of each node
    bool exhausted{false};       ///< shorter than the resolution floor; a single point
};

struct TraceOptions {
    int resolution{400};       ///< seeds per seed line
    double bisect_tol{1e-12};  ///< in the seed parameter
    double fragment_floor{1e-10};
    double max_gap{0.02};  ///< refine when consecutive nodes are farther apart
    int max_depth{14};
    std::vector<int> strip_ks;  ///< also trace preimages of these strip boundaries
    MapOptions map;
};

std::vector<SeedLine> seed_lines(const BilliardTable& table, const std::vector<int>& strip_ks = {});

/// |level| in 1..6.
std::vector<SingularityCurve> trace_singularity(const BilliardTable& table, int level, const TraceOptions& opts = {});

/// Node pairs breaking strict monotonicity (decreasing for level < 0, increasing for level > 0);
/// pairs with |dr| or |dphi| under tol are skipped.
int monotonicity_violations(const SingularityCurve& c, double tol = 1e-12);

/// Re-evaluates a curve at seed parameter s. Throws if the itinerary is not realized there.
PhasePoint curve_point(const BilliardTable& table, const SingularityCurve& c, double s, const MapOptions& opts = {});

struct MultiplePoint {
    PhasePoint z;
    std::string kind;  ///< "endpoint" or "crossing"
};
/// Endpoints of traced curves off the grazing lines, and crossings between
/// curves refined by Newton iteration on the two seed parameters.
std::vector<MultiplePoint> find_multiple_points(const BilliardTable& table, const std::vector<SingularityCurve>& curves,
                                                const MapOptions& opts = {});

enum class WallType { None, A, B };
std::string_view to_string(WallType t);

struct ItineraryStep {
    int wall_id{-1};
    int shift_x{0}, shift_y{0};
    int branch{0};  ///< encoded branch label trail, 0 when regular
    int strip{0};   ///< -1 / 0 / +1: below H_{-k0}, inside H^_0, above H_{k0}
    int side{0};    ///< reference-wall break bit (0 when off)
    int back{0};    ///< front/back bit (0 when off)
    bool operator==(const ItineraryStep&) const = default;
    auto operator<=>(const ItineraryStep&) const = default;
};
using Itinerary = std::vector<ItineraryStep>;

enum Quadrant : unsigned { NE = 1, NW = 2, SW = 4, SE = 8 };

struct Sector {
    double theta_lo{0.0};
    double theta_hi{0.0};  ///< ccw from theta_lo; may exceed 2 pi
    Itinerary itinerary;
    bool regular{true};
    bool active{true};
    bool contains_active_quadrant{false};
    WallType type{WallType::None};
    unsigned quadrants{0};
    PhasePoint image_center;
    double image_lo{0.0};  ///< image directions at image_center, ccw arc
    double image_hi{0.0};
    Mat2 df;
    bool back{false};
};

struct SectorPortrait {
    PhasePoint center;
    int n{1};
    int k0{30};
    double rho_hat{0.0};
    int halvings{0};
    std::vector<Sector> sectors;
};

struct PortraitOptions {
    int probes{720};
    double rho0{1e-4};
    int max_halvings{40};
    double angle_tol{1e-10};
    bool split_front_back{false};
    /// Distinguish first hits on either side of the reference hit when they
    /// land on the same wall, as if that wall were broken there.
    bool break_reference_wall{false};
    MapOptions map;
};

SectorPortrait sector_portrait(const BilliardTable& table, const PhasePoint& z, int n, int k0,
                               const PortraitOptions& opts = {});
/// Fills regular / active / type / image data of each sector.
void classify_sectors(const BilliardTable& table, SectorPortrait& portrait, const PortraitOptions& opts = {});

/// Image arc of directions [lo, hi] at the sector's center under its linearized first step.
std::pair<double, double> image_arc(const Sector& s, double lo, double hi);

struct ComplexityRecord {
    PhasePoint z;
    int n{1};
    int k_hat{0};
    std::array<int, 4> per_quadrant{};  ///< NE, NW, SW, SE
    int order1_sectors{0};
};
ComplexityRecord regular_complexity(const BilliardTable& table, const PhasePoint& z, int n, int k0,
                                    const PortraitOptions& opts = {});

struct LinearComplexityFit {
    double xi_hat{0.0};           ///< max over points and n of K^_n(z) / n
    std::vector<int> k_hat_max;   ///< index n-1
    int points{0};
    int failed{0};                ///< portraits that did not stabilize
};
/// Multiple points of S_-1 and S_1 traced at `resolution`.
std::vector<PhasePoint> multiple_point_pool(const BilliardTable& table, int resolution = 200);
/// Draws `count` points from the pool (stream per draw) and fits K^_n(z) <= xi n for n = 1..n_max.
LinearComplexityFit fit_linear_complexity(const BilliardTable& table, const std::vector<PhasePoint>& pool,
                                          std::uint64_t count, int n_max, int k0, std::uint64_t seed,
                                          const PortraitOptions& opts = {});

struct ActiveVerdict {
    bool pass{true};
    /// per active quadrant (NW, SE): regular order-1 pieces and how many images contain an active quadrant
    std::array<int, 2> regular_pieces{};
    std::array<int, 2> active_images{};
    std::array<int, 2> type_a{};
    std::array<bool, 2> probed{};
};
ActiveVerdict active_sector_conservation(const BilliardTable& table, const PhasePoint& z, int k0,
                                         const PortraitOptions& opts = {});

std::string portrait_json(const SectorPortrait& p);
std::string itinerary_text(const Itinerary& it);

}  // namespace dbill
