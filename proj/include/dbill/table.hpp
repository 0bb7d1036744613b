#pragma once
/**
 * @file table.hpp
 * @brief Dispersing billiard tables built from circular arcs.
 *
 * A wall is an arc of a circle traversed in a declared direction. Walking a
 * wall in its positive direction keeps the table interior on the left, so a
 * wall with orientation -1 (clockwise around its center) has the table on the
 * outside of the circle and is dispersing with curvature 1/radius.
 *
 * Corners are detected by endpoint coincidence. The internal angle gamma of a
 * corner is the counterclockwise angle from the outgoing wall tangent w_plus
 * to -w_minus, where w_minus is the tangent of the incoming wall at its end.
 */

#include "dbill/vec2.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dbill {

enum class Ambient { Plane, Torus };
enum class CornerKind { Acute, Flat, Obtuse };

std::string_view to_string(Ambient a);
std::string_view to_string(CornerKind k);

struct WallSpec {
    Vec2 center;
    double radius{1.0};
    double theta_start{0.0};
    double theta_end{0.0};
    int orientation{-1};
};

struct TableSpec {
    Ambient ambient{Ambient::Plane};
    std::vector<WallSpec> walls;
};

struct ArcWall {
    Vec2 center;
    double radius{1.0};
    double theta_start{0.0};
    double theta_end{0.0};
    int orientation{-1};
    int wall_id{0};
    double span{kTwoPi};  ///< angular extent in (0, 2pi]
    bool closed{false};

    double length() const { return radius * span; }
    /// Signed curvature; positive for dispersing walls.
    double curvature() const { return -orientation / radius; }
    double angle_at(double r) const { return theta_start + orientation * r / radius; }
    Vec2 point_at(double r) const { return center + radius * unit_from_angle(angle_at(r)); }
    Vec2 tangent_at(double r) const { return orientation * unit_from_angle(angle_at(r)).perp(); }
    Vec2 normal_at(double r) const { return tangent_at(r).perp(); }
    /// Arclength parameter of a point on (or near) the supporting circle.
    /// For open arcs, values just before the start come back negative.
    double param_of(const Vec2& p) const;
};

struct Corner {
    int corner_id{0};
    Vec2 position;
    int left_wall_id{0};   ///< wall ending at the corner
    int right_wall_id{0};  ///< wall starting at the corner
    double gamma{kPi};
    CornerKind kind{CornerKind::Flat};
    Vec2 w_minus;  ///< tangent limit of the incoming wall
    Vec2 w_plus;   ///< tangent limit of the outgoing wall
};

struct TableConstants {
    double tau_max{0.0};          ///< certified bound (plane: diameter)
    double tau_max_sampled{0.0};  ///< longest sampled flight
    double tau_star{0.0};         ///< shortest sampled flight away from acute corners
    double kappa_min{0.0};
    double kappa_max{0.0};
    double diameter{0.0};
    std::uint64_t samples{0};
    std::uint64_t seed{0};
};

struct BoundaryFrame {
    Vec2 position;
    Vec2 inward_normal;
    Vec2 tangent;
};

struct BuildOptions {
    double eps_join{1e-9};
    double gamma_tol{1e-6};
    /// Geometry-level oracles (e.g. the circle billiard) are focusing.
    bool allow_non_dispersing{false};
    std::uint64_t constant_samples{20000};
    std::uint64_t constant_seed{1};
};

struct BilliardTable {
    Ambient ambient{Ambient::Plane};
    std::vector<ArcWall> walls;
    std::vector<Corner> corners;
    TableConstants constants;
    TableSpec spec;
    /// corner_at_start[i] / corner_at_end[i]: corner id at each wall endpoint, -1 if none.
    std::vector<int> corner_at_start;
    std::vector<int> corner_at_end;

    double wall_length(int wall) const { return walls.at(wall).length(); }
    BoundaryFrame boundary_point(int wall, double r) const;
    /// Smallest corner angle; pi when the table has no corners.
    double gamma_min() const;
};

/// Validates the spec and builds the table, including sampled constants.
BilliardTable build_table(const TableSpec& spec, const BuildOptions& opts = {});

/// Re-derives kind and gamma of one corner from its tangent limits.
Corner corner_classify(const BilliardTable& table, int corner_id);

/// Internal angle from tangent limits, in [0, 2pi).
double internal_angle(const Vec2& w_minus, const Vec2& w_plus);
CornerKind classify_angle(double gamma, double flat_tol = 1e-12);

/// Monte-Carlo refinement of tau_max and tau_star; reproducible for a fixed seed.
TableConstants estimate_constants(const BilliardTable& table, std::uint64_t samples,
                                  std::uint64_t seed);

/// Exact diameter of the union of the walls.
double boundary_diameter(const std::vector<ArcWall>& walls);

/// Analytic corridor test on the unit torus for the rational direction (q, p).
bool torus_corridor_exists(const std::vector<ArcWall>& walls, int q, int p);

/// Scans rational directions with |p|, |q| <= max_pq and a uniform set of
/// directions for free flights longer than flight_cap. Returns the first
/// corridor direction found.
std::optional<Vec2> find_torus_corridor(const std::vector<ArcWall>& walls, int max_pq = 20,
                                        int directions = 10000, double flight_cap = 20.0);

// JSON table spec.
TableSpec parse_table_spec(const std::string& json_text);
TableSpec load_table_spec(const std::string& path);
/// Canonical byte-stable emission: sorted keys, 17 significant digits.
std::string canonical_spec_json(const TableSpec& spec);

/// Equilateral triangle of side 2 whose sides are replaced by arcs of the given
/// radius bulging into the domain. The center of each arc lies on the line
/// through the opposite vertex and the side midpoint.
TableSpec make_tri_spec(double arc_radius = 4.0);
/// Unit torus with disks of radius 0.4 at (0,0) and 0.25 at (0.5,0.5).
TableSpec make_torus_two_scatterer_spec();

}  // namespace dbill
