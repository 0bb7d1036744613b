#pragma once
/**
 * @file flow.hpp
 * @brief Straight flights between collisions and what happens at a corner.
 *
 * first_collision() solves ray/circle intersections per wall, filtered by the
 * angular span of each arc, and flags tangential (grazing) and corner hits.
 * At a corner, continuations are built from the tangent lines of the two
 * walls: each branch is a chain of immediate (zero-flight) collisions that
 * ends once the velocity points strictly into the internal sector.
 */

#include "dbill/table.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace dbill {

struct Ray {
    Vec2 origin;
    Vec2 direction;  ///< unit
};

enum class CollisionKind { Regular, Grazing, Corner };
enum class Properness { Proper, Improper };
enum class BranchLabel { Regular, LeftWall, RightWall, FlyBy };

std::string_view to_string(CollisionKind k);
std::string_view to_string(Properness p);
std::string_view to_string(BranchLabel b);

struct FlowOptions {
    double eps_tan{1e-9};     ///< radians, tangency detection
    double eps_corner{1e-9};  ///< arclength, corner detection
    double tau_min{1e-12};    ///< exclusion window against re-hitting the departure point
};

/// One collision inside a corner sequence; all happen at the corner point.
struct ImmediateCollision {
    int wall_id{-1};
    double r{0.0};
    Vec2 outgoing;
    bool grazing{false};
};

/// A continuation of the flow past a collision.
struct Continuation {
    BranchLabel label{BranchLabel::Regular};
    Ray ray;  ///< leaves the collision point
    std::vector<ImmediateCollision> collisions;
};

struct CollisionOutcome {
    CollisionKind kind{CollisionKind::Regular};
    int wall_id{-1};
    int corner_id{-1};
    Vec2 hit_point;       ///< in the unwrapped plane
    Vec2 translation;     ///< torus lattice shift: hit_point - translation lies on the base wall
    double r{0.0};        ///< arclength on wall_id
    double tau{0.0};
    Vec2 incoming;
    double cos_incidence{1.0};  ///< |incoming . normal|
    Properness properness{Properness::Proper};
    std::vector<Continuation> branches;
};

struct CornerProperness {
    Properness properness{Properness::Proper};
    bool on_boundary{false};  ///< incoming within eps_tan of a sector boundary
};

/// departure_wall: wall the ray leaves from (its own departure root is skipped).
CollisionOutcome first_collision(const BilliardTable& table, const Ray& ray, int departure_wall = -1,
                                 const FlowOptions& opts = {});

Vec2 reflect(const Vec2& direction, const Vec2& inward_normal);

/// Proper iff the incoming velocity lies in the open external sector.
CornerProperness classify_collision(const Corner& corner, const Vec2& incoming, double eps_tan = 1e-9);

/// Inward normals of the incoming (left) and outgoing (right) wall at the corner.
struct CornerNormals {
    Vec2 left;
    Vec2 right;
};
CornerNormals corner_normals(const BilliardTable& table, const Corner& corner);

/// All limits of nearby non-singular trajectories, coinciding limits merged (size <= 2).
std::vector<Continuation> corner_branches(const BilliardTable& table, const Corner& corner, const Vec2& incoming,
                                          double eps_tan = 1e-9);

/// Unmerged per-branch immediate collision lists.
std::vector<Continuation> corner_sequence(const BilliardTable& table, const Corner& corner, const Vec2& incoming,
                                          double eps_tan = 1e-9);

/// Leaving the corner point from `wall` with velocity `outgoing`: the remaining
/// zero-length collisions before the velocity points into the internal sector.
/// Empty collisions when it already does.
Continuation corner_departure(const BilliardTable& table, const Corner& corner, int wall, const Vec2& outgoing,
                              double eps_tan = 1e-9);

/// ceil(2 pi / gamma_min) + 2.
int sequence_cap(const BilliardTable& table);

/// One row of an orbit dump.
struct OrbitRow {
    int step{0};
    int wall_id{-1};
    double r{0.0};
    double phi{0.0};
    double tau{0.0};
    CollisionKind kind{CollisionKind::Regular};
    Properness properness{Properness::Proper};
    BranchLabel branch{BranchLabel::Regular};
};

struct OrbitTrace {
    std::vector<OrbitRow> rows;
    Vec2 final_direction;
    int renormalizations{0};
    double max_norm_drift{0.0};
};

/// Follows the flow from (wall, r, phi) for the given number of collisions.
/// At corners the first continuation is taken. Direction renormalization is
/// applied only when |v| drifts from 1 by more than 1e-12, and is counted.
OrbitTrace trace_orbit(const BilliardTable& table, int wall, double r, double phi, int steps,
                       const FlowOptions& opts = {});

std::string orbit_csv(const OrbitTrace& trace);

}  // namespace dbill
