#include "dbill/errors.hpp"
#include "dbill/flow.hpp"
#include "dbill/rng.hpp"
#include "dbill/table.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dbill {

namespace {

// Distance (arclength) from r to the nearest acute corner on the wall, or +inf.
double distance_to_acute_corner(const BilliardTable& t, int wall, double r) {
    double d = std::numeric_limits<double>::infinity();
    const int cs = t.corner_at_start[wall];
    const int ce = t.corner_at_end[wall];
    if (cs >= 0 && t.corners[cs].kind == CornerKind::Acute) d = std::min(d, r);
    if (ce >= 0 && t.corners[ce].kind == CornerKind::Acute) d = std::min(d, t.wall_length(wall) - r);
    return d;
}

}  // namespace

TableConstants estimate_constants(const BilliardTable& table, std::uint64_t samples, std::uint64_t seed) {
    TableConstants c = table.constants;
    c.samples = samples;
    c.seed = seed;
    double total = 0.0;
    double min_open_len = std::numeric_limits<double>::infinity();
    for (const auto& w : table.walls) {
        total += w.length();
        if (!w.closed) min_open_len = std::min(min_open_len, w.length());
    }
    // flights starting within this arclength of an acute corner can be arbitrarily short
    const double corner_margin = std::isfinite(min_open_len) ? 0.02 * min_open_len : 0.0;

    double tau_max = 0.0;
    double tau_star = std::numeric_limits<double>::infinity();
    for (std::uint64_t i = 0; i < samples; ++i) {
        auto g = stream_rng(seed, i);
        double u = uniform01(g) * total;
        int wall = 0;
        while (wall + 1 < static_cast<int>(table.walls.size()) && u > table.walls[wall].length()) {
            u -= table.walls[wall].length();
            ++wall;
        }
        const double r = std::clamp(u, 0.0, table.wall_length(wall));
        // invariant measure cos(phi) dr dphi: sin(phi) uniform
        const double phi = std::asin(uniform(g, -1.0, 1.0));
        if (std::abs(std::abs(phi) - kHalfPi) < 1e-9) continue;
        const BoundaryFrame fr = table.boundary_point(wall, r);
        const Ray ray{fr.position, fr.inward_normal * std::cos(phi) + fr.tangent * std::sin(phi)};
        CollisionOutcome oc;
        try {
            oc = first_collision(table, ray, wall);
        } catch (const BilliardError&) {
            continue;
        }
        tau_max = std::max(tau_max, oc.tau);
        if (distance_to_acute_corner(table, wall, r) > corner_margin) tau_star = std::min(tau_star, oc.tau);
    }
    c.tau_max_sampled = tau_max;
    if (table.ambient == Ambient::Plane) {
        c.diameter = boundary_diameter(table.walls);
        c.tau_max = c.diameter;
    } else {
        c.tau_max = tau_max;
    }
    c.tau_star = std::isfinite(tau_star) ? tau_star : 0.0;
    return c;
}

}  // namespace dbill
