#include "dbill/table.hpp"

#include "dbill/errors.hpp"
#include "dbill/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dbill {

std::string_view to_string(Ambient a) { return a == Ambient::Plane ? "plane" : "torus"; }

std::string_view to_string(CornerKind k) {
    switch (k) {
        case CornerKind::Acute: return "acute";
        case CornerKind::Flat: return "flat";
        case CornerKind::Obtuse: return "obtuse";
    }
    return "?";
}

double ArcWall::param_of(const Vec2& p) const {
    const Vec2 d = p - center;
    double s = wrap_two_pi(orientation * (std::atan2(d.y, d.x) - theta_start));
    if (!closed && s > span && s > span + 0.5 * (kTwoPi - span)) s -= kTwoPi;
    return radius * s;
}

BoundaryFrame BilliardTable::boundary_point(int wall, double r) const {
    if (wall < 0 || wall >= static_cast<int>(walls.size()))
        throw BilliardError(ErrorKind::OutOfRange, "wall id " + std::to_string(wall));
    const ArcWall& w = walls[wall];
    const double len = w.length();
    const double tol = 1e-12 * std::max(1.0, len);
    if (r < -tol || r > len + tol)
        throw BilliardError(ErrorKind::OutOfRange,
                            "r = " + format_double(r) + " outside [0, " + format_double(len) + "]");
    return {w.point_at(r), w.normal_at(r), w.tangent_at(r)};
}

double BilliardTable::gamma_min() const {
    double g = kPi;
    for (const auto& c : corners) g = std::min(g, c.gamma);
    return g;
}

double internal_angle(const Vec2& w_minus, const Vec2& w_plus) {
    return ccw_angle(w_plus, -w_minus);
}

CornerKind classify_angle(double gamma, double flat_tol) {
    if (std::abs(gamma - kPi) <= flat_tol) return CornerKind::Flat;
    return gamma < kPi ? CornerKind::Acute : CornerKind::Obtuse;
}

Corner corner_classify(const BilliardTable& table, int corner_id) {
    Corner c = table.corners.at(corner_id);
    c.gamma = internal_angle(c.w_minus, c.w_plus);
    c.kind = classify_angle(c.gamma);
    return c;
}

namespace {

ArcWall make_wall(const WallSpec& s, int id) {
    if (!(s.radius > 0.0) || !std::isfinite(s.radius))
        throw BilliardError(ErrorKind::InvalidSpec, "wall " + std::to_string(id) + ": radius must be > 0");
    if (s.orientation != 1 && s.orientation != -1)
        throw BilliardError(ErrorKind::InvalidSpec, "wall " + std::to_string(id) + ": orientation must be +1 or -1");
    if (!std::isfinite(s.theta_start) || !std::isfinite(s.theta_end) || !std::isfinite(s.center.x) ||
        !std::isfinite(s.center.y))
        throw BilliardError(ErrorKind::InvalidSpec, "wall " + std::to_string(id) + ": non-finite value");
    ArcWall w;
    w.center = s.center;
    w.radius = s.radius;
    w.theta_start = s.theta_start;
    w.theta_end = s.theta_end;
    w.orientation = s.orientation;
    w.wall_id = id;
    double span = std::fmod(s.orientation * (s.theta_end - s.theta_start), kTwoPi);
    if (span < 0.0) span += kTwoPi;
    if (span < 1e-12 || kTwoPi - span < 1e-12) {
        w.span = kTwoPi;
        w.closed = true;
    } else {
        w.span = span;
    }
    return w;
}

// Twice the signed area contribution of an arc: integral of x dy - y dx.
double arc_area2(const ArcWall& w) {
    const double t1 = w.theta_start;
    const double t2 = w.theta_start + w.orientation * w.span;
    return w.radius * (w.center.x * (std::sin(t2) - std::sin(t1)) - w.center.y * (std::cos(t2) - std::cos(t1))) +
           w.radius * w.radius * (t2 - t1);
}

void detect_corners(BilliardTable& t, const BuildOptions& opts) {
    const int n = static_cast<int>(t.walls.size());
    t.corner_at_start.assign(n, -1);
    t.corner_at_end.assign(n, -1);

    struct Endpoint {
        Vec2 p;
        int wall;
        bool is_end;
    };
    std::vector<Endpoint> eps;
    for (const auto& w : t.walls) {
        if (w.closed) continue;
        eps.push_back({w.point_at(0.0), w.wall_id, false});
        eps.push_back({w.point_at(w.length()), w.wall_id, true});
    }
    for (const auto& e : eps) {
        int cluster = 0;
        for (const auto& f : eps)
            if ((f.p - e.p).norm() < opts.eps_join) ++cluster;
        if (cluster > 2)
            throw BilliardError(ErrorKind::NonSimpleCorner,
                                std::to_string(cluster) + " wall endpoints meet near wall " + std::to_string(e.wall));
        if (cluster < 2)
            throw BilliardError(ErrorKind::OpenBoundary, std::string(e.is_end ? "end" : "start") +
                                                             " of wall " + std::to_string(e.wall) + " is unmatched");
    }
    for (const auto& e : eps) {
        if (!e.is_end) continue;
        const Endpoint* partner = nullptr;
        for (const auto& f : eps)
            if (&f != &e && (f.p - e.p).norm() < opts.eps_join) partner = &f;
        if (partner->is_end)
            throw BilliardError(ErrorKind::OpenBoundary,
                                "walls " + std::to_string(e.wall) + " and " + std::to_string(partner->wall) +
                                    " both end at the same point (inconsistent orientation)");
        const ArcWall& left = t.walls[e.wall];
        const ArcWall& right = t.walls[partner->wall];
        Corner c;
        c.corner_id = static_cast<int>(t.corners.size());
        c.position = (e.p + partner->p) * 0.5;
        c.left_wall_id = left.wall_id;
        c.right_wall_id = right.wall_id;
        c.w_minus = left.tangent_at(left.length());
        c.w_plus = right.tangent_at(0.0);
        c.gamma = internal_angle(c.w_minus, c.w_plus);
        c.kind = classify_angle(c.gamma);
        if (c.gamma <= opts.gamma_tol || c.gamma >= kTwoPi - opts.gamma_tol)
            throw BilliardError(ErrorKind::CuspDetected, "corner between walls " + std::to_string(left.wall_id) +
                                                             " and " + std::to_string(right.wall_id) +
                                                             " has gamma = " + format_double(c.gamma));
        t.corner_at_end[left.wall_id] = c.corner_id;
        t.corner_at_start[right.wall_id] = c.corner_id;
        t.corners.push_back(c);
    }
}

// Each boundary loop must be closed; a bounded plane table has exactly one
// counterclockwise (outer) loop.
void check_plane_loops(const BilliardTable& t) {
    const int n = static_cast<int>(t.walls.size());
    std::vector<bool> seen(n, false);
    int outer = 0;
    for (int i = 0; i < n; ++i) {
        if (seen[i]) continue;
        double area2 = 0.0;
        int w = i;
        int guard = 0;
        do {
            seen[w] = true;
            area2 += arc_area2(t.walls[w]);
            if (t.walls[w].closed) break;
            const int c = t.corner_at_end[w];
            w = t.corners[c].right_wall_id;
            if (++guard > n) throw BilliardError(ErrorKind::OpenBoundary, "boundary loop does not close");
        } while (w != i);
        if (area2 > 0.0) ++outer;
    }
    if (outer != 1)
        throw BilliardError(ErrorKind::UnboundedHorizon,
                            "plane table must have exactly one outer boundary loop (found " + std::to_string(outer) +
                                "); the domain is unbounded or ill-formed");
}

void check_torus_disks(const BilliardTable& t) {
    for (const auto& w : t.walls)
        if (!w.closed)
            throw BilliardError(ErrorKind::InvalidSpec, "torus walls must be closed circles (wall " +
                                                            std::to_string(w.wall_id) + ")");
    for (const auto& a : t.walls)
        for (const auto& b : t.walls) {
            if (a.radius * 2.0 >= 1.0)
                throw BilliardError(ErrorKind::InvalidSpec, "scatterer overlaps its own translate");
            if (a.wall_id >= b.wall_id) continue;
            for (int i = -1; i <= 1; ++i)
                for (int j = -1; j <= 1; ++j) {
                    const Vec2 d = b.center + Vec2(i, j) - a.center;
                    // also test the other lattice representative of the center difference
                    const Vec2 d2{d.x - std::round(d.x), d.y - std::round(d.y)};
                    if (d.norm() <= a.radius + b.radius || d2.norm() <= a.radius + b.radius)
                        throw BilliardError(ErrorKind::InvalidSpec, "scatterers " + std::to_string(a.wall_id) +
                                                                        " and " + std::to_string(b.wall_id) +
                                                                        " overlap");
                }
        }
}

}  // namespace

double boundary_diameter(const std::vector<ArcWall>& walls) {
    struct Cand {
        Vec2 p;
    };
    std::vector<Vec2> cands;
    auto add_if_on = [&](const ArcWall& w, const Vec2& p) {
        const double r = w.param_of(p);
        if (w.closed || (r >= -1e-12 && r <= w.length() + 1e-12)) cands.push_back(p);
    };
    double best = 0.0;
    std::vector<Vec2> endpoints;
    for (const auto& w : walls) {
        if (!w.closed) {
            cands.push_back(w.point_at(0.0));
            cands.push_back(w.point_at(w.length()));
            endpoints.push_back(w.point_at(0.0));
            endpoints.push_back(w.point_at(w.length()));
        }
        if (w.span >= kPi) best = std::max(best, 2.0 * w.radius);
    }
    for (const auto& a : walls) {
        for (const auto& b : walls) {
            const Vec2 d = b.center - a.center;
            if (d.norm() > 0.0) {
                const Vec2 u = d.normalized();
                add_if_on(a, a.center + a.radius * u);
                add_if_on(a, a.center - a.radius * u);
            }
        }
        for (const auto& q : endpoints) {
            const Vec2 d = a.center - q;
            if (d.norm() > 0.0) add_if_on(a, a.center + a.radius * d.normalized());
        }
    }
    for (std::size_t i = 0; i < cands.size(); ++i)
        for (std::size_t j = i + 1; j < cands.size(); ++j) best = std::max(best, (cands[i] - cands[j]).norm());
    return best;
}

bool torus_corridor_exists(const std::vector<ArcWall>& walls, int q, int p) {
    const double len = std::hypot(static_cast<double>(p), static_cast<double>(q));
    const double h = 1.0 / len;
    const Vec2 n{-p / len, q / len};
    std::vector<std::pair<double, double>> iv;
    for (const auto& w : walls) {
        if (2.0 * w.radius >= h) return false;
        const double c = std::fmod(w.center.dot(n), h);
        const double lo = (c < 0 ? c + h : c) - w.radius;
        iv.emplace_back(lo, lo + 2.0 * w.radius);
    }
    // unwrap intervals onto [lo0, lo0 + h) and look for a gap
    std::sort(iv.begin(), iv.end());
    const double start = iv.front().first;
    double reach = iv.front().second;
    for (std::size_t i = 1; i < iv.size(); ++i) {
        if (iv[i].first > reach + 1e-12) return true;
        reach = std::max(reach, iv[i].second);
    }
    return reach + 1e-12 < start + h;
}

namespace {

// Free flight of a ray on the unit torus against all translates of the disks.
std::optional<double> torus_free_flight(const std::vector<ArcWall>& walls, const Vec2& o, const Vec2& d,
                                        double cap) {
    double best = std::numeric_limits<double>::infinity();
    const Vec2 e = o + d * cap;
    for (const auto& w : walls) {
        const int i0 = static_cast<int>(std::floor(std::min(o.x, e.x) - w.center.x - w.radius));
        const int i1 = static_cast<int>(std::ceil(std::max(o.x, e.x) - w.center.x + w.radius));
        const int j0 = static_cast<int>(std::floor(std::min(o.y, e.y) - w.center.y - w.radius));
        const int j1 = static_cast<int>(std::ceil(std::max(o.y, e.y) - w.center.y + w.radius));
        for (int i = i0; i <= i1; ++i)
            for (int j = j0; j <= j1; ++j) {
                const Vec2 c = w.center + Vec2(i, j);
                const Vec2 f = o - c;
                const double b = f.dot(d);
                const double disc = b * b - (f.norm2() - w.radius * w.radius);
                if (disc < 0.0) continue;
                const double t = -b - std::sqrt(disc);
                if (t > 1e-12 && t < best) best = t;
            }
    }
    if (best <= cap) return best;
    return std::nullopt;
}

}  // namespace

std::optional<Vec2> find_torus_corridor(const std::vector<ArcWall>& walls, int max_pq, int directions,
                                        double flight_cap) {
    for (int q = 0; q <= max_pq; ++q)
        for (int p = -max_pq; p <= max_pq; ++p) {
            if (q == 0 && p <= 0) continue;
            if (std::gcd(q, std::abs(p)) != 1) continue;
            if (torus_corridor_exists(walls, q, p)) return Vec2(q, p).normalized();
        }
    for (int k = 0; k < directions; ++k) {
        const Vec2 d = unit_from_angle(kPi * (k + 0.5) / directions);
        for (const auto& w : walls) {
            const Vec2 o = w.center + w.radius * d;
            if (!torus_free_flight(walls, o, d, flight_cap)) return d;
        }
    }
    return std::nullopt;
}

BilliardTable build_table(const TableSpec& spec, const BuildOptions& opts) {
    if (spec.walls.empty()) throw BilliardError(ErrorKind::InvalidSpec, "table has no walls");
    BilliardTable t;
    t.ambient = spec.ambient;
    t.spec = spec;
    for (std::size_t i = 0; i < spec.walls.size(); ++i) t.walls.push_back(make_wall(spec.walls[i], static_cast<int>(i)));

    if (!opts.allow_non_dispersing)
        for (const auto& w : t.walls)
            if (w.curvature() <= 0.0)
                throw BilliardError(ErrorKind::NonDispersing,
                                    "wall " + std::to_string(w.wall_id) +
                                        " is focusing (table interior lies inside its circle)");

    if (t.ambient == Ambient::Torus) {
        check_torus_disks(t);
        t.corner_at_start.assign(t.walls.size(), -1);
        t.corner_at_end.assign(t.walls.size(), -1);
        if (auto dir = find_torus_corridor(t.walls))
            throw BilliardError(ErrorKind::UnboundedHorizon, "free corridor along direction (" +
                                                                 format_double(dir->x) + ", " +
                                                                 format_double(dir->y) + ")");
    } else {
        detect_corners(t, opts);
        check_plane_loops(t);
    }

    t.constants.kappa_min = std::numeric_limits<double>::infinity();
    t.constants.kappa_max = -std::numeric_limits<double>::infinity();
    for (const auto& w : t.walls) {
        t.constants.kappa_min = std::min(t.constants.kappa_min, w.curvature());
        t.constants.kappa_max = std::max(t.constants.kappa_max, w.curvature());
    }
    if (t.ambient == Ambient::Plane) {
        t.constants.diameter = boundary_diameter(t.walls);
        t.constants.tau_max = t.constants.diameter;
    }
    if (opts.constant_samples > 0) {
        const TableConstants c = estimate_constants(t, opts.constant_samples, opts.constant_seed);
        t.constants = c;
    }
    return t;
}

// ---- JSON ----

TableSpec parse_table_spec(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw BilliardError(ErrorKind::InvalidSpec, std::string("malformed JSON: ") + e.what());
    }
    TableSpec s;
    try {
        const std::string amb = j.value("ambient", std::string("plane"));
        if (amb == "plane")
            s.ambient = Ambient::Plane;
        else if (amb == "torus")
            s.ambient = Ambient::Torus;
        else
            throw BilliardError(ErrorKind::InvalidSpec, "unknown ambient '" + amb + "'");
        for (const auto& w : j.at("walls")) {
            WallSpec ws;
            const auto& c = w.at("center");
            if (!c.is_array() || c.size() != 2) throw BilliardError(ErrorKind::InvalidSpec, "center must be [x, y]");
            ws.center = {c[0].get<double>(), c[1].get<double>()};
            ws.radius = w.at("radius").get<double>();
            ws.theta_start = w.at("theta_start").get<double>();
            ws.theta_end = w.at("theta_end").get<double>();
            ws.orientation = w.at("orientation").get<int>();
            s.walls.push_back(ws);
        }
    } catch (const nlohmann::json::exception& e) {
        throw BilliardError(ErrorKind::InvalidSpec, std::string("bad table spec: ") + e.what());
    }
    return s;
}

TableSpec load_table_spec(const std::string& path) { return parse_table_spec(read_file(path)); }

std::string canonical_spec_json(const TableSpec& spec) {
    nlohmann::json j;
    j["ambient"] = std::string(to_string(spec.ambient));
    j["walls"] = nlohmann::json::array();
    for (const auto& w : spec.walls) {
        j["walls"].push_back({{"center", {w.center.x, w.center.y}},
                              {"radius", w.radius},
                              {"theta_start", w.theta_start},
                              {"theta_end", w.theta_end},
                              {"orientation", w.orientation}});
    }
    return canonical_dump(j);
}

TableSpec make_tri_spec(double arc_radius) {
    const double s3 = std::sqrt(3.0);
    const Vec2 a{0.0, 2.0 / s3};
    const Vec2 b{-1.0, -1.0 / s3};
    const Vec2 c{1.0, -1.0 / s3};
    const Vec2 verts[3] = {a, b, c};
    TableSpec spec;
    spec.ambient = Ambient::Plane;
    for (int i = 0; i < 3; ++i) {
        const Vec2 p = verts[i];
        const Vec2 q = verts[(i + 1) % 3];
        const Vec2 opposite = verts[(i + 2) % 3];
        const Vec2 mid = (p + q) * 0.5;
        const double half = 0.5 * (q - p).norm();
        const Vec2 u = (mid - opposite).normalized();
        const Vec2 center = mid + u * std::sqrt(arc_radius * arc_radius - half * half);
        WallSpec w;
        w.center = center;
        w.radius = arc_radius;
        w.theta_start = (p - center).angle();
        w.theta_end = (q - center).angle();
        w.orientation = -1;
        spec.walls.push_back(w);
    }
    return spec;
}

TableSpec make_torus_two_scatterer_spec() {
    TableSpec spec;
    spec.ambient = Ambient::Torus;
    spec.walls.push_back({{0.0, 0.0}, 0.4, 0.0, kTwoPi, -1});
    spec.walls.push_back({{0.5, 0.5}, 0.25, 0.0, kTwoPi, -1});
    return spec;
}

}  // namespace dbill
