#include "dbill/flow.hpp"

#include "dbill/errors.hpp"
#include "dbill/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dbill {

std::string_view to_string(CollisionKind k) {
    switch (k) {
        case CollisionKind::Regular: return "regular";
        case CollisionKind::Grazing: return "grazing";
        case CollisionKind::Corner: return "corner";
    }
    return "?";
}

std::string_view to_string(Properness p) { return p == Properness::Proper ? "proper" : "improper"; }

std::string_view to_string(BranchLabel b) {
    switch (b) {
        case BranchLabel::Regular: return "regular";
        case BranchLabel::LeftWall: return "left-wall";
        case BranchLabel::RightWall: return "right-wall";
        case BranchLabel::FlyBy: return "fly-by";
    }
    return "?";
}

Vec2 reflect(const Vec2& direction, const Vec2& inward_normal) { return reflect_across(direction, inward_normal); }

namespace {

struct Candidate {
    double t{std::numeric_limits<double>::infinity()};
    int wall{-1};
    double r{0.0};
    Vec2 shift;
};

// Smallest admissible hit on one translate of one wall.
void test_wall(const ArcWall& w, const Vec2& shift, const Ray& ray, bool departure, const FlowOptions& opts,
               double sin_tan, Candidate& best) {
    const Vec2 c = w.center + shift;
    const Vec2 f = ray.origin - c;
    const double b = f.dot(ray.direction);
    const double cc = f.norm2() - w.radius * w.radius;
    double roots[2];
    int nroots = 0;
    if (departure) {
        // origin lies on the circle: roots are 0 and -2b
        roots[nroots++] = -2.0 * b;
    } else {
        const double disc = b * b - cc;
        if (disc < 0.0) return;
        const double sq = std::sqrt(disc);
        const double q = -b - std::copysign(sq, b);
        if (q == 0.0) {
            roots[nroots++] = -b;
        } else {
            roots[nroots++] = q;
            roots[nroots++] = cc / q;
        }
    }
    for (int i = 0; i < nroots; ++i) {
        const double t = roots[i];
        if (!(t > opts.tau_min) || t >= best.t) continue;
        const Vec2 p = ray.origin + ray.direction * t - shift;
        double r = w.param_of(p);
        const double len = w.length();
        if (w.closed) {
            if (r < 0.0) r += len;
            if (r >= len) r -= len;
        } else {
            if (r < -opts.eps_corner || r > len + opts.eps_corner) continue;
            r = std::clamp(r, 0.0, len);
        }
        // the ray must approach from the table side
        const Vec2 n = w.normal_at(r);
        if (ray.direction.dot(n) > sin_tan) continue;
        best = {t, w.wall_id, r, shift};
    }
}

Candidate search(const BilliardTable& table, const Ray& ray, int departure_wall, const FlowOptions& opts) {
    Candidate best;
    const double sin_tan = std::sin(opts.eps_tan);
    if (table.ambient == Ambient::Plane) {
        for (const auto& w : table.walls) test_wall(w, {}, ray, w.wall_id == departure_wall, opts, sin_tan, best);
        return best;
    }
    for (double cap = 2.0; cap <= 64.0; cap *= 2.0) {
        const Vec2 o = ray.origin;
        const Vec2 e = ray.origin + ray.direction * cap;
        for (const auto& w : table.walls) {
            const double R = w.radius;
            const int i0 = static_cast<int>(std::floor(std::min(o.x, e.x) - w.center.x - R));
            const int i1 = static_cast<int>(std::ceil(std::max(o.x, e.x) - w.center.x + R));
            for (int i = i0; i <= i1; ++i) {
                // part of the segment within R of this column of translates, in x
                double ta = 0.0, tb = cap;
                if (ray.direction.x != 0.0) {
                    const double t1 = (w.center.x + i - R - o.x) / ray.direction.x;
                    const double t2 = (w.center.x + i + R - o.x) / ray.direction.x;
                    ta = std::max(ta, std::min(t1, t2));
                    tb = std::min(tb, std::max(t1, t2));
                    if (ta > tb) continue;
                }
                const double ya = o.y + ray.direction.y * ta, yb = o.y + ray.direction.y * tb;
                const int j0 = static_cast<int>(std::floor(std::min(ya, yb) - w.center.y - R));
                const int j1 = static_cast<int>(std::ceil(std::max(ya, yb) - w.center.y + R));
                for (int j = j0; j <= j1; ++j) {
                    const Vec2 shift(i, j);
                    const bool dep = (w.wall_id == departure_wall) &&
                                     std::abs((o - w.center - shift).norm() - R) < 1e-9;
                    test_wall(w, shift, ray, dep, opts, sin_tan, best);
                }
            }
        }
        if (best.wall >= 0) return best;
    }
    return best;
}

bool strictly_inside_sector(const Corner& c, const Vec2& v, double eps) {
    const double a = ccw_angle(c.w_plus, v);
    return a > eps && a < c.gamma - eps;
}

}  // namespace

CornerNormals corner_normals(const BilliardTable& table, const Corner& corner) {
    const ArcWall& l = table.walls.at(corner.left_wall_id);
    const ArcWall& r = table.walls.at(corner.right_wall_id);
    return {l.normal_at(l.length()), r.normal_at(0.0)};
}

CornerProperness classify_collision(const Corner& corner, const Vec2& incoming, double eps_tan) {
    const double a = ccw_angle(corner.w_plus, incoming);
    CornerProperness out;
    const bool external = a > corner.gamma && a < kTwoPi && a != 0.0;
    out.properness = external ? Properness::Proper : Properness::Improper;
    const double d = std::min({a, std::abs(a - corner.gamma), kTwoPi - a});
    out.on_boundary = d < eps_tan;
    return out;
}

int sequence_cap(const BilliardTable& table) {
    return static_cast<int>(std::ceil(kTwoPi / table.gamma_min())) + 2;
}

namespace {

// Keeps reflecting between the two tangent lines until the velocity points
// into the internal sector. `wall` is the wall v has just left.
void chain_tail(const BilliardTable& table, const Corner& c, int wall, Vec2 v, Continuation& out, double eps_tan) {
    const CornerNormals nn = corner_normals(table, c);
    const int cap = sequence_cap(table);
    auto normal_of = [&](int w) { return w == c.left_wall_id ? nn.left : nn.right; };
    auto r_of = [&](int w) { return w == c.left_wall_id ? table.walls[w].length() : 0.0; };
    auto other = [&](int w) { return w == c.left_wall_id ? c.right_wall_id : c.left_wall_id; };
    for (;;) {
        if (strictly_inside_sector(c, v, eps_tan)) break;
        const int next = other(wall);
        const double vn = v.dot(normal_of(next));
        if (vn >= -std::sin(eps_tan)) {
            // leaving along a wall; tangency with the other wall is an immediate grazing collision
            if (std::abs(vn) < std::sin(eps_tan)) out.collisions.push_back({next, r_of(next), v, true});
            break;
        }
        wall = next;
        v = reflect(v, normal_of(wall));
        out.collisions.push_back({wall, r_of(wall), v, false});
        if (static_cast<int>(out.collisions.size()) > cap)
            throw BilliardError(ErrorKind::SequenceOverflow, "corner sequence longer than " + std::to_string(cap));
    }
    out.ray = {c.position, v};
}

Continuation run_sequence(const BilliardTable& table, const Corner& c, int first_wall, const Vec2& incoming,
                          BranchLabel label, double eps_tan) {
    const CornerNormals nn = corner_normals(table, c);
    Continuation out;
    out.label = label;
    const Vec2 v = reflect(incoming, first_wall == c.left_wall_id ? nn.left : nn.right);
    out.collisions.push_back({first_wall, first_wall == c.left_wall_id ? table.walls[first_wall].length() : 0.0, v,
                              false});
    chain_tail(table, c, first_wall, v, out, eps_tan);
    return out;
}

}  // namespace

Continuation corner_departure(const BilliardTable& table, const Corner& corner, int wall, const Vec2& outgoing,
                              double eps_tan) {
    Continuation out;
    out.label = wall == corner.left_wall_id ? BranchLabel::LeftWall : BranchLabel::RightWall;
    chain_tail(table, corner, wall, outgoing, out, eps_tan);
    return out;
}

std::vector<Continuation> corner_sequence(const BilliardTable& table, const Corner& corner, const Vec2& incoming,
                                          double eps_tan) {
    const CornerProperness pc = classify_collision(corner, incoming, eps_tan);
    const CornerNormals nn = corner_normals(table, corner);
    std::vector<Continuation> out;
    if (pc.properness == Properness::Proper) {
        out.push_back(run_sequence(table, corner, corner.left_wall_id, incoming, BranchLabel::LeftWall, eps_tan));
        out.push_back(run_sequence(table, corner, corner.right_wall_id, incoming, BranchLabel::RightWall, eps_tan));
        return out;
    }
    Continuation fly;
    fly.label = BranchLabel::FlyBy;
    fly.ray = {corner.position, incoming};
    out.push_back(fly);
    const double s = std::sin(eps_tan);
    if (incoming.dot(nn.left) < -s)
        out.push_back(run_sequence(table, corner, corner.left_wall_id, incoming, BranchLabel::LeftWall, eps_tan));
    else if (incoming.dot(nn.right) < -s)
        out.push_back(run_sequence(table, corner, corner.right_wall_id, incoming, BranchLabel::RightWall, eps_tan));
    return out;
}

std::vector<Continuation> corner_branches(const BilliardTable& table, const Corner& corner, const Vec2& incoming,
                                          double eps_tan) {
    std::vector<Continuation> all = corner_sequence(table, corner, incoming, eps_tan);
    std::vector<Continuation> out;
    for (auto& c : all) {
        const bool dup = std::any_of(out.begin(), out.end(), [&](const Continuation& o) {
            return (o.ray.direction - c.ray.direction).norm() < 1e-9;
        });
        if (!dup) out.push_back(std::move(c));
    }
    return out;
}

CollisionOutcome first_collision(const BilliardTable& table, const Ray& ray, int departure_wall,
                                 const FlowOptions& opts) {
    const Candidate best = search(table, ray, departure_wall, opts);
    if (best.wall < 0)
        throw BilliardError(ErrorKind::EscapedDomain, "no boundary intersection found from (" +
                                                          format_double(ray.origin.x) + ", " +
                                                          format_double(ray.origin.y) + ")");
    const ArcWall& w = table.walls[best.wall];
    CollisionOutcome out;
    out.wall_id = best.wall;
    out.tau = best.t;
    out.translation = best.shift;
    out.incoming = ray.direction;
    out.hit_point = ray.origin + ray.direction * best.t;
    out.r = best.r;

    const double len = w.length();
    int corner = -1;
    if (!w.closed) {
        if (best.r <= opts.eps_corner && table.corner_at_start[w.wall_id] >= 0) {
            corner = table.corner_at_start[w.wall_id];
            out.r = 0.0;
        } else if (best.r >= len - opts.eps_corner && table.corner_at_end[w.wall_id] >= 0) {
            corner = table.corner_at_end[w.wall_id];
            out.r = len;
        }
    }
    const Vec2 n = w.normal_at(out.r);
    out.cos_incidence = std::abs(ray.direction.dot(n));

    if (corner >= 0) {
        const Corner& c = table.corners[corner];
        out.kind = CollisionKind::Corner;
        out.corner_id = corner;
        out.properness = classify_collision(c, ray.direction, opts.eps_tan).properness;
        out.branches = corner_branches(table, c, ray.direction, opts.eps_tan);
        for (auto& b : out.branches) b.ray.origin = c.position + best.shift;
        return out;
    }
    Continuation cont;
    if (out.cos_incidence < std::sin(opts.eps_tan)) {
        out.kind = CollisionKind::Grazing;
        out.properness = Properness::Improper;
        cont.ray = {out.hit_point, ray.direction};
        cont.collisions.push_back({w.wall_id, out.r, ray.direction, true});
    } else {
        out.kind = CollisionKind::Regular;
        out.properness = Properness::Proper;
        const Vec2 v = reflect(ray.direction, n);
        cont.ray = {out.hit_point, v};
        cont.collisions.push_back({w.wall_id, out.r, v, false});
    }
    out.branches.push_back(cont);
    return out;
}

OrbitTrace trace_orbit(const BilliardTable& table, int wall, double r, double phi, int steps,
                       const FlowOptions& opts) {
    OrbitTrace tr;
    const BoundaryFrame fr = table.boundary_point(wall, r);
    Ray ray{fr.position, fr.inward_normal * std::cos(phi) + fr.tangent * std::sin(phi)};
    int dep = wall;
    auto phi_of = [&](int wid, double rr, const Vec2& v) {
        const ArcWall& ww = table.walls[wid];
        return std::atan2(v.dot(ww.tangent_at(rr)), v.dot(ww.normal_at(rr)));
    };
    int step = 0;
    while (step < steps) {
        const CollisionOutcome oc = first_collision(table, ray, dep, opts);
        const Continuation& cont = oc.branches.front();
        bool first = true;
        for (const auto& ic : cont.collisions) {
            OrbitRow row;
            row.step = ++step;
            row.wall_id = ic.wall_id;
            row.r = ic.r;
            row.phi = ic.grazing ? std::copysign(kHalfPi, phi_of(ic.wall_id, ic.r, ic.outgoing))
                                 : phi_of(ic.wall_id, ic.r, ic.outgoing);
            row.tau = first ? oc.tau : 0.0;
            row.kind = oc.kind;
            row.properness = oc.properness;
            row.branch = cont.label;
            tr.rows.push_back(row);
            first = false;
            if (step >= steps) break;
        }
        if (cont.collisions.empty()) {
            // fly-by past an improper corner: no collision recorded, keep flying
            dep = -1;
        } else {
            dep = cont.collisions.back().wall_id;
        }
        Vec2 v = cont.ray.direction;
        const double drift = std::abs(v.norm() - 1.0);
        tr.max_norm_drift = std::max(tr.max_norm_drift, drift);
        if (drift > 1e-12) {
            v = v.normalized();
            ++tr.renormalizations;
        }
        // continue from the base copy of the hit point on the torus
        ray = {cont.ray.origin - oc.translation, v};
        if (oc.kind == CollisionKind::Corner && cont.collisions.size() > 1) dep = -1;
    }
    tr.final_direction = ray.direction;
    return tr;
}

std::string orbit_csv(const OrbitTrace& trace) {
    std::ostringstream os;
    os << "step,wall_id,r,phi,tau,kind,properness,branch_label\n";
    for (const auto& row : trace.rows) {
        os << row.step << ',' << row.wall_id << ',' << format_double(row.r) << ',' << format_double(row.phi) << ','
           << format_double(row.tau) << ',' << to_string(row.kind) << ',' << to_string(row.properness) << ','
           << to_string(row.branch) << '\n';
    }
    return os.str();
}

}  // namespace dbill
