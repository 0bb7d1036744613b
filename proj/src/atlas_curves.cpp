#include "dbill/atlas.hpp"

#include "dbill/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <unordered_map>

namespace dbill {

std::string_view to_string(CurveOrigin o) {
    switch (o) {
        case CurveOrigin::GrazingPreimage: return "grazing-preimage";
        case CurveOrigin::CornerPreimage: return "corner-preimage";
        case CurveOrigin::StripBoundary: return "strip-boundary";
    }
    return "?";
}

PhasePoint SeedLine::at(double s) const {
    const double x = lo + s * (hi - lo);
    return vertical ? PhasePoint{wall_id, fixed, x} : PhasePoint{wall_id, x, fixed};
}

std::vector<SeedLine> seed_lines(const BilliardTable& table, const std::vector<int>& strip_ks) {
    std::vector<SeedLine> out;
    for (const auto& w : table.walls) {
        const double L = w.length();
        for (double phi : {kHalfPi, -kHalfPi}) out.push_back({CurveOrigin::GrazingPreimage, w.wall_id, false, phi, 0.0, L});
        if (table.corner_at_start[w.wall_id] >= 0)
            out.push_back({CurveOrigin::CornerPreimage, w.wall_id, true, 0.0, -kHalfPi, kHalfPi});
        if (table.corner_at_end[w.wall_id] >= 0)
            out.push_back({CurveOrigin::CornerPreimage, w.wall_id, true, L, -kHalfPi, kHalfPi});
        for (int k : strip_ks) {
            const double d = 1.0 / (static_cast<double>(k) * k);
            out.push_back({CurveOrigin::StripBoundary, w.wall_id, false, kHalfPi - d, 0.0, L});
            out.push_back({CurveOrigin::StripBoundary, w.wall_id, false, -kHalfPi + d, 0.0, L});
        }
    }
    return out;
}

namespace {

using Orbits = std::map<std::string, PhasePoint>;

std::string step_code(const MapImage& img) {
    std::string s = std::to_string(img.point.wall_id);
    if (img.shift.x != 0.0 || img.shift.y != 0.0)
        s += "@" + std::to_string(static_cast<int>(std::lround(img.shift.x))) + "," +
             std::to_string(static_cast<int>(std::lround(img.shift.y)));
    for (BranchLabel b : img.trail) s += ":" + std::string(to_string(b));
    return s;
}

double phase_dist(const BilliardTable& t, const PhasePoint& a, const PhasePoint& b);

// A trajectory through a corner has one image per branch, often on the
// verticals of both walls, so the two seed lines of a corner see the same
// preimages. Only the copy seen from the first branch image is kept.
bool canonical_corner_image(const BilliardTable& t, const PhasePoint& seed, const PhasePoint& img, int dir,
                            const MapOptions& mo) {
    MapBranchResult back;
    try {
        back = dir > 0 ? inverse_any(t, img, mo) : forward_any(t, img, mo);
    } catch (const BilliardError&) {
        return true;
    }
    if (back.images.size() < 2) return true;
    std::size_t best = 0;
    for (std::size_t i = 1; i < back.images.size(); ++i)
        if (phase_dist(t, back.images[i].point, seed) < phase_dist(t, back.images[best].point, seed)) best = i;
    return best == 0;
}

void orbits(const BilliardTable& t, const PhasePoint& z, int steps, int dir, const std::string& key,
            const MapOptions& mo, bool corner_seed, Orbits& out) {
    if (steps == 0) {
        out.emplace(key, z);
        return;
    }
    MapBranchResult res;
    try {
        res = dir > 0 ? forward_any(t, z, mo) : inverse_any(t, z, mo);
    } catch (const BilliardError&) {
        return;
    }
    for (const auto& img : res.images) {
        if (corner_seed && !canonical_corner_image(t, z, img.point, dir, mo)) continue;
        orbits(t, img.point, steps - 1, dir, key.empty() ? step_code(img) : key + "|" + step_code(img), mo, false,
               out);
    }
}

// A point on a corner vertical is the last image of a corner sequence only
// if its velocity leaves the other wall of the corner; for forward tracing
// the same holds for the reversed velocity.
bool corner_seed_valid(const BilliardTable& t, const PhasePoint& z, int level) {
    const ArcWall& w = t.walls[z.wall_id];
    const bool at_start = z.r < 0.5 * w.length();
    const int cid = at_start ? t.corner_at_start[z.wall_id] : t.corner_at_end[z.wall_id];
    if (cid < 0) return true;
    const Corner& c = t.corners[cid];
    const int other = at_start ? c.left_wall_id : c.right_wall_id;
    const double r_other = at_start ? t.walls[other].length() : 0.0;
    const Vec2 v = velocity_of(t, level < 0 ? z : time_reverse(z));
    return v.dot(t.walls[other].normal_at(r_other)) > 0.0;
}

Orbits evaluate(const BilliardTable& t, const SeedLine& line, double s, int level, const MapOptions& mo) {
    Orbits out;
    if (line.origin == CurveOrigin::CornerPreimage && !corner_seed_valid(t, line.at(s), level)) return out;
    orbits(t, line.at(s), std::abs(level), level > 0 ? 1 : -1, "", mo, line.origin == CurveOrigin::CornerPreimage,
           out);
    return out;
}

double wrapped_dr(const BilliardTable& t, int wall, double dr) {
    const ArcWall& w = t.walls[wall];
    if (!w.closed) return dr;
    const double L = w.length();
    if (dr > 0.5 * L) dr -= L;
    if (dr < -0.5 * L) dr += L;
    return dr;
}

double phase_dist(const BilliardTable& t, const PhasePoint& a, const PhasePoint& b) {
    if (a.wall_id != b.wall_id) return 1e300;
    return std::hypot(wrapped_dr(t, a.wall_id, b.r - a.r), b.phi - a.phi);
}

struct Tracer {
    const BilliardTable& t;
    const SeedLine& line;
    int level;
    const TraceOptions& o;
    const std::string& key;

    std::optional<PhasePoint> at(double s) const {
        const Orbits ob = evaluate(t, line, s, level, o.map);
        const auto it = ob.find(key);
        if (it == ob.end()) return std::nullopt;
        return it->second;
    }

    // s_in carries the key, s_out does not; returns the last parameter that does.
    std::pair<double, PhasePoint> boundary(double s_in, PhasePoint p_in, double s_out) const {
        while (std::abs(s_out - s_in) > o.bisect_tol) {
            const double m = 0.5 * (s_in + s_out);
            if (const auto p = at(m)) {
                s_in = m;
                p_in = *p;
            } else {
                s_out = m;
            }
        }
        return {s_in, p_in};
    }
};

struct Node {
    double s;
    PhasePoint p;
};

// Adds nodes strictly after a up to and including b; both carry the key.
// A gap found in between closes the current run.
void fill(const Tracer& tr, const Node& a, const Node& b, int depth, std::vector<std::vector<Node>>& runs) {
    const bool wrap_jump = std::abs(b.p.r - a.p.r) > 0.5 * tr.t.walls[a.p.wall_id].length() &&
                           tr.t.walls[a.p.wall_id].closed;
    if (wrap_jump && b.s - a.s <= tr.o.bisect_tol) {
        runs.push_back({b});
        return;
    }
    if (!wrap_jump && (phase_dist(tr.t, a.p, b.p) <= tr.o.max_gap || depth >= tr.o.max_depth)) {
        runs.back().push_back(b);
        return;
    }
    const double m = 0.5 * (a.s + b.s);
    const auto pm = tr.at(m);
    if (!pm) {
        const auto left = tr.boundary(a.s, a.p, m);
        if (left.first > a.s) runs.back().push_back({left.first, left.second});
        const auto right = tr.boundary(b.s, b.p, m);
        runs.push_back({{right.first, right.second}});
        if (right.first < b.s) fill(tr, runs.back().back(), b, depth + 1, runs);
        return;
    }
    const Node mid{m, *pm};
    fill(tr, a, mid, depth + 1, runs);
    fill(tr, mid, b, depth + 1, runs);
}

}  // namespace

std::vector<SingularityCurve> trace_singularity(const BilliardTable& table, int level, const TraceOptions& opts) {
    if (level == 0 || std::abs(level) > 6)
        throw BilliardError(ErrorKind::OutOfRange, "singularity level must be in [-6, 6] without 0");
    std::vector<SingularityCurve> out;
    const int N = std::max(2, opts.resolution);
    for (const SeedLine& line : seed_lines(table, opts.strip_ks)) {
        std::vector<Orbits> grid(N);
        std::vector<double> ss(N);
        for (int i = 0; i < N; ++i) {
            ss[i] = (i + 0.5) / N;
            grid[i] = evaluate(table, line, ss[i], level, opts.map);
        }
        std::map<std::string, int> seen;
        for (const auto& g : grid)
            for (const auto& kv : g) seen.emplace(kv.first, 0);
        for (const auto& kv : seen) {
            const std::string& key = kv.first;
            const Tracer tr{table, line, level, opts, key};
            int i = 0;
            while (i < N) {
                if (!grid[i].count(key)) {
                    ++i;
                    continue;
                }
                int j = i;
                while (j + 1 < N && grid[j + 1].count(key)) ++j;
                std::vector<std::vector<Node>> runs;
                const auto start = tr.boundary(ss[i], grid[i].at(key), 0.0);
                runs.push_back({{start.first, start.second}});
                for (int k = i; k <= j; ++k) {
                    const Node nk{ss[k], grid[k].at(key)};
                    if (nk.s > runs.back().back().s) fill(tr, runs.back().back(), nk, 0, runs);
                }
                const auto end = tr.boundary(ss[j], grid[j].at(key), 1.0);
                if (end.first > runs.back().back().s) fill(tr, runs.back().back(), {end.first, end.second}, 0, runs);
                for (auto& run : runs) {
                    SingularityCurve c;
                    c.level = level;
                    c.origin = line.origin;
                    c.seed = line;
                    c.itinerary = key;
                    for (const Node& nd : run) {
                        c.nodes.push_back(nd.p);
                        c.params.push_back(nd.s);
                    }
                    if (c.params.back() - c.params.front() < opts.fragment_floor) {
                        c.exhausted = true;
                        c.nodes.resize(1);
                        c.params.resize(1);
                    }
                    out.push_back(std::move(c));
                }
                i = j + 1;
            }
        }
    }
    return out;
}

int monotonicity_violations(const SingularityCurve& c, double tol) {
    int bad = 0;
    const double want = c.level > 0 ? 1.0 : -1.0;
    for (std::size_t i = 1; i < c.nodes.size(); ++i) {
        const double dr = c.nodes[i].r - c.nodes[i - 1].r;
        const double dp = c.nodes[i].phi - c.nodes[i - 1].phi;
        if (std::abs(dr) < tol || std::abs(dp) < tol) continue;
        if (dr * dp * want <= 0.0) ++bad;
    }
    return bad;
}

PhasePoint curve_point(const BilliardTable& table, const SingularityCurve& c, double s, const MapOptions& opts) {
    const Orbits ob = evaluate(table, c.seed, s, c.level, opts);
    const auto it = ob.find(c.itinerary);
    if (it == ob.end())
        throw BilliardError(ErrorKind::OutOfRange, "itinerary " + c.itinerary + " not realized at this parameter");
    return it->second;
}

namespace {

struct Seg {
    int curve;
    int idx;  // nodes idx, idx+1
};

// Intersection parameters (u, v) of segments p0p1 and q0q1, if they cross.
std::optional<std::pair<double, double>> cross_segments(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1) {
    const Vec2 d1 = p1 - p0, d2 = q1 - q0;
    const double den = d1.cross(d2);
    if (std::abs(den) < 1e-300) return std::nullopt;
    const Vec2 w = q0 - p0;
    const double u = w.cross(d2) / den, v = w.cross(d1) / den;
    if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return std::nullopt;
    return std::make_pair(u, v);
}

}  // namespace

std::vector<MultiplePoint> find_multiple_points(const BilliardTable& table, const std::vector<SingularityCurve>& curves,
                                                const MapOptions& opts) {
    std::vector<MultiplePoint> out;
    auto add = [&](const PhasePoint& z, const char* kind) {
        for (const auto& m : out)
            if (phase_dist(table, m.z, z) < 1e-9) return;
        out.push_back({z, kind});
    };
    for (const auto& c : curves) {
        if (c.nodes.empty()) continue;
        for (const PhasePoint& e : {c.nodes.front(), c.nodes.back()}) {
            if (std::cos(e.phi) < 1e-12) continue;  // on the grazing lines: part of S_0 itself
            add(e, "endpoint");
        }
    }
    // bucket segments by wall and a coarse (r, phi) grid
    const double cell = 0.05;
    std::unordered_map<long long, std::vector<Seg>> buckets;
    auto key_of = [&](int wall, int i, int j) { return (static_cast<long long>(wall) << 40) ^ (static_cast<long long>(i) << 20) ^ j; };
    for (int ci = 0; ci < static_cast<int>(curves.size()); ++ci) {
        const auto& c = curves[ci];
        for (int k = 0; k + 1 < static_cast<int>(c.nodes.size()); ++k) {
            const auto& a = c.nodes[k];
            const auto& b = c.nodes[k + 1];
            const int i0 = static_cast<int>(std::floor(std::min(a.r, b.r) / cell));
            const int i1 = static_cast<int>(std::floor(std::max(a.r, b.r) / cell));
            const int j0 = static_cast<int>(std::floor((std::min(a.phi, b.phi) + kHalfPi) / cell));
            const int j1 = static_cast<int>(std::floor((std::max(a.phi, b.phi) + kHalfPi) / cell));
            if ((i1 - i0 + 1) * (j1 - j0 + 1) > 400) continue;
            for (int i = i0; i <= i1; ++i)
                for (int j = j0; j <= j1; ++j) buckets[key_of(a.wall_id, i, j)].push_back({ci, k});
        }
    }
    std::vector<std::pair<long long, std::vector<Seg>>> ordered(buckets.begin(), buckets.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (const auto& kv : ordered) {
        const auto& segs = kv.second;
        for (std::size_t x = 0; x < segs.size(); ++x)
            for (std::size_t y = x + 1; y < segs.size(); ++y) {
                const Seg& s1 = segs[x];
                const Seg& s2 = segs[y];
                if (s1.curve == s2.curve) continue;
                const auto& c1 = curves[s1.curve];
                const auto& c2 = curves[s2.curve];
                const PhasePoint& p0 = c1.nodes[s1.idx];
                const PhasePoint& p1 = c1.nodes[s1.idx + 1];
                const PhasePoint& q0 = c2.nodes[s2.idx];
                const PhasePoint& q1 = c2.nodes[s2.idx + 1];
                const auto uv = cross_segments({p0.r, p0.phi}, {p1.r, p1.phi}, {q0.r, q0.phi}, {q1.r, q1.phi});
                if (!uv) continue;
                double sa = c1.params[s1.idx] + uv->first * (c1.params[s1.idx + 1] - c1.params[s1.idx]);
                double sb = c2.params[s2.idx] + uv->second * (c2.params[s2.idx + 1] - c2.params[s2.idx]);
                PhasePoint z{p0.wall_id, p0.r + uv->first * (p1.r - p0.r), p0.phi + uv->first * (p1.phi - p0.phi)};
                // Newton on (sa, sb): curve1(sa) = curve2(sb)
                try {
                    for (int it = 0; it < 30; ++it) {
                        const PhasePoint a = curve_point(table, c1, sa, opts);
                        const PhasePoint b = curve_point(table, c2, sb, opts);
                        const Vec2 f{wrapped_dr(table, a.wall_id, a.r - b.r), a.phi - b.phi};
                        if (f.norm() < 1e-13) {
                            z = a;
                            break;
                        }
                        const double ha = 1e-9, hb = 1e-9;
                        const PhasePoint a2 = curve_point(table, c1, sa + ha, opts);
                        const PhasePoint b2 = curve_point(table, c2, sb + hb, opts);
                        const Vec2 ja{wrapped_dr(table, a.wall_id, a2.r - a.r) / ha, (a2.phi - a.phi) / ha};
                        const Vec2 jb{wrapped_dr(table, a.wall_id, b2.r - b.r) / hb, (b2.phi - b.phi) / hb};
                        // f + ja dsa - jb dsb = 0
                        const Mat2 j(ja.x, -jb.x, ja.y, -jb.y);
                        if (std::abs(j.det()) < 1e-300) break;
                        const Vec2 d = j.inverse() * (-f);
                        sa += d.x;
                        sb += d.y;
                        z = a;
                    }
                } catch (const BilliardError&) {
                    // keep the polyline estimate
                }
                add(z, "crossing");
            }
    }
    return out;
}

}  // namespace dbill
