#include "dbill/ucurve.hpp"

#include "dbill/errors.hpp"
#include "dbill/rng.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>

namespace dbill {

double UCurve::length() const {
    double s = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i)
        s += std::hypot(nodes[i].r - nodes[i - 1].r, nodes[i].phi - nodes[i - 1].phi);
    return s;
}

namespace {

// Prefix arclengths of a polyline, summed in node order.
class Arc {
public:
    explicit Arc(const UCurve& w) : w_(w), cum_(w.nodes.size(), 0.0) {
        for (std::size_t i = 1; i < w.nodes.size(); ++i)
            cum_[i] = cum_[i - 1] + std::hypot(w.nodes[i].r - w.nodes[i - 1].r, w.nodes[i].phi - w.nodes[i - 1].phi);
    }
    double length() const { return cum_.empty() ? 0.0 : cum_.back(); }

    PhasePoint at(double u, Vec2* tangent = nullptr) const {
        const auto& n = w_.nodes;
        if (n.size() == 1) {
            if (tangent) *tangent = w_.tangents.empty() ? Vec2{1.0, 0.0} : w_.tangents.front();
            return n.front();
        }
        const double target = std::clamp(u, 0.0, 1.0) * length();
        const std::size_t i = segment([&](std::size_t j) { return cum_[j] < target; });
        const PhasePoint& a = n[i - 1];
        const PhasePoint& b = n[i];
        const double seg = std::hypot(b.r - a.r, b.phi - a.phi);
        const double f = seg > 0.0 ? std::clamp((target - cum_[i - 1]) / seg, 0.0, 1.0) : 0.0;
        if (tangent) *tangent = seg > 0.0 ? Vec2{b.r - a.r, b.phi - a.phi} / seg : Vec2{1.0, 0.0};
        return {a.wall_id, a.r + f * (b.r - a.r), a.phi + f * (b.phi - a.phi)};
    }

    /// Linear interpolation of per-node values at parameter u.
    double interpolate(const std::vector<double>& g, double u) const {
        if (g.empty()) return 0.0;
        const double L = length();
        if (L <= 0.0 || g.size() == 1) return g.front();
        const std::size_t i = segment([&](std::size_t j) { return u > cum_[j] / L; });
        const double u0 = cum_[i - 1] / L, u1 = cum_[i] / L;
        const double f = u1 > u0 ? std::clamp((u - u0) / (u1 - u0), 0.0, 1.0) : 0.0;
        return g[i - 1] + f * (g[i] - g[i - 1]);
    }

private:
    // first i in [1, n-1] where before(i) fails, else n-1
    template <class Pred>
    std::size_t segment(Pred before) const {
        std::size_t lo = 1, hi = cum_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (before(mid)) lo = mid + 1;
            else hi = mid;
        }
        return lo;
    }

    const UCurve& w_;
    std::vector<double> cum_;
};

PhasePoint normalized(const BilliardTable& t, PhasePoint p) {
    const ArcWall& w = t.walls[p.wall_id];
    if (w.closed) {
        const double L = w.length();
        p.r = std::fmod(p.r, L);
        if (p.r < 0.0) p.r += L;
    }
    return p;
}

bool inside(const BilliardTable& t, const PhasePoint& p) {
    if (std::abs(p.phi) >= kHalfPi) return false;
    const ArcWall& w = t.walls[p.wall_id];
    return w.closed || (p.r > 0.0 && p.r < w.length());
}

bool near_strip_boundary(double phi, int k0, double eps) {
    const StripIndex s = strip_index(phi, k0);
    if (std::abs(s.k) == INT_MAX) return true;
    const auto b = strip_bounds(s.k, k0);
    return phi - b.first < eps || b.second - phi < eps;
}

Vec2 cone_direction(const BilliardTable& t, const PhasePoint& p, const MapOptions& mo) {
    try {
        Vec2 d = unstable_cone(t, normalized(t, p), mo).bisector().normalized();
        if (d.x < 0.0) d = -d;
        return d;
    } catch (const BilliardError&) {
        throw BilliardError(ErrorKind::SingularSeed, "unstable cone undefined near the seed");
    }
}

int branch_code(const std::vector<BranchLabel>& trail) {
    int code = 0;
    for (BranchLabel b : trail) code = 5 * code + static_cast<int>(b) + 1;
    return code;
}

constexpr int kSingularWall = -2;

struct Eval {
    StepSymbol sym;
    StepSymbol key;  ///< sym with k clamped to the tail
    PhasePoint image;
    Mat2 df;
    Vec2 shift;
};

Eval evaluate(const BilliardTable& t, const Arc& w, double u, const UCurveOptions& o) {
    Eval e;
    const PhasePoint p = normalized(t, w.at(u));
    MapBranchResult res;
    try {
        res = forward(t, p, o.map);
    } catch (const BilliardError&) {
        e.sym.wall_id = e.key.wall_id = kSingularWall;
        return e;
    }
    if (res.images.size() != 1 || res.images[0].grazing) {
        e.sym.wall_id = e.key.wall_id = kSingularWall;
        return e;
    }
    const MapImage& img = res.images[0];
    e.sym.wall_id = img.point.wall_id;
    e.sym.shift_x = static_cast<int>(std::lround(img.shift.x));
    e.sym.shift_y = static_cast<int>(std::lround(img.shift.y));
    e.sym.branch = branch_code(img.trail);
    e.sym.k = strip_index(img.point.phi, o.k0).k;
    e.key = e.sym;
    if (std::abs(e.key.k) > o.k_cap) e.key.k = e.key.k > 0 ? o.k_cap + 1 : -(o.k_cap + 1);
    e.image = img.point;
    e.df = img.df;
    e.shift = img.shift;
    return e;
}

struct Piece {
    double lo, hi;
    StepSymbol key;
};


}  // namespace

PhasePoint curve_at(const UCurve& w, double u, Vec2* tangent) { return Arc(w).at(u, tangent); }

UCurve seed_ucurve(const BilliardTable& table, const PhasePoint& z, double length, int k0, int segments,
                   const MapOptions& opts) {
    if (z.wall_id < 0 || z.wall_id >= static_cast<int>(table.walls.size()))
        throw BilliardError(ErrorKind::OutOfRange, "no such wall");
    if (!(length > 0.0)) throw BilliardError(ErrorKind::OutOfRange, "curve length must be positive");
    segments = std::max(2, segments + (segments % 2));
    if (on_singular_set(table, z, opts.flow) || near_strip_boundary(z.phi, k0, 1e-10))
        throw BilliardError(ErrorKind::SingularSeed, "seed point on S_0 or on a strip boundary");
    const double h = length / segments;
    // Heun steps along the cone bisector field, both ways from z
    auto walk = [&](double sign) {
        std::vector<PhasePoint> pts{z};
        PhasePoint p = z;
        for (int i = 0; i < segments / 2; ++i) {
            const Vec2 d1 = cone_direction(table, p, opts);
            PhasePoint q{p.wall_id, p.r + sign * h * d1.x, p.phi + sign * h * d1.y};
            if (!inside(table, q)) throw BilliardError(ErrorKind::SingularSeed, "curve leaves phase space");
            const Vec2 d2 = cone_direction(table, q, opts);
            const Vec2 d = (d1 + d2).normalized();
            p = {p.wall_id, p.r + sign * h * d.x, p.phi + sign * h * d.y};
            if (!inside(table, p)) throw BilliardError(ErrorKind::SingularSeed, "curve leaves phase space");
            pts.push_back(p);
        }
        return pts;
    };
    const auto back = walk(-1.0);
    const auto fwd = walk(1.0);
    UCurve w;
    for (auto it = back.rbegin(); it != back.rend(); ++it) w.nodes.push_back(*it);
    w.nodes.insert(w.nodes.end(), fwd.begin() + 1, fwd.end());
    for (const auto& p : w.nodes) w.tangents.push_back(cone_direction(table, p, opts));
    for (const auto& p : w.nodes)
        if (on_singular_set(table, normalized(table, p), opts.flow) || near_strip_boundary(p.phi, k0, 0.0))
            throw BilliardError(ErrorKind::SingularSeed, "curve touches S_0");
    // one strip only
    const int k = strip_index(z.phi, k0).k;
    for (const auto& p : w.nodes)
        if (strip_index(p.phi, k0).k != k) throw BilliardError(ErrorKind::SingularSeed, "curve crosses a strip boundary");
    if (!is_ucurve(table, w, opts)) throw BilliardError(ErrorKind::SingularSeed, "curve leaves the unstable cone");
    return w;
}

bool is_ucurve(const BilliardTable& table, const UCurve& w, const MapOptions& opts) {
    if (w.nodes.size() < 2) return false;
    const bool have_tangents = w.tangents.size() == w.nodes.size();
    for (std::size_t i = 0; i < w.nodes.size(); ++i) {
        if (w.nodes[i].wall_id != w.nodes.front().wall_id) return false;
        if (i > 0) {
            const Vec2 d{w.nodes[i].r - w.nodes[i - 1].r, w.nodes[i].phi - w.nodes[i - 1].phi};
            if (!(d.x > 0.0 && d.y > 0.0)) return false;
        }
        // without tangents the chords stand in for them
        const Vec2 t = have_tangents ? w.tangents[i]
                                     : (i > 0 ? Vec2{w.nodes[i].r - w.nodes[i - 1].r, w.nodes[i].phi - w.nodes[i - 1].phi}
                                              : Vec2{w.nodes[1].r - w.nodes[0].r, w.nodes[1].phi - w.nodes[0].phi});
        // ends may sit on a singularity of F^-1: read the cone just inside
        PhasePoint at = w.nodes[i];
        if (i == 0 || i + 1 == w.nodes.size()) {
            const PhasePoint& nb = w.nodes[i == 0 ? 1 : i - 1];
            at.r += 1e-6 * (nb.r - at.r);
            at.phi += 1e-6 * (nb.phi - at.phi);
        }
        try {
            if (!unstable_cone(table, normalized(table, at), opts).contains(t, 0.0)) return false;
        } catch (const BilliardError&) {
            return false;
        }
    }
    return true;
}

StepResult evolve_one_step(const BilliardTable& table, const UCurve& w, const UCurveOptions& opts) {
    HComponent root;
    root.curve = w;
    root.node_log_growth.assign(w.nodes.size(), 0.0);
    return evolve_one_step(table, root, opts);
}

StepResult evolve_one_step(const BilliardTable& table, const HComponent& parent, const UCurveOptions& opts) {
    StepResult out;
    const UCurve& w = parent.curve;
    const Arc arc(w);
    const double L = arc.length();
    if (w.nodes.size() < 2 || !(L > 0.0)) return out;
    const double tol_u = opts.cut_tol / L;
    auto key_at = [&](double u) { return evaluate(table, arc, u, opts).key; };

    // samples, first and last pulled in by the cut tolerance
    const int m = std::max<int>(opts.min_samples, 2 * static_cast<int>(w.nodes.size()) + 1);
    std::vector<double> us(m);
    std::vector<StepSymbol> keys(m);
    for (int i = 0; i < m; ++i) {
        us[i] = std::clamp(static_cast<double>(i) / (m - 1), tol_u, 1.0 - tol_u);
        keys[i] = key_at(us[i]);
    }
    std::vector<std::pair<double, StepSymbol>> cuts;  // position, key to the right
    auto refine = [&](auto&& self, double a, const StepSymbol& ka, double b, const StepSymbol& kb) -> void {
        if (b - a <= tol_u) {
            const double mid = 0.5 * (a + b);
            const StepSymbol km = key_at(mid);
            if (!(km == ka) && !(km == kb)) ++out.degenerate_merged;
            cuts.emplace_back(mid, kb);
            return;
        }
        const double mid = 0.5 * (a + b);
        const StepSymbol km = key_at(mid);
        if (km == ka) {
            self(self, mid, km, b, kb);
        } else if (km == kb) {
            self(self, a, ka, mid, km);
        } else {
            self(self, a, ka, mid, km);
            self(self, mid, km, b, kb);
        }
    };
    for (int i = 0; i + 1 < m; ++i)
        if (!(keys[i] == keys[i + 1])) refine(refine, us[i], keys[i], us[i + 1], keys[i + 1]);

    std::vector<Piece> pieces;
    double lo = 0.0;
    StepSymbol cur = keys.front();
    for (const auto& c : cuts) {
        pieces.push_back({lo, c.first, cur});
        lo = c.first;
        cur = c.second;
    }
    pieces.push_back({lo, 1.0, cur});

    // drop singular slivers and degenerate pieces into their neighbours
    std::vector<Piece> kept;
    for (const Piece& p : pieces) {
        const bool degenerate = (p.hi - p.lo) * L < opts.degenerate;
        if (p.key.wall_id == kSingularWall || degenerate) {
            ++out.degenerate_merged;
            if (!kept.empty()) kept.back().hi = p.hi;
            continue;
        }
        if (!kept.empty() && kept.back().key == p.key) {
            kept.back().hi = p.hi;
            continue;
        }
        if (!kept.empty() && kept.back().hi < p.lo) kept.back().hi = p.lo;
        kept.push_back(p);
    }
    if (!kept.empty()) kept.front().lo = 0.0;

    // evaluate a point of a piece, stepping inward while the symbol disagrees
    auto eval_in = [&](double u, const Piece& p) -> std::optional<Eval> {
        const double mid = 0.5 * (p.lo + p.hi);
        double step = tol_u;
        for (int j = 0; j < 48; ++j) {
            const Eval e = evaluate(table, arc, u, opts);
            if (e.key == p.key) return e;
            u = u < mid ? std::min(mid, u + step) : std::max(mid, u - step);
            step *= 2.0;
        }
        return std::nullopt;
    };

    auto same_side = [](const StepSymbol& a, const StepSymbol& b) {
        return a.wall_id == b.wall_id && a.shift_x == b.shift_x && a.shift_y == b.shift_y && a.branch == b.branch &&
               (a.k > 0) == (b.k > 0);
    };
    // Within a run of nearly grazing pieces on one side, everything from the first
    // unresolved strip on goes to the tail, so no strip is counted twice.
    std::vector<char> tail_flag(kept.size(), 0);
    for (std::size_t a = 0; a < kept.size();) {
        if (kept[a].key.k == 0) {
            ++a;
            continue;
        }
        std::size_t b = a + 1;
        while (b < kept.size() && kept[b].key.k != 0 && same_side(kept[b].key, kept[a].key)) ++b;
        int kstar = INT_MAX;
        for (std::size_t j = a; j < b; ++j)
            if (std::abs(kept[j].key.k) > opts.k_cap || (kept[j].hi - kept[j].lo) * L < opts.resolve_floor)
                kstar = std::min(kstar, std::abs(kept[j].key.k));
        for (std::size_t j = a; j < b; ++j) tail_flag[j] = std::abs(kept[j].key.k) >= kstar;
        a = b;
    }
    auto is_tail = [&](const Piece& p) { return tail_flag[&p - kept.data()] != 0; };

    // factor * cos(phi') per resolved nearly grazing piece, NaN elsewhere
    std::vector<double> graze_c;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        HComponent c;
        c.id = static_cast<int>(out.components.size());
        c.parent = parent.id;
        c.generation = parent.generation + 1;
        c.itinerary = parent.itinerary;
        if (is_tail(kept[i])) {
            Piece agg = kept[i];
            int kmin = std::abs(kept[i].key.k);
            while (i + 1 < kept.size() && is_tail(kept[i + 1]) && same_side(kept[i + 1].key, agg.key)) {
                ++i;
                agg.hi = kept[i].hi;
                kmin = std::min(kmin, std::abs(kept[i].key.k));
            }
            c.tail = true;
            c.tail_k = kmin;
            StepSymbol s = agg.key;
            c.itinerary.push_back(s);
            c.regular = false;
            c.rank = parent.regular ? c.generation : parent.rank;
            c.preimage_length = (agg.hi - agg.lo) * L;
            // ends of the aggregate sit on a cut, so step inward until the image lands on its side
            const double mid = 0.5 * (agg.lo + agg.hi);
            for (double u : {agg.lo, agg.hi}) {
                u = std::clamp(u, tol_u, 1.0 - tol_u);
                double step = tol_u;
                for (int j = 0; j < 48; ++j) {
                    const Eval e = evaluate(table, arc, u, opts);
                    if (same_side(e.key, agg.key)) {
                        c.curve.nodes.push_back(e.image);
                        break;
                    }
                    u = u < mid ? std::min(mid, u + step) : std::max(mid, u - step);
                    step *= 2.0;
                }
            }
            graze_c.push_back(std::nan(""));
            out.components.push_back(std::move(c));
            continue;
        }
        const Piece& p = kept[i];
        // initial parameters: ends, parent nodes inside, a few uniform points
        std::vector<double> params{p.lo, p.hi};
        {
            double acc = 0.0;
            for (std::size_t j = 1; j + 1 < w.nodes.size(); ++j) {
                acc += std::hypot(w.nodes[j].r - w.nodes[j - 1].r, w.nodes[j].phi - w.nodes[j - 1].phi);
                const double u = acc / L;
                if (u > p.lo && u < p.hi) params.push_back(u);
            }
            for (int j = 1; j < 8; ++j) params.push_back(p.lo + (p.hi - p.lo) * j / 8.0);
            std::sort(params.begin(), params.end());
            params.erase(std::unique(params.begin(), params.end(),
                                     [&](double a, double b) { return b - a < 0.5 * tol_u; }),
                         params.end());
        }
        struct Node {
            double u;
            Eval e;
            double factor;
        };
        auto make_node = [&](double u) -> std::optional<Node> {
            auto e = eval_in(u, p);
            if (!e) return std::nullopt;
            Vec2 t;
            arc.at(u, &t);
            const Vec2 img = e->df * t;
            return Node{u, *e, img.norm()};
        };
        std::vector<Node> nodes;
        for (double u : params)
            if (auto n = make_node(u)) nodes.push_back(*n);
        if (nodes.size() < 2) {
            ++out.degenerate_merged;
            continue;
        }
        // refine where the factor varies by more than ratio_refine between neighbours
        for (int pass = 0; pass < opts.max_refine; ++pass) {
            std::vector<Node> next{nodes.front()};
            bool changed = false;
            for (std::size_t j = 1; j < nodes.size(); ++j) {
                const Node& a = nodes[j - 1];
                const Node& b = nodes[j];
                const double ratio = std::max(a.factor, b.factor) / std::min(a.factor, b.factor);
                if (ratio > opts.ratio_refine && b.u - a.u > 2.0 * tol_u && nodes.size() < 4000) {
                    if (auto n = make_node(0.5 * (a.u + b.u))) {
                        next.push_back(*n);
                        changed = true;
                    }
                }
                next.push_back(b);
            }
            nodes.swap(next);
            if (!changed) break;
        }
        double step_min = nodes.front().factor;
        for (const Node& n : nodes) step_min = std::min(step_min, n.factor);
        const Node& mid = nodes[nodes.size() / 2];
        c.itinerary.push_back(mid.e.sym);
        c.regular = parent.regular && mid.e.sym.k == 0;
        c.rank = parent.regular ? (c.regular ? 0 : c.generation) : parent.rank;
        c.lambda = parent.lambda * step_min;
        c.preimage_length = (p.hi - p.lo) * L;
        double min_growth = std::numeric_limits<double>::infinity();
        const double L_img = table.walls[mid.e.image.wall_id].length();
        const bool closed = table.walls[mid.e.image.wall_id].closed;
        for (const Node& n : nodes) {
            PhasePoint q = n.e.image;
            if (closed && !c.curve.nodes.empty()) {
                const double prev = c.curve.nodes.back().r;
                q.r += L_img * std::round((prev - q.r) / L_img);
            }
            c.curve.nodes.push_back(q);
            const Vec2 t = n.e.df * ([&] {
                Vec2 tt;
                arc.at(n.u, &tt);
                return tt;
            }());
            c.curve.tangents.push_back(t.normalized());
            const double g = arc.interpolate(parent.node_log_growth, n.u) + std::log(n.factor);
            c.node_log_growth.push_back(g);
            min_growth = std::min(min_growth, g);
        }
        c.lambda_sampled = std::exp(min_growth);
        // DF may reverse the direction of travel; keep every curve increasing
        const auto& cn = c.curve.nodes;
        if ((cn.back().r - cn.front().r) + (cn.back().phi - cn.front().phi) < 0.0) {
            std::reverse(c.curve.nodes.begin(), c.curve.nodes.end());
            std::reverse(c.curve.tangents.begin(), c.curve.tangents.end());
            std::reverse(c.node_log_growth.begin(), c.node_log_growth.end());
        }
        for (Vec2& t : c.curve.tangents)
            if (t.x < 0.0) t = -t;
        double gc = std::nan("");
        if (mid.e.sym.k != 0) {
            gc = std::numeric_limits<double>::infinity();
            for (const Node& n : nodes) gc = std::min(gc, n.factor * std::cos(n.e.image.phi));
        }
        graze_c.push_back(gc);
        out.components.push_back(std::move(c));
    }

    // Tail bound. On H_k, factor >= C / cos(phi') >= C k^2, and sum_{k >= K} k^-2 <= 1 / (K - 1/2).
    // C comes from the resolved strips next to the tail on the same side, less their spread and 1%;
    // the global constant is the fallback.
    auto& comps = out.components;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        HComponent& c = comps[i];
        if (!c.tail) continue;
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        int seen = 0;
        for (int dir : {-1, 1}) {
            for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + dir, taken = 0;
                 j >= 0 && j < static_cast<std::ptrdiff_t>(comps.size()) && taken < 4; j += dir, ++taken) {
                if (comps[j].tail || std::isnan(graze_c[j]) ||
                    !same_side(comps[j].itinerary.back(), c.itinerary.back()))
                    break;
                lo = std::min(lo, graze_c[j]);
                hi = std::max(hi, graze_c[j]);
                ++seen;
            }
        }
        double C = opts.c_expansion;
        if (seen > 0) C = std::max(C, 0.99 * lo - (hi - lo));
        c.tail_bound = 1.0 / (parent.lambda * C * (c.tail_k - 0.5));
        c.lambda = 1.0 / c.tail_bound;
        c.lambda_sampled = c.lambda;
    }
    return out;
}

ComponentTree evolve_n(const BilliardTable& table, const UCurve& w, int n, const UCurveOptions& opts) {
    if (n < 0) throw BilliardError(ErrorKind::OutOfRange, "negative depth");
    ComponentTree tree;
    HComponent root;
    root.curve = w;
    root.node_log_growth.assign(w.nodes.size(), 0.0);
    tree.levels.push_back({root});
    tree.regular_count.push_back(1);
    tree.expansion_sum.push_back(1.0);
    tree.leaf_count.push_back(1);
    for (int level = 1; level <= n; ++level) {
        std::vector<HComponent> next;
        for (const HComponent& c : tree.levels.back()) {
            if (c.tail) {
                HComponent carried = c;
                carried.parent = c.id;
                carried.generation = level;
                carried.id = static_cast<int>(next.size());
                next.push_back(std::move(carried));
                continue;
            }
            StepResult r = evolve_one_step(table, c, opts);
            tree.degenerate_merged += r.degenerate_merged;
            for (auto& child : r.components) {
                child.id = static_cast<int>(next.size());
                next.push_back(std::move(child));
            }
            if (next.size() > opts.max_leaves) {
                tree.exploded = true;
                break;
            }
        }
        int k = 0;
        double e = 0.0;
        for (const auto& c : next) {
            if (c.regular && !c.tail) ++k;
            e += c.inverse_expansion();
        }
        tree.regular_count.push_back(k);
        tree.expansion_sum.push_back(e);
        tree.leaf_count.push_back(static_cast<int>(next.size()));
        tree.levels.push_back(std::move(next));
        if (tree.exploded) break;
    }
    return tree;
}

double one_step_grazing_sum(const BilliardTable& table, const UCurve& w, const UCurveOptions& opts) {
    double s = 0.0;
    for (const auto& c : evolve_one_step(table, w, opts).components)
        if (!c.regular) s += c.inverse_expansion();
    return s;
}

double n_step_expansion_sum(const BilliardTable& table, const UCurve& w, int n, const UCurveOptions& opts) {
    const ComponentTree t = evolve_n(table, w, n, opts);
    if (t.exploded)
        throw BilliardError(ErrorKind::ComponentExplosion, "more than " + std::to_string(opts.max_leaves) + " leaves");
    return t.expansion_sum.back();
}

int select_N(double xi, double c_hat, double lambda_hat, int n_cap) {
    if (!(lambda_hat > 1.0)) throw BilliardError(ErrorKind::NoSuchN, "Lambda <= 1: the inequality never holds");
    if (!(c_hat > 0.0) || !(xi > 0.0)) throw BilliardError(ErrorKind::OutOfRange, "constants must be positive");
    for (int n = 1; n <= n_cap; ++n)
        if (xi * n < std::pow(lambda_hat, n) / (3.0 * c_hat)) return n;
    throw BilliardError(ErrorKind::NoSuchN, "no N <= " + std::to_string(n_cap) + " satisfies the complexity bound");
}

std::vector<double> delta_schedule(double delta0, double c_len, int n_max) {
    std::vector<double> d;
    for (int n = 0; n <= n_max; ++n) d.push_back(std::pow(delta0 * std::pow(c_len, -n), std::ldexp(1.0, n)));
    return d;
}

LengthRatioFit fit_length_ratio(const BilliardTable& table, std::uint64_t samples, double lo, double hi,
                                std::uint64_t seed, const UCurveOptions& opts, const std::vector<PhasePoint>& anchors) {
    LengthRatioFit fit;
    fit.samples = samples;
    for (std::uint64_t i = 0; i < samples; ++i) {
        auto g = stream_rng(seed, i);
        for (int attempt = 0; attempt < 100; ++attempt) {
            PhasePoint z;
            if (anchors.empty()) {
                z = sample_phase_point(table, g);
            } else {
                const auto idx = std::min(anchors.size() - 1, static_cast<std::size_t>(uniform01(g) * anchors.size()));
                z = anchors[idx];
            }
            const double len = std::exp(uniform(g, std::log(lo), std::log(hi)));
            UCurve w;
            try {
                w = seed_ucurve(table, z, len, opts.k0, 8, opts.map);
            } catch (const BilliardError& e) {
                if (e.kind() == ErrorKind::SingularSeed) continue;
                throw;
            }
            const double root = std::sqrt(w.length());
            double run = 0.0;
            const StepSymbol* prev = nullptr;
            const auto comps = evolve_one_step(table, w, opts).components;
            for (const auto& c : comps) {
                const StepSymbol& s = c.itinerary.back();
                const bool joined = prev != nullptr && prev->wall_id == s.wall_id && prev->shift_x == s.shift_x &&
                                    prev->shift_y == s.shift_y && prev->branch == s.branch;
                run = (joined ? run : 0.0) + c.curve.length();
                prev = &s;
                if (run / root > fit.c_len) {
                    fit.c_len = run / root;
                    fit.worst_length = w.length();
                }
            }
            break;
        }
    }
    return fit;
}

}  // namespace dbill
