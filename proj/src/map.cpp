#include "dbill/map.hpp"

#include "dbill/errors.hpp"
#include "dbill/json_io.hpp"
#include "dbill/rng.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <sstream>

namespace dbill {

Vec2 velocity_of(const BilliardTable& table, const PhasePoint& z) {
    const BoundaryFrame f = table.boundary_point(z.wall_id, z.r);
    return f.inward_normal * std::cos(z.phi) + f.tangent * std::sin(z.phi);
}

double phi_of(const BilliardTable& table, int wall, double r, const Vec2& v) {
    const ArcWall& w = table.walls.at(wall);
    return std::atan2(v.dot(w.tangent_at(r)), v.dot(w.normal_at(r)));
}

namespace {

// Corner sitting at the endpoint of `wall` nearest to r, or -1.
int corner_at(const BilliardTable& t, int wall, double r, double eps) {
    const ArcWall& w = t.walls.at(wall);
    if (w.closed) return -1;
    if (r <= eps) return t.corner_at_start[wall];
    if (r >= w.length() - eps) return t.corner_at_end[wall];
    return -1;
}

struct Leg {
    double tau;
    double kappa;
    double cos_out;
};

struct Partial {
    std::vector<Leg> legs;
    std::vector<BranchLabel> trail;
    double pending_tau{0.0};
    int corner{-1};
    Vec2 shift;
};

struct Ctx {
    const BilliardTable& table;
    const MapOptions& opts;
    double kappa0;
    double cos0;
    std::vector<MapImage>& out;
};

void finalize(const Ctx& ctx, const Partial& p, int wall, double r, const Vec2& v_out, bool grazing) {
    MapImage img;
    img.point.wall_id = wall;
    img.point.r = r;
    if (grazing) {
        const double s = v_out.dot(ctx.table.walls[wall].tangent_at(r));
        img.point.phi = std::copysign(kHalfPi, s);
    } else {
        img.point.phi = phi_of(ctx.table, wall, r, v_out);
    }
    img.grazing = grazing;
    img.trail = p.trail;
    img.corner_id = p.corner;
    img.immediate = std::max(0, static_cast<int>(p.legs.size()) - 1);
    img.shift = p.shift;
    double kappa = ctx.kappa0, c = ctx.cos0;
    Mat2 m;
    for (const Leg& l : p.legs) {
        img.tau += l.tau;
        m = collision_derivative(l.tau, kappa, c, l.kappa, l.cos_out) * m;
        kappa = l.kappa;
        c = l.cos_out;
    }
    img.df = m;
    ctx.out.push_back(std::move(img));
}

double cos_against(const BilliardTable& t, int wall, double r, const Vec2& v) {
    return std::abs(v.dot(t.walls[wall].normal_at(r)));
}

void fly(const Ctx& ctx, const Vec2& origin, const Vec2& v, int dep, Partial p) {
    const BilliardTable& t = ctx.table;
    if (static_cast<int>(ctx.out.size()) >= ctx.opts.max_images)
        throw BilliardError(ErrorKind::SequenceOverflow, "more than " + std::to_string(ctx.opts.max_images) +
                                                             " images of one point");
    const CollisionOutcome oc = first_collision(t, {origin, v}, dep, ctx.opts.flow);
    const double tau = p.pending_tau + oc.tau;
    p.pending_tau = 0.0;
    p.shift = p.shift + oc.translation;
    if (oc.kind != CollisionKind::Corner) {
        const Vec2 vo = oc.branches.front().ray.direction;
        const bool grazing = oc.kind == CollisionKind::Grazing;
        p.legs.push_back({tau, t.walls[oc.wall_id].curvature(), grazing ? oc.cos_incidence : cos_against(t, oc.wall_id, oc.r, vo)});
        finalize(ctx, p, oc.wall_id, oc.r, vo, grazing);
        return;
    }
    for (const Continuation& b : oc.branches) {
        Partial q = p;
        q.trail.push_back(b.label);
        q.corner = oc.corner_id;
        if (b.collisions.empty()) {
            q.pending_tau = tau;
            fly(ctx, b.ray.origin - oc.translation, v, -1, std::move(q));
            continue;
        }
        const ImmediateCollision* last = nullptr;
        for (const auto& ic : b.collisions) {
            if (ic.grazing) continue;
            q.legs.push_back({last ? 0.0 : tau, t.walls[ic.wall_id].curvature(),
                              cos_against(t, ic.wall_id, ic.r, ic.outgoing)});
            last = &ic;
        }
        finalize(ctx, q, last->wall_id, last->r, last->outgoing, false);
    }
}

MapBranchResult run_forward(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts) {
    MapBranchResult res;
    const BoundaryFrame f = table.boundary_point(z.wall_id, z.r);
    const Vec2 v = f.inward_normal * std::cos(z.phi) + f.tangent * std::sin(z.phi);
    const Ctx ctx{table, opts, table.walls[z.wall_id].curvature(), std::abs(v.dot(f.inward_normal)), res.images};
    Partial p;
    const int corner = corner_at(table, z.wall_id, z.r, opts.flow.eps_corner);
    if (corner >= 0) {
        const Corner& c = table.corners[corner];
        const Continuation cd = corner_departure(table, c, z.wall_id, v, opts.flow.eps_tan);
        Vec2 w = v;
        for (const auto& ic : cd.collisions) {
            if (ic.grazing) continue;
            p.legs.push_back({0.0, table.walls[ic.wall_id].curvature(), cos_against(table, ic.wall_id, ic.r, ic.outgoing)});
            w = ic.outgoing;
        }
        if (!p.legs.empty()) p.corner = corner;
        fly(ctx, c.position, w, p.legs.empty() ? z.wall_id : -1, std::move(p));
    } else {
        fly(ctx, f.position, v, z.wall_id, std::move(p));
    }
    res.singular = res.images.size() > 1 ||
                   std::any_of(res.images.begin(), res.images.end(), [](const MapImage& m) { return m.grazing; });
    return res;
}

void require_regular(const BilliardTable& table, const PhasePoint& z, const FlowOptions& fo) {
    if (on_singular_set(table, z, fo))
        throw BilliardError(ErrorKind::SingularInput, "phase point on the singular boundary (wall " +
                                                          std::to_string(z.wall_id) + ", r " + format_double(z.r) +
                                                          ", phi " + format_double(z.phi) + ")");
}

MapBranchResult reversed(MapBranchResult r) {
    const Mat2 j(1.0, 0.0, 0.0, -1.0);
    for (auto& img : r.images) {
        img.point = time_reverse(img.point);
        img.df = j * img.df * j;
    }
    return r;
}

double line_angle(const Vec2& v) {
    // angle of the line through v, in (-pi/2, pi/2]
    double a = std::atan2(v.y, v.x);
    if (a > kHalfPi) a -= kPi;
    if (a <= -kHalfPi) a += kPi;
    return a;
}

Vec2 oriented(Vec2 v) {
    v = v.normalized();
    if (v.x < 0.0 || (v.x == 0.0 && v.y < 0.0)) v = -v;
    return v;
}

}  // namespace

bool on_singular_set(const BilliardTable& table, const PhasePoint& z, const FlowOptions& opts) {
    if (std::cos(z.phi) < std::sin(opts.eps_tan)) return true;
    return corner_at(table, z.wall_id, z.r, opts.eps_corner) >= 0;
}

MapBranchResult forward(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts) {
    require_regular(table, z, opts.flow);
    return run_forward(table, z, opts);
}

MapBranchResult forward_any(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts) {
    return run_forward(table, z, opts);
}

MapBranchResult inverse(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts) {
    require_regular(table, z, opts.flow);
    return reversed(run_forward(table, time_reverse(z), opts));
}

MapBranchResult inverse_any(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts) {
    return reversed(run_forward(table, time_reverse(z), opts));
}

Mat2 collision_derivative(double tau, double kappa, double cos_phi, double kappa_next, double cos_phi_next) {
    if (cos_phi_next < 1e-6) {
        const long double t = tau, k = kappa, c = cos_phi, k2 = kappa_next, c2 = cos_phi_next;
        const long double s = -1.0L / c2;
        return {static_cast<double>(s * (t * k + c)), static_cast<double>(s * t),
                static_cast<double>(s * (t * k * k2 + k * c2 + k2 * c)), static_cast<double>(s * (t * k2 + c2))};
    }
    const double s = -1.0 / cos_phi_next;
    return {s * (tau * kappa + cos_phi), s * tau, s * (tau * kappa * kappa_next + kappa * cos_phi_next + kappa_next * cos_phi),
            s * (tau * kappa_next + cos_phi_next)};
}

Mat2 derivative(const BilliardTable& table, const PhasePoint& z, int branch, const MapOptions& opts) {
    return forward(table, z, opts).images.at(branch).df;
}

StripIndex strip_index(double phi, int k0) {
    StripIndex s{0, k0};
    const double k0sq = static_cast<double>(k0) * k0;
    if (phi >= -kHalfPi + 1.0 / k0sq && phi <= kHalfPi - 1.0 / k0sq) return s;
    auto inv_sq = [](long long k) { return 1.0 / (static_cast<double>(k) * static_cast<double>(k)); };
    const long long cap = INT_MAX / 2;
    const double d = phi > 0.0 ? kHalfPi - phi : phi + kHalfPi;
    if (d <= 0.0) {
        s.k = phi > 0.0 ? INT_MAX : -INT_MAX;
        return s;
    }
    long long k = static_cast<long long>(std::ceil(1.0 / std::sqrt(d))) - 1;
    k = std::clamp<long long>(k, k0, cap);
    if (phi > 0.0) {
        // H_k = (pi/2 - k^-2, pi/2 - (k+1)^-2]
        while (k < cap && !(phi <= kHalfPi - inv_sq(k + 1))) ++k;
        while (k > k0 && !(phi > kHalfPi - inv_sq(k))) --k;
        s.k = static_cast<int>(k);
    } else {
        // H_-k = [-pi/2 + (k+1)^-2, -pi/2 + k^-2)
        while (k < cap && !(phi >= -kHalfPi + inv_sq(k + 1))) ++k;
        while (k > k0 && !(phi < -kHalfPi + inv_sq(k))) --k;
        s.k = -static_cast<int>(k);
    }
    return s;
}

std::pair<double, double> strip_bounds(int k, int k0) {
    auto inv_sq = [](double x) { return 1.0 / (x * x); };
    if (k == 0) return {-kHalfPi + inv_sq(k0), kHalfPi - inv_sq(k0)};
    if (k > 0) return {kHalfPi - inv_sq(k), kHalfPi - inv_sq(k + 1.0)};
    const double a = -static_cast<double>(k);
    return {-kHalfPi + inv_sq(a + 1.0), -kHalfPi + inv_sq(a)};
}

double min_gain(const Mat2& m, const Cone& c) {
    // |M v|^2 = v^T A v on the arc of unit directions between c.a and c.b
    const double a11 = m(0, 0) * m(0, 0) + m(1, 0) * m(1, 0);
    const double a12 = m(0, 0) * m(0, 1) + m(1, 0) * m(1, 1);
    const double a22 = m(0, 1) * m(0, 1) + m(1, 1) * m(1, 1);
    auto q = [&](const Vec2& v) { return a11 * v.x * v.x + 2.0 * a12 * v.x * v.y + a22 * v.y * v.y; };
    double best = std::min(q(c.a.normalized()), q(c.b.normalized()));
    // smallest eigenvector of A, if inside the arc
    const double tr = a11 + a22, det = a11 * a22 - a12 * a12;
    const double lam = 0.5 * tr - std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    Vec2 e = std::abs(a12) > 0.0 ? Vec2{a12, lam - a11} : (a11 <= a22 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0});
    if (e.norm() > 0.0 && c.contains(e, 0.0)) best = std::min(best, std::max(lam, 0.0));
    return std::sqrt(best);
}

Vec2 Cone::bisector() const { return oriented(a + b); }

bool Cone::contains(const Vec2& v, double tol) const {
    const double ta = line_angle(a), tb = line_angle(b), tv = line_angle(v);
    return tv >= std::min(ta, tb) - tol && tv <= std::max(ta, tb) + tol;
}

Cone cone_push(const BilliardTable& table, const PhasePoint& z, int branch, const MapOptions& opts) {
    const Mat2 m = derivative(table, z, branch, opts);
    return {oriented(m * Vec2{1.0, 0.0}), oriented(m * Vec2{0.0, 1.0})};
}

Cone cone_pull(const BilliardTable& table, const PhasePoint& z, int branch, const MapOptions& opts) {
    const Mat2 m = derivative(table, z, branch, opts).inverse();
    return {oriented(m * Vec2{1.0, 0.0}), oriented(m * Vec2{0.0, 1.0})};
}

Cone unstable_cone(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts) {
    const MapBranchResult pre = inverse_any(table, z, opts);
    const Mat2 m = pre.images.front().df.inverse();
    return {oriented(m * Vec2{1.0, 0.0}), oriented(m * Vec2{0.0, 1.0})};
}

double cone_gap(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts) {
    const Cone u = unstable_cone(table, z, opts);
    const Cone s = cone_pull(table, z, 0, opts);
    const double u_lo = std::min(line_angle(u.a), line_angle(u.b));
    const double u_hi = std::max(line_angle(u.a), line_angle(u.b));
    const double s_lo = std::min(line_angle(s.a), line_angle(s.b)) + kPi;
    const double s_hi = std::max(line_angle(s.a), line_angle(s.b)) + kPi;
    return std::min(s_lo - u_hi, kPi + u_lo - s_hi);
}

double expansion_factor(const BilliardTable& table, const TangentVector& v, int branch, const MapOptions& opts) {
    const Vec2 w{v.dr, v.dphi};
    bool inside = false;
    try {
        inside = unstable_cone(table, v.base, opts).contains(w, 1e-9);
    } catch (const BilliardError&) {
        inside = v.dr * v.dphi >= 0.0;
    }
    if (!inside)
        throw BilliardError(ErrorKind::NotUnstable, "tangent vector (" + format_double(v.dr) + ", " +
                                                        format_double(v.dphi) + ") is outside the unstable cone");
    const Mat2 m = derivative(table, v.base, branch, opts);
    return (m * w).norm() / w.norm();
}

PhasePoint sample_phase_point(const BilliardTable& table, std::mt19937_64& g) {
    double total = 0.0;
    for (const auto& w : table.walls) total += w.length();
    for (;;) {
        double u = uniform01(g) * total;
        int wall = 0;
        while (wall + 1 < static_cast<int>(table.walls.size()) && u > table.walls[wall].length()) {
            u -= table.walls[wall].length();
            ++wall;
        }
        const PhasePoint z{wall, std::clamp(u, 0.0, table.wall_length(wall)), std::asin(uniform(g, -1.0, 1.0))};
        if (!on_singular_set(table, z, FlowOptions{1e-8, 1e-8, 1e-12})) return z;
    }
}

ExpansionConstant certify_expansion_constant(const BilliardTable& table, std::uint64_t samples, std::uint64_t seed,
                                             const MapOptions& opts) {
    ExpansionConstant out;
    out.samples = samples;
    out.seed = seed;
    out.c_hat = std::numeric_limits<double>::infinity();
    for (std::uint64_t i = 0; i < samples; ++i) {
        auto g = stream_rng(seed, i);
        const PhasePoint z = sample_phase_point(table, g);
        try {
            const Cone u = unstable_cone(table, z, opts);
            const MapBranchResult res = forward(table, z, opts);
            for (const auto& img : res.images) {
                if (img.grazing) continue;
                const double c = std::cos(img.point.phi);
                const double val = min_gain(img.df, u) * c;
                if (val < out.c_hat) {
                    out.c_hat = val;
                    out.worst_cos = c;
                }
            }
        } catch (const BilliardError&) {
            continue;
        }
    }
    return out;
}

HyperbolicityFit fit_hyperbolicity(const BilliardTable& table, std::uint64_t samples, int n_max, std::uint64_t seed,
                                   const MapOptions& opts) {
    HyperbolicityFit fit;
    fit.samples = samples;
    fit.seed = seed;
    fit.min_log_growth.assign(n_max, std::numeric_limits<double>::infinity());
    for (std::uint64_t i = 0; i < samples; ++i) {
        auto g = stream_rng(seed, i);
        const PhasePoint pre = sample_phase_point(table, g);
        try {
            const MapBranchResult first = forward(table, pre, opts);
            const MapImage& img0 = first.images.front();
            if (img0.grazing) continue;
            PhasePoint z = img0.point;
            Vec2 v = (img0.df * Vec2{1.0, 1.0}).normalized();
            double lg = 0.0;
            for (int n = 1; n <= n_max; ++n) {
                const MapBranchResult res = forward_any(table, z, opts);
                const MapImage& img = res.images.front();
                if (img.grazing) break;
                v = img.df * v;
                lg += std::log(v.norm());
                v = v.normalized();
                fit.min_log_growth[n - 1] = std::min(fit.min_log_growth[n - 1], lg);
                z = img.point;
            }
        } catch (const BilliardError&) {
            continue;
        }
    }
    // least squares m_n ~ a + n log(lambda)
    double sn = 0, sm = 0, snn = 0, snm = 0;
    int cnt = 0;
    for (int n = 1; n <= n_max; ++n) {
        const double m = fit.min_log_growth[n - 1];
        if (!std::isfinite(m)) continue;
        sn += n;
        sm += m;
        snn += double(n) * n;
        snm += n * m;
        ++cnt;
    }
    if (cnt < 2) return fit;
    const double slope = (cnt * snm - sn * sm) / (cnt * snn - sn * sn);
    const double icpt = (sm - slope * sn) / cnt;
    double lower = std::numeric_limits<double>::infinity();
    fit.residuals.assign(n_max, 0.0);
    for (int n = 1; n <= n_max; ++n) {
        const double m = fit.min_log_growth[n - 1];
        if (!std::isfinite(m)) continue;
        fit.residuals[n - 1] = m - (icpt + slope * n);
        lower = std::min(lower, m - slope * n);
    }
    fit.lambda_hat = std::exp(slope);
    fit.c_hat = std::exp(-lower);
    return fit;
}

std::string phase_csv(const std::vector<PhasePoint>& points, int k0) {
    std::ostringstream os;
    os << "wall_id,r,phi,k\n";
    for (const auto& p : points)
        os << p.wall_id << ',' << format_double(p.r) << ',' << format_double(p.phi) << ','
           << strip_index(p.phi, k0).k << '\n';
    return os.str();
}

std::string matrix_string(const Mat2& m) {
    return "[[" + format_double(m(0, 0)) + "," + format_double(m(0, 1)) + "],[" + format_double(m(1, 0)) + "," +
           format_double(m(1, 1)) + "]]";
}

}  // namespace dbill
