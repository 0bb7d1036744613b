#include "dbill/atlas.hpp"

#include "dbill/errors.hpp"
#include "dbill/json_io.hpp"
#include "dbill/rng.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace dbill {

std::string_view to_string(WallType t) {
    switch (t) {
        case WallType::None: return "none";
        case WallType::A: return "A";
        case WallType::B: return "B";
    }
    return "?";
}

namespace {

constexpr int kOutside = -1;
constexpr int kFailed = -2;

struct Reference {
    Vec2 x;
    Vec2 v;
};

Reference reference_of(const BilliardTable& t, const PhasePoint& z) {
    return {t.walls[z.wall_id].point_at(z.r), velocity_of(t, z)};
}

std::optional<PhasePoint> probe_point(const BilliardTable& t, const PhasePoint& z, double rho, double theta) {
    PhasePoint w{z.wall_id, z.r + rho * std::cos(theta), z.phi + rho * std::sin(theta)};
    if (std::abs(w.phi) >= kHalfPi) return std::nullopt;
    const ArcWall& wall = t.walls[z.wall_id];
    const double L = wall.length();
    if (wall.closed) {
        w.r = std::fmod(w.r, L);
        if (w.r < 0.0) w.r += L;
    } else if (w.r <= 0.0 || w.r >= L) {
        return std::nullopt;
    }
    return w;
}

int strip_symbol(double phi, int k0) {
    const int k = strip_index(phi, k0).k;
    if (k == 0 || k == k0 || k == -k0) return 0;
    return k > 0 ? 1 : -1;
}

int branch_code(const std::vector<BranchLabel>& trail) {
    int code = 0;
    for (BranchLabel b : trail) code = 5 * code + static_cast<int>(b) + 1;
    return code;
}

bool is_type_a(const Reference& ref, const Vec2& hit) { return ref.v.cross(hit - ref.x) > 0.0; }

struct ProbeResult {
    Itinerary it;
    std::optional<MapImage> first;
    Vec2 hit;  ///< first collision point in the plane, lattice shift included
};

ProbeResult run_probe(const BilliardTable& t, const PhasePoint& z, const Reference& ref, double rho, double theta,
                      int n, int k0, const PortraitOptions& o) {
    ProbeResult out;
    const auto w0 = probe_point(t, z, rho, theta);
    if (!w0) {
        out.it.push_back({kOutside});
        return out;
    }
    PhasePoint w = *w0;
    for (int step = 0; step < n; ++step) {
        MapBranchResult res;
        try {
            res = forward(t, w, o.map);
        } catch (const BilliardError&) {
            out.it.push_back({kFailed});
            return out;
        }
        if (res.images.size() != 1) {
            out.it.push_back({kFailed});
            return out;
        }
        const MapImage& img = res.images.front();
        ItineraryStep s;
        s.wall_id = img.point.wall_id;
        s.shift_x = static_cast<int>(std::lround(img.shift.x));
        s.shift_y = static_cast<int>(std::lround(img.shift.y));
        s.branch = branch_code(img.trail);
        s.strip = img.grazing ? (img.point.phi > 0 ? 1 : -1) : strip_symbol(img.point.phi, k0);
        if (step == 0) {
            out.first = img;
            out.hit = t.walls[img.point.wall_id].point_at(img.point.r) + img.shift;
            if (o.break_reference_wall) s.side = is_type_a(ref, out.hit) ? 1 : 2;
            if (o.split_front_back) {
                const Vec2 n_in = t.walls[img.point.wall_id].normal_at(img.point.r);
                s.back = (ref.x - out.hit).dot(n_in) < 0.0 ? 1 : 0;
            }
        }
        out.it.push_back(s);
        if (img.grazing) return out;
        w = img.point;
    }
    return out;
}

struct RawSector {
    double lo, hi;
    Itinerary it;
};

struct Decomposition {
    double rho;
    std::vector<RawSector> sectors;
};

Decomposition decompose(const BilliardTable& t, const PhasePoint& z, const Reference& ref, double rho, int n, int k0,
                        const PortraitOptions& o) {
    const int m = std::max(8, o.probes);
    auto key = [&](double th) { return run_probe(t, z, ref, rho, th, n, k0, o).it; };
    std::vector<double> th(m);
    std::vector<Itinerary> keys(m);
    for (int i = 0; i < m; ++i) {
        th[i] = kTwoPi * (i + 0.5) / m;
        keys[i] = key(th[i]);
    }
    // boundaries: (angle, itinerary on the ccw side)
    std::vector<std::pair<double, Itinerary>> cuts;
    auto refine = [&](auto&& self, double a, const Itinerary& ka, double b, const Itinerary& kb) -> void {
        if (b - a <= o.angle_tol) {
            cuts.emplace_back(0.5 * (a + b), kb);
            return;
        }
        const double mid = 0.5 * (a + b);
        const Itinerary km = key(mid);
        if (km == ka) {
            self(self, mid, km, b, kb);
        } else if (km == kb) {
            self(self, a, ka, mid, km);
        } else {
            self(self, a, ka, mid, km);
            self(self, mid, km, b, kb);
        }
    };
    for (int i = 0; i < m; ++i) {
        const int j = (i + 1) % m;
        if (keys[i] == keys[j]) continue;
        refine(refine, th[i], keys[i], j == 0 ? th[j] + kTwoPi : th[j], keys[j]);
    }
    Decomposition d{rho, {}};
    if (cuts.empty()) {
        d.sectors.push_back({0.0, kTwoPi, keys[0]});
        return d;
    }
    for (auto& c : cuts) c.first = wrap_two_pi(c.first);
    std::sort(cuts.begin(), cuts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        const double lo = cuts[i].first;
        const double hi = i + 1 < cuts.size() ? cuts[i + 1].first : cuts[0].first + kTwoPi;
        d.sectors.push_back({lo, hi, cuts[i].second});
    }
    // Probes landing within eps_corner of a corner (or exactly grazing) leave
    // slivers around the cut itself, narrower than the probe spacing; fold
    // them into the cut.
    const double kSliver = kTwoPi / m;
    auto sliver = [&](const RawSector& r) {
        return r.hi - r.lo < kSliver && !r.it.empty() && r.it.back().wall_id == kFailed;
    };
    bool changed = true;
    while (changed && d.sectors.size() > 1) {
        changed = false;
        const std::size_t m2 = d.sectors.size();
        for (std::size_t i = 0; i < m2; ++i) {
            if (!sliver(d.sectors[i])) continue;
            RawSector& prev = d.sectors[(i + m2 - 1) % m2];
            RawSector& next = d.sectors[(i + 1) % m2];
            const double cut = 0.5 * (d.sectors[i].lo + d.sectors[i].hi);
            if (i == 0) {
                prev.hi = cut + kTwoPi;
                next.lo = cut;
            } else {
                prev.hi = cut;
                next.lo = i + 1 == m2 ? cut - kTwoPi : cut;
            }
            d.sectors.erase(d.sectors.begin() + static_cast<std::ptrdiff_t>(i));
            changed = true;
            break;
        }
        // merge equal neighbours
        for (std::size_t i = 0; !changed && d.sectors.size() > 1 && i < d.sectors.size(); ++i) {
            const std::size_t j = (i + 1) % d.sectors.size();
            if (d.sectors[i].it != d.sectors[j].it) continue;
            if (j == 0) {
                d.sectors[0].lo = d.sectors[i].lo - kTwoPi;
            } else {
                d.sectors[i].hi = d.sectors[j].hi;
                d.sectors.erase(d.sectors.begin() + static_cast<std::ptrdiff_t>(j));
                changed = true;
                break;
            }
            d.sectors.erase(d.sectors.begin() + static_cast<std::ptrdiff_t>(i));
            changed = true;
        }
    }
    if (d.sectors.size() == 1) {
        d.sectors[0].lo = 0.0;
        d.sectors[0].hi = kTwoPi;
    }
    // keep theta_lo in [0, 2 pi)
    for (auto& r : d.sectors)
        if (r.lo < 0.0) {
            r.lo += kTwoPi;
            r.hi += kTwoPi;
        }
    std::sort(d.sectors.begin(), d.sectors.end(), [](const RawSector& a, const RawSector& b) { return a.lo < b.lo; });
    return d;
}

std::vector<Itinerary> signature(const Decomposition& d) {
    std::vector<Itinerary> s;
    for (const auto& r : d.sectors) s.push_back(r.it);
    if (s.empty()) return s;
    std::vector<Itinerary> best = s;
    for (std::size_t k = 1; k < s.size(); ++k) {
        std::vector<Itinerary> rot(s.begin() + k, s.end());
        rot.insert(rot.end(), s.begin(), s.begin() + k);
        if (rot < best) best = rot;
    }
    return best;
}

std::string describe(const Decomposition& d) {
    std::ostringstream os;
    os << "rho " << format_double(d.rho) << ":";
    for (const auto& s : d.sectors)
        os << " [" << format_double(s.lo) << ", " << format_double(s.hi) << ") " << itinerary_text(s.it) << ";";
    return os.str();
}

bool overlaps(double lo, double hi, double a, double b, double eps = 1e-9) {
    for (int k = -1; k <= 1; ++k) {
        const double s = kTwoPi * k;
        if (std::max(lo, a + s) < std::min(hi, b + s) - eps) return true;
    }
    return false;
}

// [a, b] inside [lo, hi] modulo 2 pi
bool covers(double lo, double hi, double a, double b, double eps) {
    for (int k = -2; k <= 2; ++k) {
        const double s = kTwoPi * k;
        if (lo <= a + s + eps && b + s - eps <= hi) return true;
    }
    return false;
}

constexpr double kQuadLo[4] = {0.0, kHalfPi, kPi, 3.0 * kHalfPi};
constexpr unsigned kQuadBit[4] = {NE, NW, SW, SE};

bool valid_step(const ItineraryStep& s) { return s.wall_id >= 0; }

bool regular_itinerary(const Itinerary& it) {
    return std::all_of(it.begin(), it.end(), [](const ItineraryStep& s) { return valid_step(s) && s.strip == 0; });
}

}  // namespace

std::string itinerary_text(const Itinerary& it) {
    std::string out;
    for (std::size_t i = 0; i < it.size(); ++i) {
        const ItineraryStep& s = it[i];
        if (i) out += " > ";
        if (s.wall_id == kOutside) {
            out += "outside";
            continue;
        }
        if (s.wall_id == kFailed) {
            out += "singular";
            continue;
        }
        out += "w" + std::to_string(s.wall_id);
        if (s.shift_x || s.shift_y) out += "@" + std::to_string(s.shift_x) + "," + std::to_string(s.shift_y);
        out += ":b" + std::to_string(s.branch) + ":s" + std::to_string(s.strip);
        if (s.side) out += ":side" + std::to_string(s.side);
        if (s.back) out += ":back";
    }
    return out;
}

SectorPortrait sector_portrait(const BilliardTable& table, const PhasePoint& z, int n, int k0,
                               const PortraitOptions& opts) {
    if (n < 1 || n > 6) throw BilliardError(ErrorKind::OutOfRange, "portrait order must be in 1..6");
    if (z.wall_id < 0 || z.wall_id >= static_cast<int>(table.walls.size()))
        throw BilliardError(ErrorKind::OutOfRange, "no such wall");
    const Reference ref = reference_of(table, z);
    double rho = opts.rho0;
    Decomposition prev = decompose(table, z, ref, rho, n, k0, opts);
    for (int h = 1; h <= opts.max_halvings; ++h) {
        rho *= 0.5;
        Decomposition cur = decompose(table, z, ref, rho, n, k0, opts);
        if (signature(cur) == signature(prev)) {
            SectorPortrait p;
            p.center = z;
            p.n = n;
            p.k0 = k0;
            p.rho_hat = rho;
            p.halvings = h;
            for (auto& r : cur.sectors) {
                if (!r.it.empty() && r.it.front().wall_id == kOutside) continue;
                Sector s;
                s.theta_lo = r.lo;
                s.theta_hi = r.hi;
                s.itinerary = std::move(r.it);
                s.regular = regular_itinerary(s.itinerary);
                for (int q = 0; q < 4; ++q)
                    if (overlaps(s.theta_lo, s.theta_hi, kQuadLo[q], kQuadLo[q] + kHalfPi)) s.quadrants |= kQuadBit[q];
                p.sectors.push_back(std::move(s));
            }
            return p;
        }
        prev = std::move(cur);
    }
    throw BilliardError(ErrorKind::UnstablePortrait,
                        "sector combinatorics did not stabilize; last two: " + describe(prev) + " | " +
                            describe(decompose(table, z, ref, 2.0 * rho, n, k0, opts)));
}

std::pair<double, double> image_arc(const Sector& s, double lo, double hi) {
    constexpr int kSamples = 65;
    std::vector<double> a(kSamples);
    for (int i = 0; i < kSamples; ++i) {
        const double th = lo + (hi - lo) * i / (kSamples - 1);
        const Vec2 e = s.df * unit_from_angle(th);
        a[i] = std::atan2(e.y, e.x);
        if (i) {
            while (a[i] - a[i - 1] > kPi) a[i] -= kTwoPi;
            while (a[i] - a[i - 1] < -kPi) a[i] += kTwoPi;
        }
    }
    double b0 = std::min(a.front(), a.back());
    double b1 = std::max(a.front(), a.back());
    const double shift = wrap_two_pi(b0) - b0;
    return {b0 + shift, b1 + shift};
}

void classify_sectors(const BilliardTable& table, SectorPortrait& portrait, const PortraitOptions& opts) {
    const PhasePoint& z = portrait.center;
    const Reference ref = reference_of(table, z);
    for (Sector& s : portrait.sectors) {
        s.regular = regular_itinerary(s.itinerary);
        if (s.itinerary.empty() || !valid_step(s.itinerary.front())) {
            s.active = false;
            continue;
        }
        const double mid = 0.5 * (s.theta_lo + s.theta_hi);
        const ProbeResult far = run_probe(table, z, ref, portrait.rho_hat, mid, 1, portrait.k0, opts);
        const ProbeResult near = run_probe(table, z, ref, 0.5 * portrait.rho_hat, mid, 1, portrait.k0, opts);
        if (!far.first || !near.first) continue;
        const PhasePoint p1 = far.first->point;
        const PhasePoint p2 = near.first->point;
        const ArcWall& w = table.walls[p2.wall_id];
        const double L = w.length();
        double dr = p2.r - p1.r;
        if (w.closed) dr -= L * std::round(dr / L);
        PhasePoint c{p2.wall_id, p2.r + dr, 2.0 * p2.phi - p1.phi};
        if (w.closed) {
            c.r = std::fmod(c.r, L);
            if (c.r < 0.0) c.r += L;
        } else {
            // corner images: the extrapolation is only good to O(rho)
            if (std::abs(c.r) < portrait.rho_hat) c.r = 0.0;
            if (std::abs(c.r - L) < portrait.rho_hat) c.r = L;
            c.r = std::clamp(c.r, 0.0, L);
        }
        c.phi = std::clamp(c.phi, -kHalfPi, kHalfPi);
        s.image_center = c;
        s.df = near.first->df;
        s.type = is_type_a(ref, near.hit) ? WallType::A : WallType::B;
        const Vec2 n_in = table.walls[p2.wall_id].normal_at(p2.r);
        s.back = (ref.x - near.hit).dot(n_in) < 0.0;
        const auto arc = image_arc(s, s.theta_lo, s.theta_hi);
        s.image_lo = arc.first;
        s.image_hi = arc.second;
        constexpr double tol = 1e-7;
        s.active = !(covers(kQuadLo[0], kQuadLo[0] + kHalfPi, arc.first, arc.second, tol) ||
                     covers(kQuadLo[2], kQuadLo[2] + kHalfPi, arc.first, arc.second, tol));
        s.contains_active_quadrant = covers(arc.first, arc.second, kQuadLo[1], kQuadLo[1] + kHalfPi, tol) ||
                                     covers(arc.first, arc.second, kQuadLo[3], kQuadLo[3] + kHalfPi, tol);
    }
}

ComplexityRecord regular_complexity(const BilliardTable& table, const PhasePoint& z, int n, int k0,
                                    const PortraitOptions& opts) {
    ComplexityRecord rec;
    rec.z = z;
    rec.n = n;
    const SectorPortrait p = sector_portrait(table, z, n, k0, opts);
    for (const Sector& s : p.sectors) {
        if (!s.regular) continue;
        ++rec.k_hat;
        for (int q = 0; q < 4; ++q)
            if (s.quadrants & kQuadBit[q]) ++rec.per_quadrant[q];
    }
    const SectorPortrait p1 = n == 1 ? p : sector_portrait(table, z, 1, k0, opts);
    for (const Sector& s : p1.sectors)
        if (!s.itinerary.empty() && valid_step(s.itinerary.front())) ++rec.order1_sectors;
    return rec;
}

std::vector<PhasePoint> multiple_point_pool(const BilliardTable& table, int resolution) {
    TraceOptions o;
    o.resolution = resolution;
    std::vector<SingularityCurve> curves = trace_singularity(table, -1, o);
    const auto fwd = trace_singularity(table, 1, o);
    curves.insert(curves.end(), fwd.begin(), fwd.end());
    std::vector<PhasePoint> out;
    for (const MultiplePoint& m : find_multiple_points(table, curves, o.map)) out.push_back(m.z);
    return out;
}

LinearComplexityFit fit_linear_complexity(const BilliardTable& table, const std::vector<PhasePoint>& pool,
                                          std::uint64_t count, int n_max, int k0, std::uint64_t seed,
                                          const PortraitOptions& opts) {
    if (pool.empty() || n_max < 1) throw BilliardError(ErrorKind::InvalidSpec, "empty multiple point pool");
    LinearComplexityFit fit;
    fit.k_hat_max.assign(n_max, 0);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto g = stream_rng(seed, i);
        const auto idx = std::min(pool.size() - 1, static_cast<std::size_t>(uniform01(g) * pool.size()));
        ++fit.points;
        for (int n = 1; n <= n_max; ++n) {
            try {
                const ComplexityRecord rec = regular_complexity(table, pool[idx], n, k0, opts);
                fit.k_hat_max[n - 1] = std::max(fit.k_hat_max[n - 1], rec.k_hat);
                fit.xi_hat = std::max(fit.xi_hat, static_cast<double>(rec.k_hat) / n);
            } catch (const BilliardError&) {
                ++fit.failed;
            }
        }
    }
    return fit;
}

ActiveVerdict active_sector_conservation(const BilliardTable& table, const PhasePoint& z, int k0,
                                         const PortraitOptions& opts) {
    ActiveVerdict v;
    SectorPortrait p = sector_portrait(table, z, 1, k0, opts);
    classify_sectors(table, p, opts);
    constexpr int quad_index[2] = {1, 3};  // NW, SE
    for (int qi = 0; qi < 2; ++qi) {
        const double qa = kQuadLo[quad_index[qi]];
        const double qb = qa + kHalfPi;
        for (const Sector& s : p.sectors) {
            if (!(s.quadrants & kQuadBit[quad_index[qi]])) continue;
            v.probed[qi] = true;
            if (!s.regular) continue;
            // piece = sector cut along the axes
            double lo = 0.0, hi = 0.0;
            bool found = false;
            for (int k = -1; k <= 1 && !found; ++k) {
                lo = std::max(s.theta_lo, qa + kTwoPi * k);
                hi = std::min(s.theta_hi, qb + kTwoPi * k);
                found = lo < hi - 1e-9;
            }
            if (!found) continue;
            ++v.regular_pieces[qi];
            if (s.type == WallType::A) ++v.type_a[qi];
            const auto arc = image_arc(s, lo, hi);
            const bool contains = covers(arc.first, arc.second, kQuadLo[1], kQuadLo[1] + kHalfPi, 1e-7) ||
                                  covers(arc.first, arc.second, kQuadLo[3], kQuadLo[3] + kHalfPi, 1e-7);
            if (contains) ++v.active_images[qi];
        }
        if (v.active_images[qi] > 1) v.pass = false;
    }
    return v;
}

std::string portrait_json(const SectorPortrait& p) {
    nlohmann::json j;
    j["center"] = {{"wall_id", p.center.wall_id}, {"r", p.center.r}, {"phi", p.center.phi}};
    j["rho_hat"] = p.rho_hat;
    j["n"] = p.n;
    j["k0"] = p.k0;
    j["halvings"] = p.halvings;
    j["sectors"] = nlohmann::json::array();
    for (const Sector& s : p.sectors) {
        nlohmann::json it = nlohmann::json::array();
        for (const auto& st : s.itinerary)
            it.push_back({{"wall", st.wall_id},
                          {"branch", st.branch},
                          {"strip", st.strip},
                          {"shift", {st.shift_x, st.shift_y}},
                          {"side", st.side},
                          {"back", st.back}});
        std::vector<std::string> quads;
        const char* names[4] = {"NE", "NW", "SW", "SE"};
        for (int q = 0; q < 4; ++q)
            if (s.quadrants & kQuadBit[q]) quads.emplace_back(names[q]);
        j["sectors"].push_back({{"theta_lo", s.theta_lo},
                                {"theta_hi", s.theta_hi},
                                {"itinerary", it},
                                {"regular", s.regular},
                                {"active", s.active},
                                {"type", std::string(to_string(s.type))},
                                {"quadrants", quads},
                                {"image_center",
                                 {{"wall_id", s.image_center.wall_id},
                                  {"r", s.image_center.r},
                                  {"phi", s.image_center.phi}}},
                                {"image_arc", {s.image_lo, s.image_hi}},
                                {"back", s.back}});
    }
    return canonical_dump(j);
}

}  // namespace dbill
