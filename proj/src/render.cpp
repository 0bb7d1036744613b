#include "dbill/render.hpp"

#include "dbill/errors.hpp"
#include "dbill/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dbill {

namespace {

using nlohmann::json;

json point_json(const PhasePoint& p) { return json::array({p.wall_id, p.r, p.phi}); }

PhasePoint point_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s = buf;
    if (s == "-0.0000") s = "0.0000";
    return s;
}

// k = 0 blue, strips from k0 outwards go orange to dark red
std::string strip_color(int k, int k0) {
    if (k == 0) return "#3d6fb6";
    const double t = std::clamp(std::log(std::abs(k) / double(std::max(1, k0))) / std::log(100.0), 0.0, 1.0);
    const int r = static_cast<int>(std::lround(240 - 100 * t));
    const int g = static_cast<int>(std::lround(150 - 140 * t));
    const int b = static_cast<int>(std::lround(40 - 20 * t));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

std::string origin_color(const std::string& origin) {
    if (origin == "CornerPreimage") return "#7a3da8";
    if (origin == "StripBoundary") return "#9a9a9a";
    return "#1f8a4c";
}

class Svg {
public:
    Svg(double w, double h) : w_(w), h_(h) {}
    void line(double x1, double y1, double x2, double y2, const std::string& style) {
        body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
              << "\" style=\"" << style << "\"/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& style) {
        if (pts.size() < 2) return;
        body_ << "<polyline points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
        body_ << "\" style=\"fill:none;" << style << "\"/>\n";
    }
    void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& style) {
        body_ << "<polygon points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
        body_ << "\" style=\"" << style << "\"/>\n";
    }
    void circle(double x, double y, double r, const std::string& style) {
        body_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" style=\"" << style
              << "\"/>\n";
    }
    void text(double x, double y, const std::string& s, const std::string& extra = "") {
        body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\"12\""
              << extra << ">" << s << "</text>\n";
    }
    std::string str() const {
        std::ostringstream os;
        os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
           << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_) << "\">\n"
           << "<rect x=\"0\" y=\"0\" width=\"" << num(w_) << "\" height=\"" << num(h_) << "\" style=\"fill:#ffffff\"/>\n"
           << body_.str() << "</svg>\n";
        return os.str();
    }

private:
    double w_, h_;
    std::ostringstream body_;
};

// ---- table view ----

std::string render_table(const BilliardTable& t, const json& a) {
    if (!a.is_object()) throw BilliardError(ErrorKind::UnknownKind, "artifact is not a JSON object");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto grow = [&](Vec2 p) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    };
    if (t.ambient == Ambient::Torus) {
        grow({0.0, 0.0});
        grow({1.0, 1.0});
    }
    for (const auto& w : t.walls)
        for (int i = 0; i <= 64; ++i) grow(w.point_at(w.length() * i / 64.0));
    const double size = 600.0, pad = 20.0;
    const double scale = (size - 2 * pad) / std::max(xmax - xmin, ymax - ymin);
    auto X = [&](double x) { return pad + (x - xmin) * scale; };
    auto Y = [&](double y) { return size - pad - (y - ymin) * scale; };
    Svg svg(size, size);
    if (t.ambient == Ambient::Torus)
        svg.polygon({{X(0), Y(0)}, {X(1), Y(0)}, {X(1), Y(1)}, {X(0), Y(1)}}, "fill:none;stroke:#999999;stroke-dasharray:4,3");
    for (const auto& w : t.walls) {
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i <= 128; ++i) {
            const Vec2 p = w.point_at(w.length() * i / 128.0);
            pts.emplace_back(X(p.x), Y(p.y));
        }
        svg.polyline(pts, "stroke:#222222;stroke-width:2");
    }
    for (const auto& c : t.corners)
        svg.circle(X(c.position.x), Y(c.position.y), 4.0,
                   c.kind == CornerKind::Acute ? "fill:#c0392b" : "fill:#e0a000");
    if (a.contains("orbit")) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& row : a.at("orbit")) {
            const int wall = row.at("wall_id").get<int>();
            if (wall < 0 || wall >= static_cast<int>(t.walls.size())) continue;
            const Vec2 p = t.walls[wall].point_at(row.at("r").get<double>());
            if (t.ambient == Ambient::Torus && !pts.empty()) {
                // flights leave the unit cell; start a fresh stroke at each collision
                svg.polyline(pts, "stroke:#d35400;stroke-width:1");
                pts.clear();
            }
            pts.emplace_back(X(p.x), Y(p.y));
            svg.circle(X(p.x), Y(p.y), 2.0, "fill:#d35400");
        }
        svg.polyline(pts, "stroke:#d35400;stroke-width:1");
    } else if (a.contains("center")) {
        const PhasePoint c{a.at("center").at("wall_id").get<int>(), a.at("center").at("r").get<double>(),
                           a.at("center").at("phi").get<double>()};
        const Vec2 p = t.walls.at(c.wall_id).point_at(c.r);
        svg.circle(X(p.x), Y(p.y), 4.0, "fill:none;stroke:#d35400;stroke-width:2");
    }
    return svg.str();
}

// ---- phase view ----

struct Panels {
    std::vector<double> offset;
    double total{0.0};
    double gap{0.0};
};

Panels panels(const BilliardTable& t) {
    Panels p;
    double len = 0.0;
    for (const auto& w : t.walls) len += w.length();
    p.gap = 0.03 * len;
    for (const auto& w : t.walls) {
        p.offset.push_back(p.total);
        p.total += w.length() + p.gap;
    }
    p.total -= p.gap;
    return p;
}

std::string render_phase(const BilliardTable& t, const json& a) {
    if (!a.is_object()) throw BilliardError(ErrorKind::UnknownKind, "artifact is not a JSON object");
    const Panels pn = panels(t);
    const double width = 900.0, height = 420.0, pad = 30.0;
    const double sx = (width - 2 * pad) / pn.total;
    const double sy = (height - 2 * pad) / kPi;
    auto X = [&](int wall, double r) {
        const double L = t.walls[wall].length();
        if (t.walls[wall].closed) r = std::fmod(std::fmod(r, L) + L, L);
        return pad + (pn.offset[wall] + r) * sx;
    };
    auto Y = [&](double phi) { return height - pad - (phi + kHalfPi) * sy; };
    Svg svg(width, height);
    for (std::size_t w = 0; w < t.walls.size(); ++w) {
        const double x0 = X(static_cast<int>(w), 0.0), x1 = pad + (pn.offset[w] + t.walls[w].length()) * sx;
        svg.polygon({{x0, Y(-kHalfPi)}, {x1, Y(-kHalfPi)}, {x1, Y(kHalfPi)}, {x0, Y(kHalfPi)}},
                    "fill:none;stroke:#444444;stroke-width:1");
        svg.line(x0, Y(0.0), x1, Y(0.0), "stroke:#dddddd;stroke-width:1");
        svg.text(x0 + 4.0, height - 10.0, "wall " + std::to_string(w));
    }
    svg.text(width - pad - 10.0, height - 10.0, "r");
    svg.text(8.0, pad + 4.0, "phi");

    bool drew = false;
    auto stroke = [&](const std::vector<PhasePoint>& nodes, const std::string& style) {
        std::vector<std::pair<double, double>> pts;
        double last_x = 0.0;
        for (const auto& p : nodes) {
            if (p.wall_id < 0 || p.wall_id >= static_cast<int>(t.walls.size())) continue;
            const double x = X(p.wall_id, p.r);
            // break at wraps of closed walls
            if (!pts.empty() && std::abs(x - last_x) > 0.5 * t.walls[p.wall_id].length() * sx) {
                svg.polyline(pts, style);
                pts.clear();
            }
            pts.emplace_back(x, Y(p.phi));
            last_x = x;
        }
        svg.polyline(pts, style);
    };
    if (a.contains("curves")) {
        drew = true;
        for (const auto& c : a.at("curves")) {
            std::vector<PhasePoint> nodes;
            for (const auto& n : c.at("nodes")) nodes.push_back(point_from(n));
            const int level = c.at("level").get<int>();
            const std::string width_style = std::abs(level) == 1 ? "stroke-width:1.5" : "stroke-width:0.8";
            stroke(nodes, "stroke:" + origin_color(c.at("origin").get<std::string>()) + ";" + width_style +
                              (level > 0 ? ";stroke-dasharray:3,2" : ""));
        }
        if (a.contains("multiple_points"))
            for (const auto& m : a.at("multiple_points")) {
                const PhasePoint p = point_from(m.at("z"));
                svg.circle(X(p.wall_id, p.r), Y(p.phi), 2.5, "fill:#000000");
            }
    }
    if (a.contains("seed_curve")) {
        std::vector<PhasePoint> nodes;
        for (const auto& n : a.at("seed_curve")) nodes.push_back(point_from(n));
        stroke(nodes, "stroke:#888888;stroke-width:3;stroke-opacity:0.5");
    }
    if (a.contains("components")) {
        drew = true;
        const int k0 = a.value("k0", 30);
        for (const auto& c : a.at("components")) {
            std::vector<PhasePoint> nodes;
            for (const auto& n : c.at("nodes")) nodes.push_back(point_from(n));
            const bool tail = c.value("tail", false);
            stroke(nodes, "stroke:" + (tail ? std::string("#000000") : strip_color(c.at("k").get<int>(), k0)) +
                              ";stroke-width:2" + (tail ? ";stroke-dasharray:2,2" : ""));
        }
    }
    if (a.contains("orbit")) {
        drew = true;
        for (const auto& row : a.at("orbit")) {
            const int wall = row.at("wall_id").get<int>();
            if (wall < 0 || wall >= static_cast<int>(t.walls.size())) continue;
            svg.circle(X(wall, row.at("r").get<double>()), Y(row.at("phi").get<double>()), 2.0, "fill:#d35400");
        }
    }
    if (a.contains("center")) {
        drew = true;
        const auto& c = a.at("center");
        svg.circle(X(c.at("wall_id").get<int>(), c.at("r").get<double>()), Y(c.at("phi").get<double>()), 4.0,
                   "fill:none;stroke:#d35400;stroke-width:2");
    }
    if (!drew) throw BilliardError(ErrorKind::UnknownKind, "artifact has nothing to draw in the phase view");
    return svg.str();
}

// ---- portrait view ----

std::string render_portrait(const json& a) {
    if (!a.is_object() || !a.contains("sectors")) throw BilliardError(ErrorKind::UnknownKind, "artifact has no sectors");
    const double size = 480.0, c = size / 2.0, R = 180.0;
    Svg svg(size, size + 30.0);
    // inactive quadrants NE and SW get a pale backdrop
    for (double q0 : {0.0, kPi}) {
        std::vector<std::pair<double, double>> pts{{c, c}};
        for (int i = 0; i <= 24; ++i) {
            const double th = q0 + kHalfPi * i / 24.0;
            pts.emplace_back(c + (R + 20.0) * std::cos(th), c - (R + 20.0) * std::sin(th));
        }
        svg.polygon(pts, "fill:#f2f2f2;stroke:none");
    }
    for (const auto& s : a.at("sectors")) {
        const double lo = s.at("theta_lo").get<double>(), hi = s.at("theta_hi").get<double>();
        const bool active = s.at("active").get<bool>();
        const bool regular = s.at("regular").get<bool>();
        std::string fill = active ? "#e67e22" : "#9db4d6";
        if (!regular) fill = active ? "#c0392b" : "#c8c8c8";
        std::vector<std::pair<double, double>> pts{{c, c}};
        const int steps = std::max(2, static_cast<int>(std::ceil((hi - lo) / 0.02)));
        for (int i = 0; i <= steps; ++i) {
            const double th = lo + (hi - lo) * i / steps;
            pts.emplace_back(c + R * std::cos(th), c - R * std::sin(th));
        }
        svg.polygon(pts, "fill:" + fill + ";stroke:#333333;stroke-width:0.7;fill-opacity:0.85");
    }
    svg.line(c - R - 20.0, c, c + R + 20.0, c, "stroke:#555555;stroke-width:1");
    svg.line(c, c - R - 20.0, c, c + R + 20.0, "stroke:#555555;stroke-width:1");
    svg.text(c + R + 4.0, c - 6.0, "dr");
    svg.text(c + 6.0, c - R - 6.0, "dphi");
    const auto& z = a.at("center");
    std::ostringstream caption;
    caption << "wall " << z.at("wall_id").get<int>() << "  r=" << num(z.at("r").get<double>())
            << "  phi=" << num(z.at("phi").get<double>()) << "  n=" << a.value("n", 1)
            << "  sectors=" << a.at("sectors").size();
    svg.text(10.0, size + 18.0, caption.str());
    return svg.str();
}

}  // namespace

std::string orbit_json(const OrbitTrace& trace) {
    json rows = json::array();
    for (const auto& r : trace.rows)
        rows.push_back({{"step", r.step},
                        {"wall_id", r.wall_id},
                        {"r", r.r},
                        {"phi", r.phi},
                        {"tau", r.tau},
                        {"kind", std::string(to_string(r.kind))},
                        {"properness", std::string(to_string(r.properness))},
                        {"branch", std::string(to_string(r.branch))}});
    return canonical_dump({{"orbit", rows},
                           {"renormalizations", trace.renormalizations},
                           {"max_norm_drift", trace.max_norm_drift}});
}

std::string curves_json(const std::vector<SingularityCurve>& curves, const std::vector<MultiplePoint>& points) {
    json cs = json::array();
    for (const auto& c : curves) {
        json nodes = json::array();
        for (const auto& p : c.nodes) nodes.push_back(point_json(p));
        cs.push_back({{"level", c.level},
                      {"origin", std::string(to_string(c.origin))},
                      {"seed_wall", c.seed.wall_id},
                      {"itinerary", c.itinerary},
                      {"exhausted", c.exhausted},
                      {"nodes", nodes}});
    }
    json mp = json::array();
    for (const auto& m : points) mp.push_back({{"z", point_json(m.z)}, {"kind", m.kind}});
    return canonical_dump({{"curves", cs}, {"multiple_points", mp}});
}

std::string tree_json(const ComponentTree& tree, int k0) {
    json comps = json::array();
    const auto& leaves = tree.levels.back();
    for (const auto& c : leaves) {
        json nodes = json::array();
        for (const auto& p : c.curve.nodes) nodes.push_back(point_json(p));
        json it = json::array();
        for (const auto& s : c.itinerary) it.push_back({s.wall_id, s.shift_x, s.shift_y, s.branch, s.k});
        comps.push_back({{"id", c.id},
                         {"parent", c.parent},
                         {"generation", c.generation},
                         {"k", c.itinerary.empty() ? 0 : c.itinerary.back().k},
                         {"itinerary", it},
                         {"rank", c.rank},
                         {"regular", c.regular},
                         {"tail", c.tail},
                         {"lambda", c.lambda},
                         {"lambda_sampled", c.lambda_sampled},
                         {"inverse_expansion", c.inverse_expansion()},
                         {"length", c.curve.length()},
                         {"preimage_length", c.preimage_length},
                         {"nodes", nodes}});
    }
    json seed = json::array();
    for (const auto& p : tree.levels.front().front().curve.nodes) seed.push_back(point_json(p));
    return canonical_dump({{"k0", k0},
                           {"n", static_cast<int>(tree.levels.size()) - 1},
                           {"K_n", tree.regular_count},
                           {"E_n", tree.expansion_sum},
                           {"leaf_count", tree.leaf_count},
                           {"degenerate_merged", tree.degenerate_merged},
                           {"exploded", tree.exploded},
                           {"seed_curve", seed},
                           {"components", comps}});
}

RenderKind parse_render_kind(std::string_view s) {
    if (s == "table") return RenderKind::Table;
    if (s == "phase") return RenderKind::Phase;
    if (s == "portrait") return RenderKind::Portrait;
    throw BilliardError(ErrorKind::UnknownKind, "unknown render kind '" + std::string(s) + "'");
}

std::string render_svg(const BilliardTable& table, const json& artifact, RenderKind kind) {
    try {
        switch (kind) {
            case RenderKind::Table: return render_table(table, artifact);
            case RenderKind::Phase: return render_phase(table, artifact);
            case RenderKind::Portrait: return render_portrait(artifact);
        }
    } catch (const json::exception& e) {
        throw BilliardError(ErrorKind::UnknownKind, std::string("artifact not understood: ") + e.what());
    }
    throw BilliardError(ErrorKind::UnknownKind, "unknown render kind");
}

}  // namespace dbill
