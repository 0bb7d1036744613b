#include "dbill/errors.hpp"
#include "dbill/render.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <regex>
#include <set>

using namespace dbill;
namespace tst = dbill::testing;
using nlohmann::json;

namespace {

const BilliardTable& tri() {
    static const BilliardTable t = tst::tri_table(2000);
    return t;
}

// centers of <circle> elements in document order
std::vector<std::pair<double, double>> circles(const std::string& svg) {
    std::vector<std::pair<double, double>> out;
    const std::regex re("<circle cx=\"([-0-9.]+)\" cy=\"([-0-9.]+)\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
        out.emplace_back(std::stod((*it)[1]), std::stod((*it)[2]));
    return out;
}

json orbit_points(std::initializer_list<PhasePoint> pts) {
    json rows = json::array();
    for (const auto& p : pts) rows.push_back({{"wall_id", p.wall_id}, {"r", p.r}, {"phi", p.phi}});
    return {{"orbit", rows}};
}

}  // namespace

TEST_CASE("phase view puts r across and phi up") {
    const json a = orbit_points({{0, 0.2, 0.0}, {0, 0.8, 0.0}, {0, 0.8, 0.9}});
    const auto c = circles(render_svg(tri(), a, RenderKind::Phase));
    REQUIRE(c.size() == 3);
    CHECK(c[1].first > c[0].first);
    CHECK(c[1].second == doctest::Approx(c[0].second));
    CHECK(c[2].first == doctest::Approx(c[1].first));
    CHECK(c[2].second < c[1].second);  // svg y grows downward
}

TEST_CASE("renders are byte-stable") {
    TraceOptions o;
    o.resolution = 60;
    const auto curves = trace_singularity(tri(), -1, o);
    const json a = json::parse(curves_json(curves, {}));
    const std::string s1 = render_svg(tri(), a, RenderKind::Phase);
    const std::string s2 = render_svg(tri(), json::parse(curves_json(curves, {})), RenderKind::Phase);
    CHECK(s1 == s2);
    CHECK(s1.find("<polyline") != std::string::npos);
    const std::string t1 = render_svg(tri(), orbit_points({{0, 0.5, 0.2}, {1, 0.4, -0.1}}), RenderKind::Table);
    CHECK(t1 == render_svg(tri(), orbit_points({{0, 0.5, 0.2}, {1, 0.4, -0.1}}), RenderKind::Table));
}

TEST_CASE("portrait view shades active sectors apart from inactive ones") {
    const double L = tri().walls[0].length();
    SectorPortrait p = sector_portrait(tri(), {0, 0.5 * L, 0.0}, 1, 30);
    classify_sectors(tri(), p);
    REQUIRE(p.sectors.size() == 2);
    const json a = json::parse(portrait_json(p));
    const std::string svg = render_svg(tri(), a, RenderKind::Portrait);
    json flipped = a;
    for (auto& s : flipped["sectors"]) s["active"] = !s["active"].get<bool>();
    const std::string other = render_svg(tri(), flipped, RenderKind::Portrait);
    CHECK(svg != other);
    const std::regex fill("fill:(#[0-9a-f]{6});stroke:#333333");
    std::set<std::string> a_fills, b_fills;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill); it != std::sregex_iterator(); ++it)
        a_fills.insert((*it)[1]);
    for (auto it = std::sregex_iterator(other.begin(), other.end(), fill); it != std::sregex_iterator(); ++it)
        b_fills.insert((*it)[1]);
    CHECK(a_fills != b_fills);
}

TEST_CASE("unknown kinds are rejected") {
    CHECK(parse_render_kind("phase") == RenderKind::Phase);
    try {
        parse_render_kind("histogram");
        FAIL("accepted");
    } catch (const BilliardError& e) {
        CHECK(e.kind() == ErrorKind::UnknownKind);
    }
    CHECK_THROWS_AS(render_svg(tri(), json{{"nothing", 1}}, RenderKind::Portrait), BilliardError);
    CHECK_THROWS_AS(render_svg(tri(), json{{"nothing", 1}}, RenderKind::Phase), BilliardError);
    CHECK_THROWS_AS(render_svg(tri(), json::array(), RenderKind::Table), BilliardError);
}

TEST_CASE("component trees render by strip") {
    UCurveOptions o;
    const double L = tri().walls[1].length();
    const UCurve w = seed_ucurve(tri(), {1, 0.5 * L, 0.4}, 0.05);
    const ComponentTree t = evolve_n(tri(), w, 1, o);
    const json a = json::parse(tree_json(t, o.k0));
    CHECK(a.at("K_n").at(0) == 1);
    CHECK(a.at("components").size() == t.levels[1].size());
    const std::string svg = render_svg(tri(), a, RenderKind::Phase);
    CHECK(svg.find("#3d6fb6") != std::string::npos);
}
