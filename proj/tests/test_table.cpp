#include "dbill/errors.hpp"
#include "dbill/rng.hpp"
#include "dbill/table.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <cmath>

using namespace dbill;
namespace {

ErrorKind build_error(const TableSpec& s, BuildOptions o = {}) {
    o.constant_samples = 100;
    try {
        build_table(s, o);
    } catch (const BilliardError& e) {
        return e.kind();
    }
    FAIL("expected a build error");
    return ErrorKind::InvalidSpec;
}

TableSpec rigid_motion(const TableSpec& s, double angle, Vec2 shift) {
    TableSpec out = s;
    const double c = std::cos(angle), sn = std::sin(angle);
    for (auto& w : out.walls) {
        w.center = Vec2{c * w.center.x - sn * w.center.y, sn * w.center.x + c * w.center.y} + shift;
        w.theta_start += angle;
        w.theta_end += angle;
    }
    return out;
}

}  // namespace

TEST_CASE("unit disk with interior inside is rejected as focusing") {
    TableSpec s;
    s.walls.push_back({{0, 0}, 1.0, 0.0, kTwoPi, +1});
    CHECK(build_error(s) == ErrorKind::NonDispersing);
}

TEST_CASE("the curved triangle builds with three equal acute corners") {
    const double R = 4.0;
    const BilliardTable t = build_table(make_tri_spec(R));
    REQUIRE(t.walls.size() == 3);
    REQUIRE(t.corners.size() == 3);
    // oracle: each arc turns its chord by asin(half chord / R) toward the interior
    const double gamma_oracle = kPi / 3.0 - 2.0 * std::asin(1.0 / R);
    for (const auto& c : t.corners) {
        CHECK(c.kind == CornerKind::Acute);
        CHECK(c.gamma == doctest::Approx(gamma_oracle).epsilon(1e-12));
        const Corner again = corner_classify(t, c.corner_id);
        CHECK(again.gamma == c.gamma);
        CHECK(again.kind == c.kind);
    }
    CHECK(t.constants.kappa_min == doctest::Approx(0.25));
    CHECK(t.constants.kappa_max == doctest::Approx(0.25));
}

TEST_CASE("radius-2 arcs bulging inward meet tangentially and are rejected as cusps") {
    CHECK(build_error(make_tri_spec(2.0)) == ErrorKind::CuspDetected);
}

TEST_CASE("three endpoints at one point is a non-simple corner") {
    TableSpec s = make_tri_spec();
    const Vec2 a = s.walls[0].center + 4.0 * unit_from_angle(s.walls[0].theta_start);
    // extra arc starting at vertex a
    WallSpec extra{a + Vec2{0.5, 0.0}, 0.5, kPi, kPi - 1.0, -1};
    s.walls.push_back(extra);
    CHECK(build_error(s) == ErrorKind::NonSimpleCorner);
}

TEST_CASE("unmatched endpoint is an open boundary") {
    TableSpec s = make_tri_spec();
    s.walls.pop_back();
    CHECK(build_error(s) == ErrorKind::OpenBoundary);
}

TEST_CASE("corner classification") {
    SUBCASE("orthogonal arcs give a right angle") {
        const BilliardTable t = dbill::testing::alternating_polygon_table(4);
        REQUIRE(t.corners.size() == 4);
        for (const auto& c : t.corners) {
            CHECK(c.gamma == doctest::Approx(kHalfPi).epsilon(1e-12));
            CHECK(c.kind == CornerKind::Acute);
        }
    }
    SUBCASE("an artificial break of one circle is flat") {
        const BilliardTable t = dbill::testing::split_circle_table();
        REQUIRE(t.corners.size() == 2);
        for (const auto& c : t.corners) {
            CHECK(c.gamma == doctest::Approx(kPi).epsilon(1e-12));
            CHECK(c.kind == CornerKind::Flat);
        }
    }
    SUBCASE("kind follows gamma") {
        CHECK(classify_angle(1.0) == CornerKind::Acute);
        CHECK(classify_angle(kPi) == CornerKind::Flat);
        CHECK(classify_angle(4.0) == CornerKind::Obtuse);
        CHECK(internal_angle({0, 1}, {1, 0}) == doctest::Approx(1.5 * kPi));
    }
}

TEST_CASE("boundary_point") {
    SUBCASE("circle wall: r = 0 sits at theta_start, normal toward the interior") {
        const BilliardTable t = dbill::testing::circle_table(2.0);
        const BoundaryFrame f = t.boundary_point(0, 0.0);
        CHECK(f.position.x == doctest::Approx(2.0));
        CHECK(f.position.y == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(f.inward_normal.x == doctest::Approx(-1.0));
        const BoundaryFrame g = t.boundary_point(0, t.wall_length(0));
        CHECK((g.position - f.position).norm() < 1e-12);
    }
    SUBCASE("midpoint normal of a curved-triangle wall passes through the opposite vertex") {
        const BilliardTable t = dbill::testing::tri_table(0);
        for (int w = 0; w < 3; ++w) {
            const BoundaryFrame f = t.boundary_point(w, 0.5 * t.wall_length(w));
            // the vertex opposite wall w is where the other two walls meet
            Vec2 opposite;
            for (const auto& cc : t.corners)
                if (cc.left_wall_id != w && cc.right_wall_id != w) opposite = cc.position;
            const Vec2 to = opposite - f.position;
            CHECK(std::abs(f.inward_normal.cross(to)) < 1e-12);
            CHECK(f.inward_normal.dot(to) > 0.0);
        }
    }
    SUBCASE("out of range") {
        const BilliardTable t = dbill::testing::tri_table(0);
        CHECK_THROWS_AS(t.boundary_point(0, -0.1), BilliardError);
        CHECK_THROWS_AS(t.boundary_point(0, t.wall_length(0) + 0.1), BilliardError);
        CHECK_THROWS_AS(t.boundary_point(7, 0.0), BilliardError);
    }
}

TEST_CASE("frames are orthonormal and on the arc") {
    const BilliardTable t = dbill::testing::tri_table(0);
    auto g = stream_rng(3, 0);
    for (int i = 0; i < 3000; ++i) {
        const int w = i % 3;
        const double r = uniform(g, 0.0, t.wall_length(w));
        const BoundaryFrame f = t.boundary_point(w, r);
        CHECK(std::abs(f.inward_normal.norm() - 1.0) < 1e-12);
        CHECK(std::abs(f.tangent.norm() - 1.0) < 1e-12);
        CHECK(std::abs(f.inward_normal.dot(f.tangent)) < 1e-12);
        const ArcWall& a = t.walls[w];
        CHECK(std::abs((f.position - a.center).norm() - a.radius) < 1e-12);
    }
}

TEST_CASE("corner angles are invariant under rigid motions") {
    const BilliardTable base = dbill::testing::tri_table(0);
    for (double ang : {0.3, 1.7, -2.9}) {
        BuildOptions o;
        o.constant_samples = 0;
        const BilliardTable moved = build_table(rigid_motion(make_tri_spec(), ang, {3.5, -1.25}), o);
        REQUIRE(moved.corners.size() == base.corners.size());
        for (std::size_t i = 0; i < base.corners.size(); ++i)
            CHECK(std::abs(moved.corners[i].gamma - base.corners[i].gamma) < 1e-12);
    }
}

TEST_CASE("canonical spec round trip is byte stable and reproduces constants") {
    const TableSpec spec = make_tri_spec();
    const std::string once = canonical_spec_json(spec);
    const TableSpec parsed = parse_table_spec(once);
    CHECK(canonical_spec_json(parsed) == once);
    BuildOptions o;
    o.constant_samples = 5000;
    const BilliardTable a = build_table(spec, o);
    const BilliardTable b = build_table(parsed, o);
    CHECK(a.constants.tau_max == b.constants.tau_max);
    CHECK(a.constants.tau_star == b.constants.tau_star);
    CHECK(a.constants.tau_max_sampled == b.constants.tau_max_sampled);
    CHECK(a.constants.kappa_min == b.constants.kappa_min);
    CHECK(once.find("\"ambient\":\"plane\"") != std::string::npos);
}

TEST_CASE("malformed specs are reported") {
    CHECK_THROWS_AS(parse_table_spec("{"), BilliardError);
    CHECK_THROWS_AS(parse_table_spec(R"({"ambient":"sphere","walls":[]})"), BilliardError);
    CHECK_THROWS_AS(parse_table_spec(R"({"walls":[{"radius":1}]})"), BilliardError);
}

TEST_CASE("estimate_constants on the curved triangle") {
    const BilliardTable t = dbill::testing::tri_table(0);
    const TableConstants c = estimate_constants(t, 100000, 7);
    CHECK(c.diameter <= 2.0 + 1e-12);
    CHECK(c.diameter >= 2.0 - 1e-12);
    CHECK(c.tau_max <= 2.0 + 1e-12);
    CHECK(c.tau_max_sampled <= c.tau_max);
    CHECK(c.tau_star > 0.0);
    const TableConstants again = estimate_constants(t, 100000, 7);
    CHECK(again.tau_star == c.tau_star);
    CHECK(again.tau_max_sampled == c.tau_max_sampled);
}

TEST_CASE("torus horizon") {
    SUBCASE("single scatterer of radius 0.3 has a corridor") {
        TableSpec s;
        s.ambient = Ambient::Torus;
        s.walls.push_back({{0.0, 0.0}, 0.3, 0.0, kTwoPi, -1});
        // oracle: the horizontal line y = 0.5 stays at distance 0.5 > 0.3 from every translate
        for (int i = -3; i <= 3; ++i)
            for (int j = -3; j <= 3; ++j) CHECK(std::abs(0.5 - j) > 0.3);
        ArcWall disk;
        disk.radius = 0.3;
        disk.closed = true;
        CHECK(torus_corridor_exists({disk}, 1, 0));
        CHECK(build_error(s) == ErrorKind::UnboundedHorizon);
    }
    SUBCASE("two-scatterer table has finite horizon") {
        BuildOptions o;
        o.constant_samples = 20000;
        const BilliardTable t = build_table(make_torus_two_scatterer_spec(), o);
        CHECK(t.corners.empty());
        CHECK(t.constants.tau_max > 0.0);
        CHECK(t.constants.tau_max < 2.0);
        CHECK(t.constants.tau_star > 0.0);
        CHECK_FALSE(find_torus_corridor(t.walls).has_value());
    }
}
