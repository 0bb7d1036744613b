#include "dbill/errors.hpp"
#include "dbill/json_io.hpp"
#include "dbill/map.hpp"
#include "dbill/rng.hpp"

#include "doctest.h"
#include "test_support.hpp"

#include <climits>
#include <cmath>

using namespace dbill;
namespace tst = dbill::testing;

namespace {

double frob(const Mat2& m) {
    return std::sqrt(m(0, 0) * m(0, 0) + m(0, 1) * m(0, 1) + m(1, 0) * m(1, 0) + m(1, 1) * m(1, 1));
}

// Central differences of the single-image forward map; nullopt if the
// stencil leaves the branch.
std::optional<Mat2> finite_difference(const BilliardTable& t, const PhasePoint& z, double h) {
    Vec2 cols[2];
    for (int j = 0; j < 2; ++j) {
        PhasePoint zp = z, zm = z;
        (j == 0 ? zp.r : zp.phi) += h;
        (j == 0 ? zm.r : zm.phi) -= h;
        MapBranchResult a, b;
        try {
            a = forward(t, zp);
            b = forward(t, zm);
        } catch (const BilliardError&) {
            return std::nullopt;
        }
        if (a.images.size() != 1 || b.images.size() != 1) return std::nullopt;
        const PhasePoint& pa = a.images[0].point;
        const PhasePoint& pb = b.images[0].point;
        if (pa.wall_id != pb.wall_id) return std::nullopt;
        cols[j] = Vec2{pa.r - pb.r, pa.phi - pb.phi} / (2.0 * h);
    }
    return Mat2(cols[0].x, cols[1].x, cols[0].y, cols[1].y);
}

bool same_point(const PhasePoint& a, const PhasePoint& b, double tol) {
    return a.wall_id == b.wall_id && std::abs(a.r - b.r) < tol && std::abs(a.phi - b.phi) < tol;
}

}  // namespace

TEST_CASE("circle billiard closed form") {
    const double R = 1.3;
    const BilliardTable t = tst::circle_table(R);
    const double L = t.wall_length(0);
    auto g = stream_rng(2, 0);
    for (int i = 0; i < 300; ++i) {
        const PhasePoint z{0, uniform(g, 0.0, L), uniform(g, -1.4, 1.4)};
        const MapBranchResult res = forward(t, z);
        REQUIRE(res.images.size() == 1);
        const MapImage& img = res.images[0];
        const double expect = std::fmod(z.r + R * (kPi - 2.0 * z.phi), L);
        double d = std::abs(img.point.r - expect);
        CHECK(std::min(d, L - d) < 1e-11);
        CHECK(img.point.phi == doctest::Approx(z.phi).epsilon(1e-11));
        CHECK(img.df(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(img.df(0, 1) == doctest::Approx(-2.0 * R).epsilon(1e-10));
        CHECK(std::abs(img.df(1, 0)) < 1e-10);
        CHECK(img.df(1, 1) == doctest::Approx(1.0).epsilon(1e-10));

        const MapBranchResult back = inverse(t, z);
        const double expect_back = std::fmod(z.r - R * (kPi - 2.0 * z.phi) + 2.0 * L, L);
        d = std::abs(back.images[0].point.r - expect_back);
        CHECK(std::min(d, L - d) < 1e-11);
    }
}

TEST_CASE("measure preservation on the curved triangle") {
    const BilliardTable t = tst::tri_table(0);
    auto g = stream_rng(4, 0);
    int n = 0;
    for (int i = 0; i < 20000; ++i) {
        const PhasePoint z = sample_phase_point(t, g);
        const MapBranchResult res = forward(t, z);
        for (const auto& img : res.images) {
            if (img.grazing) continue;
            const double lhs = img.df.det() * std::cos(img.point.phi) / std::cos(z.phi);
            CHECK(std::abs(lhs - 1.0) < 1e-10);
            ++n;
        }
    }
    CHECK(n >= 20000);
}

TEST_CASE("closed-form derivative matches central differences") {
    for (int which = 0; which < 2; ++which) {
        const BilliardTable t = which == 0 ? tst::tri_table(0)
                                           : build_table(make_torus_two_scatterer_spec(), [] {
                                                 BuildOptions o;
                                                 o.constant_samples = 0;
                                                 return o;
                                             }());
        auto g = stream_rng(8, which);
        int checked = 0;
        while (checked < 100) {
            const PhasePoint z = sample_phase_point(t, g);
            if (std::cos(z.phi) < 0.05) continue;
            const MapBranchResult res = forward(t, z);
            if (res.images.size() != 1 || std::cos(res.images[0].point.phi) < 0.05) continue;
            const auto fd = finite_difference(t, z, 1e-6);
            if (!fd) continue;
            const Mat2& df = res.images[0].df;
            const Mat2 diff(df(0, 0) - (*fd)(0, 0), df(0, 1) - (*fd)(0, 1), df(1, 0) - (*fd)(1, 0),
                            df(1, 1) - (*fd)(1, 1));
            CHECK(frob(diff) / frob(df) < 1e-6);
            ++checked;
        }
    }
}

TEST_CASE("inverse round trips and time-reversal conjugacy") {
    const BilliardTable t = tst::tri_table(0);
    auto g = stream_rng(9, 0);
    for (int i = 0; i < 2000; ++i) {
        const PhasePoint z = sample_phase_point(t, g);
        const MapBranchResult f = forward(t, z);
        if (f.singular) continue;
        const PhasePoint z1 = f.images[0].point;
        if (on_singular_set(t, z1)) continue;
        const MapBranchResult b = inverse(t, z1);
        REQUIRE(b.images.size() == 1);
        CHECK(same_point(b.images[0].point, z, 1e-10));
        // D(F^-1) at F(z) inverts DF at z
        const Mat2 id = b.images[0].df * f.images[0].df;
        CHECK(std::abs(id(0, 0) - 1.0) < 1e-8);
        CHECK(std::abs(id(0, 1)) < 1e-8);
        CHECK(std::abs(id(1, 0)) < 1e-8);
        CHECK(std::abs(id(1, 1) - 1.0) < 1e-8);
        // F I F I = id
        const PhasePoint w = forward(t, time_reverse(z)).images[0].point;
        if (on_singular_set(t, time_reverse(w))) continue;
        const PhasePoint back = forward(t, time_reverse(w)).images[0].point;
        CHECK(same_point(back, z, 1e-9));
    }
}

TEST_CASE("points on the singular boundary are rejected") {
    const BilliardTable t = tst::tri_table(0);
    CHECK_THROWS_AS(forward(t, {0, 0.5, kHalfPi}), BilliardError);
    CHECK_THROWS_AS(forward(t, {0, 0.0, 0.2}), BilliardError);
    CHECK_THROWS_AS(inverse(t, {1, t.wall_length(1), 0.2}), BilliardError);
    try {
        forward(t, {2, 0.3, -kHalfPi});
    } catch (const BilliardError& e) {
        CHECK(e.kind() == ErrorKind::SingularInput);
    }
}

TEST_CASE("normal shot from a curved-triangle midpoint splits at the opposite corner") {
    const BilliardTable t = tst::tri_table(0);
    for (int w = 0; w < 3; ++w) {
        const PhasePoint z{w, 0.5 * t.wall_length(w), 0.0};
        const MapBranchResult res = forward(t, z);
        REQUIRE(res.images.size() == 2);
        CHECK(res.singular);
        CHECK(res.images[0].point.wall_id != res.images[1].point.wall_id);
        CHECK(res.images[0].corner_id == res.images[1].corner_id);
        // the bisecting shot: both images mirror each other
        CHECK(res.images[0].point.phi == doctest::Approx(-res.images[1].point.phi).epsilon(1e-9));
        const auto branches = corner_branches(t, t.corners[res.images[0].corner_id], velocity_of(t, z));
        CHECK(branches.size() == 2);
        for (const auto& img : res.images) {
            CHECK(on_singular_set(t, img.point));
            const MapBranchResult back = inverse_any(t, img.point);
            REQUIRE(back.images.size() == 1);
            CHECK(same_point(back.images[0].point, z, 1e-10));
            CHECK(std::abs(img.df.det() * std::cos(img.point.phi) / std::cos(z.phi) - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("homogeneity strips") {
    CHECK(strip_index(0.0, 10).k == 0);
    CHECK(strip_index(kHalfPi - 1.0 / 121.0, 10).k == 10);
    CHECK(strip_index(-kHalfPi + 1.0 / 400.0, 10).k == -19);
    CHECK(strip_index(kHalfPi - 1.0 / 100.0, 10).k == 0);
    CHECK(strip_index(std::nextafter(kHalfPi - 1.0 / 100.0, 4.0), 10).k == 10);
    CHECK(strip_index(kHalfPi, 10).k == INT_MAX);
    CHECK(strip_index(-kHalfPi, 10).k == -INT_MAX);
    auto g = stream_rng(12, 0);
    for (int i = 0; i < 20000; ++i) {
        const double d = std::exp(uniform(g, std::log(1e-12), std::log(2e-3)));
        for (double phi : {kHalfPi - d, -kHalfPi + d}) {
            const StripIndex s = strip_index(phi, 30);
            const auto [lo, hi] = strip_bounds(s.k, 30);
            if (s.k > 0) {
                CHECK(phi > lo);
                CHECK(phi <= hi);
            } else if (s.k < 0) {
                CHECK(phi >= lo);
                CHECK(phi < hi);
            } else {
                CHECK(phi >= lo);
                CHECK(phi <= hi);
            }
            if (s.k != 0) CHECK(std::abs(s.k) >= 30);
        }
    }
}

TEST_CASE("cones: strict invariance and transversality") {
    const BilliardTable t = tst::tri_table(0);
    auto g = stream_rng(14, 0);
    double min_gap = kPi;
    int n = 0;
    for (int i = 0; i < 5000; ++i) {
        const PhasePoint z = sample_phase_point(t, g);
        const MapBranchResult res = forward(t, z);
        for (int b = 0; b < static_cast<int>(res.images.size()); ++b) {
            if (res.images[b].grazing) continue;
            const Cone u = cone_push(t, z, b);
            CHECK(u.a.x * u.a.y > 0.0);
            CHECK(u.b.x * u.b.y > 0.0);
            const Cone s = cone_pull(t, z, b);
            CHECK(s.a.x * s.a.y < 0.0);
            CHECK(s.b.x * s.b.y < 0.0);
        }
        if (res.singular || on_singular_set(t, res.images[0].point)) continue;
        const double gap = cone_gap(t, z);
        CHECK(gap > 0.0);
        min_gap = std::min(min_gap, gap);
        ++n;
    }
    CHECK(n > 4000);
    MESSAGE("sampled minimum cone gap " << min_gap);
}

TEST_CASE("expansion factor") {
    const BilliardTable t = tst::tri_table(0);
    const ExpansionConstant ec = certify_expansion_constant(t, 20000, 3);
    CHECK(ec.c_hat > 0.0);
    MESSAGE("C_hat over 20000 samples " << ec.c_hat);
    auto g = stream_rng(15, 0);
    double held_out = 1e300;
    for (int i = 0; i < 2000; ++i) {
        const PhasePoint z = sample_phase_point(t, g);
        const MapBranchResult res = forward(t, z);
        if (res.singular) continue;
        const Cone u = unstable_cone(t, z);
        for (const Vec2& v : {u.a, u.b, u.bisector()}) {
            const double f = expansion_factor(t, {z, v.x, v.y});
            CHECK(std::isfinite(f));
            CHECK(f > 0.0);
            CHECK(f >= min_gain(res.images[0].df, u) * (1.0 - 1e-12));
            held_out = std::min(held_out, f * std::cos(res.images[0].point.phi));
        }
        CHECK_THROWS_AS(expansion_factor(t, {z, 1.0, -1.0}), BilliardError);
    }
    // the certificate is a sampled minimum; a held-out sample may dip a little below it
    CHECK(held_out >= 0.5 * ec.c_hat);
    MESSAGE("held-out minimum " << held_out);
}

TEST_CASE("hyperbolicity fit on the curved triangle") {
    const BilliardTable t = tst::tri_table(0);
    const HyperbolicityFit fit = fit_hyperbolicity(t, 1000, 12, 5);
    CHECK(fit.lambda_hat > 1.0);
    CHECK(fit.c_hat > 0.0);
    REQUIRE(fit.min_log_growth.size() == 12);
    for (int n = 1; n <= 12; ++n)
        CHECK(fit.min_log_growth[n - 1] >= -std::log(fit.c_hat) + n * std::log(fit.lambda_hat) - 1e-12);
    MESSAGE("lambda_hat " << fit.lambda_hat << " c_hat " << fit.c_hat);
}

TEST_CASE("CSV and matrix output") {
    const std::string csv = phase_csv({{0, 0.5, 0.0}, {1, 0.25, kHalfPi - 1.0 / 121.0}}, 10);
    CHECK(csv == "wall_id,r,phi,k\n0,0.5,0.0,0\n1,0.25," + format_double(kHalfPi - 1.0 / 121.0) + ",10\n");
    CHECK(matrix_string(Mat2(1.0, -2.6, 0.0, 1.0)) == "[[1.0,-2.6000000000000001],[0.0,1.0]]");
}
