#pragma once
/**
 * @file map.hpp
 * @brief The collision map F in (r, phi) coordinates and its derivative.
 *
 * A phase point is a wall, an arclength r on it and the angle phi of the
 * outgoing velocity, measured from the inward normal toward the positive
 * tangent. One application of F moves to the next collision. When the flight
 * ends in a corner, each branch of the corner continuation yields one image,
 * placed on the corner vertical (r = 0 or the wall length) of the wall hit
 * last in that branch; fly-by branches keep flying to the next collision.
 */

#include "dbill/flow.hpp"
#include "dbill/table.hpp"

#include <random>
#include <string>
#include <vector>

namespace dbill {

struct PhasePoint {
    int wall_id{0};
    double r{0.0};
    double phi{0.0};
};

struct TangentVector {
    PhasePoint base;
    double dr{1.0};
    double dphi{0.0};
};

struct StripIndex {
    int k{0};
    int k0{30};
};

struct MapImage {
    PhasePoint point;
    double tau{0.0};  ///< total flight length
    Mat2 df;          ///< derivative of this branch at the preimage
    std::vector<BranchLabel> trail;
    bool grazing{false};  ///< |phi'| = pi/2; df is then huge or infinite
    int corner_id{-1};    ///< corner hit on the way, if any (last one)
    int immediate{0};     ///< zero-length collisions folded into this image
    Vec2 shift;           ///< torus lattice translation of the hit relative to the start
};

struct MapBranchResult {
    std::vector<MapImage> images;
    bool singular{false};  ///< more than one image or a grazing image
};

struct MapOptions {
    FlowOptions flow;
    int max_images{64};
};

/// Direction of the velocity at a phase point, in the plane.
Vec2 velocity_of(const BilliardTable& table, const PhasePoint& z);
/// phi of a velocity leaving (wall, r).
double phi_of(const BilliardTable& table, int wall, double r, const Vec2& v);

/// True on the grazing set or on a corner vertical.
bool on_singular_set(const BilliardTable& table, const PhasePoint& z, const FlowOptions& opts = {});

/// F(z). Throws SingularInput when z lies on the boundary of phase space.
MapBranchResult forward(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts = {});
/// F(z) for any z, including grazing departures and departures from a corner point.
MapBranchResult forward_any(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts = {});

/// F^{-1}(z) = I F I(z) with I(r, phi) = (r, -phi).
MapBranchResult inverse(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts = {});
MapBranchResult inverse_any(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts = {});

constexpr PhasePoint time_reverse(const PhasePoint& z) { return {z.wall_id, z.r, -z.phi}; }

/// Derivative of one regular flight-and-reflection:
/// from a point with curvature kappa and cos(phi) to one with kappa' and cos(phi').
Mat2 collision_derivative(double tau, double kappa, double cos_phi, double kappa_next, double cos_phi_next);

/// DF of branch `branch` of F at z.
Mat2 derivative(const BilliardTable& table, const PhasePoint& z, int branch = 0, const MapOptions& opts = {});

/// Homogeneity strip of phi. k = 0 in the central strip, |k| >= k0 otherwise.
/// Exactly grazing phi gets k = +-INT_MAX.
StripIndex strip_index(double phi, int k0 = 30);
/// Bounds of strip k: (lo, hi) with the half-open side as in strip_index.
std::pair<double, double> strip_bounds(int k, int k0 = 30);

/// Increasing cone boundaries (1,0), (0,1) pushed by DF of F^{-1}(z); a line pair.
struct Cone {
    Vec2 a;  ///< unit, dr >= 0
    Vec2 b;  ///< unit, dr >= 0
    Vec2 bisector() const;
    /// Membership up to an angular tolerance.
    bool contains(const Vec2& v, double tol = 1e-12) const;
};

/// min |M v| over unit v in the cone (exact).
double min_gain(const Mat2& m, const Cone& c);

/// DF(z) applied to the increasing cone at z: the unstable cone at F(z).
Cone cone_push(const BilliardTable& table, const PhasePoint& z, int branch = 0, const MapOptions& opts = {});
/// DF^{-1} applied to the decreasing cone at F(z): the stable cone at z.
Cone cone_pull(const BilliardTable& table, const PhasePoint& z, int branch = 0, const MapOptions& opts = {});
/// Unstable cone at z (push-forward from the first preimage branch).
Cone unstable_cone(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts = {});
/// Smallest angle between a line in the unstable and one in the stable cone at z.
double cone_gap(const BilliardTable& table, const PhasePoint& z, const MapOptions& opts = {});

/// |DF v| / |v| in the Euclidean (dr, dphi) metric. Throws NotUnstable when v
/// is outside the unstable cone at its base.
double expansion_factor(const BilliardTable& table, const TangentVector& v, int branch = 0,
                        const MapOptions& opts = {});

/// Random phase point distributed by cos(phi) dr dphi, away from S_0.
PhasePoint sample_phase_point(const BilliardTable& table, std::mt19937_64& g);

struct ExpansionConstant {
    double c_hat{0.0};  ///< min of factor * cos(phi') over samples
    double worst_cos{0.0};
    std::uint64_t samples{0};
    std::uint64_t seed{0};
};
/// Certifies C in factor >= C / cos(phi') empirically.
ExpansionConstant certify_expansion_constant(const BilliardTable& table, std::uint64_t samples, std::uint64_t seed,
                                             const MapOptions& opts = {});

struct HyperbolicityFit {
    double c_hat{1.0};       ///< |DF^n v| >= c_hat^{-1} lambda_hat^n
    double lambda_hat{1.0};
    std::vector<double> min_log_growth;  ///< index n-1: min over samples of log |DF^n v|
    std::vector<double> residuals;       ///< fit residuals per n
    std::uint64_t samples{0};
    std::uint64_t seed{0};
};
/// Fits the hyperbolicity constants from n = 1..n_max iterates of unstable vectors.
HyperbolicityFit fit_hyperbolicity(const BilliardTable& table, std::uint64_t samples, int n_max, std::uint64_t seed,
                                   const MapOptions& opts = {});

/// wall_id,r,phi,k rows.
std::string phase_csv(const std::vector<PhasePoint>& points, int k0 = 30);
/// Row-major, 17 significant digits.
std::string matrix_string(const Mat2& m);

}  // namespace dbill
