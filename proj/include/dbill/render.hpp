#pragma once
/**
 * @file render.hpp
 * @brief JSON artifacts for orbits, singularity curves and component trees, and SVG views of them.
 *
 * Phase views put r horizontal and phi vertical, one panel per wall.
 */

#include "dbill/atlas.hpp"
#include "dbill/flow.hpp"
#include "dbill/ucurve.hpp"

#include <json.hpp>

#include <string>
#include <string_view>

namespace dbill {

std::string orbit_json(const OrbitTrace& trace);
std::string curves_json(const std::vector<SingularityCurve>& curves, const std::vector<MultiplePoint>& points);
/// Leaves of the last level (and the seed curve) of an evolution.
std::string tree_json(const ComponentTree& tree, int k0);

enum class RenderKind { Table, Phase, Portrait };
/// "table", "phase" or "portrait"; anything else throws UnknownKind.
RenderKind parse_render_kind(std::string_view s);

/// Draws whatever the artifact carries (orbit, curves, components, sectors) in the requested view.
/// Throws UnknownKind when the artifact has nothing that view can show.
std::string render_svg(const BilliardTable& table, const nlohmann::json& artifact, RenderKind kind);

}  // namespace dbill
