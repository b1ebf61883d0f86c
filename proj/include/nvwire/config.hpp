#pragma once

#include "nvwire/analysis.hpp"
#include "nvwire/hysteresis.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nvwire {

struct HysteresisConfig {
    std::vector<double> sweep;                  ///< T
    /// T; one value for every segment, or one per segment.
    std::vector<double> coercivity{300e-4};
    std::optional<Vec3> drive;                  ///< unset = wire axis

    bool operator==(const HysteresisConfig&) const = default;
};

enum class OvfPlacement { surface, as_is };

/// How an ingested magnetization grid is positioned over the NV plane.
struct OvfConfig {
    /// surface: bottom face `standoff` above the plane, xy centre at `center`.
    OvfPlacement placement = OvfPlacement::surface;
    std::optional<double> standoff;             ///< m; unset = NV depth
    std::array<double, 2> center{0.0, 0.0};     ///< m

    bool operator==(const OvfConfig&) const = default;
};

struct OutputConfig {
    std::string prefix = "nvwire";
    bool pgm = true;

    bool operator==(const OutputConfig&) const = default;
};

/// Everything a run needs, in SI units.
struct RunConfig {
    NVParams nv;
    OpticsParams optics;
    SceneConfig scene;
    FitOptions odmr_fit;
    std::map<std::string, Material> materials;
    WireSpec wire;
    FitSettings fit;
    /// Line for feature extraction; unset = the wire axis.
    std::optional<AxisLine> line;
    HysteresisConfig hysteresis;
    double mif_cell = 4e-9;                     ///< m
    OvfConfig ovf;
    OutputConfig output;

    ForwardConfig forward() const;
    AxisLine feature_line() const;
    SwitchingModel switching() const;

    bool operator==(const RunConfig&) const = default;
};

/// Built-in defaults: a 12.5 um Fe wire of 188 nm diameter centred in a
/// 16 x 8 um field of view, and the sweep -71 ... -375 G.
RunConfig default_config();

/// Parses "key = value" text with [section] headers. Dimensional values need a
/// unit. Throws ConfigError naming the key and line.
RunConfig load_config(std::string_view text);

/// Canonical SI text that load_config reads back to an equal RunConfig.
std::string config_echo(const RunConfig& cfg);

}  // namespace nvwire
