#pragma once

#include "nvwire/analysis.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace nvwire {

/// One frame of a field sweep: the measured map plus one unit-scale
/// template per segment, all rendered at the frame's bias.
struct HysteresisFrame {
    double h_ext = 0.0;  ///< T, signed sweep value
    MapSet map;
    std::vector<MapSet> templates;
};

struct HysteresisPoint {
    double h_ext = 0.0;  ///< T
    double m_norm = 0.0;
    std::vector<double> scales;
};

struct HysteresisCurve {
    std::vector<HysteresisPoint> points;
    /// Field where m_norm crosses zero (linear interpolation), NaN when the
    /// sweep never changes sign.
    double crossing_field = std::numeric_limits<double>::quiet_NaN();
    /// |crossing_field|, NaN when out of range.
    double coercivity = std::numeric_limits<double>::quiet_NaN();

    bool in_range() const { return !std::isnan(crossing_field); }
};

/// m_norm per frame via estimate_magnetization, then the first zero crossing.
/// Needs ≥ 3 frames with a monotone sweep.
HysteresisCurve hysteresis_curve(std::span<const HysteresisFrame> series, std::span<const double> lengths);

/// Single-threshold bistable switching: a segment flips when the drive
/// component along the wire axis opposes its moment and exceeds its H_c.
struct SwitchingModel {
    std::vector<double> coercivity;  ///< T, one per segment
};

struct HysteresisRun {
    std::vector<HysteresisFrame> frames;
    std::vector<std::vector<double>> segment_scales;  ///< applied per frame
    HysteresisCurve curve;
};

/// Applies the switching rule frame by frame (starting from the spec's
/// scales), renders every frame with bias = scene bias + H·drive, and
/// extracts the curve. `drive` defaults to the wire axis.
HysteresisRun simulate_hysteresis(const WireSpec& spec, const SwitchingModel& model, std::span<const double> sweep,
                                  const ForwardConfig& cfg, const Vec3* drive = nullptr);

}  // namespace nvwire
