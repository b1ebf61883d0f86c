#pragma once

#include "nvwire/imaging.hpp"

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nvwire {

/// Straight line in the sensing plane; positions along it are measured from
/// `point` in units of m along the unit `direction`.
struct AxisLine {
    Vec3 point = Vec3::Zero();
    Vec3 direction = Vec3::UnitX();
    bool operator==(const AxisLine&) const = default;
};

/// Valid samples of a map along a line (nearest pixel, one sample per pixel pitch).
struct LineProfile {
    std::vector<double> s;  ///< m along the line
    std::vector<double> b;  ///< T
};

LineProfile sample_line(const MapSet& map, const AxisLine& line);

struct DipoleFeature {
    double location = 0.0;     ///< m along the line, midway between the two peaks
    double peak_pos = 0.0;     ///< T
    double peak_neg = 0.0;     ///< T
    double pos_at = 0.0;       ///< m along the line
    double neg_at = 0.0;       ///< m along the line
    double dipole_size = 0.0;  ///< |pos_at − neg_at|
    double max_abs = 0.0;      ///< max(|peak_pos|, |peak_neg|)
    /// +1 when the positive peak comes first along the line, −1 otherwise.
    int orientation = 0;
};

struct FeatureOptions {
    /// Explicit floor in T; unset means noise_factor × off-wire standard deviation.
    std::optional<double> noise_floor;
    double noise_factor = 3.0;
    /// Pixels farther than this from the line count as off-wire.
    double offwire_margin = 3e-6;
    bool operator==(const FeatureOptions&) const = default;
};

/// noise_factor × population standard deviation of valid off-wire pixels
/// (0 if fewer than two such pixels).
double feature_noise_floor(const MapSet& map, const AxisLine& line, const FeatureOptions& opt = {});

/// Local maxima above +floor and minima below −floor along the line; every
/// neighbouring (max, min) or (min, max) entry forms one feature.
std::vector<DipoleFeature> extract_dipole_features(const MapSet& map, const AxisLine& line,
                                                   const FeatureOptions& opt = {});

/// Inclusive grid min, min + step, ..., max (values snapped to 12 significant
/// digits so decimal grid points equal their literals).
struct GridRange {
    double min = 0.0;
    double max = 0.0;
    double step = 1.0;

    std::vector<double> values() const;
    bool operator==(const GridRange&) const = default;
};

struct ParameterGrid {
    GridRange ms{0.5e6, 2.0e6, 0.05e6};     ///< A/m, applied to every fitted material
    GridRange diameter{120e-9, 240e-9, 4e-9};
    /// Materials to fit; empty means every template material with ms > 0.
    std::vector<std::string> materials;
    bool operator==(const ParameterGrid&) const = default;
};

struct ObjectiveWeights {
    double field = 1.0;
    double size = 1.0;
    bool operator==(const ObjectiveWeights&) const = default;
};

/// Everything the forward model needs besides the wire.
struct ForwardConfig {
    SceneConfig scene;
    NVParams nv;
    OpticsParams optics;
    FitOptions fit;
};

struct MaterialMs {
    std::string material;
    double ms = 0.0;
};

struct FitResult {
    std::vector<MaterialMs> ms_per_material;
    double diameter = 0.0;
    double field_discrepancy = 0.0;  ///< RMS of |Δmax_abs| / max_abs over matched features
    double size_discrepancy = 0.0;   ///< RMS of |Δsize| / size over matched features
    double objective = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
    std::vector<std::string> skip_reasons;  ///< one per skipped candidate
};

struct FitSettings {
    ParameterGrid grid;
    ObjectiveWeights weights;
    FeatureOptions features;
    double match_distance = 1e-6;  ///< m
    bool operator==(const FitSettings&) const = default;
};

/// Exhaustive grid search over (ms per material, diameter). Candidates whose
/// features cannot be matched one-to-one are skipped; FitFailureError if all are.
FitResult fit_parameters(const MapSet& measured, const WireSpec& templ, const AxisLine& line,
                         const ForwardConfig& cfg, const FitSettings& settings = {});

struct MagnetizationEstimate {
    std::vector<double> scales;  ///< clipped to [−1, 1]
    std::vector<double> raw;     ///< least-squares values before clipping
    double m_norm = 0.0;         ///< Σ scale·length / Σ length
    double residual = 0.0;       ///< RMS over the pixels used, T
    std::size_t pixels = 0;
};

/// Linear least squares of `measured` onto the span of `templates` over
/// pixels valid in every map. DegenerateTemplateError on a rank-deficient set.
MagnetizationEstimate estimate_magnetization(const MapSet& measured, std::span<const MapSet> templates,
                                             std::span<const double> lengths);

}  // namespace nvwire
