#pragma once

#include "nvwire/magnetostatics.hpp"
#include "nvwire/nv_model.hpp"
#include "nvwire/optics.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace nvwire {

struct SceneConfig {
    double fov_width = 16e-6;             ///< m
    double fov_height = 8e-6;             ///< m
    double fov_center_x = 0.0;            ///< m
    double fov_center_y = 0.0;            ///< m
    double pixel_pitch = 100e-9;          ///< m
    /// Bias of this magnitude along the selected NV axis unless `bias_vector` is set.
    double bias_along_axis = 100e-4;      ///< T
    std::optional<Vec3> bias_vector;      ///< T, lab frame
    int nv_axis_index = 1;                ///< 1..4
    double frequency_step = 1e5;          ///< Hz
    double cell_size = 20e-9;             ///< rasterization cell, m
    int threads = 0;                      ///< 0 = hardware concurrency

    void validate() const;
    /// Lab-frame NV axis selected by nv_axis_index.
    Vec3 axis() const;
    Vec3 bias() const;
    bool operator==(const SceneConfig&) const = default;
};

/// Per-pixel fitted images. Pixels with fit_ok = 0 hold NaN.
struct MapSet {
    PlaneLattice lattice;
    std::vector<double> b_parallel;   ///< T, wire-only field along the NV axis
    std::vector<double> contrast;
    std::vector<double> linewidth;    ///< Hz (Gaussian σ)
    std::vector<std::uint8_t> fit_ok;

    std::size_t valid_count() const;
    /// Largest |b_parallel| over valid pixels (0 if none).
    double max_abs_field() const;
};

struct ODMRCube {
    PlaneLattice pixels;
    std::vector<double> f_grid;       ///< Hz
    double f_bias = 0.0;              ///< bias-only resonance of the imaged branch
    std::vector<double> intensity;    ///< pixel-major: [pixel · nf + k]

    std::size_t nf() const { return f_grid.size(); }
    std::span<const double> spectrum(std::size_t pixel) const {
        return {intensity.data() + pixel * nf(), nf()};
    }
};

/// Pixel pitch after rounding to a whole number of NV sites.
double effective_pixel_pitch(const SceneConfig& scene, const NVParams& nv);

/// Pixel centres: integer multiples of the effective pixel pitch covering the FOV.
PlaneLattice pixel_lattice(const SceneConfig& scene, const NVParams& nv);

/// NV sites at z = 0, pitch nv.site_pitch, covering the pixel lattice plus
/// `margin_cells` sites on every side.
PlaneLattice sample_nv_sites(const SceneConfig& scene, const NVParams& nv, int margin_cells);

/// Symmetric detection grid f_bias + k·step, |k·step| ≤ window_half.
std::vector<double> frequency_grid(double f_bias, const SceneConfig& scene, const NVParams& nv);

/// Everything an imaging run needs that does not depend on the sample.
struct ImagingSetup {
    SceneConfig scene;
    NVParams nv;
    OpticsParams optics;       ///< kernel_pitch forced to the site pitch
    Kernel2D psf;              ///< modified PSF on the site lattice
    PlaneLattice sites;
    PlaneLattice pixels;
    int pixel_stride = 1;      ///< sites per pixel step
    Vec3 axis;
    Vec3 bias;
    double f_bias = 0.0;
    std::vector<double> f_grid;
};

ImagingSetup prepare_imaging(const SceneConfig& scene, const NVParams& nv, const OpticsParams& opt);

/// Σ coeffs[i] · fields[i], summed in index order.
FieldMap3D combine_fields(std::span<const FieldMap3D> fields, std::span<const double> coeffs);

/// PSF-averaged spectra at every pixel for a given wire field on the sites.
ODMRCube render_cube(const ImagingSetup& setup, const FieldMap3D& wire_field);

ODMRCube forward_odmr(const MagnetizationGrid& grid, const SceneConfig& scene, const NVParams& nv,
                      const OpticsParams& opt);

struct FitOptions {
    int max_iterations = 50;
    double tolerance = 1e3;           ///< Hz, on the centre step
    double min_depth_fraction = 0.1;  ///< of the contrast
    bool operator==(const FitOptions&) const = default;
};

MapSet fit_zeeman_map(const ODMRCube& cube, const NVParams& nv, const SceneConfig& scene,
                      const FitOptions& fit = {});

/// Unit-magnetization fields of each segment of a surface-placed wire.
struct WireBasis {
    std::vector<FieldMap3D> unit_fields;
    /// ms · scale per segment.
    std::vector<double> coefficients;
};

/// Rasterizes `spec` (after place_on_surface) per segment and evaluates the
/// unit fields on setup.sites.
WireBasis wire_basis(const WireSpec& spec, const ImagingSetup& setup);

/// ms · scale per segment.
std::vector<double> wire_coefficients(const WireSpec& spec);

MapSet render_map(const ImagingSetup& setup, std::span<const FieldMap3D> unit_fields,
                  std::span<const double> coefficients, const FitOptions& fit = {});

MapSet simulate_image(const WireSpec& spec, const SceneConfig& scene, const NVParams& nv,
                      const OpticsParams& opt, const FitOptions& fit = {});
MapSet simulate_image(const MagnetizationGrid& grid, const SceneConfig& scene, const NVParams& nv,
                      const OpticsParams& opt, const FitOptions& fit = {});

}  // namespace nvwire
