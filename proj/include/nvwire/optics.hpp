#pragma once

#include <cstddef>
#include <vector>

namespace nvwire {

/// Which refractive-index ratio enters the Snell-law arcsin of the
/// photon-shift formula. `as_printed` uses n_d/n_g (defined only below
/// arcsin(n_g/n_d)); `swapped` exchanges the two indices throughout.
enum class IndexOrder { as_printed, swapped };

/// Weight carried by each emission-angle sample of the redistribution kernel.
enum class AngularWeighting { sin_theta, uniform };

struct OpticsParams {
    double psf_fwhm = 1e-6;                 ///< m
    double n_d = 2.42;
    double n_g = 1.52;
    double plate_thickness = 100e-6;        ///< m
    double theta_max = 79.0 * 3.14159265358979323846 / 180.0;  ///< rad
    double na = 1.49;
    double kernel_pitch = 100e-9;           ///< m
    IndexOrder index_order = IndexOrder::as_printed;
    AngularWeighting weighting = AngularWeighting::sin_theta;
    double theta_step = 0.1 * 3.14159265358979323846 / 180.0;  ///< rad, upper bound
    double airy_radius = 3e-6;              ///< truncation radius of the Airy kernel, m
    double tirf_radius = 3e-6;              ///< truncation radius of the redistribution kernel, m

    void validate() const;
    bool operator==(const OpticsParams&) const = default;
};

/// Square kernel of odd width centred on the middle cell.
struct Kernel2D {
    double pitch = 0.0;
    int radius = 0;               ///< cells; width = 2·radius + 1
    std::vector<double> values;   ///< row-major, row = y offset

    Kernel2D() = default;
    Kernel2D(double pitch_, int radius_);

    int width() const { return 2 * radius + 1; }
    double& at(int dx, int dy) { return values[static_cast<std::size_t>(dy + radius) * width() + (dx + radius)]; }
    double at(int dx, int dy) const {
        return values[static_cast<std::size_t>(dy + radius) * width() + (dx + radius)];
    }
    double sum() const;
    /// Σ w·(dx² + dy²)·pitch² / Σ w.
    double second_moment() const;
    void normalize();
};

/// Argument v at which [2 J1(v)/v]² = 1/2 (≈ 1.6163), solved by bisection.
double airy_half_max_argument();

/// Unnormalized Airy intensity [2 J1(k r)/(k r)]² with k = 2·v_half/psf_fwhm.
double airy_profile(double r, const OpticsParams& p);

/// Airy kernel at p.kernel_pitch, circularly truncated at radius_cells and
/// normalized to unit sum. Throws InvalidArgumentError if the radius is
/// below psf_fwhm / pitch.
Kernel2D airy_psf(const OpticsParams& p, int radius_cells);

/// Largest admissible emission angle: theta_max, or just below the arcsin
/// domain bound arcsin(n_g/n_d) in as_printed mode.
double tirf_theta_limit(const OpticsParams& p);

/// Lateral photon displacement R(θ) for emission angle θ in the diamond.
double tirf_shift(double theta, const OpticsParams& p);

/// Photon redistribution kernel: angles sampled uniformly from 0 to the
/// limit, each sample's weight spread evenly over the ring of cells at
/// radius |R(θ)|, rings beyond radius_cells dropped, then normalized.
/// Throws ConfigurationError when no sample can be placed.
Kernel2D tirf_distribution(const OpticsParams& p, int radius_cells);

/// Full linear convolution a ⊗ m, renormalized to unit sum.
/// Throws GeometryError when the pitches differ.
Kernel2D modified_psf(const Kernel2D& a, const Kernel2D& m);

/// Raw convolution without renormalization; small inputs are summed
/// directly, large ones through FFTs.
Kernel2D convolve_kernels(const Kernel2D& a, const Kernel2D& m);

}  // namespace nvwire
