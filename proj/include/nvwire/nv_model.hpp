#pragma once

#include "nvwire/types.hpp"

#include <array>
#include <span>
#include <vector>

namespace nvwire {

enum class Branch { minus, plus };

/// How a single resonance shapes the spectrum.
/// `as_printed`: I = C·[1 − exp(−Δ²/2σ²)], zero on resonance and C far away.
/// `conventional_dip`: I = 1 − C·exp(−Δ²/2σ²).
enum class LineshapeMode { as_printed, conventional_dip };

struct NVParams {
    double d_zfs = 2.87e9;            ///< Hz
    double gamma = 2.8025e10;         ///< Hz/T
    double linewidth_sigma = 6e6;     ///< Hz
    double contrast = 0.01;
    double depth = 15e-9;             ///< m
    double site_pitch = 20e-9;        ///< m
    double window_half = 15e6;        ///< Hz
    Branch branch = Branch::minus;
    LineshapeMode lineshape = LineshapeMode::as_printed;

    /// Throws InvalidArgumentError naming the first violated bound.
    void validate() const;
    bool operator==(const NVParams&) const = default;
};

struct ResonancePair {
    double f_minus = 0.0;
    double f_plus = 0.0;

    double get(Branch b) const { return b == Branch::minus ? f_minus : f_plus; }
};

/// The four NV orientations in crystal coordinates, each normalized.
/// Order: [111], [1-1-1], [-1-11], [-11-1].
const std::array<Vec3, 4>& nv_axes_crystal();

/// Rotation taking crystal coordinates to the lab frame
/// x ∥ [011], y ∥ [0-11], z ∥ [-100].
const Mat3& crystal_to_lab();

/// The four NV orientations expressed in the lab frame.
const std::array<Vec3, 4>& nv_axes_lab();

/// Angle between `b` and `axis`, in [0, π]. Zero for b = 0.
double field_angle(const Vec3& b, const Vec3& axis);

/// Third-order perturbative transition frequencies of the m_s = 0 → ±1
/// lines, with x = gamma·|b|/d_zfs:
///   f± = D [1 ± x cosθ + (3/2) x² sin²θ ± x³ (sin³θ tanθ / 8 − sin²θ cosθ / 2)].
/// Throws ExpansionDomainError when x ≥ 0.3 off-axis or |θ − π/2| < 1e-3.
/// Along the axis (θ = 0 or π) every angular term vanishes and the result is
/// exact, so no field bound applies there.
ResonancePair resonance_freqs(const Vec3& b, const Vec3& axis, const NVParams& p);

/// Eigen-solve of H = D·Sz² + gamma·b·S in the axis frame. Frequencies are
/// measured from the state with the largest |m_s = 0> weight and sorted.
ResonancePair exact_resonances(const Vec3& b, const Vec3& axis, const NVParams& p);

/// Same eigen-solve, but f_minus/f_plus are the transitions into the states
/// with the larger |m_s = −1> / |m_s = +1> weight, so each branch keeps
/// following its own level when the field along the axis changes sign.
ResonancePair exact_resonances_tracked(const Vec3& b, const Vec3& axis, const NVParams& p);

/// Expansion where it is valid, tracked eigen-solve elsewhere.
ResonancePair resonances_with_fallback(const Vec3& b, const Vec3& axis, const NVParams& p);

/// Single-resonance lineshape value at `f`.
double lineshape(double f, double f_res, const NVParams& p);

/// Lineshape sampled on `f_grid` (strictly increasing, else InvalidArgumentError).
std::vector<double> odmr_spectrum(std::span<const double> f_grid, double f_res, const NVParams& p);

inline double project_field(const Vec3& b, const Vec3& axis) { return b.dot(axis); }

/// Field projection map along one NV orientation (crystal coordinates).
struct AxisMap {
    Vec3 axis;
    PlaneLattice lattice;
    std::vector<double> values;  ///< T; NaN marks a missing pixel
};

struct VectorMap {
    PlaneLattice lattice;
    std::vector<Vec3> b;            ///< lab frame, T
    std::vector<double> residual;   ///< RMS misfit of the projections, T
};

/// Per-pixel least-squares field from ≥ 3 projection maps, solved in crystal
/// coordinates and returned in the lab frame. Pixels with any NaN input come
/// out NaN. Throws UnderdeterminedError (< 3 maps or coplanar axes) and
/// GeometryError (lattice mismatch).
VectorMap vector_reconstruct(std::span<const AxisMap> maps);

}  // namespace nvwire
