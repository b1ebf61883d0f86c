#pragma once

#include "nvwire/types.hpp"

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace nvwire {

/// Magnetic material. `k1` and `a_ex` are only carried into MIF export;
/// NaN marks a constant that was never provided.
struct Material {
    std::string name;
    double ms = 0.0;                                           ///< A/m
    double k1 = std::numeric_limits<double>::quiet_NaN();      ///< J/m³
    double a_ex = std::numeric_limits<double>::quiet_NaN();    ///< J/m

    /// Unset constants (NaN) compare equal to each other.
    bool operator==(const Material& o) const;
};

/// Built-in materials: Fe and Co carry the anisotropy/exchange constants used
/// for the relaxation runs (identical for both, as listed there), Au is
/// non-magnetic.
Material material_fe();
Material material_co();
Material material_au();

struct Segment {
    Material material;
    double length = 0.0;            ///< m
    Vec3 direction = Vec3::UnitX(); ///< unit magnetization axis, lab frame
    double scale = 1.0;             ///< normalized moment in [-1, 1]
    bool operator==(const Segment&) const = default;
};

/// Segmented cylindrical wire. `origin` is the centre of the first tip face.
struct WireSpec {
    std::vector<Segment> segments;
    double diameter = 0.0;          ///< m
    Vec3 origin = Vec3::Zero();     ///< m, lab frame
    Vec3 axis = Vec3::UnitX();      ///< unit vector in the sensing plane
    double standoff = 15e-9;        ///< gap between wire surface and NV plane, m

    double total_length() const;
    /// Throws InvalidArgumentError on any violated invariant.
    void validate() const;
    bool operator==(const WireSpec&) const = default;
};

/// Copy of `spec` with the axis lifted so the wire rests on the surface:
/// origin.z = standoff + diameter / 2 (NV plane at z = 0).
WireSpec place_on_surface(WireSpec spec);

/// Regular grid of per-cell magnetization (A/m) with cubic cells.
/// `origin` is the minimum corner; cell (i, j, k) has its centre at
/// origin + (i + ½, j + ½, k + ½)·cell_size. i runs fastest.
struct MagnetizationGrid {
    double cell_size = 0.0;
    std::array<int, 3> dims{1, 1, 1};
    Vec3 origin = Vec3::Zero();
    std::vector<Vec3> m;

    MagnetizationGrid() = default;
    MagnetizationGrid(double cell, std::array<int, 3> n, Vec3 corner);

    std::size_t cell_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    Vec3 cell_center(int i, int j, int k) const;
    double cell_volume() const { return cell_size * cell_size * cell_size; }
    double max_norm() const;
    /// Σ m·V over all cells, A·m².
    Vec3 total_moment() const;
    std::size_t nonzero_cells() const;
};

/// Cell-centre rasterization of a wire. x/y cell centres sit on integer
/// multiples of `cell_size` (so they coincide with NV sites of the same
/// pitch); z centres are anchored on the wire axis.
/// Throws InvalidDiscretizationError if cell_size > diameter / 2.
MagnetizationGrid rasterize(const WireSpec& spec, double cell_size);

/// One grid per segment on the whole wire's bounding box, each with unit
/// magnetization (1 A/m along the segment direction) inside that segment only.
/// The physical field is Σ ms·scale·field(segment grid).
std::vector<MagnetizationGrid> rasterize_segments(const WireSpec& spec, double cell_size);

struct FieldMap3D {
    PlaneLattice sites;
    std::vector<Vec3> b;  ///< T, one per site
};

enum class FieldMethod { automatic, direct, fft };

/// Dipole-sum stray field of `grid` at every point of `sites`.
/// Throws SingularEvaluationError when a site lies inside or on a
/// magnetized cell. The direct route sums cells in index order; the FFT route
/// (lattice-aligned inputs only) evaluates the same sum as a per-layer
/// convolution.
FieldMap3D stray_field(const MagnetizationGrid& grid, const PlaneLattice& sites,
                       FieldMethod method = FieldMethod::automatic);

/// Batched form sharing kernel work across grids with identical geometry.
std::vector<FieldMap3D> stray_fields(std::span<const MagnetizationGrid> grids,
                                     const PlaneLattice& sites,
                                     FieldMethod method = FieldMethod::automatic);

/// Direct dipole sum at a single arbitrary point.
Vec3 stray_field_at(const MagnetizationGrid& grid, const Vec3& point);

/// Closed-form field of a point dipole `moment` (A·m²) at displacement `r`.
Vec3 point_dipole_field(const Vec3& moment, const Vec3& r);

}  // namespace nvwire
