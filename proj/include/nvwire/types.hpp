#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>

namespace nvwire {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

namespace constants {
inline constexpr double kPi = 3.14159265358979323846;
/// Vacuum permeability, T·m/A.
inline constexpr double kMu0 = 4.0e-7 * kPi;
inline constexpr double kMu0Over4Pi = 1.0e-7;
/// 1 G expressed in T.
inline constexpr double kGauss = 1.0e-4;
}  // namespace constants

/// Regular square lattice of points on the plane z = const.
///
/// Point (i, j) sits at (x0 + i·pitch, y0 + j·pitch, z); i runs fastest in
/// every flattened array indexed by this lattice.
struct PlaneLattice {
    double x0 = 0.0;
    double y0 = 0.0;
    double z = 0.0;
    double pitch = 0.0;
    int nx = 0;
    int ny = 0;

    std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i);
    }
    double x(int i) const { return x0 + i * pitch; }
    double y(int j) const { return y0 + j * pitch; }
    Vec3 point(int i, int j) const { return {x(i), y(j), z}; }

    /// True when both lattices describe the same points (to `rel_tol`·pitch).
    bool same_geometry(const PlaneLattice& other, double rel_tol = 1e-9) const;
};

}  // namespace nvwire
