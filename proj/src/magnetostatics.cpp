#include "nvwire/magnetostatics.hpp"

#include "nvwire/errors.hpp"
#include "nvwire/format.hpp"

#include <algorithm>
#include <cmath>

namespace nvwire {

namespace {

bool same_constant(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

}  // namespace

bool Material::operator==(const Material& o) const {
    return name == o.name && same_constant(ms, o.ms) && same_constant(k1, o.k1) && same_constant(a_ex, o.a_ex);
}

Material material_fe() { return {"Fe", 1.2e6, 4.7e4, 2.5e-11}; }
Material material_co() { return {"Co", 1.0e6, 4.7e4, 2.5e-11}; }
Material material_au() { return {"Au", 0.0, 0.0, 0.0}; }

double WireSpec::total_length() const {
    double total = 0.0;
    for (const auto& s : segments) {
        total += s.length;
    }
    return total;
}

void WireSpec::validate() const {
    if (segments.empty()) {
        throw InvalidArgumentError("wire has no segments");
    }
    if (!(diameter > 0.0)) {
        throw InvalidArgumentError("wire diameter must be positive");
    }
    if (std::abs(axis.norm() - 1.0) > 1e-12) {
        throw InvalidArgumentError("wire axis must be a unit vector");
    }
    if (std::abs(axis.z()) > 1e-12) {
        throw InvalidArgumentError("wire axis must lie in the sensing plane");
    }
    if (standoff < 0.0) {
        throw InvalidArgumentError("standoff must be non-negative");
    }
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        const std::string where = "segment " + std::to_string(i) + " (" + s.material.name + ")";
        if (!(s.length > 0.0)) {
            throw InvalidArgumentError(where + ": length must be positive");
        }
        if (std::abs(s.direction.norm() - 1.0) > 1e-12) {
            throw InvalidArgumentError(where + ": direction must be a unit vector");
        }
        if (!(std::abs(s.scale) <= 1.0)) {
            throw InvalidArgumentError(where + ": |scale| must not exceed 1");
        }
        if (!(s.material.ms >= 0.0)) {
            throw InvalidArgumentError(where + ": saturation magnetization must be >= 0");
        }
    }
}

WireSpec place_on_surface(WireSpec spec) {
    spec.origin.z() = spec.standoff + 0.5 * spec.diameter;
    return spec;
}

MagnetizationGrid::MagnetizationGrid(double cell, std::array<int, 3> n, Vec3 corner)
    : cell_size(cell), dims(n), origin(std::move(corner)) {
    m.assign(cell_count(), Vec3::Zero());
}

Vec3 MagnetizationGrid::cell_center(int i, int j, int k) const {
    return origin + cell_size * Vec3(i + 0.5, j + 0.5, k + 0.5);
}

double MagnetizationGrid::max_norm() const {
    double best = 0.0;
    for (const auto& v : m) {
        best = std::max(best, v.norm());
    }
    return best;
}

Vec3 MagnetizationGrid::total_moment() const {
    Vec3 sum = Vec3::Zero();
    for (const auto& v : m) {
        sum += v;
    }
    return sum * cell_volume();
}

std::size_t MagnetizationGrid::nonzero_cells() const {
    return static_cast<std::size_t>(
        std::count_if(m.begin(), m.end(), [](const Vec3& v) { return !v.isZero(0.0); }));
}

namespace {

struct WireLayout {
    MagnetizationGrid shape;            // empty grid with the final geometry
    std::vector<int> segment_of_cell;   // -1 outside the wire
};

WireLayout layout_wire(const WireSpec& spec, double cell_size) {
    spec.validate();
    if (!(cell_size > 0.0)) {
        throw InvalidDiscretizationError("cell size must be positive");
    }
    if (cell_size > 0.5 * spec.diameter) {
        throw InvalidDiscretizationError("cell size " + format_double(cell_size) +
                                         " m exceeds half the wire diameter (" +
                                         format_double(0.5 * spec.diameter) + " m)");
    }
    const double h = cell_size;
    const double radius = 0.5 * spec.diameter;
    const double length = spec.total_length();
    const Vec3 tip0 = spec.origin;
    const Vec3 tip1 = spec.origin + length * spec.axis;

    // Lateral extent of the cylinder along x and y.
    const double ex = radius * std::sqrt(std::max(0.0, 1.0 - spec.axis.x() * spec.axis.x()));
    const double ey = radius * std::sqrt(std::max(0.0, 1.0 - spec.axis.y() * spec.axis.y()));
    const double xmin = std::min(tip0.x(), tip1.x()) - ex;
    const double xmax = std::max(tip0.x(), tip1.x()) + ex;
    const double ymin = std::min(tip0.y(), tip1.y()) - ey;
    const double ymax = std::max(tip0.y(), tip1.y()) + ey;

    const long i_lo = static_cast<long>(std::floor(xmin / h)) - 1;
    const long i_hi = static_cast<long>(std::ceil(xmax / h)) + 1;
    const long j_lo = static_cast<long>(std::floor(ymin / h)) - 1;
    const long j_hi = static_cast<long>(std::ceil(ymax / h)) + 1;
    const int kz = static_cast<int>(std::ceil(radius / h)) + 1;

    const std::array<int, 3> dims{static_cast<int>(i_hi - i_lo + 1),
                                  static_cast<int>(j_hi - j_lo + 1), 2 * kz + 1};
    const Vec3 corner((static_cast<double>(i_lo) - 0.5) * h, (static_cast<double>(j_lo) - 0.5) * h,
                      spec.origin.z() - (kz + 0.5) * h);

    WireLayout out;
    out.shape = MagnetizationGrid(h, dims, corner);
    out.segment_of_cell.assign(out.shape.cell_count(), -1);

    const double tie = 1e-9 * h;
    std::vector<double> starts;
    double acc = 0.0;
    for (const auto& s : spec.segments) {
        starts.push_back(acc);
        acc += s.length;
    }

    for (int k = 0; k < dims[2]; ++k) {
        for (int j = 0; j < dims[1]; ++j) {
            for (int i = 0; i < dims[0]; ++i) {
                // Lattice coordinates are rebuilt from integers so x/y centres
                // land exactly on multiples of h.
                const Vec3 c((static_cast<double>(i_lo) + i) * h, (static_cast<double>(j_lo) + j) * h,
                             spec.origin.z() + (k - kz) * h);
                const Vec3 rel = c - tip0;
                // Centres on a boundary (up to round-off) count as inside the
                // closed cylinder and belong to the later segment.
                const double s = rel.dot(spec.axis) + tie;
                if (s < 0.0 || s >= length) {
                    continue;
                }
                const double radial = (rel - (s - tie) * spec.axis).norm();
                if (radial > radius + tie) {
                    continue;
                }
                const auto it = std::upper_bound(starts.begin(), starts.end(), s);
                out.segment_of_cell[out.shape.index(i, j, k)] =
                    static_cast<int>(std::distance(starts.begin(), it)) - 1;
            }
        }
    }
    return out;
}

}  // namespace

MagnetizationGrid rasterize(const WireSpec& spec, double cell_size) {
    WireLayout layout = layout_wire(spec, cell_size);
    MagnetizationGrid grid = std::move(layout.shape);
    for (std::size_t c = 0; c < grid.m.size(); ++c) {
        const int seg = layout.segment_of_cell[c];
        if (seg < 0) {
            continue;
        }
        const Segment& s = spec.segments[static_cast<std::size_t>(seg)];
        grid.m[c] = (s.material.ms * s.scale) * s.direction;
    }
    return grid;
}

std::vector<MagnetizationGrid> rasterize_segments(const WireSpec& spec, double cell_size) {
    WireLayout layout = layout_wire(spec, cell_size);
    std::vector<MagnetizationGrid> grids(spec.segments.size(), layout.shape);
    for (std::size_t c = 0; c < layout.shape.m.size(); ++c) {
        const int seg = layout.segment_of_cell[c];
        if (seg >= 0) {
            grids[static_cast<std::size_t>(seg)].m[c] = spec.segments[static_cast<std::size_t>(seg)].direction;
        }
    }
    return grids;
}

Vec3 point_dipole_field(const Vec3& moment, const Vec3& r) {
    const double r2 = r.squaredNorm();
    if (!(r2 > 0.0)) {
        throw SingularEvaluationError("point dipole evaluated at zero displacement");
    }
    const double rn = std::sqrt(r2);
    const double inv_r5 = 1.0 / (r2 * r2 * rn);
    return constants::kMu0Over4Pi * (3.0 * moment.dot(r) * r - r2 * moment) * inv_r5;
}

}  // namespace nvwire
