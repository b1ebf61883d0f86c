#include "nvwire/errors.hpp"
#include "nvwire/format.hpp"
#include "nvwire/magnetostatics.hpp"

#include "fftw_util.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>

namespace nvwire {

namespace {

using detail::fftw_buffer;
using detail::planner_mutex;
using detail::smooth_size;

struct DipoleSource {
    Vec3 position;
    Vec3 moment;  // A·m², pre-multiplied by μ0/4π
};

std::vector<DipoleSource> collect_sources(const MagnetizationGrid& grid) {
    std::vector<DipoleSource> out;
    const double vol = grid.cell_volume();
    for (int k = 0; k < grid.dims[2]; ++k) {
        for (int j = 0; j < grid.dims[1]; ++j) {
            for (int i = 0; i < grid.dims[0]; ++i) {
                const Vec3& m = grid.m[grid.index(i, j, k)];
                if (!m.isZero(0.0)) {
                    out.push_back({grid.cell_center(i, j, k), m * (vol * constants::kMu0Over4Pi)});
                }
            }
        }
    }
    return out;
}

// Rejects lattices with a site inside or on the boundary of a magnetized cell.
void check_clearance(const MagnetizationGrid& grid, const PlaneLattice& sites) {
    const double half = 0.5 * grid.cell_size;
    for (int k = 0; k < grid.dims[2]; ++k) {
        for (int j = 0; j < grid.dims[1]; ++j) {
            for (int i = 0; i < grid.dims[0]; ++i) {
                if (grid.m[grid.index(i, j, k)].isZero(0.0)) {
                    continue;
                }
                const Vec3 c = grid.cell_center(i, j, k);
                if (std::abs(sites.z - c.z()) > half) {
                    continue;
                }
                const long a0 = std::max(0L, static_cast<long>(std::ceil((c.x() - half - sites.x0) / sites.pitch)));
                const long a1 = std::min(static_cast<long>(sites.nx) - 1,
                                         static_cast<long>(std::floor((c.x() + half - sites.x0) / sites.pitch)));
                const long b0 = std::max(0L, static_cast<long>(std::ceil((c.y() - half - sites.y0) / sites.pitch)));
                const long b1 = std::min(static_cast<long>(sites.ny) - 1,
                                         static_cast<long>(std::floor((c.y() + half - sites.y0) / sites.pitch)));
                if (a0 <= a1 && b0 <= b1) {
                    const Vec3 p = sites.point(static_cast<int>(a0), static_cast<int>(b0));
                    throw SingularEvaluationError(
                        "site (" + std::to_string(a0) + ", " + std::to_string(b0) + ") at (" +
                        format_double(p.x()) + ", " + format_double(p.y()) + ", " + format_double(p.z()) +
                        ") m lies inside or on magnetized cell (" + std::to_string(i) + ", " +
                        std::to_string(j) + ", " + std::to_string(k) + ")");
                }
            }
        }
    }
}

Vec3 sum_dipoles(const std::vector<DipoleSource>& sources, const Vec3& point) {
    double bx = 0.0;
    double by = 0.0;
    double bz = 0.0;
    for (const auto& s : sources) {
        const double rx = point.x() - s.position.x();
        const double ry = point.y() - s.position.y();
        const double rz = point.z() - s.position.z();
        const double r2 = rx * rx + ry * ry + rz * rz;
        const double inv_r = 1.0 / std::sqrt(r2);
        const double inv_r3 = inv_r / r2;
        const double inv_r5 = inv_r3 / r2;
        const double mdotr3 = 3.0 * (s.moment.x() * rx + s.moment.y() * ry + s.moment.z() * rz) * inv_r5;
        bx += mdotr3 * rx - s.moment.x() * inv_r3;
        by += mdotr3 * ry - s.moment.y() * inv_r3;
        bz += mdotr3 * rz - s.moment.z() * inv_r3;
    }
    return {bx, by, bz};
}

FieldMap3D direct_field(const MagnetizationGrid& grid, const PlaneLattice& sites) {
    const auto sources = collect_sources(grid);
    FieldMap3D out{sites, std::vector<Vec3>(sites.size(), Vec3::Zero())};
    for (int b = 0; b < sites.ny; ++b) {
        for (int a = 0; a < sites.nx; ++a) {
            out.b[sites.index(a, b)] = sum_dipoles(sources, sites.point(a, b));
        }
    }
    return out;
}

// Integer lattice offset of the first site relative to cell (0, 0) centres,
// or false when sites and cell centres do not share a lattice.
bool lattice_offset(const MagnetizationGrid& grid, const PlaneLattice& sites, long& ox, long& oy) {
    const double h = grid.cell_size;
    if (std::abs(sites.pitch - h) > 1e-9 * h) {
        return false;
    }
    const double fx = (sites.x0 - (grid.origin.x() + 0.5 * h)) / h;
    const double fy = (sites.y0 - (grid.origin.y() + 0.5 * h)) / h;
    ox = std::lround(fx);
    oy = std::lround(fy);
    return std::abs(fx - static_cast<double>(ox)) < 1e-6 && std::abs(fy - static_cast<double>(oy)) < 1e-6;
}

bool same_geometry(const MagnetizationGrid& a, const MagnetizationGrid& b) {
    return a.cell_size == b.cell_size && a.dims == b.dims && a.origin == b.origin;
}

// Same dipole sum as direct_field, evaluated as one 2-D convolution per
// z-layer of cells. The tensor kernel is transformed once per layer and
// shared by every grid in the batch.
std::vector<FieldMap3D> fft_fields(std::span<const MagnetizationGrid> grids, const PlaneLattice& sites) {
    const MagnetizationGrid& g0 = grids.front();
    const double h = g0.cell_size;
    long ox = 0;
    long oy = 0;
    lattice_offset(g0, sites, ox, oy);

    const int ngx = g0.dims[0];
    const int ngy = g0.dims[1];
    const int lx = smooth_size(sites.nx + ngx - 1);
    const int ly = smooth_size(sites.ny + ngy - 1);
    const int cx = lx / 2 + 1;
    const std::size_t nreal = static_cast<std::size_t>(lx) * ly;
    const std::size_t ncplx = static_cast<std::size_t>(cx) * ly;

    auto real_buf = fftw_buffer<double>(nreal);
    auto cplx_buf = fftw_buffer<fftw_complex>(ncplx);
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        forward = fftw_plan_dft_r2c_2d(ly, lx, real_buf.get(), cplx_buf.get(), FFTW_ESTIMATE);
        backward = fftw_plan_dft_c2r_2d(ly, lx, cplx_buf.get(), real_buf.get(), FFTW_ESTIMATE);
    }

    using Spectrum = std::vector<std::complex<double>>;
    auto transform = [&]() {
        fftw_execute(forward);
        Spectrum s(ncplx);
        for (std::size_t n = 0; n < ncplx; ++n) {
            s[n] = {cplx_buf[n][0], cplx_buf[n][1]};
        }
        return s;
    };

    // Accumulated field spectra: [grid][component].
    std::vector<std::array<Spectrum, 3>> acc(grids.size());
    for (auto& a : acc) {
        for (auto& c : a) {
            c.assign(ncplx, {0.0, 0.0});
        }
    }

    const long dmin_x = ox - (ngx - 1);
    const long dmin_y = oy - (ngy - 1);
    const int span_x = sites.nx + ngx - 1;
    const int span_y = sites.ny + ngy - 1;

    for (int k = 0; k < g0.dims[2]; ++k) {
        bool layer_used = false;
        for (const auto& g : grids) {
            for (int j = 0; j < ngy && !layer_used; ++j) {
                for (int i = 0; i < ngx; ++i) {
                    if (!g.m[g.index(i, j, k)].isZero(0.0)) {
                        layer_used = true;
                        break;
                    }
                }
            }
        }
        if (!layer_used) {
            continue;
        }
        const double dz = sites.z - (g0.origin.z() + (k + 0.5) * h);

        // Kernel components xx, yy, zz, xy, xz, yz.
        std::array<Spectrum, 6> kernel;
        for (int comp = 0; comp < 6; ++comp) {
            std::fill(real_buf.get(), real_buf.get() + nreal, 0.0);
            for (int ty = 0; ty < span_y; ++ty) {
                const double dy = static_cast<double>(ty + dmin_y) * h;
                for (int tx = 0; tx < span_x; ++tx) {
                    const double dx = static_cast<double>(tx + dmin_x) * h;
                    const double r2 = dx * dx + dy * dy + dz * dz;
                    const double inv_r = 1.0 / std::sqrt(r2);
                    const double inv_r5 = inv_r / (r2 * r2);
                    double v = 0.0;
                    switch (comp) {
                        case 0: v = (3.0 * dx * dx - r2) * inv_r5; break;
                        case 1: v = (3.0 * dy * dy - r2) * inv_r5; break;
                        case 2: v = (3.0 * dz * dz - r2) * inv_r5; break;
                        case 3: v = 3.0 * dx * dy * inv_r5; break;
                        case 4: v = 3.0 * dx * dz * inv_r5; break;
                        default: v = 3.0 * dy * dz * inv_r5; break;
                    }
                    real_buf[static_cast<std::size_t>(ty) * lx + tx] = v;
                }
            }
            kernel[comp] = transform();
        }

        for (std::size_t gi = 0; gi < grids.size(); ++gi) {
            const auto& g = grids[gi];
            std::array<Spectrum, 3> mhat;
            bool any = false;
            for (int comp = 0; comp < 3; ++comp) {
                std::fill(real_buf.get(), real_buf.get() + nreal, 0.0);
                for (int j = 0; j < ngy; ++j) {
                    for (int i = 0; i < ngx; ++i) {
                        const double v = g.m[g.index(i, j, k)][comp];
                        real_buf[static_cast<std::size_t>(j) * lx + i] = v;
                        any = any || v != 0.0;
                    }
                }
                mhat[comp] = transform();
            }
            if (!any) {
                continue;
            }
            auto& out = acc[gi];
            for (std::size_t n = 0; n < ncplx; ++n) {
                const auto mx = mhat[0][n];
                const auto my = mhat[1][n];
                const auto mz = mhat[2][n];
                out[0][n] += kernel[0][n] * mx + kernel[3][n] * my + kernel[4][n] * mz;
                out[1][n] += kernel[3][n] * mx + kernel[1][n] * my + kernel[5][n] * mz;
                out[2][n] += kernel[4][n] * mx + kernel[5][n] * my + kernel[2][n] * mz;
            }
        }
    }

    const double scale = constants::kMu0Over4Pi * g0.cell_volume() / static_cast<double>(nreal);
    std::vector<FieldMap3D> result;
    result.reserve(grids.size());
    for (std::size_t gi = 0; gi < grids.size(); ++gi) {
        FieldMap3D out{sites, std::vector<Vec3>(sites.size(), Vec3::Zero())};
        for (int comp = 0; comp < 3; ++comp) {
            for (std::size_t n = 0; n < ncplx; ++n) {
                cplx_buf[n][0] = acc[gi][comp][n].real();
                cplx_buf[n][1] = acc[gi][comp][n].imag();
            }
            fftw_execute(backward);
            for (int b = 0; b < sites.ny; ++b) {
                const std::size_t row = static_cast<std::size_t>(b + ngy - 1) * lx;
                for (int a = 0; a < sites.nx; ++a) {
                    out.b[sites.index(a, b)][comp] = scale * real_buf[row + a + ngx - 1];
                }
            }
        }
        result.push_back(std::move(out));
    }

    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
    }
    return result;
}

void validate_sites(const PlaneLattice& sites) {
    if (!(sites.pitch > 0.0) || sites.nx < 1 || sites.ny < 1) {
        throw InvalidArgumentError("site lattice must have positive pitch and at least one site");
    }
}

}  // namespace

std::vector<FieldMap3D> stray_fields(std::span<const MagnetizationGrid> grids, const PlaneLattice& sites,
                                     FieldMethod method) {
    validate_sites(sites);
    if (grids.empty()) {
        return {};
    }
    for (const auto& g : grids) {
        check_clearance(g, sites);
    }

    bool batchable = true;
    long ox = 0;
    long oy = 0;
    for (const auto& g : grids) {
        batchable = batchable && same_geometry(g, grids.front()) && lattice_offset(g, sites, ox, oy);
    }

    bool use_fft = false;
    if (method == FieldMethod::fft) {
        if (!batchable) {
            throw GeometryError("FFT stray-field route needs cells and sites on a shared lattice");
        }
        use_fft = true;
    } else if (method == FieldMethod::automatic && batchable) {
        std::size_t nonzero = 0;
        for (const auto& g : grids) {
            nonzero += g.nonzero_cells();
        }
        use_fft = static_cast<double>(nonzero) * static_cast<double>(sites.size()) > 5e7;
    }

    if (use_fft) {
        return fft_fields(grids, sites);
    }
    std::vector<FieldMap3D> out;
    out.reserve(grids.size());
    for (const auto& g : grids) {
        out.push_back(direct_field(g, sites));
    }
    return out;
}

FieldMap3D stray_field(const MagnetizationGrid& grid, const PlaneLattice& sites, FieldMethod method) {
    auto fields = stray_fields(std::span<const MagnetizationGrid>(&grid, 1), sites, method);
    return std::move(fields.front());
}

Vec3 stray_field_at(const MagnetizationGrid& grid, const Vec3& point) {
    const double half = 0.5 * grid.cell_size;
    const auto sources = collect_sources(grid);
    for (const auto& s : sources) {
        const Vec3 d = (point - s.position).cwiseAbs();
        if (d.x() <= half && d.y() <= half && d.z() <= half) {
            throw SingularEvaluationError("point (" + format_double(point.x()) + ", " + format_double(point.y()) +
                                          ", " + format_double(point.z()) + ") m lies inside a magnetized cell");
        }
    }
    return sum_dipoles(sources, point);
}

}  // namespace nvwire
