#include "nvwire/imaging.hpp"

#include "nvwire/errors.hpp"

#include "fftw_util.hpp"
#include "parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nvwire {

void SceneConfig::validate() const {
    if (!(fov_width > 0.0 && fov_height > 0.0)) throw InvalidArgumentError("field of view must be positive");
    if (!(pixel_pitch > 0.0)) throw InvalidArgumentError("pixel_pitch must be positive");
    if (nv_axis_index < 1 || nv_axis_index > 4) throw InvalidArgumentError("nv_axis_index must be 1..4");
    if (!(frequency_step > 0.0)) throw InvalidArgumentError("frequency_step must be positive");
    if (!(cell_size > 0.0)) throw InvalidArgumentError("cell_size must be positive");
    if (!std::isfinite(bias_along_axis)) throw InvalidArgumentError("bias must be finite");
    if (bias_vector && !bias_vector->allFinite()) throw InvalidArgumentError("bias vector must be finite");
}

Vec3 SceneConfig::axis() const { return nv_axes_lab()[static_cast<std::size_t>(nv_axis_index - 1)]; }

Vec3 SceneConfig::bias() const { return bias_vector ? *bias_vector : Vec3(bias_along_axis * axis()); }

std::size_t MapSet::valid_count() const {
    return static_cast<std::size_t>(std::count(fit_ok.begin(), fit_ok.end(), std::uint8_t{1}));
}

double MapSet::max_abs_field() const {
    double best = 0.0;
    for (std::size_t i = 0; i < b_parallel.size(); ++i) {
        if (fit_ok[i]) best = std::max(best, std::abs(b_parallel[i]));
    }
    return best;
}

double effective_pixel_pitch(const SceneConfig& scene, const NVParams& nv) {
    const long ratio = std::max(1L, std::lround(scene.pixel_pitch / nv.site_pitch));
    return static_cast<double>(ratio) * nv.site_pitch;
}

namespace {

long pixel_stride(const SceneConfig& scene, const NVParams& nv) {
    return std::max(1L, std::lround(scene.pixel_pitch / nv.site_pitch));
}

struct AxisSpan {
    long first;  // global index of the first pixel
    int count;
};

AxisSpan pixel_span(double center, double extent, double pitch) {
    const double lo = center - 0.5 * extent;
    const long first = static_cast<long>(std::ceil(lo / pitch - 1e-9));
    const int count = static_cast<int>(std::max(1L, std::lround(extent / pitch)));
    return {first, count};
}

}  // namespace

PlaneLattice pixel_lattice(const SceneConfig& scene, const NVParams& nv) {
    const double pitch = effective_pixel_pitch(scene, nv);
    const auto sx = pixel_span(scene.fov_center_x, scene.fov_width, pitch);
    const auto sy = pixel_span(scene.fov_center_y, scene.fov_height, pitch);
    PlaneLattice l;
    l.pitch = pitch;
    l.x0 = static_cast<double>(sx.first * pixel_stride(scene, nv)) * nv.site_pitch;
    l.y0 = static_cast<double>(sy.first * pixel_stride(scene, nv)) * nv.site_pitch;
    l.z = 0.0;
    l.nx = sx.count;
    l.ny = sy.count;
    return l;
}

PlaneLattice sample_nv_sites(const SceneConfig& scene, const NVParams& nv, int margin_cells) {
    if (margin_cells < 0) throw InvalidArgumentError("site margin must be non-negative");
    const long stride = pixel_stride(scene, nv);
    const double pitch = effective_pixel_pitch(scene, nv);
    const auto sx = pixel_span(scene.fov_center_x, scene.fov_width, pitch);
    const auto sy = pixel_span(scene.fov_center_y, scene.fov_height, pitch);
    const long core_x = std::max(std::lround(scene.fov_width / nv.site_pitch), (sx.count - 1) * stride + 1);
    const long core_y = std::max(std::lround(scene.fov_height / nv.site_pitch), (sy.count - 1) * stride + 1);
    PlaneLattice l;
    l.pitch = nv.site_pitch;
    l.x0 = static_cast<double>(sx.first * stride - margin_cells) * nv.site_pitch;
    l.y0 = static_cast<double>(sy.first * stride - margin_cells) * nv.site_pitch;
    l.z = 0.0;
    l.nx = static_cast<int>(core_x + 2L * margin_cells);
    l.ny = static_cast<int>(core_y + 2L * margin_cells);
    return l;
}

std::vector<double> frequency_grid(double f_bias, const SceneConfig& scene, const NVParams& nv) {
    const long half = static_cast<long>(std::floor(nv.window_half / scene.frequency_step + 1e-9));
    std::vector<double> f(static_cast<std::size_t>(2 * half + 1));
    for (long k = -half; k <= half; ++k) {
        f[static_cast<std::size_t>(k + half)] = f_bias + static_cast<double>(k) * scene.frequency_step;
    }
    return f;
}

ImagingSetup prepare_imaging(const SceneConfig& scene, const NVParams& nv, const OpticsParams& opt) {
    scene.validate();
    nv.validate();
    ImagingSetup s;
    s.scene = scene;
    s.nv = nv;
    s.optics = opt;
    s.optics.kernel_pitch = nv.site_pitch;
    s.optics.validate();
    const int airy_cells = static_cast<int>(std::ceil(s.optics.airy_radius / nv.site_pitch - 1e-9));
    const int tirf_cells = static_cast<int>(std::ceil(s.optics.tirf_radius / nv.site_pitch - 1e-9));
    s.psf = modified_psf(airy_psf(s.optics, airy_cells), tirf_distribution(s.optics, tirf_cells));
    s.sites = sample_nv_sites(scene, nv, s.psf.radius);
    s.pixels = pixel_lattice(scene, nv);
    s.pixel_stride = static_cast<int>(pixel_stride(scene, nv));
    s.axis = scene.axis();
    s.bias = scene.bias();
    s.f_bias = resonances_with_fallback(s.bias, s.axis, nv).get(nv.branch);
    s.f_grid = frequency_grid(s.f_bias, scene, nv);
    return s;
}

FieldMap3D combine_fields(std::span<const FieldMap3D> fields, std::span<const double> coeffs) {
    if (fields.empty() || fields.size() != coeffs.size()) {
        throw InvalidArgumentError("need one coefficient per field map");
    }
    FieldMap3D out{fields.front().sites, std::vector<Vec3>(fields.front().b.size(), Vec3::Zero())};
    for (std::size_t f = 0; f < fields.size(); ++f) {
        if (!fields[f].sites.same_geometry(out.sites) || fields[f].b.size() != out.b.size()) {
            throw GeometryError("field maps are sampled on different lattices");
        }
    }
    for (std::size_t i = 0; i < out.b.size(); ++i) {
        Vec3 acc = coeffs[0] * fields[0].b[i];
        for (std::size_t f = 1; f < fields.size(); ++f) {
            acc += coeffs[f] * fields[f].b[i];
        }
        out.b[i] = acc;
    }
    return out;
}

namespace {

struct SiteBin {
    int bin;
    double t;  // share of the weight going to bin + 1
};

// Low-rank factors of the bin -> spectrum table: rows ≈ u · vᵀ.
struct LowRank {
    Eigen::MatrixXd u;  // (bins + 1) × rank, singular values folded in
    Eigen::MatrixXd v;  // nf × rank
};

LowRank factor_rows(const Eigen::MatrixXd& rows) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(rows, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv[rank] > 1e-14 * sv[0]) ++rank;
    rank = std::max<Eigen::Index>(rank, 1);
    LowRank lr;
    lr.u = svd.matrixU().leftCols(rank) * sv.head(rank).asDiagonal();
    lr.v = svd.matrixV().leftCols(rank);
    return lr;
}

}  // namespace

ODMRCube render_cube(const ImagingSetup& setup, const FieldMap3D& wire_field) {
    if (!wire_field.sites.same_geometry(setup.sites) || wire_field.b.size() != setup.sites.size()) {
        throw GeometryError("wire field is not sampled on the imaging site lattice");
    }
    const NVParams& nv = setup.nv;
    const double step = setup.scene.frequency_step;
    const long jext = static_cast<long>(std::floor(nv.window_half / step + 1e-9)) +
                      static_cast<long>(std::ceil(8.0 * nv.linewidth_sigma / step));
    const int nbins = static_cast<int>(2 * jext + 1);
    const int flat = nbins;

    // Resonance of every site, split linearly between the two bracketing bins.
    std::vector<SiteBin> bins(setup.sites.size());
    detail::parallel_for(bins.size(), setup.scene.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3 b = setup.bias + wire_field.b[i];
            const double f = resonances_with_fallback(b, setup.axis, nv).get(nv.branch);
            const double u = (f - setup.f_bias) / step;
            if (!(std::abs(u) <= static_cast<double>(jext))) {
                bins[i] = {flat, 0.0};
                continue;
            }
            const double j0 = std::min(std::floor(u), static_cast<double>(jext));
            bins[i] = {static_cast<int>(j0) + static_cast<int>(jext), u - j0};
        }
    });

    // Lineshape of each bin (and the flat row) on the detection grid.
    const std::size_t nf = setup.f_grid.size();
    Eigen::MatrixXd rows(nbins + 1, static_cast<Eigen::Index>(nf));
    for (int b = 0; b < nbins; ++b) {
        const double f0 = setup.f_bias + static_cast<double>(b - jext) * step;
        for (std::size_t k = 0; k < nf; ++k) {
            rows(b, static_cast<Eigen::Index>(k)) = lineshape(setup.f_grid[k], f0, nv);
        }
    }
    rows.row(flat).setConstant(nv.lineshape == LineshapeMode::as_printed ? nv.contrast : 1.0);
    // Shifted Gaussians on a finite window are numerically low rank, so the
    // spatial average runs as one convolution per rank component.
    const LowRank lr = factor_rows(rows);
    const int rank = static_cast<int>(lr.u.cols());

    const PlaneLattice& sl = setup.sites;
    const int n1 = detail::smooth_size(sl.nx);
    const int n0 = detail::smooth_size(sl.ny);
    const int h1 = n1 / 2 + 1;
    const std::size_t real_size = static_cast<std::size_t>(n0) * n1;
    const std::size_t cplx_size = static_cast<std::size_t>(n0) * h1;

    // Kernel spectrum, wrapped so offset 0 sits at index 0, FFT scale folded in.
    const Kernel2D& psf = setup.psf;
    auto kspec = detail::fftw_buffer<fftw_complex>(cplx_size);
    {
        auto kbuf = detail::fftw_buffer<double>(real_size);
        for (int dy = -psf.radius; dy <= psf.radius; ++dy) {
            for (int dx = -psf.radius; dx <= psf.radius; ++dx) {
                const int iy = ((dy % n0) + n0) % n0;
                const int ix = ((dx % n1) + n1) % n1;
                kbuf[static_cast<std::size_t>(iy) * n1 + ix] += psf.at(dx, dy);
            }
        }
        fftw_plan plan;
        {
            std::lock_guard<std::mutex> lock(detail::planner_mutex());
            plan = fftw_plan_dft_r2c_2d(n0, n1, kbuf.get(), kspec.get(), FFTW_ESTIMATE);
        }
        fftw_execute(plan);
        {
            std::lock_guard<std::mutex> lock(detail::planner_mutex());
            fftw_destroy_plan(plan);
        }
        const double scale = 1.0 / static_cast<double>(real_size);
        for (std::size_t i = 0; i < cplx_size; ++i) {
            kspec[i][0] *= scale;
            kspec[i][1] *= scale;
        }
    }

    const std::size_t npix = setup.pixels.size();
    const int margin = psf.radius;
    Eigen::MatrixXd amp(static_cast<Eigen::Index>(npix), rank);
    detail::parallel_for(static_cast<std::size_t>(rank), setup.scene.threads, [&](std::size_t begin, std::size_t end) {
        auto buf = detail::fftw_buffer<double>(real_size);
        auto spec = detail::fftw_buffer<fftw_complex>(cplx_size);
        fftw_plan fwd;
        fftw_plan inv;
        {
            std::lock_guard<std::mutex> lock(detail::planner_mutex());
            fwd = fftw_plan_dft_r2c_2d(n0, n1, buf.get(), spec.get(), FFTW_ESTIMATE);
            inv = fftw_plan_dft_c2r_2d(n0, n1, spec.get(), buf.get(), FFTW_ESTIMATE);
        }
        for (std::size_t r = begin; r < end; ++r) {
            const auto col = lr.u.col(static_cast<Eigen::Index>(r));
            std::fill(buf.get(), buf.get() + real_size, 0.0);
            for (int j = 0; j < sl.ny; ++j) {
                double* dst = buf.get() + static_cast<std::size_t>(j) * n1;
                const SiteBin* src = &bins[sl.index(0, j)];
                for (int i = 0; i < sl.nx; ++i) {
                    const SiteBin& sb = src[i];
                    dst[i] = sb.bin == flat ? col[flat] : (1.0 - sb.t) * col[sb.bin] + sb.t * col[sb.bin + 1];
                }
            }
            fftw_execute(fwd);
            for (std::size_t i = 0; i < cplx_size; ++i) {
                const double re = spec[i][0] * kspec[i][0] - spec[i][1] * kspec[i][1];
                const double im = spec[i][0] * kspec[i][1] + spec[i][1] * kspec[i][0];
                spec[i][0] = re;
                spec[i][1] = im;
            }
            fftw_execute(inv);
            // Pixel windows never wrap: the lattice carries a full kernel margin.
            for (int py = 0; py < setup.pixels.ny; ++py) {
                const std::size_t sy = static_cast<std::size_t>(margin + py * setup.pixel_stride);
                for (int px = 0; px < setup.pixels.nx; ++px) {
                    const std::size_t sx = static_cast<std::size_t>(margin + px * setup.pixel_stride);
                    amp(static_cast<Eigen::Index>(setup.pixels.index(px, py)), static_cast<Eigen::Index>(r)) =
                        buf[sy * n1 + sx];
                }
            }
        }
        std::lock_guard<std::mutex> lock(detail::planner_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
    });

    ODMRCube cube;
    cube.pixels = setup.pixels;
    cube.f_grid = setup.f_grid;
    cube.f_bias = setup.f_bias;
    cube.intensity.resize(npix * nf);
    detail::parallel_for(npix, setup.scene.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            for (std::size_t k = 0; k < nf; ++k) {
                double acc = 0.0;
                for (int r = 0; r < rank; ++r) {
                    acc += amp(static_cast<Eigen::Index>(p), r) * lr.v(static_cast<Eigen::Index>(k), r);
                }
                // round-off can dip a hair below zero
                cube.intensity[p * nf + k] = std::max(acc, 0.0);
            }
        }
    });
    return cube;
}

ODMRCube forward_odmr(const MagnetizationGrid& grid, const SceneConfig& scene, const NVParams& nv,
                      const OpticsParams& opt) {
    const auto setup = prepare_imaging(scene, nv, opt);
    return render_cube(setup, stray_field(grid, setup.sites));
}

namespace {

struct SpectrumFit {
    bool ok = false;
    double f0 = 0.0;
    double a = 0.0;
    double c = 0.0;
    double w = 0.0;
};

// y ≈ a − c·exp(−(u − u0)²/2w²), u in MHz relative to the bias resonance.
SpectrumFit fit_spectrum(std::span<const double> y, std::span<const double> u, const NVParams& nv,
                         const FitOptions& opt) {
    const std::size_t n = y.size();
    SpectrumFit out;
    const auto [min_it, max_it] = std::minmax_element(y.begin(), y.end());
    if (!(*max_it - *min_it >= opt.min_depth_fraction * nv.contrast)) {
        return out;
    }
    const std::size_t kmin = static_cast<std::size_t>(min_it - y.begin());
    double a = *max_it;
    double c = a - *min_it;
    double u0 = u[kmin];
    const double du = u[1] - u[0];
    std::size_t below = 0;
    for (double v : y) below += v < a - 0.5 * c ? 1 : 0;
    double w = static_cast<double>(below) * du / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    if (!(w > du)) w = nv.linewidth_sigma * 1e-6;

    auto sse = [&](double a_, double c_, double u0_, double w_) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = u[k] - u0_;
            const double r = y[k] - (a_ - c_ * std::exp(-d * d / (2.0 * w_ * w_)));
            s += r * r;
        }
        return s;
    };

    const double tol = opt.tolerance * 1e-6;
    double current = sse(a, c, u0, w);
    bool converged = false;
    Eigen::Matrix4d jtj;
    Eigen::Vector4d jtr;
    for (int it = 0; it < opt.max_iterations && !converged; ++it) {
        jtj.setZero();
        jtr.setZero();
        for (std::size_t k = 0; k < n; ++k) {
            const double d = u[k] - u0;
            const double g = std::exp(-d * d / (2.0 * w * w));
            const double r = y[k] - (a - c * g);
            Eigen::Vector4d j(1.0, -g, -c * g * d / (w * w), -c * g * d * d / (w * w * w));
            jtj.noalias() += j * j.transpose();
            jtr.noalias() += j * r;
        }
        const Eigen::LDLT<Eigen::Matrix4d> ldlt(jtj);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
        const Eigen::Vector4d delta = ldlt.solve(jtr);
        if (!delta.allFinite()) break;
        double lambda = 1.0;
        bool accepted = false;
        for (int h = 0; h < 30; ++h, lambda *= 0.5) {
            const double trial = sse(a + lambda * delta[0], c + lambda * delta[1], u0 + lambda * delta[2],
                                     w + lambda * delta[3]);
            if (trial <= current) {
                a += lambda * delta[0];
                c += lambda * delta[1];
                u0 += lambda * delta[2];
                w += lambda * delta[3];
                current = trial;
                accepted = true;
                break;
            }
        }
        // No downhill step left: already at the minimum to working precision.
        if (!accepted || std::abs(lambda * delta[2]) < tol) converged = true;
    }
    w = std::abs(w);
    out.ok = converged && std::isfinite(a) && std::isfinite(c) && std::isfinite(u0) && std::isfinite(w) &&
             c > 0.0 && w > 0.0 && u0 >= u.front() && u0 <= u.back();
    out.f0 = u0;
    out.a = a;
    out.c = c;
    out.w = w * 1e6;
    return out;
}

}  // namespace

MapSet fit_zeeman_map(const ODMRCube& cube, const NVParams& nv, const SceneConfig& scene, const FitOptions& fit) {
    if (cube.nf() < 20) {
        throw InvalidArgumentError("spectral fit needs at least 20 frequency samples, cube has " +
                                   std::to_string(cube.nf()));
    }
    const std::size_t np = cube.pixels.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MapSet m;
    m.lattice = cube.pixels;
    m.b_parallel.assign(np, nan);
    m.contrast.assign(np, nan);
    m.linewidth.assign(np, nan);
    m.fit_ok.assign(np, 0);
    std::vector<double> u(cube.nf());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = (cube.f_grid[k] - cube.f_bias) * 1e-6;
    const double sign = nv.branch == Branch::minus ? -1.0 : 1.0;
    detail::parallel_for(np, scene.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            const auto r = fit_spectrum(cube.spectrum(p), u, nv, fit);
            if (!r.ok) continue;
            m.fit_ok[p] = 1;
            m.b_parallel[p] = sign * (r.f0 * 1e6) / nv.gamma;
            m.contrast[p] = nv.lineshape == LineshapeMode::as_printed ? r.c : r.c / r.a;
            m.linewidth[p] = r.w;
        }
    });
    return m;
}

std::vector<double> wire_coefficients(const WireSpec& spec) {
    std::vector<double> c;
    c.reserve(spec.segments.size());
    for (const auto& s : spec.segments) c.push_back(s.material.ms * s.scale);
    return c;
}

WireBasis wire_basis(const WireSpec& spec, const ImagingSetup& setup) {
    const WireSpec placed = place_on_surface(spec);
    placed.validate();
    const auto grids = rasterize_segments(placed, setup.scene.cell_size);
    return {stray_fields(grids, setup.sites), wire_coefficients(placed)};
}

MapSet render_map(const ImagingSetup& setup, std::span<const FieldMap3D> unit_fields,
                  std::span<const double> coefficients, const FitOptions& fit) {
    const auto field = combine_fields(unit_fields, coefficients);
    return fit_zeeman_map(render_cube(setup, field), setup.nv, setup.scene, fit);
}

MapSet simulate_image(const WireSpec& spec, const SceneConfig& scene, const NVParams& nv, const OpticsParams& opt,
                      const FitOptions& fit) {
    const auto setup = prepare_imaging(scene, nv, opt);
    const auto basis = wire_basis(spec, setup);
    return render_map(setup, basis.unit_fields, basis.coefficients, fit);
}

MapSet simulate_image(const MagnetizationGrid& grid, const SceneConfig& scene, const NVParams& nv,
                      const OpticsParams& opt, const FitOptions& fit) {
    const auto setup = prepare_imaging(scene, nv, opt);
    return fit_zeeman_map(render_cube(setup, stray_field(grid, setup.sites)), nv, scene, fit);
}

}  // namespace nvwire
