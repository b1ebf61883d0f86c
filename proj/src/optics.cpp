#include "nvwire/optics.hpp"

#include "nvwire/errors.hpp"

#include "fftw_util.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace nvwire {

void OpticsParams::validate() const {
    if (!(psf_fwhm > 0.0)) throw InvalidArgumentError("psf_fwhm must be positive");
    if (!(n_g > 0.0 && n_g < n_d)) throw InvalidArgumentError("refractive indices must satisfy 0 < n_g < n_d");
    if (!(theta_max > 0.0 && theta_max < 0.5 * 3.14159265358979323846))
        throw InvalidArgumentError("theta_max must lie in (0, 90) degrees");
    if (!(plate_thickness > 0.0)) throw InvalidArgumentError("plate_thickness must be positive");
    if (!(kernel_pitch > 0.0)) throw InvalidArgumentError("kernel_pitch must be positive");
    if (!(theta_step > 0.0)) throw InvalidArgumentError("theta_step must be positive");
    if (!(na > 0.0)) throw InvalidArgumentError("na must be positive");
    if (!(airy_radius >= psf_fwhm)) throw InvalidArgumentError("airy_radius must be at least psf_fwhm");
    if (!(tirf_radius >= 0.0)) throw InvalidArgumentError("tirf_radius must be non-negative");
}

Kernel2D::Kernel2D(double pitch_, int radius_) : pitch(pitch_), radius(radius_) {
    values.assign(static_cast<std::size_t>(width()) * width(), 0.0);
}

double Kernel2D::sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

double Kernel2D::second_moment() const {
    double s = 0.0;
    double w = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const double v = at(dx, dy);
            s += v * static_cast<double>(dx * dx + dy * dy);
            w += v;
        }
    }
    return s / w * pitch * pitch;
}

void Kernel2D::normalize() {
    const double s = sum();
    for (double& v : values) v /= s;
}

double airy_half_max_argument() {
    static const double v_half = [] {
        auto f = [](double v) {
            const double a = 2.0 * std::cyl_bessel_j(1.0, v) / v;
            return a * a - 0.5;
        };
        double lo = 1.0;
        double hi = 2.0;
        for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
            const double mid = 0.5 * (lo + hi);
            (f(mid) > 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }();
    return v_half;
}

double airy_profile(double r, const OpticsParams& p) {
    const double v = 2.0 * airy_half_max_argument() / p.psf_fwhm * r;
    if (v == 0.0) {
        return 1.0;
    }
    const double a = 2.0 * std::cyl_bessel_j(1.0, v) / v;
    return a * a;
}

Kernel2D airy_psf(const OpticsParams& p, int radius_cells) {
    if (!(radius_cells >= p.psf_fwhm / p.kernel_pitch - 1e-9)) {
        throw InvalidArgumentError("Airy kernel radius (" + std::to_string(radius_cells) +
                                   " cells) is smaller than psf_fwhm / pitch");
    }
    Kernel2D k(p.kernel_pitch, radius_cells);
    const double r2max = static_cast<double>(radius_cells) * radius_cells;
    for (int dy = -radius_cells; dy <= radius_cells; ++dy) {
        for (int dx = -radius_cells; dx <= radius_cells; ++dx) {
            const double d2 = static_cast<double>(dx * dx + dy * dy);
            if (d2 <= r2max) {
                k.at(dx, dy) = airy_profile(std::sqrt(d2) * p.kernel_pitch, p);
            }
        }
    }
    k.normalize();
    return k;
}

double tirf_theta_limit(const OpticsParams& p) {
    if (p.index_order == IndexOrder::as_printed) {
        return std::min(p.theta_max, std::asin(p.n_g / p.n_d));
    }
    return p.theta_max;
}

double tirf_shift(double theta, const OpticsParams& p) {
    const double ratio = p.index_order == IndexOrder::as_printed ? p.n_d / p.n_g : p.n_g / p.n_d;
    const double h = p.plate_thickness;
    return h / ratio * std::tan(std::asin(ratio * std::sin(theta))) - h * std::tan(theta);
}

Kernel2D tirf_distribution(const OpticsParams& p, int radius_cells) {
    if (radius_cells < 0) {
        throw InvalidArgumentError("kernel radius must be non-negative");
    }
    const double limit = tirf_theta_limit(p);
    if (!(limit > 0.0)) {
        throw ConfigurationError("empty admissible emission-angle range");
    }
    // Step chosen so theta_max lands exactly on a sample.
    const int steps = static_cast<int>(std::ceil(p.theta_max / p.theta_step - 1e-9));
    const double step = p.theta_max / steps;
    const bool open_bound = p.index_order == IndexOrder::as_printed;
    const double ratio = p.n_d / p.n_g;

    // Ring membership by rounded distance.
    Kernel2D k(p.kernel_pitch, radius_cells);
    std::vector<int> ring_cells(static_cast<std::size_t>(radius_cells) + 1, 0);
    for (int dy = -radius_cells; dy <= radius_cells; ++dy) {
        for (int dx = -radius_cells; dx <= radius_cells; ++dx) {
            const long r = std::lround(std::sqrt(static_cast<double>(dx * dx + dy * dy)));
            if (r <= radius_cells) ++ring_cells[static_cast<std::size_t>(r)];
        }
    }

    std::vector<double> ring_weight(ring_cells.size(), 0.0);
    int admissible = 0;
    for (int s = 0; s <= steps; ++s) {
        const double theta = s * step;
        if (theta > limit + 1e-12) break;
        if (open_bound && !(ratio * std::sin(theta) < 1.0)) break;
        ++admissible;
        const double w = p.weighting == AngularWeighting::sin_theta ? std::sin(theta) : 1.0;
        const double r = std::abs(tirf_shift(theta, p)) / p.kernel_pitch;
        if (!std::isfinite(r) || r > radius_cells + 0.5) continue;
        const long bin = std::lround(r);
        if (bin > radius_cells) continue;
        ring_weight[static_cast<std::size_t>(bin)] += w;
    }
    if (admissible == 0) {
        throw ConfigurationError("no admissible emission-angle samples");
    }
    double total = 0.0;
    for (double w : ring_weight) total += w;
    if (!(total > 0.0)) {
        throw ConfigurationError("redistribution kernel received no weight inside " +
                                 std::to_string(radius_cells) + " cells");
    }
    for (int dy = -radius_cells; dy <= radius_cells; ++dy) {
        for (int dx = -radius_cells; dx <= radius_cells; ++dx) {
            const long r = std::lround(std::sqrt(static_cast<double>(dx * dx + dy * dy)));
            if (r <= radius_cells) {
                k.at(dx, dy) = ring_weight[static_cast<std::size_t>(r)] / ring_cells[static_cast<std::size_t>(r)];
            }
        }
    }
    k.normalize();
    return k;
}

namespace {

Kernel2D convolve_direct(const Kernel2D& a, const Kernel2D& m) {
    Kernel2D out(a.pitch, a.radius + m.radius);
    for (int my = -m.radius; my <= m.radius; ++my) {
        for (int mx = -m.radius; mx <= m.radius; ++mx) {
            const double w = m.at(mx, my);
            if (w == 0.0) continue;
            for (int ay = -a.radius; ay <= a.radius; ++ay) {
                for (int ax = -a.radius; ax <= a.radius; ++ax) {
                    out.at(ax + mx, ay + my) += w * a.at(ax, ay);
                }
            }
        }
    }
    return out;
}

Kernel2D convolve_fft(const Kernel2D& a, const Kernel2D& m) {
    Kernel2D out(a.pitch, a.radius + m.radius);
    const int w = out.width();
    const int n = detail::smooth_size(w);
    const int nc = n / 2 + 1;
    const std::size_t real_size = static_cast<std::size_t>(n) * n;
    const std::size_t cplx_size = static_cast<std::size_t>(n) * nc;
    auto buf = detail::fftw_buffer<double>(real_size);
    auto spec_a = detail::fftw_buffer<fftw_complex>(cplx_size);
    auto spec_m = detail::fftw_buffer<fftw_complex>(cplx_size);
    fftw_plan fwd_a;
    fftw_plan fwd_m;
    fftw_plan inv;
    {
        std::lock_guard<std::mutex> lock(detail::planner_mutex());
        fwd_a = fftw_plan_dft_r2c_2d(n, n, buf.get(), spec_a.get(), FFTW_ESTIMATE);
        fwd_m = fftw_plan_dft_r2c_2d(n, n, buf.get(), spec_m.get(), FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_2d(n, n, spec_a.get(), buf.get(), FFTW_ESTIMATE);
    }
    auto load = [&](const Kernel2D& k) {
        std::fill(buf.get(), buf.get() + real_size, 0.0);
        for (int y = 0; y < k.width(); ++y) {
            for (int x = 0; x < k.width(); ++x) {
                buf[static_cast<std::size_t>(y) * n + x] = k.values[static_cast<std::size_t>(y) * k.width() + x];
            }
        }
    };
    load(a);
    fftw_execute(fwd_a);
    load(m);
    fftw_execute(fwd_m);
    for (std::size_t i = 0; i < cplx_size; ++i) {
        const std::complex<double> pa(spec_a[i][0], spec_a[i][1]);
        const std::complex<double> pm(spec_m[i][0], spec_m[i][1]);
        const auto prod = pa * pm;
        spec_a[i][0] = prod.real();
        spec_a[i][1] = prod.imag();
    }
    fftw_execute(inv);
    {
        std::lock_guard<std::mutex> lock(detail::planner_mutex());
        fftw_destroy_plan(fwd_a);
        fftw_destroy_plan(fwd_m);
        fftw_destroy_plan(inv);
    }
    const double scale = 1.0 / static_cast<double>(real_size);
    for (int y = 0; y < w; ++y) {
        for (int x = 0; x < w; ++x) {
            out.values[static_cast<std::size_t>(y) * w + x] =
                std::max(0.0, buf[static_cast<std::size_t>(y) * n + x] * scale);
        }
    }
    return out;
}

std::size_t nonzeros(const Kernel2D& k) {
    return static_cast<std::size_t>(std::count_if(k.values.begin(), k.values.end(), [](double v) { return v != 0.0; }));
}

}  // namespace

Kernel2D convolve_kernels(const Kernel2D& a, const Kernel2D& m) {
    if (std::abs(a.pitch - m.pitch) > 1e-9 * std::max(a.pitch, m.pitch)) {
        throw GeometryError("kernel pitches differ");
    }
    const double work = static_cast<double>(std::min(nonzeros(a), nonzeros(m))) *
                        static_cast<double>(std::max(a.values.size(), m.values.size()));
    if (work < 5e7) {
        return nonzeros(m) <= nonzeros(a) ? convolve_direct(a, m) : convolve_direct(m, a);
    }
    return convolve_fft(a, m);
}

Kernel2D modified_psf(const Kernel2D& a, const Kernel2D& m) {
    Kernel2D out = convolve_kernels(a, m);
    // Normalised inputs give a normalised product; rescaling would only add round-off.
    if (std::abs(out.sum() - 1.0) > 1e-12) out.normalize();
    return out;
}

}  // namespace nvwire
