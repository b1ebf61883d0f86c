#include "nvwire/nv_model.hpp"

#include "nvwire/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nvwire {

void NVParams::validate() const {
    if (!(d_zfs > 0.0)) throw InvalidArgumentError("d_zfs must be positive");
    if (!(gamma > 0.0)) throw InvalidArgumentError("gamma must be positive");
    if (!(linewidth_sigma > 0.0)) throw InvalidArgumentError("linewidth_sigma must be positive");
    if (!(contrast > 0.0 && contrast < 1.0)) throw InvalidArgumentError("contrast must lie in (0, 1)");
    if (!(window_half > 0.0)) throw InvalidArgumentError("window_half must be positive");
    if (!(depth >= 0.0)) throw InvalidArgumentError("depth must be non-negative");
    if (!(site_pitch > 0.0)) throw InvalidArgumentError("site_pitch must be positive");
}

const std::array<Vec3, 4>& nv_axes_crystal() {
    static const std::array<Vec3, 4> axes = [] {
        const double s = 1.0 / std::sqrt(3.0);
        return std::array<Vec3, 4>{Vec3(1, 1, 1) * s, Vec3(1, -1, -1) * s, Vec3(-1, -1, 1) * s,
                                   Vec3(-1, 1, -1) * s};
    }();
    return axes;
}

const Mat3& crystal_to_lab() {
    static const Mat3 r = [] {
        const double s = 1.0 / std::sqrt(2.0);
        Mat3 m;
        m.row(0) = Vec3(0, s, s).transpose();
        m.row(1) = Vec3(0, -s, s).transpose();
        m.row(2) = Vec3(-1, 0, 0).transpose();
        return m;
    }();
    return r;
}

const std::array<Vec3, 4>& nv_axes_lab() {
    static const std::array<Vec3, 4> axes = [] {
        std::array<Vec3, 4> out;
        for (int i = 0; i < 4; ++i) {
            out[i] = crystal_to_lab() * nv_axes_crystal()[i];
        }
        return out;
    }();
    return axes;
}

namespace {

struct AxisComponents {
    double along;   // b·axis
    double across;  // |b × axis| (≥ 0)
    double mag;
};

AxisComponents decompose(const Vec3& b, const Vec3& axis) {
    const double mag = b.norm();
    double across = b.cross(axis).norm();
    // Fields built as a multiple of the axis leave round-off in the cross product.
    if (across <= 1e-14 * mag) across = 0.0;
    return {b.dot(axis), across, mag};
}

// Eigen-decomposition of the spin Hamiltonian in the basis (|+1>, |0>, |-1>).
Eigen::SelfAdjointEigenSolver<Mat3> solve_spin(const Vec3& b, const Vec3& axis, const NVParams& p) {
    const auto c = decompose(b, axis);
    const double bz = p.gamma * c.along;
    const double bx = p.gamma * c.across / std::sqrt(2.0);
    Mat3 h;
    h << p.d_zfs + bz, bx, 0.0,
         bx, 0.0, bx,
         0.0, bx, p.d_zfs - bz;
    return Eigen::SelfAdjointEigenSolver<Mat3>(h);
}

}  // namespace

double field_angle(const Vec3& b, const Vec3& axis) {
    const auto c = decompose(b, axis);
    if (c.mag == 0.0) {
        return 0.0;
    }
    return std::atan2(c.across, c.along);
}

ResonancePair resonance_freqs(const Vec3& b, const Vec3& axis, const NVParams& p) {
    const auto c = decompose(b, axis);
    const double x = p.gamma * c.mag / p.d_zfs;
    if (c.mag == 0.0) {
        return {p.d_zfs, p.d_zfs};
    }
    if (c.across == 0.0) {
        const double s = c.along > 0.0 ? 1.0 : -1.0;
        return {p.d_zfs * (1.0 - s * x), p.d_zfs * (1.0 + s * x)};
    }
    const double theta = std::atan2(c.across, c.along);
    if (x >= 0.3) {
        throw ExpansionDomainError("field too large for the perturbative resonance formula (gamma*|B|/D = " +
                                   std::to_string(x) + " >= 0.3); use exact_resonances");
    }
    if (std::abs(theta - 0.5 * constants::kPi) < 1e-3) {
        throw ExpansionDomainError("field angle within 1e-3 rad of 90 degrees to the NV axis; use exact_resonances");
    }
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    const double first = x * cs;
    const double second = 1.5 * x * x * sn * sn;
    const double third = x * x * x * (sn * sn * sn * std::tan(theta) / 8.0 - sn * sn * cs / 2.0);
    return {p.d_zfs * (1.0 - first + second - third), p.d_zfs * (1.0 + first + second + third)};
}

ResonancePair exact_resonances(const Vec3& b, const Vec3& axis, const NVParams& p) {
    const auto c = decompose(b, axis);
    if (c.across == 0.0) {
        const double shift = p.gamma * std::abs(c.along);
        return {p.d_zfs - shift, p.d_zfs + shift};
    }
    const auto es = solve_spin(b, axis, p);
    const auto& v = es.eigenvectors();
    int zero = 0;
    for (int i = 1; i < 3; ++i) {
        if (std::abs(v(1, i)) > std::abs(v(1, zero))) zero = i;
    }
    std::array<double, 2> f{};
    int n = 0;
    for (int i = 0; i < 3; ++i) {
        if (i != zero) f[n++] = es.eigenvalues()[i] - es.eigenvalues()[zero];
    }
    if (f[0] > f[1]) std::swap(f[0], f[1]);
    return {f[0], f[1]};
}

ResonancePair exact_resonances_tracked(const Vec3& b, const Vec3& axis, const NVParams& p) {
    const auto c = decompose(b, axis);
    if (c.across == 0.0) {
        return {p.d_zfs - p.gamma * c.along, p.d_zfs + p.gamma * c.along};
    }
    const auto es = solve_spin(b, axis, p);
    const auto& v = es.eigenvectors();
    int zero = 0;
    for (int i = 1; i < 3; ++i) {
        if (std::abs(v(1, i)) > std::abs(v(1, zero))) zero = i;
    }
    int a = zero == 0 ? 1 : 0;
    int other = 3 - zero - a;
    // Row 2 is |m_s = -1>.
    const double wa = v(2, a) * v(2, a);
    const double wo = v(2, other) * v(2, other);
    const double fa = es.eigenvalues()[a] - es.eigenvalues()[zero];
    const double fo = es.eigenvalues()[other] - es.eigenvalues()[zero];
    if (wa == wo) {
        return {std::min(fa, fo), std::max(fa, fo)};
    }
    return wa > wo ? ResonancePair{fa, fo} : ResonancePair{fo, fa};
}

ResonancePair resonances_with_fallback(const Vec3& b, const Vec3& axis, const NVParams& p) {
    try {
        return resonance_freqs(b, axis, p);
    } catch (const ExpansionDomainError&) {
        return exact_resonances_tracked(b, axis, p);
    }
}

double lineshape(double f, double f_res, const NVParams& p) {
    const double d = f - f_res;
    const double g = std::exp(-d * d / (2.0 * p.linewidth_sigma * p.linewidth_sigma));
    if (p.lineshape == LineshapeMode::as_printed) {
        return p.contrast * (1.0 - g);
    }
    return 1.0 - p.contrast * g;
}

std::vector<double> odmr_spectrum(std::span<const double> f_grid, double f_res, const NVParams& p) {
    for (std::size_t k = 1; k < f_grid.size(); ++k) {
        if (!(f_grid[k] > f_grid[k - 1])) {
            throw InvalidArgumentError("frequency grid must be strictly increasing (index " + std::to_string(k) + ")");
        }
    }
    std::vector<double> out(f_grid.size());
    for (std::size_t k = 0; k < f_grid.size(); ++k) {
        out[k] = lineshape(f_grid[k], f_res, p);
    }
    return out;
}

VectorMap vector_reconstruct(std::span<const AxisMap> maps) {
    if (maps.size() < 3) {
        throw UnderdeterminedError("vector reconstruction needs at least 3 axis maps, got " +
                                   std::to_string(maps.size()));
    }
    const auto& lattice = maps.front().lattice;
    Eigen::MatrixXd a(static_cast<Eigen::Index>(maps.size()), 3);
    for (std::size_t n = 0; n < maps.size(); ++n) {
        if (!maps[n].lattice.same_geometry(lattice)) {
            throw GeometryError("axis map " + std::to_string(n) + " lies on a different lattice than map 0");
        }
        if (maps[n].values.size() != lattice.size()) {
            throw GeometryError("axis map " + std::to_string(n) + " has " + std::to_string(maps[n].values.size()) +
                                " values for " + std::to_string(lattice.size()) + " pixels");
        }
        a.row(static_cast<Eigen::Index>(n)) = maps[n].axis.normalized().transpose();
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < 3) {
        throw UnderdeterminedError("axis directions do not span three dimensions");
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    VectorMap out{lattice, std::vector<Vec3>(lattice.size()), std::vector<double>(lattice.size())};
    Eigen::VectorXd rhs(a.rows());
    for (std::size_t px = 0; px < lattice.size(); ++px) {
        bool ok = true;
        for (std::size_t n = 0; n < maps.size(); ++n) {
            rhs[static_cast<Eigen::Index>(n)] = maps[n].values[px];
            ok = ok && std::isfinite(maps[n].values[px]);
        }
        if (!ok) {
            out.b[px] = Vec3::Constant(nan);
            out.residual[px] = nan;
            continue;
        }
        const Vec3 bc = qr.solve(rhs);
        out.b[px] = crystal_to_lab() * bc;
        out.residual[px] = std::sqrt((a * bc - rhs).squaredNorm() / static_cast<double>(maps.size()));
    }
    return out;
}

}  // namespace nvwire
