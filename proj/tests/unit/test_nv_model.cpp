#include "doctest.h"

#include "nvwire/errors.hpp"
#include "nvwire/nv_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace nvwire;

namespace {

constexpr double kDeg = constants::kPi / 180.0;

// Field of magnitude `gauss` at angle `theta` from `axis` (rotated about an orthogonal direction).
Vec3 field_at_angle(const Vec3& axis, double gauss, double theta) {
    Vec3 ortho = axis.unitOrthogonal();
    return gauss * constants::kGauss * (std::cos(theta) * axis + std::sin(theta) * ortho);
}

// Eigenvalues of the spin Hamiltonian from the trigonometric cubic solution,
// independent of any matrix library. Returns transition frequencies from
// the middle level, sorted.
std::pair<double, double> cubic_oracle(double b_par, double b_perp, const NVParams& p) {
    const double d = p.d_zfs;
    const double z = p.gamma * b_par;
    const double x = p.gamma * b_perp;
    // H = [[D+z, x/√2, 0], [x/√2, 0, x/√2], [0, x/√2, D−z]]
    const double c2 = -(2 * d);
    const double c1 = (d + z) * (d - z) - x * x;
    const double c0 = 0.5 * x * x * (2 * d);  // −det
    // λ³ + c2 λ² + c1 λ + c0 = 0
    const double shift = -c2 / 3.0;
    const double pp = c1 - c2 * c2 / 3.0;
    const double qq = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    const double r = 2.0 * std::sqrt(-pp / 3.0);
    const double phi = std::acos(std::clamp(3.0 * qq / (pp * r), -1.0, 1.0)) / 3.0;
    double l[3];
    for (int k = 0; k < 3; ++k) l[k] = shift + r * std::cos(phi - 2.0 * constants::kPi * k / 3.0);
    std::sort(l, l + 3);
    // The m_s = 0-like level is the lowest one for fields well below D/gamma.
    return {l[1] - l[0], l[2] - l[0]};
}

}  // namespace

TEST_SUITE("nv_model") {
    TEST_CASE("axis set invariants") {
        const auto& ax = nv_axes_crystal();
        Vec3 sum = Vec3::Zero();
        for (int i = 0; i < 4; ++i) {
            sum += ax[i];
            CHECK(ax[i].norm() == doctest::Approx(1.0).epsilon(1e-15));
            for (int j = i + 1; j < 4; ++j) CHECK(ax[i].dot(ax[j]) == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
        }
        CHECK(sum.norm() < 1e-15);
        const auto& lab = nv_axes_lab();
        CHECK(lab[0].x() == doctest::Approx(std::sqrt(2.0 / 3.0)));
        CHECK(std::abs(lab[0].y()) < 1e-15);
        CHECK(lab[0].z() == doctest::Approx(-1.0 / std::sqrt(3.0)));
        CHECK(lab[2].y() == doctest::Approx(std::sqrt(2.0 / 3.0)));
        CHECK((crystal_to_lab() * crystal_to_lab().transpose() - Mat3::Identity()).norm() < 1e-15);
    }

    TEST_CASE("zero field gives the zero-field splitting") {
        NVParams p;
        const auto r = resonance_freqs(Vec3::Zero(), nv_axes_crystal()[0], p);
        CHECK(r.f_minus == 2.87e9);
        CHECK(r.f_plus == 2.87e9);
        const auto e = exact_resonances(Vec3::Zero(), nv_axes_crystal()[0], p);
        CHECK(e.f_minus == doctest::Approx(2.87e9).epsilon(1e-15));
        CHECK(e.f_plus == doctest::Approx(2.87e9).epsilon(1e-15));
    }

    TEST_CASE("field along the axis shifts by gamma |B|") {
        NVParams p;
        const Vec3 a = nv_axes_crystal()[1];
        const auto r = resonance_freqs(10 * constants::kGauss * a, a, p);
        CHECK(std::abs(r.f_minus - (2.87e9 - 28.025e6)) < 1e-3);
        CHECK(std::abs(r.f_plus - (2.87e9 + 28.025e6)) < 1e-3);
        for (double g : {1.0, 37.0, 250.0, 777.0}) {
            const auto e = exact_resonances(-g * constants::kGauss * a, a, p);
            // a is unit only to round-off, so allow a few ulp of the shift
            CHECK(std::abs(e.f_minus - (p.d_zfs - p.gamma * g * constants::kGauss)) < 1e-6);
            CHECK(std::abs(e.f_plus - (p.d_zfs + p.gamma * g * constants::kGauss)) < 1e-6);
        }
    }

    TEST_CASE("expansion agrees with the eigen-solve at 50 G, 30 degrees") {
        NVParams p;
        const Vec3 a = nv_axes_crystal()[0];
        const Vec3 b = field_at_angle(a, 50.0, 30 * kDeg);
        const auto r = resonance_freqs(b, a, p);
        const auto e = exact_resonances(b, a, p);
        CHECK(std::abs(r.f_minus - e.f_minus) <= 100e3);
        CHECK(std::abs(r.f_plus - e.f_plus) <= 100e3);
    }

    TEST_CASE("eigen-solve matches the closed-form cubic") {
        NVParams p;
        const Vec3 a = nv_axes_crystal()[2];
        for (double g : {5.0, 50.0, 300.0}) {
            for (double th : {5.0, 30.0, 60.0, 89.0, 90.0, 120.0}) {
                const Vec3 b = field_at_angle(a, g, th * kDeg);
                const auto e = exact_resonances(b, a, p);
                const auto o = cubic_oracle(b.dot(a), b.cross(a).norm(), p);
                CHECK(std::abs(e.f_minus - o.first) < 1.0);
                CHECK(std::abs(e.f_plus - o.second) < 1.0);
            }
        }
    }

    TEST_CASE("the singular band and strong fields are refused") {
        NVParams p;
        const Vec3 a = nv_axes_crystal()[0];
        CHECK_THROWS_AS(resonance_freqs(field_at_angle(a, 50, 90 * kDeg), a, p), ExpansionDomainError);
        CHECK_THROWS_AS(resonance_freqs(field_at_angle(a, 50, 90 * kDeg + 5e-4), a, p), ExpansionDomainError);
        CHECK_NOTHROW(resonance_freqs(field_at_angle(a, 50, 90 * kDeg + 2e-3), a, p));
        CHECK_THROWS_AS(resonance_freqs(field_at_angle(a, 320, 20 * kDeg), a, p), ExpansionDomainError);
        const auto e = exact_resonances(field_at_angle(a, 50, 90 * kDeg), a, p);
        CHECK(std::isfinite(e.f_minus));
        CHECK(std::isfinite(e.f_plus));
        CHECK(e.f_minus <= e.f_plus);
    }

    TEST_CASE("expansion consistency over the angle grid") {
        NVParams p;
        const Vec3 a = nv_axes_crystal()[3];
        double worst = 0.0;
        for (double g = 0.0; g <= 50.0; g += 2.5) {
            for (double th = 0.0; th <= 180.0; th += 5.0) {
                if (th == 90.0) continue;
                const Vec3 b = field_at_angle(a, g, th * kDeg);
                const auto r = resonance_freqs(b, a, p);
                const auto e = exact_resonances(b, a, p);
                const double lo = std::min(r.f_minus, r.f_plus);
                const double hi = std::max(r.f_minus, r.f_plus);
                worst = std::max({worst, std::abs(lo - e.f_minus), std::abs(hi - e.f_plus)});
            }
        }
        CHECK(worst <= 100e3);
        for (double g = 0.0; g <= 500.0; g += 10.0) {
            const Vec3 b = g * constants::kGauss * a;
            const auto r = resonance_freqs(b, a, p);
            const auto e = exact_resonances(b, a, p);
            CHECK(std::abs(r.f_minus - e.f_minus) <= 1.0);
            CHECK(std::abs(r.f_plus - e.f_plus) <= 1.0);
            CHECK(std::abs(r.f_plus + r.f_minus - 2 * p.d_zfs) <= 1e-6);
        }
    }

    TEST_CASE("upper branch grows with the field along the axis") {
        NVParams p;
        const Vec3 a = nv_axes_crystal()[0];
        double previous = 0.0;
        for (double g = 0.0; g <= 500.0; g += 1.0) {
            const double f = resonance_freqs(g * constants::kGauss * a, a, p).f_plus;
            CHECK(f > previous);
            previous = f;
        }
    }

    TEST_CASE("tracked eigen-solve follows the m_s = -1 level") {
        NVParams p;
        const Vec3 a = nv_axes_crystal()[0];
        const Vec3 b = field_at_angle(a, 400, 150 * kDeg);
        const auto t = exact_resonances_tracked(b, a, p);
        const auto s = exact_resonances(b, a, p);
        CHECK(t.f_minus > p.d_zfs);
        CHECK(t.f_minus == doctest::Approx(s.f_plus));
        const Vec3 small = field_at_angle(a, 40, 150 * kDeg);
        const auto te = exact_resonances_tracked(small, a, p);
        const auto ex = resonance_freqs(small, a, p);
        CHECK(std::abs(te.f_minus - ex.f_minus) < 100e3);
        CHECK(std::abs(te.f_plus - ex.f_plus) < 100e3);
        const auto fb = resonances_with_fallback(field_at_angle(a, 50, 90 * kDeg), a, p);
        CHECK(std::isfinite(fb.f_minus));
    }

    TEST_CASE("lineshape as printed") {
        NVParams p;
        const double f0 = 2.85e9;
        CHECK(lineshape(f0, f0, p) == 0.0);
        CHECK(std::abs(lineshape(f0 + 10 * p.linewidth_sigma, f0, p) - p.contrast) < 1e-12);
        const double half = p.linewidth_sigma * std::sqrt(2 * std::log(2.0));
        CHECK(lineshape(f0 - half, f0, p) == doctest::Approx(p.contrast / 2).epsilon(1e-12));
        std::vector<double> grid;
        for (int k = -300; k <= 300; ++k) grid.push_back(f0 + k * 1e5);
        const auto s = odmr_spectrum(grid, f0 + 3.3e6, p);
        for (double v : s) {
            CHECK(v >= 0.0);
            CHECK(v <= p.contrast);
        }
        std::swap(grid[3], grid[4]);
        CHECK_THROWS_AS(odmr_spectrum(grid, f0, p), InvalidArgumentError);
    }

    TEST_CASE("conventional dip lineshape") {
        NVParams p;
        p.lineshape = LineshapeMode::conventional_dip;
        CHECK(lineshape(1e9, 1e9, p) == doctest::Approx(1 - p.contrast));
        CHECK(lineshape(1e9 + 20 * p.linewidth_sigma, 1e9, p) == doctest::Approx(1.0));
    }

    TEST_CASE("projection") {
        const Vec3 a = nv_axes_crystal()[0];
        CHECK(project_field(Vec3(0, 0, 3.0), a) == doctest::Approx(3.0 / std::sqrt(3.0)));
        CHECK(std::abs(project_field(a.unitOrthogonal(), a)) < 1e-15);
        std::mt19937_64 rng(11);
        std::normal_distribution<double> n;
        for (int i = 0; i < 100; ++i) {
            const Vec3 b(n(rng), n(rng), n(rng));
            CHECK(std::abs(project_field(b, a)) <= b.norm() * (1 + 1e-15));
        }
    }

    TEST_CASE("vector reconstruction round trip") {
        PlaneLattice l;
        l.pitch = 1e-7;
        l.nx = 2;
        l.ny = 1;
        const Vec3 b_lab = Vec3(1, 2, 3) * constants::kGauss;
        const Vec3 b_crys = crystal_to_lab().transpose() * b_lab;
        std::vector<AxisMap> maps;
        for (const auto& a : nv_axes_crystal()) {
            maps.push_back({a, l, {project_field(b_crys, a), 0.0}});
        }
        const auto r = vector_reconstruct(maps);
        CHECK((r.b[0] - b_lab).norm() <= 1e-10 * b_lab.norm());
        CHECK(r.residual[0] < 1e-18);
        // Three axes: square system.
        const auto r3 = vector_reconstruct(std::span<const AxisMap>(maps.data(), 3));
        CHECK((r3.b[0] - b_lab).norm() <= 1e-10 * b_lab.norm());
        CHECK(r3.residual[0] < 1e-18);
    }

    TEST_CASE("equal projections reconstruct to zero") {
        PlaneLattice l;
        l.pitch = 1e-7;
        l.nx = 1;
        l.ny = 1;
        const double p = 7e-4;
        std::vector<AxisMap> maps;
        for (const auto& a : nv_axes_crystal()) maps.push_back({a, l, {p}});
        const auto r = vector_reconstruct(maps);
        CHECK(r.b[0].norm() < 1e-18);
        CHECK(r.residual[0] == doctest::Approx(p));
    }

    TEST_CASE("reconstruction errors") {
        PlaneLattice l;
        l.pitch = 1e-7;
        l.nx = 1;
        l.ny = 1;
        std::vector<AxisMap> maps;
        for (int i = 0; i < 2; ++i) maps.push_back({nv_axes_crystal()[i], l, {0.0}});
        CHECK_THROWS_AS(vector_reconstruct(maps), UnderdeterminedError);
        PlaneLattice other = l;
        other.x0 = 5e-7;
        maps.push_back({nv_axes_crystal()[2], other, {0.0}});
        CHECK_THROWS_AS(vector_reconstruct(maps), GeometryError);
        maps[2].lattice = l;
        maps[2].values = {std::numeric_limits<double>::quiet_NaN()};
        const auto r = vector_reconstruct(maps);
        CHECK(std::isnan(r.b[0].x()));
    }

    TEST_CASE("parameter validation") {
        NVParams p;
        p.contrast = 1.5;
        CHECK_THROWS_AS(p.validate(), InvalidArgumentError);
        p = NVParams{};
        p.linewidth_sigma = 0;
        CHECK_THROWS_AS(p.validate(), InvalidArgumentError);
    }
}
