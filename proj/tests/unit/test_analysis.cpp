#include "doctest.h"

#include "nvwire/analysis.hpp"
#include "nvwire/errors.hpp"
#include "nvwire/hysteresis.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace nvwire;

namespace {

MapSet synthetic_map(double x0, double y0, double pitch, int nx, int ny,
                     const std::function<double(double, double)>& f) {
    MapSet m;
    m.lattice = PlaneLattice{x0, y0, 0.0, pitch, nx, ny};
    const std::size_t n = m.lattice.size();
    m.b_parallel.resize(n);
    m.contrast.assign(n, 0.01);
    m.linewidth.assign(n, 6e6);
    m.fit_ok.assign(n, 1);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) m.b_parallel[m.lattice.index(i, j)] = f(m.lattice.x(i), m.lattice.y(j));
    }
    return m;
}

// derivative-of-Gaussian lobe pair along x; extrema at x0 ± w
double lobe(double x, double x0, double w, double amp) {
    const double u = (x - x0) / w;
    return amp * u * std::exp(0.5 - 0.5 * u * u);
}

double ridge(double y) { return std::exp(-y * y / (2.0 * 0.5e-6 * 0.5e-6)); }

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("line sampling takes the nearest pixel and skips invalid ones") {
    auto m = synthetic_map(-1e-6, -1e-6, 100e-9, 21, 21, [](double x, double y) { return x + 10.0 * y; });
    m.fit_ok[m.lattice.index(12, 10)] = 0;
    const auto p = sample_line(m, AxisLine{Vec3(0.0, 0.02e-6, 0.0), Vec3(2.0, 0.0, 0.0)});
    REQUIRE(p.s.size() == 20);
    for (std::size_t k = 0; k < p.s.size(); ++k) {
        // row j = 10 is y = 0
        CHECK(p.b[k] == doctest::Approx(p.s[k]).epsilon(1e-9));
        CHECK(std::abs(p.s[k] - 0.2e-6) > 1e-9);
    }
    CHECK_THROWS_AS(sample_line(m, AxisLine{Vec3::Zero(), Vec3::UnitZ()}), InvalidArgumentError);
}

TEST_CASE("noise floor is a multiple of the off-wire population deviation") {
    std::mt19937 rng(7);
    std::normal_distribution<double> g(0.0, 1e-5);
    auto m = synthetic_map(-5e-6, -5e-6, 250e-9, 41, 41, [&](double, double) { return g(rng); });
    double s = 0.0, s2 = 0.0;
    int n = 0;
    for (int j = 0; j < 41; ++j) {
        for (int i = 0; i < 41; ++i) {
            if (std::abs(m.lattice.y(j)) <= 3e-6) continue;
            const double v = m.b_parallel[m.lattice.index(i, j)];
            s += v;
            s2 += v * v;
            ++n;
        }
    }
    const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
    CHECK(feature_noise_floor(m, AxisLine{}) == doctest::Approx(3.0 * sd).epsilon(1e-9));
    FeatureOptions o;
    o.noise_factor = 2.0;
    CHECK(feature_noise_floor(m, AxisLine{}, o) == doctest::Approx(2.0 * sd).epsilon(1e-9));
    o.noise_floor = 4e-6;
    CHECK(feature_noise_floor(m, AxisLine{}, o) == 4e-6);
    o.noise_floor = -1.0;
    CHECK_THROWS_AS(feature_noise_floor(m, AxisLine{}, o), InvalidArgumentError);
}

TEST_CASE("2 um lobe pair gives one feature with the analytic size and peak") {
    const double amp = 3e-4;
    // centre off the pixel grid so the peak refinement matters
    const double x0 = 0.037e-6;
    auto m = synthetic_map(-8e-6, -5e-6, 100e-9, 161, 101,
                           [&](double x, double y) { return lobe(x, x0, 1e-6, amp) * ridge(y); });
    const auto f = extract_dipole_features(m, AxisLine{});
    REQUIRE(f.size() == 1);
    CHECK(f[0].dipole_size == doctest::Approx(2e-6).epsilon(2e-3));
    CHECK(f[0].location == doctest::Approx(x0).epsilon(0.05));
    CHECK(f[0].max_abs == doctest::Approx(amp).epsilon(1e-3));
    CHECK(f[0].pos_at > f[0].neg_at);
    CHECK(f[0].orientation == -1);
    CHECK(f[0].peak_pos == doctest::Approx(amp).epsilon(1e-3));
    CHECK(f[0].peak_neg == doctest::Approx(-amp).epsilon(1e-3));
}

TEST_CASE("neighbouring opposite lobes share peaks") {
    // + at -2 um, - at 0, + at +2 um
    auto m = synthetic_map(-6e-6, -5e-6, 100e-9, 121, 101, [](double x, double y) {
        const double w = 0.5e-6;
        return (std::exp(-std::pow((x + 2e-6) / w, 2)) - 1.5 * std::exp(-std::pow(x / w, 2)) +
                std::exp(-std::pow((x - 2e-6) / w, 2))) *
               1e-4 * ridge(y);
    });
    const auto f = extract_dipole_features(m, AxisLine{});
    REQUIRE(f.size() == 2);
    CHECK(f[0].orientation == 1);
    CHECK(f[1].orientation == -1);
    CHECK(f[0].peak_neg == f[1].peak_neg);
    CHECK(f[0].neg_at == f[1].neg_at);
    CHECK(f[0].dipole_size == doctest::Approx(2e-6).epsilon(1e-6));
    CHECK(f[0].max_abs == doctest::Approx(1.5e-4).epsilon(1e-6));
}

TEST_CASE("peaks under the floor and same-sign runs are not features") {
    auto m = synthetic_map(-6e-6, -5e-6, 100e-9, 121, 101, [](double x, double y) {
        return lobe(x, 0.0, 1e-6, 1e-5) * ridge(y);
    });
    FeatureOptions o;
    o.noise_floor = 2e-5;
    CHECK(extract_dipole_features(m, AxisLine{}, o).empty());
    o.noise_floor = 5e-6;
    CHECK(extract_dipole_features(m, AxisLine{}, o).size() == 1);

    auto two_pos = synthetic_map(-6e-6, -5e-6, 100e-9, 121, 101, [](double x, double y) {
        return (std::exp(-std::pow((x + 2e-6) / 0.5e-6, 2)) + std::exp(-std::pow((x - 2e-6) / 0.5e-6, 2))) * 1e-4 *
               ridge(y);
    });
    o.noise_floor = 1e-6;
    CHECK(extract_dipole_features(two_pos, AxisLine{}, o).empty());
}

TEST_CASE("plateaus count once and end samples are one-sided extrema") {
    // values along y = 0: 0 ... ramp to a flat top, then a monotone fall to the edge
    auto m = synthetic_map(0.0, 0.0, 1e-6, 9, 1, [](double x, double) {
        const double v[9] = {0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0, -1.0, -2.0};
        return v[static_cast<int>(std::lround(x * 1e6))];
    });
    FeatureOptions o;
    o.noise_floor = 0.5;
    const auto f = extract_dipole_features(m, AxisLine{}, o);
    REQUIRE(f.size() == 1);
    CHECK(f[0].pos_at == doctest::Approx(2e-6));
    CHECK(f[0].neg_at == doctest::Approx(8e-6));
    CHECK(f[0].dipole_size == doctest::Approx(6e-6));
    CHECK(f[0].max_abs == 2.0);
}

TEST_CASE("grid ranges hit their decimal literals") {
    const auto ms = GridRange{0.5e6, 2.0e6, 0.05e6}.values();
    CHECK(ms.size() == 31);
    CHECK(std::find(ms.begin(), ms.end(), 1.2e6) != ms.end());
    CHECK(ms.back() == 2.0e6);
    const auto d = GridRange{120e-9, 240e-9, 4e-9}.values();
    CHECK(d.size() == 31);
    CHECK(std::find(d.begin(), d.end(), 172e-9) != d.end());
    CHECK(GridRange{1.0, 1.0, 0.5}.values().size() == 1);
    CHECK_THROWS_AS(GridRange({1.0, 0.0, 0.5}).values(), InvalidArgumentError);
    CHECK_THROWS_AS(GridRange({0.0, 1.0, 0.0}).values(), InvalidArgumentError);
}

TEST_CASE("closed loop fit recovers an on-grid truth with zero objective") {
    WireSpec w;
    w.diameter = 172e-9;
    w.segments = {{material_fe(), 4e-6}};
    w.origin = Vec3(-2e-6, 0.0, 0.0);
    ForwardConfig cfg;
    cfg.scene.fov_width = 10e-6;
    cfg.scene.fov_height = 6e-6;
    const auto meas = simulate_image(w, cfg.scene, cfg.nv, cfg.optics, cfg.fit);

    FitSettings st;
    st.grid.ms = {1.15e6, 1.25e6, 0.05e6};
    st.grid.diameter = {168e-9, 176e-9, 4e-9};
    WireSpec templ = w;
    templ.segments[0].material.ms = 0.9e6;
    templ.diameter = 1e-7;
    const auto r = fit_parameters(meas, templ, AxisLine{}, cfg, st);
    REQUIRE(r.ms_per_material.size() == 1);
    CHECK(r.ms_per_material[0].material == "Fe");
    CHECK(r.ms_per_material[0].ms == 1.2e6);
    CHECK(r.diameter == 172e-9);
    CHECK(r.objective == 0.0);
    CHECK(r.evaluated == 9);
    CHECK(r.skipped == r.skip_reasons.size());

    st.grid.materials = {"Co"};
    CHECK_THROWS_AS(fit_parameters(meas, templ, AxisLine{}, cfg, st), InvalidArgumentError);
}

TEST_CASE("fit on a featureless map fails") {
    WireSpec w;
    w.diameter = 172e-9;
    w.segments = {{material_fe(), 4e-6}};
    w.origin = Vec3(-2e-6, 0.0, 0.0);
    auto flat = synthetic_map(-5e-6, -3e-6, 100e-9, 101, 61, [](double, double) { return 0.0; });
    FitSettings st;
    st.grid.ms = {1.2e6, 1.2e6, 0.05e6};
    st.grid.diameter = {172e-9, 172e-9, 4e-9};
    CHECK_THROWS_AS(fit_parameters(flat, w, AxisLine{}, ForwardConfig{}, st), FitFailureError);
}

TEST_CASE("magnetization estimate is linear in the template scales") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1e-4, 1e-4);
    auto t1 = synthetic_map(0.0, 0.0, 1e-7, 20, 10, [&](double, double) { return u(rng); });
    auto t2 = synthetic_map(0.0, 0.0, 1e-7, 20, 10, [&](double, double) { return u(rng); });
    const std::vector<MapSet> tpl{t1, t2};
    const std::vector<double> len{1e-6, 3e-6};
    auto meas = t1;
    for (std::size_t p = 0; p < meas.b_parallel.size(); ++p) {
        meas.b_parallel[p] = 0.3 * t1.b_parallel[p] - 0.7 * t2.b_parallel[p];
    }
    meas.fit_ok[5] = 0;
    meas.b_parallel[5] = std::nan("");
    const auto e = estimate_magnetization(meas, tpl, len);
    CHECK(e.pixels == 199);
    CHECK(e.scales[0] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(e.scales[1] == doctest::Approx(-0.7).epsilon(1e-9));
    CHECK(e.m_norm == doctest::Approx((0.3 * 1.0 - 0.7 * 3.0) / 4.0).epsilon(1e-9));
    CHECK(e.residual < 1e-15);

    for (std::size_t p = 0; p < meas.b_parallel.size(); ++p) meas.b_parallel[p] = 1.5 * t1.b_parallel[p];
    meas.fit_ok[5] = 1;
    const auto c = estimate_magnetization(meas, tpl, len);
    CHECK(c.raw[0] == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(c.scales[0] == 1.0);
}

TEST_CASE("degenerate or mismatched templates are rejected") {
    auto t1 = synthetic_map(0.0, 0.0, 1e-7, 20, 10, [](double x, double y) { return x - 2.0 * y; });
    auto t2 = t1;
    for (auto& v : t2.b_parallel) v *= 2.0;
    const std::vector<double> len{1e-6, 1e-6};
    CHECK_THROWS_AS(estimate_magnetization(t1, std::vector<MapSet>{t1, t2}, len), DegenerateTemplateError);
    auto shifted = synthetic_map(1e-7, 0.0, 1e-7, 20, 10, [](double, double) { return 1.0; });
    CHECK_THROWS_AS(estimate_magnetization(t1, std::vector<MapSet>{shifted}, std::vector<double>{1e-6}),
                    GeometryError);
    CHECK_THROWS_AS(estimate_magnetization(t1, std::vector<MapSet>{t1}, len), InvalidArgumentError);
    CHECK_THROWS_AS(estimate_magnetization(t1, std::vector<MapSet>{}, std::vector<double>{}), InvalidArgumentError);
}

TEST_CASE("hysteresis crossing interpolates between the bracketing frames") {
    auto t = synthetic_map(0.0, 0.0, 1e-7, 10, 10, [](double x, double y) { return x + 3.0 * y * y; });
    const std::vector<double> len{1e-6};
    std::vector<HysteresisFrame> frames;
    const double h[4] = {-0.01, -0.02, -0.03, -0.04};
    const double s[4] = {1.0, 0.5, -0.5, -1.0};
    for (int k = 0; k < 4; ++k) {
        HysteresisFrame f;
        f.h_ext = h[k];
        f.map = t;
        for (auto& v : f.map.b_parallel) v *= s[k];
        f.templates = {t};
        frames.push_back(f);
    }
    const auto c = hysteresis_curve(frames, len);
    REQUIRE(c.in_range());
    CHECK(c.crossing_field == doctest::Approx(-0.025).epsilon(1e-9));
    CHECK(c.coercivity == doctest::Approx(0.025).epsilon(1e-9));

    for (auto& f : frames) f.map = t;
    const auto none = hysteresis_curve(frames, len);
    CHECK_FALSE(none.in_range());
    CHECK(std::isnan(none.coercivity));

    CHECK_THROWS_AS(hysteresis_curve(std::span(frames).first(2), len), InvalidArgumentError);
    std::swap(frames[1].h_ext, frames[2].h_ext);
    CHECK_THROWS_AS(hysteresis_curve(frames, len), InvalidArgumentError);
}

TEST_CASE("bistable wire switches once its coercive field is passed") {
    WireSpec w;
    w.diameter = 172e-9;
    w.segments = {{material_fe(), 4e-6}};
    w.origin = Vec3(-2e-6, 0.0, 0.0);
    ForwardConfig cfg;
    cfg.scene.fov_width = 8e-6;
    cfg.scene.fov_height = 5e-6;
    const std::vector<double> sweep{-100e-4, -250e-4, -350e-4};
    const auto run = simulate_hysteresis(w, SwitchingModel{{300e-4}}, sweep, cfg);
    REQUIRE(run.frames.size() == 3);
    CHECK(run.segment_scales[1][0] == 1.0);
    CHECK(run.segment_scales[2][0] == -1.0);
    CHECK(run.curve.points[0].m_norm == doctest::Approx(1.0).epsilon(0.05));
    CHECK(run.curve.points[2].m_norm == doctest::Approx(-1.0).epsilon(0.05));
    REQUIRE(run.curve.in_range());
    CHECK(run.curve.crossing_field < -250e-4);
    CHECK(run.curve.crossing_field > -350e-4);

    CHECK_THROWS_AS(simulate_hysteresis(w, SwitchingModel{{}}, sweep, cfg), InvalidArgumentError);
    const std::vector<double> bad{-1e-2, -3e-2, -2e-2};
    CHECK_THROWS_AS(simulate_hysteresis(w, SwitchingModel{{300e-4}}, bad, cfg), InvalidArgumentError);
}

}
