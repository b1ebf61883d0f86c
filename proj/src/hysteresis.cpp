#include "nvwire/hysteresis.hpp"

#include "nvwire/errors.hpp"

#include <cmath>

namespace nvwire {

namespace {

void require_monotone(std::span<const double> h) {
    bool up = true;
    bool down = true;
    for (std::size_t i = 1; i < h.size(); ++i) {
        up = up && h[i] > h[i - 1];
        down = down && h[i] < h[i - 1];
    }
    if (!up && !down) throw InvalidArgumentError("field sweep must be strictly monotone");
}

}  // namespace

HysteresisCurve hysteresis_curve(std::span<const HysteresisFrame> series, std::span<const double> lengths) {
    if (series.size() < 3) throw InvalidArgumentError("hysteresis curve needs at least 3 field points");
    std::vector<double> h;
    for (const auto& f : series) h.push_back(f.h_ext);
    require_monotone(h);

    HysteresisCurve c;
    for (const auto& f : series) {
        const auto e = estimate_magnetization(f.map, f.templates, lengths);
        c.points.push_back({f.h_ext, e.m_norm, e.scales});
    }
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        const auto& a = c.points[i];
        if (a.m_norm == 0.0) {
            c.crossing_field = a.h_ext;
            break;
        }
        if (i + 1 == c.points.size()) break;
        const auto& b = c.points[i + 1];
        if ((a.m_norm > 0.0) != (b.m_norm > 0.0) && b.m_norm != 0.0) {
            const double t = a.m_norm / (a.m_norm - b.m_norm);
            c.crossing_field = a.h_ext + t * (b.h_ext - a.h_ext);
            break;
        }
    }
    if (c.in_range()) c.coercivity = std::abs(c.crossing_field);
    return c;
}

HysteresisRun simulate_hysteresis(const WireSpec& spec, const SwitchingModel& model, std::span<const double> sweep,
                                  const ForwardConfig& cfg, const Vec3* drive) {
    spec.validate();
    if (model.coercivity.size() != spec.segments.size()) {
        throw InvalidArgumentError("switching model needs one coercive field per segment");
    }
    for (double hc : model.coercivity) {
        if (!(hc >= 0.0)) throw InvalidArgumentError("coercive fields must be non-negative");
    }
    require_monotone(sweep);
    const Vec3 axis = spec.axis.normalized();
    const Vec3 dir = drive ? drive->normalized() : axis;
    if (!dir.allFinite()) throw InvalidArgumentError("drive direction must be non-zero");

    std::vector<double> lengths;
    for (const auto& s : spec.segments) lengths.push_back(s.length);

    // The site lattice does not depend on the bias, so the unit fields are shared.
    auto base = prepare_imaging(cfg.scene, cfg.nv, cfg.optics);
    const auto basis = wire_basis(spec, base);

    HysteresisRun run;
    std::vector<double> scale;
    for (const auto& s : spec.segments) scale.push_back(s.scale);
    for (double h : sweep) {
        const double h_axis = h * dir.dot(axis);
        for (std::size_t i = 0; i < scale.size(); ++i) {
            if (scale[i] * h_axis < 0.0 && std::abs(h_axis) > model.coercivity[i]) scale[i] = -scale[i];
        }
        SceneConfig scene = cfg.scene;
        scene.bias_vector = cfg.scene.bias() + h * dir;
        const auto setup = prepare_imaging(scene, cfg.nv, cfg.optics);

        HysteresisFrame frame;
        frame.h_ext = h;
        std::vector<double> coeffs(scale.size());
        for (std::size_t i = 0; i < scale.size(); ++i) {
            coeffs[i] = spec.segments[i].material.ms * scale[i];
        }
        frame.map = render_map(setup, basis.unit_fields, coeffs, cfg.fit);
        for (std::size_t i = 0; i < scale.size(); ++i) {
            std::vector<double> unit(scale.size(), 0.0);
            unit[i] = spec.segments[i].material.ms;
            frame.templates.push_back(render_map(setup, basis.unit_fields, unit, cfg.fit));
        }
        run.frames.push_back(std::move(frame));
        run.segment_scales.push_back(scale);
    }
    run.curve = hysteresis_curve(run.frames, lengths);
    return run;
}

}  // namespace nvwire
