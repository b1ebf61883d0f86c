#include "nvwire/analysis.hpp"

#include "nvwire/errors.hpp"
#include "nvwire/format.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace nvwire {

namespace {

Vec3 unit_in_plane(const Vec3& d) {
    Vec3 u(d.x(), d.y(), 0.0);
    const double n = u.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgumentError("line direction must have an in-plane component");
    return u / n;
}

}  // namespace

LineProfile sample_line(const MapSet& map, const AxisLine& line) {
    const auto& l = map.lattice;
    if (l.size() == 0 || !(l.pitch > 0.0)) throw InvalidArgumentError("map has no pixels");
    const Vec3 u = unit_in_plane(line.direction);
    const double x1 = l.x(l.nx - 1);
    const double y1 = l.y(l.ny - 1);
    // generous range: distance from the line point to the farthest corner
    double reach = 0.0;
    for (double cx : {l.x0, x1}) {
        for (double cy : {l.y0, y1}) reach = std::max(reach, std::hypot(cx - line.point.x(), cy - line.point.y()));
    }
    const long k_max = static_cast<long>(std::ceil(reach / l.pitch)) + 1;
    LineProfile p;
    for (long k = -k_max; k <= k_max; ++k) {
        const double s = static_cast<double>(k) * l.pitch;
        const double x = line.point.x() + s * u.x();
        const double y = line.point.y() + s * u.y();
        const long i = std::lround((x - l.x0) / l.pitch);
        const long j = std::lround((y - l.y0) / l.pitch);
        if (i < 0 || j < 0 || i >= l.nx || j >= l.ny) continue;
        const std::size_t idx = l.index(static_cast<int>(i), static_cast<int>(j));
        if (!map.fit_ok[idx]) continue;
        p.s.push_back(s);
        p.b.push_back(map.b_parallel[idx]);
    }
    return p;
}

double feature_noise_floor(const MapSet& map, const AxisLine& line, const FeatureOptions& opt) {
    if (opt.noise_floor) {
        if (!(*opt.noise_floor >= 0.0)) throw InvalidArgumentError("noise floor must be non-negative");
        return *opt.noise_floor;
    }
    const auto& l = map.lattice;
    const Vec3 u = unit_in_plane(line.direction);
    double sum = 0.0;
    double sum2 = 0.0;
    std::size_t n = 0;
    for (int j = 0; j < l.ny; ++j) {
        for (int i = 0; i < l.nx; ++i) {
            const std::size_t p = l.index(i, j);
            if (!map.fit_ok[p]) continue;
            const double dx = l.x(i) - line.point.x();
            const double dy = l.y(j) - line.point.y();
            if (std::abs(dx * u.y() - dy * u.x()) <= opt.offwire_margin) continue;
            sum += map.b_parallel[p];
            sum2 += map.b_parallel[p] * map.b_parallel[p];
            ++n;
        }
    }
    if (n < 2) return 0.0;
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
    return opt.noise_factor * std::sqrt(var);
}

std::vector<DipoleFeature> extract_dipole_features(const MapSet& map, const AxisLine& line,
                                                   const FeatureOptions& opt) {
    const double floor = feature_noise_floor(map, line, opt);
    const auto prof = sample_line(map, line);
    const std::size_t n = prof.b.size();

    struct Peak {
        int sign;
        double s;
        double b;
    };
    std::vector<Peak> peaks;
    // Plateaus collapse to their first sample.
    std::size_t k = 0;
    while (k < n) {
        std::size_t e = k;
        while (e + 1 < n && prof.b[e + 1] == prof.b[k]) ++e;
        const double v = prof.b[k];
        const bool has_l = k > 0;
        const bool has_r = e + 1 < n;
        if (has_l || has_r) {
            const bool above_l = !has_l || v > prof.b[k - 1];
            const bool above_r = !has_r || v > prof.b[e + 1];
            const bool below_l = !has_l || v < prof.b[k - 1];
            const bool below_r = !has_r || v < prof.b[e + 1];
            const int sign = above_l && above_r && v > floor ? 1 : (below_l && below_r && v < -floor ? -1 : 0);
            if (sign != 0) {
                Peak pk{sign, prof.s[k], v};
                // Parabola through the two neighbours refines interior peaks
                // on evenly spaced samples.
                if (has_l && has_r && k == e) {
                    const double h = prof.s[k + 1] - prof.s[k];
                    if (std::abs((prof.s[k] - prof.s[k - 1]) - h) < 1e-6 * h) {
                        const double ym = prof.b[k - 1];
                        const double yp = prof.b[k + 1];
                        const double den = ym - 2.0 * v + yp;
                        if (den != 0.0) {
                            const double t = std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5);
                            pk.s = prof.s[k] + t * h;
                            pk.b = v - 0.25 * (ym - yp) * t;
                        }
                    }
                }
                peaks.push_back(pk);
            }
        }
        k = e + 1;
    }

    std::vector<DipoleFeature> out;
    for (std::size_t q = 0; q + 1 < peaks.size(); ++q) {
        const Peak& a = peaks[q];
        const Peak& b = peaks[q + 1];
        if (a.sign == b.sign) continue;
        const Peak& pos = a.sign > 0 ? a : b;
        const Peak& neg = a.sign > 0 ? b : a;
        DipoleFeature f;
        f.peak_pos = pos.b;
        f.peak_neg = neg.b;
        f.pos_at = pos.s;
        f.neg_at = neg.s;
        f.location = 0.5 * (a.s + b.s);
        f.dipole_size = std::abs(pos.s - neg.s);
        f.max_abs = std::max(std::abs(pos.b), std::abs(neg.b));
        f.orientation = a.sign;
        out.push_back(f);
    }
    return out;
}

std::vector<double> GridRange::values() const {
    if (!(step > 0.0) || !std::isfinite(min) || !std::isfinite(max) || max < min) {
        throw InvalidArgumentError("grid range needs min <= max and step > 0");
    }
    const long count = static_cast<long>(std::floor((max - min) / step + 1e-9)) + 1;
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(count));
    for (long k = 0; k < count; ++k) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12g", min + static_cast<double>(k) * step);
        double x = 0.0;
        parse_double(buf, x);
        v.push_back(x);
    }
    return v;
}

namespace {

struct Match {
    double field2 = 0.0;
    double size2 = 0.0;
};

// Nearest-location pairing, greedy by distance; false when not one-to-one.
bool match_features(const std::vector<DipoleFeature>& meas, const std::vector<DipoleFeature>& sim,
                    double max_dist, std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::string& why) {
    pairs.clear();
    if (meas.size() != sim.size()) {
        why = "feature count " + std::to_string(sim.size()) + " != measured " + std::to_string(meas.size());
        return false;
    }
    struct Cand {
        double d;
        std::size_t i, j;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < meas.size(); ++i) {
        for (std::size_t j = 0; j < sim.size(); ++j) {
            const double d = std::abs(meas[i].location - sim[j].location);
            if (d <= max_dist) cands.push_back({d, i, j});
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.d < b.d; });
    std::vector<bool> used_i(meas.size(), false);
    std::vector<bool> used_j(sim.size(), false);
    for (const auto& c : cands) {
        if (used_i[c.i] || used_j[c.j]) continue;
        used_i[c.i] = used_j[c.j] = true;
        pairs.emplace_back(c.i, c.j);
    }
    if (pairs.size() != meas.size()) {
        why = "features farther apart than the match distance";
        return false;
    }
    return true;
}

}  // namespace

FitResult fit_parameters(const MapSet& measured, const WireSpec& templ, const AxisLine& line,
                         const ForwardConfig& cfg, const FitSettings& settings) {
    templ.validate();
    if (!(settings.match_distance > 0.0)) throw InvalidArgumentError("match distance must be positive");
    // Candidates are noise free, so they share the measured map's floor.
    FeatureOptions fopt = settings.features;
    fopt.noise_floor = feature_noise_floor(measured, line, settings.features);
    const auto meas = extract_dipole_features(measured, line, fopt);
    if (meas.empty()) throw FitFailureError("measured map has no dipole features above the noise floor");

    // Fitted materials, in order of first appearance.
    std::vector<std::string> mats = settings.grid.materials;
    if (mats.empty()) {
        for (const auto& s : templ.segments) {
            if (s.material.ms > 0.0 && std::find(mats.begin(), mats.end(), s.material.name) == mats.end()) {
                mats.push_back(s.material.name);
            }
        }
    }
    if (mats.empty()) throw InvalidArgumentError("template has no magnetic material to fit");
    for (const auto& m : mats) {
        const bool present = std::any_of(templ.segments.begin(), templ.segments.end(),
                                         [&](const Segment& s) { return s.material.name == m; });
        if (!present) throw InvalidArgumentError("material '" + m + "' is not in the template");
    }
    const auto ms_values = settings.grid.ms.values();
    const auto d_values = settings.grid.diameter.values();
    for (double v : ms_values) {
        if (!(v > 0.0)) throw InvalidArgumentError("ms grid values must be positive");
    }

    const auto setup = prepare_imaging(cfg.scene, cfg.nv, cfg.optics);
    FitResult best;
    bool have = false;
    std::vector<double> best_ms;
    std::vector<double> cur_ms;

    for (double d : d_values) {
        WireSpec spec = templ;
        spec.diameter = d;
        const auto basis = wire_basis(spec, setup);
        const std::size_t nm = mats.size();
        std::vector<std::size_t> idx(nm, 0);
        while (true) {
            cur_ms.assign(nm, 0.0);
            for (std::size_t q = 0; q < nm; ++q) cur_ms[q] = ms_values[idx[q]];
            std::vector<double> coeffs(spec.segments.size());
            for (std::size_t s = 0; s < spec.segments.size(); ++s) {
                const auto& seg = spec.segments[s];
                double ms = seg.material.ms;
                for (std::size_t q = 0; q < nm; ++q) {
                    if (seg.material.name == mats[q]) ms = cur_ms[q];
                }
                coeffs[s] = ms * seg.scale;
            }
            const auto map = render_map(setup, basis.unit_fields, coeffs, cfg.fit);
            const auto sim = extract_dipole_features(map, line, fopt);
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            std::string why;
            ++best.evaluated;
            if (!match_features(meas, sim, settings.match_distance, pairs, why)) {
                ++best.skipped;
                std::string label = "d=" + format_double(d);
                for (std::size_t q = 0; q < nm; ++q) label += " ms(" + mats[q] + ")=" + format_double(cur_ms[q]);
                best.skip_reasons.push_back(label + ": " + why);
            } else {
                double f2 = 0.0;
                double s2 = 0.0;
                for (const auto& [i, j] : pairs) {
                    const double df = (sim[j].max_abs - meas[i].max_abs) / meas[i].max_abs;
                    const double ds = (sim[j].dipole_size - meas[i].dipole_size) / meas[i].dipole_size;
                    f2 += df * df;
                    s2 += ds * ds;
                }
                const double obj = settings.weights.field * f2 + settings.weights.size * s2;
                // ties go to smaller ms, then smaller diameter
                bool better = !have || obj < best.objective;
                if (have && obj == best.objective) {
                    better = std::lexicographical_compare(cur_ms.begin(), cur_ms.end(), best_ms.begin(), best_ms.end()) ||
                             (cur_ms == best_ms && d < best.diameter);
                }
                if (better) {
                    have = true;
                    best.objective = obj;
                    best.diameter = d;
                    best_ms = cur_ms;
                    const double np = static_cast<double>(pairs.size());
                    best.field_discrepancy = std::sqrt(f2 / np);
                    best.size_discrepancy = std::sqrt(s2 / np);
                }
            }
            // odometer over the material grid
            std::size_t q = 0;
            while (q < nm && ++idx[q] == ms_values.size()) idx[q++] = 0;
            if (q == nm) break;
        }
    }
    if (!have) {
        throw FitFailureError("all " + std::to_string(best.evaluated) +
                              " candidates were skipped; first reason: " + best.skip_reasons.front());
    }
    best.ms_per_material.clear();
    for (std::size_t q = 0; q < mats.size(); ++q) best.ms_per_material.push_back({mats[q], best_ms[q]});
    return best;
}

MagnetizationEstimate estimate_magnetization(const MapSet& measured, std::span<const MapSet> templates,
                                             std::span<const double> lengths) {
    if (templates.empty()) throw InvalidArgumentError("need at least one template");
    if (lengths.size() != templates.size()) throw InvalidArgumentError("need one length per template");
    double total_len = 0.0;
    for (double l : lengths) {
        if (!(l > 0.0)) throw InvalidArgumentError("template lengths must be positive");
        total_len += l;
    }
    const std::size_t np = measured.b_parallel.size();
    for (const auto& t : templates) {
        if (t.b_parallel.size() != np || !t.lattice.same_geometry(measured.lattice)) {
            throw GeometryError("template lattice differs from the measured map");
        }
    }
    std::vector<std::size_t> use;
    for (std::size_t p = 0; p < np; ++p) {
        bool ok = measured.fit_ok[p] != 0;
        for (const auto& t : templates) ok = ok && t.fit_ok[p];
        if (ok) use.push_back(p);
    }
    const auto nt = static_cast<Eigen::Index>(templates.size());
    if (use.size() < templates.size()) {
        throw DegenerateTemplateError("fewer common valid pixels than templates");
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(use.size()), nt);
    Eigen::VectorXd y(static_cast<Eigen::Index>(use.size()));
    for (std::size_t r = 0; r < use.size(); ++r) {
        for (Eigen::Index c = 0; c < nt; ++c) {
            a(static_cast<Eigen::Index>(r), c) = templates[static_cast<std::size_t>(c)].b_parallel[use[r]];
        }
        y(static_cast<Eigen::Index>(r)) = measured.b_parallel[use[r]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < nt) {
        throw DegenerateTemplateError("template set is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                                      std::to_string(nt) + ")");
    }
    const Eigen::VectorXd x = qr.solve(y);
    MagnetizationEstimate e;
    e.pixels = use.size();
    double wsum = 0.0;
    for (Eigen::Index c = 0; c < nt; ++c) {
        e.raw.push_back(x(c));
        e.scales.push_back(std::clamp(x(c), -1.0, 1.0));
        wsum += e.scales.back() * lengths[static_cast<std::size_t>(c)];
    }
    e.m_norm = wsum / total_len;
    e.residual = std::sqrt((a * x - y).squaredNorm() / static_cast<double>(use.size()));
    return e;
}

}  // namespace nvwire
