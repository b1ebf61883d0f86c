#include "nvwire/config.hpp"

#include "nvwire/errors.hpp"
#include "nvwire/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

namespace nvwire {

namespace {

constexpr double kPi = constants::kPi;

enum class Dim { length, field, frequency, gyro, magnetization, energy_density, exchange, angle, fraction, none };

struct UnitInfo {
    Dim dim;
    int exp10;
};

// Every unit except deg is a power of ten of its SI unit, so conversion is a
// shift of the decimal exponent and "188 nm" lands exactly on 188e-9.
const std::map<std::string, UnitInfo, std::less<>>& unit_table() {
    static const std::map<std::string, UnitInfo, std::less<>> t = {
        {"m", {Dim::length, 0}},          {"mm", {Dim::length, -3}},         {"um", {Dim::length, -6}},
        {"\xC2\xB5m", {Dim::length, -6}}, {"\xCE\xBCm", {Dim::length, -6}}, {"nm", {Dim::length, -9}},
        {"T", {Dim::field, 0}},           {"mT", {Dim::field, -3}},          {"uT", {Dim::field, -6}},
        {"G", {Dim::field, -4}},          {"Hz", {Dim::frequency, 0}},       {"kHz", {Dim::frequency, 3}},
        {"MHz", {Dim::frequency, 6}},     {"GHz", {Dim::frequency, 9}},      {"Hz/T", {Dim::gyro, 0}},
        {"kHz/T", {Dim::gyro, 3}},        {"MHz/T", {Dim::gyro, 6}},         {"GHz/T", {Dim::gyro, 9}},
        {"Hz/G", {Dim::gyro, 4}},         {"kHz/G", {Dim::gyro, 7}},         {"MHz/G", {Dim::gyro, 10}},
        {"A/m", {Dim::magnetization, 0}}, {"kA/m", {Dim::magnetization, 3}}, {"MA/m", {Dim::magnetization, 6}},
        {"J/m3", {Dim::energy_density, 0}}, {"J/m^3", {Dim::energy_density, 0}},
        {"kJ/m3", {Dim::energy_density, 3}}, {"MJ/m3", {Dim::energy_density, 6}},
        {"J/m", {Dim::exchange, 0}},      {"pJ/m", {Dim::exchange, -12}},   {"rad", {Dim::angle, 0}},
        {"deg", {Dim::angle, 0}},         {"%", {Dim::fraction, -2}},
    };
    return t;
}

const char* dim_name(Dim d) {
    switch (d) {
        case Dim::length: return "a length (m, um, nm)";
        case Dim::field: return "a field (T, mT, G)";
        case Dim::frequency: return "a frequency (Hz, kHz, MHz, GHz)";
        case Dim::gyro: return "a gyromagnetic ratio (Hz/T, MHz/G)";
        case Dim::magnetization: return "a magnetization (A/m, kA/m)";
        case Dim::energy_density: return "an energy density (J/m3)";
        case Dim::exchange: return "an exchange stiffness (J/m, pJ/m)";
        case Dim::angle: return "an angle (deg, rad)";
        case Dim::fraction: return "a fraction (plain or %)";
        case Dim::none: return "a plain number";
    }
    return "";
}

struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
};

[[noreturn]] void fail(const Entry& e, const std::string& msg) { throw ConfigError(e.key, e.line, msg); }

std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = v.find(',', start);
        out.emplace_back(trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// Leading decimal literal: mantissa text and exponent, rest after it.
bool split_number(std::string_view tok, std::string& mantissa, long& exponent, std::string_view& rest) {
    std::size_t i = 0;
    const auto digits = [&] {
        const std::size_t s = i;
        while (i < tok.size() && tok[i] >= '0' && tok[i] <= '9') ++i;
        return i - s;
    };
    if (i < tok.size() && (tok[i] == '+' || tok[i] == '-')) ++i;
    std::size_t n = digits();
    if (i < tok.size() && tok[i] == '.') {
        ++i;
        n += digits();
    }
    if (n == 0) return false;
    mantissa.assign(tok.substr(0, i));
    exponent = 0;
    if (i < tok.size() && (tok[i] == 'e' || tok[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < tok.size() && (tok[j] == '+' || tok[j] == '-')) ++j;
        const std::size_t ds = j;
        while (j < tok.size() && tok[j] >= '0' && tok[j] <= '9') ++j;
        if (j > ds) {
            const auto r = std::from_chars(tok.data() + i + 1 + (tok[i + 1] == '+' ? 1 : 0), tok.data() + j, exponent);
            if (r.ec != std::errc()) return false;
            i = j;
        }
    }
    rest = trim(tok.substr(i));
    return true;
}

double to_si(const Entry& e, const std::string& mantissa, long exponent, std::string_view unit, Dim dim) {
    long shift = 0;
    bool degrees = false;
    if (unit.empty()) {
        if (dim != Dim::none && dim != Dim::fraction) fail(e, std::string("missing unit; expected ") + dim_name(dim));
    } else {
        const auto it = unit_table().find(unit);
        if (it == unit_table().end()) fail(e, "unknown unit '" + std::string(unit) + "'");
        if (it->second.dim != dim) {
            fail(e, "unit '" + std::string(unit) + "' does not fit; expected " + dim_name(dim));
        }
        shift = it->second.exp10;
        degrees = unit == "deg";
    }
    double v = 0.0;
    if (!parse_double(mantissa + "e" + std::to_string(exponent + shift), v) || !std::isfinite(v)) {
        fail(e, "number out of range");
    }
    return degrees ? v * kPi / 180.0 : v;
}

// Comma-separated numbers with one unit, written after the last number
// (or after each of them).
std::vector<double> quantities(const Entry& e, Dim dim, std::size_t min_n = 1, std::size_t max_n = 1) {
    const auto items = split_list(e.value);
    struct Item {
        std::string mantissa;
        long exponent;
        std::string unit;
    };
    std::vector<Item> parsed;
    for (const auto& it : items) {
        Item p;
        std::string_view rest;
        if (!split_number(it, p.mantissa, p.exponent, rest)) fail(e, "expected a number, got '" + it + "'");
        p.unit.assign(rest);
        parsed.push_back(p);
    }
    if (parsed.size() < min_n || parsed.size() > max_n) {
        fail(e, min_n == max_n ? "expected " + std::to_string(min_n) + " value(s)"
                               : "expected " + std::to_string(min_n) + " to " + std::to_string(max_n) + " values");
    }
    const std::string unit = parsed.back().unit;
    std::vector<double> out;
    for (const auto& p : parsed) {
        if (!p.unit.empty() && p.unit != unit) fail(e, "mixed units in one list");
        out.push_back(to_si(e, p.mantissa, p.exponent, unit, dim));
    }
    return out;
}

double quantity(const Entry& e, Dim dim) { return quantities(e, dim)[0]; }

int integer(const Entry& e) {
    int v = 0;
    const auto s = trim(e.value);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail(e, "expected an integer");
    return v;
}

bool boolean(const Entry& e) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    fail(e, "expected true or false");
}

template <class T>
T choice(const Entry& e, std::initializer_list<std::pair<const char*, T>> options) {
    std::string names;
    for (const auto& [n, v] : options) {
        if (e.value == n) return v;
        names += names.empty() ? n : std::string(", ") + n;
    }
    fail(e, "expected one of: " + names);
}

void require(const Entry& e, bool ok, const char* msg) {
    if (!ok) fail(e, msg);
}

// Unit vectors within 1e-12 are kept as written so an echo reloads unchanged.
Vec3 direction(const Entry& e, std::size_t min_n) {
    const auto v = quantities(e, Dim::none, min_n, 3);
    Vec3 d(v[0], v[1], v.size() > 2 ? v[2] : 0.0);
    const double n = d.norm();
    if (!(n > 0.0) || !std::isfinite(n)) fail(e, "direction must be non-zero");
    if (std::abs(n - 1.0) > 1e-12) d /= n;
    return d;
}

bool valid_name(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
               c == '.';
    });
}

std::vector<double> default_sweep() {
    std::vector<double> s;
    for (double g : {-71.0, -151.0, -201.0, -251.0, -271.0, -291.0, -303.0, -311.0, -331.0, -365.0, -375.0}) {
        s.push_back(g * 1e-4);
    }
    return s;
}

struct SegmentDraft {
    std::string material;
    double length = 0.0;
};

struct WireDraft {
    std::vector<SegmentDraft> segments{{"Fe", 12.5e-6}};
    int segments_line = 0;
    std::vector<double> scales;
    double diameter = 188e-9;
    std::optional<double> standoff;  // unset = NV depth
    std::optional<Vec3> origin;
    std::optional<Vec3> center;
    Vec3 axis = Vec3::UnitX();
};

struct State {
    RunConfig cfg;
    WireDraft wire;
};

using Apply = std::function<void(State&, const Entry&)>;

void resolve_wire(State& st) {
    const auto& d = st.wire;
    WireSpec w;
    w.diameter = d.diameter;
    w.standoff = d.standoff.value_or(st.cfg.nv.depth);
    w.axis = d.axis;
    if (!d.scales.empty() && d.scales.size() != d.segments.size()) {
        throw InvalidArgumentError("scales needs one value per segment");
    }
    for (std::size_t i = 0; i < d.segments.size(); ++i) {
        const auto it = st.cfg.materials.find(d.segments[i].material);
        if (it == st.cfg.materials.end()) {
            throw InvalidArgumentError("unknown material '" + d.segments[i].material + "'");
        }
        Segment s;
        s.material = it->second;
        s.length = d.segments[i].length;
        s.direction = d.axis;
        s.scale = d.scales.empty() ? 1.0 : d.scales[i];
        w.segments.push_back(s);
    }
    if (d.origin) {
        w.origin = *d.origin;
    } else {
        const Vec3 c = d.center.value_or(Vec3::Zero());
        w.origin = c - 0.5 * w.total_length() * w.axis;
    }
    w.validate();
    st.cfg.wire = w;
}

const std::map<std::string, Apply>& section_keys(const std::string& section) {
    static const std::map<std::string, std::map<std::string, Apply>> table = [] {
        std::map<std::string, std::map<std::string, Apply>> t;
        auto& nv = t["nv"];
        nv["d_zfs"] = [](State& s, const Entry& e) { s.cfg.nv.d_zfs = quantity(e, Dim::frequency); };
        nv["gamma"] = [](State& s, const Entry& e) { s.cfg.nv.gamma = quantity(e, Dim::gyro); };
        nv["linewidth"] = [](State& s, const Entry& e) { s.cfg.nv.linewidth_sigma = quantity(e, Dim::frequency); };
        nv["contrast"] = [](State& s, const Entry& e) { s.cfg.nv.contrast = quantity(e, Dim::fraction); };
        nv["depth"] = [](State& s, const Entry& e) { s.cfg.nv.depth = quantity(e, Dim::length); };
        nv["site_pitch"] = [](State& s, const Entry& e) { s.cfg.nv.site_pitch = quantity(e, Dim::length); };
        nv["window_half"] = [](State& s, const Entry& e) { s.cfg.nv.window_half = quantity(e, Dim::frequency); };
        nv["branch"] = [](State& s, const Entry& e) {
            s.cfg.nv.branch = choice<Branch>(e, {{"minus", Branch::minus}, {"plus", Branch::plus}});
        };
        nv["lineshape"] = [](State& s, const Entry& e) {
            s.cfg.nv.lineshape = choice<LineshapeMode>(
                e, {{"as_printed", LineshapeMode::as_printed}, {"conventional_dip", LineshapeMode::conventional_dip}});
        };

        auto& op = t["optics"];
        op["psf_fwhm"] = [](State& s, const Entry& e) { s.cfg.optics.psf_fwhm = quantity(e, Dim::length); };
        op["n_diamond"] = [](State& s, const Entry& e) { s.cfg.optics.n_d = quantity(e, Dim::none); };
        op["n_glass"] = [](State& s, const Entry& e) { s.cfg.optics.n_g = quantity(e, Dim::none); };
        op["plate_thickness"] = [](State& s, const Entry& e) {
            s.cfg.optics.plate_thickness = quantity(e, Dim::length);
        };
        op["theta_max"] = [](State& s, const Entry& e) { s.cfg.optics.theta_max = quantity(e, Dim::angle); };
        op["na"] = [](State& s, const Entry& e) { s.cfg.optics.na = quantity(e, Dim::none); };
        op["kernel_pitch"] = [](State& s, const Entry& e) { s.cfg.optics.kernel_pitch = quantity(e, Dim::length); };
        op["index_order"] = [](State& s, const Entry& e) {
            s.cfg.optics.index_order =
                choice<IndexOrder>(e, {{"as_printed", IndexOrder::as_printed}, {"swapped", IndexOrder::swapped}});
        };
        op["weighting"] = [](State& s, const Entry& e) {
            s.cfg.optics.weighting = choice<AngularWeighting>(
                e, {{"sin_theta", AngularWeighting::sin_theta}, {"uniform", AngularWeighting::uniform}});
        };
        op["theta_step"] = [](State& s, const Entry& e) { s.cfg.optics.theta_step = quantity(e, Dim::angle); };
        op["airy_radius"] = [](State& s, const Entry& e) { s.cfg.optics.airy_radius = quantity(e, Dim::length); };
        op["tirf_radius"] = [](State& s, const Entry& e) { s.cfg.optics.tirf_radius = quantity(e, Dim::length); };

        auto& sc = t["scene"];
        sc["fov_width"] = [](State& s, const Entry& e) { s.cfg.scene.fov_width = quantity(e, Dim::length); };
        sc["fov_height"] = [](State& s, const Entry& e) { s.cfg.scene.fov_height = quantity(e, Dim::length); };
        sc["fov_center"] = [](State& s, const Entry& e) {
            const auto v = quantities(e, Dim::length, 2, 2);
            s.cfg.scene.fov_center_x = v[0];
            s.cfg.scene.fov_center_y = v[1];
        };
        sc["pixel_pitch"] = [](State& s, const Entry& e) { s.cfg.scene.pixel_pitch = quantity(e, Dim::length); };
        sc["bias"] = [](State& s, const Entry& e) { s.cfg.scene.bias_along_axis = quantity(e, Dim::field); };
        sc["bias_vector"] = [](State& s, const Entry& e) {
            const auto v = quantities(e, Dim::field, 3, 3);
            s.cfg.scene.bias_vector = Vec3(v[0], v[1], v[2]);
        };
        sc["nv_axis"] = [](State& s, const Entry& e) { s.cfg.scene.nv_axis_index = integer(e); };
        sc["frequency_step"] = [](State& s, const Entry& e) {
            s.cfg.scene.frequency_step = quantity(e, Dim::frequency);
        };
        sc["cell_size"] = [](State& s, const Entry& e) { s.cfg.scene.cell_size = quantity(e, Dim::length); };
        sc["threads"] = [](State& s, const Entry& e) {
            s.cfg.scene.threads = integer(e);
            require(e, s.cfg.scene.threads >= 0, "threads must be >= 0");
        };

        auto& of = t["odmr_fit"];
        of["max_iterations"] = [](State& s, const Entry& e) {
            s.cfg.odmr_fit.max_iterations = integer(e);
            require(e, s.cfg.odmr_fit.max_iterations >= 1, "max_iterations must be >= 1");
        };
        of["tolerance"] = [](State& s, const Entry& e) {
            s.cfg.odmr_fit.tolerance = quantity(e, Dim::frequency);
            require(e, s.cfg.odmr_fit.tolerance > 0.0, "tolerance must be positive");
        };
        of["min_depth_fraction"] = [](State& s, const Entry& e) {
            s.cfg.odmr_fit.min_depth_fraction = quantity(e, Dim::fraction);
            require(e, s.cfg.odmr_fit.min_depth_fraction >= 0.0 && s.cfg.odmr_fit.min_depth_fraction < 1.0,
                    "min_depth_fraction must lie in [0, 1)");
        };

        auto& wi = t["wire"];
        wi["segments"] = [](State& s, const Entry& e) {
            s.wire.segments.clear();
            s.wire.segments_line = e.line;
            for (const auto& item : split_list(e.value)) {
                const auto sp = item.find_first_of(" \t");
                if (sp == std::string::npos) fail(e, "segment '" + item + "' needs a material and a length");
                Entry sub = e;
                sub.value = std::string(trim(std::string_view(item).substr(sp)));
                const auto len = quantities(sub, Dim::length, 1, 1);
                s.wire.segments.push_back({item.substr(0, sp), len[0]});
            }
        };
        wi["scales"] = [](State& s, const Entry& e) { s.wire.scales = quantities(e, Dim::none, 1, 1000); };
        wi["diameter"] = [](State& s, const Entry& e) { s.wire.diameter = quantity(e, Dim::length); };
        wi["standoff"] = [](State& s, const Entry& e) { s.wire.standoff = quantity(e, Dim::length); };
        wi["origin"] = [](State& s, const Entry& e) {
            require(e, !s.wire.center, "origin and center are exclusive");
            const auto v = quantities(e, Dim::length, 3, 3);
            s.wire.origin = Vec3(v[0], v[1], v[2]);
        };
        wi["center"] = [](State& s, const Entry& e) {
            require(e, !s.wire.origin, "origin and center are exclusive");
            const auto v = quantities(e, Dim::length, 2, 3);
            s.wire.center = Vec3(v[0], v[1], v.size() > 2 ? v[2] : 0.0);
        };
        wi["axis"] = [](State& s, const Entry& e) { s.wire.axis = direction(e, 2); };

        auto& fi = t["fit"];
        fi["ms_min"] = [](State& s, const Entry& e) { s.cfg.fit.grid.ms.min = quantity(e, Dim::magnetization); };
        fi["ms_max"] = [](State& s, const Entry& e) { s.cfg.fit.grid.ms.max = quantity(e, Dim::magnetization); };
        fi["ms_step"] = [](State& s, const Entry& e) { s.cfg.fit.grid.ms.step = quantity(e, Dim::magnetization); };
        fi["d_min"] = [](State& s, const Entry& e) { s.cfg.fit.grid.diameter.min = quantity(e, Dim::length); };
        fi["d_max"] = [](State& s, const Entry& e) { s.cfg.fit.grid.diameter.max = quantity(e, Dim::length); };
        fi["d_step"] = [](State& s, const Entry& e) { s.cfg.fit.grid.diameter.step = quantity(e, Dim::length); };
        fi["materials"] = [](State& s, const Entry& e) {
            s.cfg.fit.grid.materials = split_list(e.value);
            for (const auto& m : s.cfg.fit.grid.materials) require(e, valid_name(m), "bad material name");
        };
        fi["field_weight"] = [](State& s, const Entry& e) { s.cfg.fit.weights.field = quantity(e, Dim::none); };
        fi["size_weight"] = [](State& s, const Entry& e) { s.cfg.fit.weights.size = quantity(e, Dim::none); };
        fi["match_distance"] = [](State& s, const Entry& e) {
            s.cfg.fit.match_distance = quantity(e, Dim::length);
        };

        auto& fe = t["features"];
        fe["noise_floor"] = [](State& s, const Entry& e) {
            s.cfg.fit.features.noise_floor = quantity(e, Dim::field);
        };
        fe["noise_factor"] = [](State& s, const Entry& e) {
            s.cfg.fit.features.noise_factor = quantity(e, Dim::none);
        };
        fe["offwire_margin"] = [](State& s, const Entry& e) {
            s.cfg.fit.features.offwire_margin = quantity(e, Dim::length);
        };
        fe["line_point"] = [](State& s, const Entry& e) {
            const auto v = quantities(e, Dim::length, 2, 3);
            if (!s.cfg.line) s.cfg.line = AxisLine{};
            s.cfg.line->point = Vec3(v[0], v[1], v.size() > 2 ? v[2] : 0.0);
        };
        fe["line_direction"] = [](State& s, const Entry& e) {
            if (!s.cfg.line) s.cfg.line = AxisLine{};
            s.cfg.line->direction = direction(e, 2);
        };

        auto& hy = t["hysteresis"];
        hy["sweep"] = [](State& s, const Entry& e) { s.cfg.hysteresis.sweep = quantities(e, Dim::field, 1, 100000); };
        hy["coercivity"] = [](State& s, const Entry& e) {
            s.cfg.hysteresis.coercivity = quantities(e, Dim::field, 1, 1000);
        };
        hy["drive"] = [](State& s, const Entry& e) { s.cfg.hysteresis.drive = direction(e, 3); };

        t["mif"]["relax_cell"] = [](State& s, const Entry& e) {
            s.cfg.mif_cell = quantity(e, Dim::length);
            require(e, s.cfg.mif_cell > 0.0, "relax_cell must be positive");
        };

        auto& ov = t["ovf"];
        ov["placement"] = [](State& s, const Entry& e) {
            s.cfg.ovf.placement =
                choice<OvfPlacement>(e, {{"surface", OvfPlacement::surface}, {"as_is", OvfPlacement::as_is}});
        };
        ov["standoff"] = [](State& s, const Entry& e) {
            s.cfg.ovf.standoff = quantity(e, Dim::length);
            require(e, *s.cfg.ovf.standoff >= 0.0, "standoff must be non-negative");
        };
        ov["center"] = [](State& s, const Entry& e) {
            const auto v = quantities(e, Dim::length, 2, 2);
            s.cfg.ovf.center = {v[0], v[1]};
        };

        auto& ou = t["output"];
        ou["prefix"] = [](State& s, const Entry& e) {
            require(e, valid_name(e.value), "prefix may only use letters, digits, '_', '-' and '.'");
            s.cfg.output.prefix = e.value;
        };
        ou["pgm"] = [](State& s, const Entry& e) { s.cfg.output.pgm = boolean(e); };
        return t;
    }();
    static const std::map<std::string, Apply> material = [] {
        std::map<std::string, Apply> m;
        // the target material is named by the section suffix
        const auto name = [](const Entry& e) { return e.section.substr(9); };
        m["ms"] = [name](State& s, const Entry& e) {
            const double v = quantity(e, Dim::magnetization);
            require(e, v >= 0.0, "ms must be non-negative");
            s.cfg.materials[name(e)].ms = v;
        };
        m["k1"] = [name](State& s, const Entry& e) {
            s.cfg.materials[name(e)].k1 = quantity(e, Dim::energy_density);
        };
        m["a_ex"] = [name](State& s, const Entry& e) {
            const double v = quantity(e, Dim::exchange);
            require(e, v >= 0.0, "a_ex must be non-negative");
            s.cfg.materials[name(e)].a_ex = v;
        };
        return m;
    }();
    if (section.rfind("material.", 0) == 0) return material;
    static const std::map<std::string, Apply> none;
    const auto it = table.find(section);
    return it == table.end() ? none : it->second;
}

void check_section(State& st, const std::string& section) {
    auto& c = st.cfg;
    if (section == "nv") c.nv.validate();
    else if (section == "optics") c.optics.validate();
    else if (section == "scene") c.scene.validate();
    else if (section == "wire") resolve_wire(st);
    else if (section == "fit") {
        c.fit.grid.ms.values();
        c.fit.grid.diameter.values();
        if (!(c.fit.grid.ms.min > 0.0)) throw InvalidArgumentError("ms_min must be positive");
        if (!(c.fit.grid.diameter.min > 0.0)) throw InvalidArgumentError("d_min must be positive");
        if (!(c.fit.weights.field >= 0.0 && c.fit.weights.size >= 0.0) ||
            !(c.fit.weights.field + c.fit.weights.size > 0.0)) {
            throw InvalidArgumentError("objective weights must be non-negative and not both zero");
        }
        if (!(c.fit.match_distance > 0.0)) throw InvalidArgumentError("match_distance must be positive");
    } else if (section == "features") {
        const auto& f = c.fit.features;
        if (f.noise_floor && !(*f.noise_floor >= 0.0)) throw InvalidArgumentError("noise_floor must be >= 0");
        if (!(f.noise_factor >= 0.0)) throw InvalidArgumentError("noise_factor must be >= 0");
        if (!(f.offwire_margin >= 0.0)) throw InvalidArgumentError("offwire_margin must be >= 0");
        if (c.line && std::hypot(c.line->direction.x(), c.line->direction.y()) == 0.0) {
            throw InvalidArgumentError("line_direction needs an in-plane component");
        }
    } else if (section == "hysteresis") {
        const auto& h = c.hysteresis.sweep;
        bool up = true;
        bool down = true;
        for (std::size_t i = 1; i < h.size(); ++i) {
            up = up && h[i] > h[i - 1];
            down = down && h[i] < h[i - 1];
        }
        if (!up && !down) throw InvalidArgumentError("sweep must be strictly monotone");
        for (double v : c.hysteresis.coercivity) {
            if (!(v >= 0.0)) throw InvalidArgumentError("coercivity must be non-negative");
        }
    }
}

void reset_section(State& st, const std::string& section) {
    const RunConfig d = default_config();
    auto& c = st.cfg;
    if (section == "nv") c.nv = d.nv;
    else if (section == "optics") c.optics = d.optics;
    else if (section == "scene") c.scene = d.scene;
    else if (section == "wire") st.wire = WireDraft{};
    else if (section == "fit") {
        c.fit.grid = d.fit.grid;
        c.fit.weights = d.fit.weights;
        c.fit.match_distance = d.fit.match_distance;
    } else if (section == "features") {
        c.fit.features = d.fit.features;
        c.line = d.line;
    } else if (section == "hysteresis") c.hysteresis = d.hysteresis;
}

// Replays a failing section from defaults and blames the key after which it
// never became valid again.
void validate_section(const State& final_state, const std::string& section, const std::vector<Entry>& entries) {
    State probe = final_state;
    try {
        check_section(probe, section);
        return;
    } catch (const Error& err) {
        const std::string msg = err.what();
        State replay;
        replay.cfg = final_state.cfg;
        reset_section(replay, section);
        std::size_t blamed = 0;
        const auto& keys = section_keys(section);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            keys.at(entries[i].key)(replay, entries[i]);
            State tmp = replay;
            try {
                check_section(tmp, section);
                blamed = i + 1;
            } catch (const Error&) {
            }
        }
        if (entries.empty()) throw ConfigError(section, 0, msg);
        const auto& e = entries[std::min(blamed, entries.size() - 1)];
        throw ConfigError(e.key, e.line, msg);
    }
}

std::string num(double v) { return format_double(v); }

std::string list(const std::vector<double>& v, const char* unit) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
    return unit[0] ? s + " " + unit : s;
}

std::string vec(const Vec3& v, const char* unit) {
    std::string s = num(v.x()) + ", " + num(v.y()) + ", " + num(v.z());
    return unit[0] ? s + " " + unit : s;
}

}  // namespace

RunConfig default_config() {
    RunConfig c;
    for (const auto& m : {material_fe(), material_co(), material_au()}) c.materials[m.name] = m;
    State st;
    st.cfg = c;
    resolve_wire(st);
    c.wire = st.cfg.wire;
    c.hysteresis.sweep = default_sweep();
    return c;
}

ForwardConfig RunConfig::forward() const { return {scene, nv, optics, odmr_fit}; }

AxisLine RunConfig::feature_line() const {
    if (line) return *line;
    Vec3 c = wire.origin + 0.5 * wire.total_length() * wire.axis;
    c.z() = 0.0;
    return {c, wire.axis};
}

SwitchingModel RunConfig::switching() const {
    const auto& hc = hysteresis.coercivity;
    if (hc.size() == 1) return {std::vector<double>(wire.segments.size(), hc[0])};
    if (hc.size() != wire.segments.size()) {
        throw ConfigurationError("coercivity needs one value or one per segment");
    }
    return {hc};
}

RunConfig load_config(std::string_view text) {
    State st;
    st.cfg = default_config();
    std::map<std::string, std::vector<Entry>> by_section;
    std::vector<std::string> order;
    std::map<std::string, int> new_materials;
    std::set<std::pair<std::string, std::string>> seen;
    std::string section;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        const auto hash = raw.find('#');
        const auto line = trim(raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("", lineno, "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            const bool material = section.rfind("material.", 0) == 0;
            if (material) {
                const std::string name = section.substr(9);
                if (!valid_name(name)) throw ConfigError(section, lineno, "bad material name");
                if (!st.cfg.materials.count(name)) {
                    Material m;
                    m.name = name;
                    m.ms = std::numeric_limits<double>::quiet_NaN();
                    st.cfg.materials[name] = m;
                    new_materials[name] = lineno;
                }
            } else if (section_keys(section).empty()) {
                throw ConfigError(section, lineno, "unknown section");
            }
            if (std::find(order.begin(), order.end(), section) == order.end()) order.push_back(section);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(std::string(line), lineno, "expected key = value");
        Entry e{section, std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), lineno};
        if (section.empty()) fail(e, "key outside any section");
        if (e.value.empty()) fail(e, "empty value");
        const auto& keys = section_keys(section);
        const auto it = keys.find(e.key);
        if (it == keys.end()) fail(e, "unknown key in [" + section + "]");
        if (!seen.insert({section, e.key}).second) fail(e, "duplicate key");
        it->second(st, e);
        by_section[section].push_back(e);
    }

    for (const auto& [name, line] : new_materials) {
        if (std::isnan(st.cfg.materials[name].ms)) throw ConfigError("material." + name, line, "new material needs ms");
    }
    // the wire always resolves, even without a [wire] section
    for (const std::string s : {"nv", "optics", "scene", "wire", "fit", "features", "hysteresis"}) {
        validate_section(st, s, by_section[s]);
        if (s == "wire") resolve_wire(st);
    }

    const auto line_of = [&](const std::string& s, const std::string& k) {
        for (const auto& e : by_section[s]) {
            if (e.key == k) return e.line;
        }
        return 0;
    };
    auto& c = st.cfg;
    if (c.scene.pixel_pitch < c.nv.site_pitch) {
        const int l = line_of("scene", "pixel_pitch");
        throw ConfigError(l ? "pixel_pitch" : "site_pitch", l ? l : line_of("nv", "site_pitch"),
                          "pixel_pitch must be at least the NV site pitch");
    }
    const auto& hc = c.hysteresis.coercivity;
    if (hc.size() != 1 && hc.size() != c.wire.segments.size()) {
        throw ConfigError("coercivity", line_of("hysteresis", "coercivity"),
                          "coercivity needs one value or one per segment");
    }
    for (const auto& m : c.fit.grid.materials) {
        const bool present = std::any_of(c.wire.segments.begin(), c.wire.segments.end(),
                                         [&](const Segment& s) { return s.material.name == m; });
        if (!present) throw ConfigError("materials", line_of("fit", "materials"), "material '" + m + "' not in wire");
    }
    return c;
}

std::string config_echo(const RunConfig& c) {
    std::ostringstream o;
    const auto kv = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
    o << "[nv]\n";
    kv("d_zfs", num(c.nv.d_zfs) + " Hz");
    kv("gamma", num(c.nv.gamma) + " Hz/T");
    kv("linewidth", num(c.nv.linewidth_sigma) + " Hz");
    kv("contrast", num(c.nv.contrast));
    kv("depth", num(c.nv.depth) + " m");
    kv("site_pitch", num(c.nv.site_pitch) + " m");
    kv("window_half", num(c.nv.window_half) + " Hz");
    kv("branch", c.nv.branch == Branch::minus ? "minus" : "plus");
    kv("lineshape", c.nv.lineshape == LineshapeMode::as_printed ? "as_printed" : "conventional_dip");

    o << "\n[optics]\n";
    kv("psf_fwhm", num(c.optics.psf_fwhm) + " m");
    kv("n_diamond", num(c.optics.n_d));
    kv("n_glass", num(c.optics.n_g));
    kv("plate_thickness", num(c.optics.plate_thickness) + " m");
    kv("theta_max", num(c.optics.theta_max) + " rad");
    kv("na", num(c.optics.na));
    kv("kernel_pitch", num(c.optics.kernel_pitch) + " m");
    kv("index_order", c.optics.index_order == IndexOrder::as_printed ? "as_printed" : "swapped");
    kv("weighting", c.optics.weighting == AngularWeighting::sin_theta ? "sin_theta" : "uniform");
    kv("theta_step", num(c.optics.theta_step) + " rad");
    kv("airy_radius", num(c.optics.airy_radius) + " m");
    kv("tirf_radius", num(c.optics.tirf_radius) + " m");

    o << "\n[scene]\n";
    kv("fov_width", num(c.scene.fov_width) + " m");
    kv("fov_height", num(c.scene.fov_height) + " m");
    kv("fov_center", num(c.scene.fov_center_x) + ", " + num(c.scene.fov_center_y) + " m");
    kv("pixel_pitch", num(c.scene.pixel_pitch) + " m");
    kv("bias", num(c.scene.bias_along_axis) + " T");
    if (c.scene.bias_vector) kv("bias_vector", vec(*c.scene.bias_vector, "T"));
    kv("nv_axis", std::to_string(c.scene.nv_axis_index));
    kv("frequency_step", num(c.scene.frequency_step) + " Hz");
    kv("cell_size", num(c.scene.cell_size) + " m");
    kv("threads", std::to_string(c.scene.threads));

    o << "\n[odmr_fit]\n";
    kv("max_iterations", std::to_string(c.odmr_fit.max_iterations));
    kv("tolerance", num(c.odmr_fit.tolerance) + " Hz");
    kv("min_depth_fraction", num(c.odmr_fit.min_depth_fraction));

    for (const auto& [name, m] : c.materials) {
        o << "\n[material." << name << "]\n";
        if (!std::isnan(m.ms)) kv("ms", num(m.ms) + " A/m");
        if (!std::isnan(m.k1)) kv("k1", num(m.k1) + " J/m3");
        if (!std::isnan(m.a_ex)) kv("a_ex", num(m.a_ex) + " J/m");
    }

    o << "\n[wire]\n";
    std::string segs;
    std::vector<double> scales;
    for (std::size_t i = 0; i < c.wire.segments.size(); ++i) {
        const auto& s = c.wire.segments[i];
        segs += (i ? ", " : "") + s.material.name + " " + num(s.length) + " m";
        scales.push_back(s.scale);
    }
    kv("segments", segs);
    kv("scales", list(scales, ""));
    kv("diameter", num(c.wire.diameter) + " m");
    kv("standoff", num(c.wire.standoff) + " m");
    kv("origin", vec(c.wire.origin, "m"));
    kv("axis", vec(c.wire.axis, ""));

    o << "\n[fit]\n";
    kv("ms_min", num(c.fit.grid.ms.min) + " A/m");
    kv("ms_max", num(c.fit.grid.ms.max) + " A/m");
    kv("ms_step", num(c.fit.grid.ms.step) + " A/m");
    kv("d_min", num(c.fit.grid.diameter.min) + " m");
    kv("d_max", num(c.fit.grid.diameter.max) + " m");
    kv("d_step", num(c.fit.grid.diameter.step) + " m");
    if (!c.fit.grid.materials.empty()) {
        std::string m;
        for (std::size_t i = 0; i < c.fit.grid.materials.size(); ++i) m += (i ? ", " : "") + c.fit.grid.materials[i];
        kv("materials", m);
    }
    kv("field_weight", num(c.fit.weights.field));
    kv("size_weight", num(c.fit.weights.size));
    kv("match_distance", num(c.fit.match_distance) + " m");

    o << "\n[features]\n";
    if (c.fit.features.noise_floor) kv("noise_floor", num(*c.fit.features.noise_floor) + " T");
    kv("noise_factor", num(c.fit.features.noise_factor));
    kv("offwire_margin", num(c.fit.features.offwire_margin) + " m");
    if (c.line) {
        kv("line_point", vec(c.line->point, "m"));
        kv("line_direction", vec(c.line->direction, ""));
    }

    o << "\n[hysteresis]\n";
    if (!c.hysteresis.sweep.empty()) kv("sweep", list(c.hysteresis.sweep, "T"));
    kv("coercivity", list(c.hysteresis.coercivity, "T"));
    if (c.hysteresis.drive) kv("drive", vec(*c.hysteresis.drive, ""));

    o << "\n[mif]\n";
    kv("relax_cell", num(c.mif_cell) + " m");

    o << "\n[ovf]\n";
    kv("placement", c.ovf.placement == OvfPlacement::surface ? "surface" : "as_is");
    if (c.ovf.standoff) kv("standoff", num(*c.ovf.standoff) + " m");
    kv("center", num(c.ovf.center[0]) + ", " + num(c.ovf.center[1]) + " m");

    o << "\n[output]\n";
    kv("prefix", c.output.prefix);
    kv("pgm", c.output.pgm ? "true" : "false");
    return o.str();
}

}  // namespace nvwire
