#include "nvwire/analysis.hpp"
#include "nvwire/cli.hpp"
#include "nvwire/config.hpp"
#include "nvwire/errors.hpp"
#include "nvwire/mapset_io.hpp"
#include "nvwire/oommf.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace nvwire;

namespace {

py::array_t<double> image(const std::vector<double>& v, const PlaneLattice& l) {
    py::array_t<double> a({l.ny, l.nx});
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

py::dict lattice_dict(const PlaneLattice& l) {
    py::dict d;
    d["x0"] = l.x0;
    d["y0"] = l.y0;
    d["pitch"] = l.pitch;
    d["nx"] = l.nx;
    d["ny"] = l.ny;
    return d;
}

py::dict map_dict(const MapSet& m) {
    py::dict d;
    d["lattice"] = lattice_dict(m.lattice);
    d["b_parallel"] = image(m.b_parallel, m.lattice);
    d["contrast"] = image(m.contrast, m.lattice);
    d["linewidth"] = image(m.linewidth, m.lattice);
    py::array_t<std::uint8_t> ok({m.lattice.ny, m.lattice.nx});
    std::copy(m.fit_ok.begin(), m.fit_ok.end(), ok.mutable_data());
    d["fit_ok"] = ok;
    return d;
}

py::list feature_list(const std::vector<DipoleFeature>& fs) {
    py::list out;
    for (const auto& f : fs) {
        py::dict d;
        d["location"] = f.location;
        d["peak_pos"] = f.peak_pos;
        d["peak_neg"] = f.peak_neg;
        d["pos_at"] = f.pos_at;
        d["neg_at"] = f.neg_at;
        d["dipole_size"] = f.dipole_size;
        d["max_abs"] = f.max_abs;
        d["orientation"] = f.orientation;
        out.append(d);
    }
    return out;
}

// Renders the configured wire and extracts its features along the config line.
py::dict simulate(const std::string& config_text) {
    const RunConfig cfg = load_config(config_text);
    const auto f = cfg.forward();
    MapSet map;
    {
        py::gil_scoped_release release;
        map = simulate_image(cfg.wire, f.scene, f.nv, f.optics, f.fit);
    }
    py::dict d = map_dict(map);
    d["features"] = feature_list(extract_dipole_features(map, cfg.feature_line(), cfg.fit.features));
    return d;
}

py::dict ovf_dict(const MagnetizationGrid& g) {
    py::dict d;
    d["cell_size"] = g.cell_size;
    d["origin"] = std::vector<double>{g.origin.x(), g.origin.y(), g.origin.z()};
    py::array_t<double> m({g.dims[2], g.dims[1], g.dims[0], 3});
    double* p = m.mutable_data();
    for (const auto& v : g.m) {
        *p++ = v.x();
        *p++ = v.y();
        *p++ = v.z();
    }
    d["m"] = m;
    return d;
}

std::string ovf_text(double cell_size, const std::vector<double>& origin,
                     py::array_t<double, py::array::c_style | py::array::forcecast> m, const std::string& title) {
    if (m.ndim() != 4 || m.shape(3) != 3) throw InvalidArgumentError("m must have shape (nz, ny, nx, 3)");
    if (origin.size() != 3) throw InvalidArgumentError("origin needs three values");
    MagnetizationGrid g(cell_size,
                        {static_cast<int>(m.shape(2)), static_cast<int>(m.shape(1)), static_cast<int>(m.shape(0))},
                        Vec3(origin[0], origin[1], origin[2]));
    const double* p = m.data();
    for (auto& v : g.m) {
        v = Vec3(p[0], p[1], p[2]);
        p += 3;
    }
    return write_ovf(g, title);
}

py::tuple cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"nvwire"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_nvwire, m) {
    m.doc() = "NV wide-field magnetometry simulation of segmented nanowires";
    m.attr("__version__") = NVWIRE_VERSION;

    static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
    static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
    static py::exception<FormatError> format_error(m, "FormatError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const FormatError& e) {
            py::set_error(format_error, e.what());
        } catch (const Error& e) {
            py::set_error(base, (e.kind() + ": " + e.what()).c_str());
        }
    });

    m.def("default_config", [] { return config_echo(default_config()); },
          "Canonical text of the built-in configuration.");
    m.def("normalize_config", [](const std::string& text) { return config_echo(load_config(text)); },
          py::arg("text"), "Parses config text and returns its canonical SI echo.");
    m.def("simulate", &simulate, py::arg("config_text") = "",
          "Renders the configured wire; returns the fitted maps and the line-cut features.");
    m.def("resonances",
          [](std::vector<double> b, int axis_index, bool exact) {
              if (b.size() != 3) throw InvalidArgumentError("b needs three components");
              if (axis_index < 1 || axis_index > 4) throw InvalidArgumentError("axis_index must be 1..4");
              const Vec3 v(b[0], b[1], b[2]);
              const Vec3& a = nv_axes_lab()[static_cast<std::size_t>(axis_index - 1)];
              const auto r = exact ? exact_resonances(v, a, NVParams{}) : resonance_freqs(v, a, NVParams{});
              return py::make_tuple(r.f_minus, r.f_plus);
          },
          py::arg("b"), py::arg("axis_index") = 1, py::arg("exact") = false,
          "Transition frequencies (Hz) for a lab-frame field in T.");
    m.def("parse_ovf", [](const std::string& text) { return ovf_dict(parse_ovf(text)); }, py::arg("text"));
    m.def("write_ovf", &ovf_text, py::arg("cell_size"), py::arg("origin"), py::arg("m"),
          py::arg("title") = "nvwire magnetization");
    m.def("parse_map_csv", [](const std::string& text) { return map_dict(parse_mapset_csv(text)); },
          py::arg("text"));
    m.def("run_cli", &cli, py::arg("args"), "Runs the command line tool in-process; returns (code, stdout, stderr).");
}
