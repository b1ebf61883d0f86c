#include "nvwire/cli.hpp"

#include "nvwire/errors.hpp"
#include "nvwire/format.hpp"
#include "nvwire/mapset_io.hpp"
#include "nvwire/oommf.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <sstream>

namespace nvwire {

namespace {

using Clock = std::chrono::steady_clock;

const char* const kCommands[] = {"simulate", "vectormap", "fit", "hysteresis", "export-mif", "ingest-ovf"};

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string feature_csv(const std::vector<DipoleFeature>& f) {
    std::string s = "index,location_m,pos_at_m,neg_at_m,peak_pos_T,peak_neg_T,dipole_size_m,max_abs_T,orientation\n";
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto& d = f[i];
        s += std::to_string(i) + "," + format_double(d.location) + "," + format_double(d.pos_at) + "," +
             format_double(d.neg_at) + "," + format_double(d.peak_pos) + "," + format_double(d.peak_neg) + "," +
             format_double(d.dipole_size) + "," + format_double(d.max_abs) + "," + std::to_string(d.orientation) +
             "\n";
    }
    return s;
}

std::string scalar_csv(const PlaneLattice& l, const std::vector<double>& v, const char* column) {
    std::string s = std::string("x_m,y_m,") + column + "\n";
    for (int j = 0; j < l.ny; ++j) {
        for (int i = 0; i < l.nx; ++i) {
            const double x = v[l.index(i, j)];
            s += format_double(l.x(i)) + "," + format_double(l.y(j)) + "," + (std::isnan(x) ? "nan" : format_double(x)) +
                 "\n";
        }
    }
    return s;
}

// Collects outputs in memory so nothing is written before the run succeeds.
struct Outputs {
    std::vector<std::pair<std::string, std::string>> files;
    void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
};

class Stopwatch {
  public:
    Stopwatch(RunReport& r, std::string& stage, std::string name) : r_(r), name_(std::move(name)), t0_(Clock::now()) {
        stage = name_;
    }
    ~Stopwatch() { r_.timings.emplace_back(name_, std::chrono::duration<double>(Clock::now() - t0_).count()); }

  private:
    RunReport& r_;
    std::string name_;
    Clock::time_point t0_;
};

void add_map_outputs(const RunConfig& cfg, const MapSet& map, const std::string& stem, Outputs& out) {
    out.add(stem + "_map.csv", write_mapset_csv(map));
    if (cfg.output.pgm) {
        const auto scale = pgm_scale(map);
        out.add(stem + "_field.pgm", write_pgm(map, scale));
        out.add(stem + "_field.pgm.txt", write_pgm_sidecar(map, scale));
    }
}

void add_map_summary(RunReport& r, const MapSet& map) {
    r.summary.emplace_back("max_abs_field_T", format_double(map.max_abs_field()));
    r.summary.emplace_back("valid_pixels", std::to_string(map.valid_count()) + " / " + std::to_string(map.fit_ok.size()));
}

void add_features(RunReport& r, const RunConfig& cfg, const MapSet& map) {
    const auto f = extract_dipole_features(map, cfg.feature_line(), cfg.fit.features);
    r.summary.emplace_back("feature_count", std::to_string(f.size()));
    r.feature_table = feature_csv(f);
}

void run_simulate(const RunConfig& cfg, RunReport& r, std::string& stage, Outputs& out) {
    MapSet map;
    {
        Stopwatch w(r, stage, "simulate");
        const auto f = cfg.forward();
        map = simulate_image(cfg.wire, f.scene, f.nv, f.optics, f.fit);
    }
    {
        Stopwatch w(r, stage, "features");
        add_map_summary(r, map);
        add_features(r, cfg, map);
    }
    add_map_outputs(cfg, map, cfg.output.prefix, out);
}

void run_vectormap(const RunConfig& cfg, RunReport& r, std::string& stage, Outputs& out) {
    std::vector<AxisMap> maps;
    for (int k = 1; k <= 4; ++k) {
        Stopwatch w(r, stage, "simulate-axis" + std::to_string(k));
        auto f = cfg.forward();
        f.scene.nv_axis_index = k;
        const auto m = simulate_image(cfg.wire, f.scene, f.nv, f.optics, f.fit);
        AxisMap a;
        a.axis = nv_axes_crystal()[static_cast<std::size_t>(k - 1)];
        a.lattice = m.lattice;
        a.values = m.b_parallel;
        maps.push_back(std::move(a));
        out.add(cfg.output.prefix + "_axis" + std::to_string(k) + "_map.csv", write_mapset_csv(m));
    }
    Stopwatch w(r, stage, "vectormap");
    const auto v = vector_reconstruct(maps);
    const auto& l = v.lattice;
    std::vector<double> comp[3];
    double bmax = 0.0;
    std::size_t valid = 0;
    for (const auto& b : v.b) {
        for (int c = 0; c < 3; ++c) comp[c].push_back(b[c]);
        if (b.allFinite()) {
            bmax = std::max(bmax, b.norm());
            ++valid;
        }
    }
    out.add(cfg.output.prefix + "_bx.csv", scalar_csv(l, comp[0], "bx_T"));
    out.add(cfg.output.prefix + "_by.csv", scalar_csv(l, comp[1], "by_T"));
    out.add(cfg.output.prefix + "_bz.csv", scalar_csv(l, comp[2], "bz_T"));
    out.add(cfg.output.prefix + "_residual.csv", scalar_csv(l, v.residual, "residual_T"));
    r.summary.emplace_back("max_abs_field_T", format_double(bmax));
    r.summary.emplace_back("valid_pixels", std::to_string(valid) + " / " + std::to_string(v.b.size()));
}

void run_fit(const RunConfig& cfg, const RunOptions& opt, RunReport& r, std::string& stage, Outputs& out) {
    MapSet measured;
    const auto f = cfg.forward();
    if (!opt.input.empty()) {
        stage = "read-input";
        measured = parse_mapset_csv(read_file(opt.input));
        r.summary.emplace_back("measured", std::filesystem::path(opt.input).filename().string());
    } else {
        Stopwatch w(r, stage, "simulate");
        measured = simulate_image(cfg.wire, f.scene, f.nv, f.optics, f.fit);
        r.summary.emplace_back("measured", "synthetic from [wire]");
    }
    add_map_summary(r, measured);
    add_features(r, cfg, measured);
    FitResult res;
    {
        Stopwatch w(r, stage, "fit");
        res = fit_parameters(measured, cfg.wire, cfg.feature_line(), f, cfg.fit);
    }
    std::string head = "diameter_m";
    std::string row = format_double(res.diameter);
    for (const auto& m : res.ms_per_material) {
        head += ",ms_" + m.material + "_A_per_m";
        row += "," + format_double(m.ms);
        r.summary.emplace_back("fit_ms_" + m.material + "_A_per_m", format_double(m.ms));
    }
    head += ",field_discrepancy,size_discrepancy,objective,evaluated,skipped\n";
    row += "," + format_double(res.field_discrepancy) + "," + format_double(res.size_discrepancy) + "," +
           format_double(res.objective) + "," + std::to_string(res.evaluated) + "," + std::to_string(res.skipped) + "\n";
    out.add(cfg.output.prefix + "_fit.csv", head + row);
    r.summary.emplace_back("fit_diameter_m", format_double(res.diameter));
    r.summary.emplace_back("fit_field_discrepancy", format_double(res.field_discrepancy));
    r.summary.emplace_back("fit_size_discrepancy", format_double(res.size_discrepancy));
    r.summary.emplace_back("fit_objective", format_double(res.objective));
    r.summary.emplace_back("fit_candidates", std::to_string(res.evaluated) + " evaluated, " +
                                                 std::to_string(res.skipped) + " skipped");
}

void run_hysteresis(const RunConfig& cfg, RunReport& r, std::string& stage, Outputs& out) {
    HysteresisRun run;
    {
        Stopwatch w(r, stage, "hysteresis");
        const Vec3* drive = cfg.hysteresis.drive ? &*cfg.hysteresis.drive : nullptr;
        run = simulate_hysteresis(cfg.wire, cfg.switching(), cfg.hysteresis.sweep, cfg.forward(), drive);
    }
    std::string csv = "h_T,m_norm";
    for (std::size_t i = 0; i < cfg.wire.segments.size(); ++i) csv += ",scale_" + std::to_string(i);
    csv += "\n";
    for (const auto& p : run.curve.points) {
        csv += format_double(p.h_ext) + "," + format_double(p.m_norm);
        for (double s : p.scales) csv += "," + format_double(s);
        csv += "\n";
    }
    out.add(cfg.output.prefix + "_hysteresis.csv", csv);
    for (std::size_t k = 0; k < run.frames.size(); ++k) {
        char idx[24];
        std::snprintf(idx, sizeof idx, "%03zu", k);
        add_map_outputs(cfg, run.frames[k].map, cfg.output.prefix + "_frame" + idx, out);
    }
    r.summary.emplace_back("frames", std::to_string(run.frames.size()));
    r.summary.emplace_back("coercivity_T",
                           run.curve.in_range() ? format_double(run.curve.coercivity) : std::string("out-of-range"));
    if (run.curve.in_range()) r.summary.emplace_back("crossing_field_T", format_double(run.curve.crossing_field));
}

void run_export_mif(const RunConfig& cfg, RunReport& r, std::string& stage, Outputs& out) {
    stage = "export-mif";
    out.add(cfg.output.prefix + ".mif", export_mif(cfg.wire, cfg.mif_cell));
    r.summary.emplace_back("segments", std::to_string(cfg.wire.segments.size()));
    r.summary.emplace_back("relax_cell_m", format_double(cfg.mif_cell));
}

void run_ingest_ovf(const RunConfig& cfg, const RunOptions& opt, RunReport& r, std::string& stage, Outputs& out) {
    if (opt.input.empty()) throw InvalidArgumentError("ingest-ovf needs --input <file.ovf>");
    stage = "read-input";
    const std::string text = read_file(opt.input);
    stage = "parse-ovf";
    auto grid = parse_ovf(text);
    if (cfg.ovf.placement == OvfPlacement::surface) {
        const double h = grid.cell_size;
        grid.origin = Vec3(cfg.ovf.center[0] - 0.5 * h * grid.dims[0], cfg.ovf.center[1] - 0.5 * h * grid.dims[1],
                           cfg.ovf.standoff.value_or(cfg.nv.depth));
    }
    r.summary.emplace_back("cells", std::to_string(grid.cell_count()));
    r.summary.emplace_back("magnetized_cells", std::to_string(grid.nonzero_cells()));
    out.add(cfg.output.prefix + "_ingested.ovf", write_ovf(grid));
    MapSet map;
    {
        Stopwatch w(r, stage, "simulate");
        const auto f = cfg.forward();
        map = simulate_image(grid, f.scene, f.nv, f.optics, f.fit);
    }
    add_map_summary(r, map);
    add_features(r, cfg, map);
    add_map_outputs(cfg, map, cfg.output.prefix, out);
}

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

}  // namespace

std::string RunReport::render() const {
    std::ostringstream o;
    o << "# nvwire run report\n";
    o << "version = " << NVWIRE_VERSION << "\n";
    o << "command = " << command << "\n";
    if (!timestamp.empty()) o << "timestamp = " << timestamp << "\n";
    if (!timings.empty()) {
        o << "\n[timings]\n";
        for (const auto& [k, v] : timings) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", v);
            o << k << "_s = " << buf << "\n";
        }
    }
    o << "\n[summary]\n";
    for (const auto& [k, v] : summary) o << k << " = " << v << "\n";
    if (!feature_table.empty()) o << "\n[features]\n" << feature_table;
    o << "\n[manifest]\n";
    for (const auto& [k, v] : manifest) o << k << " = " << v << " bytes\n";
    o << "\n[config]\n" << config_echo;
    return o.str();
}

RunReport run_command(const RunOptions& opt, std::string& stage) {
    stage = "config";
    RunConfig cfg = opt.config_path.empty() ? default_config() : load_config(read_file(opt.config_path));
    RunReport r;
    r.command = opt.command;
    if (opt.timestamp) r.timestamp = utc_now();
    r.config_echo = config_echo(cfg);

    Outputs out;
    const auto t0 = Clock::now();
    if (opt.command == "simulate") run_simulate(cfg, r, stage, out);
    else if (opt.command == "vectormap") run_vectormap(cfg, r, stage, out);
    else if (opt.command == "fit") run_fit(cfg, opt, r, stage, out);
    else if (opt.command == "hysteresis") run_hysteresis(cfg, r, stage, out);
    else if (opt.command == "export-mif") run_export_mif(cfg, r, stage, out);
    else if (opt.command == "ingest-ovf") run_ingest_ovf(cfg, opt, r, stage, out);
    else throw InvalidArgumentError("unknown command '" + opt.command + "'");
    r.timings.emplace_back("total", std::chrono::duration<double>(Clock::now() - t0).count());
    if (!opt.timestamp) r.timings.clear();

    stage = "write";
    out.add(cfg.output.prefix + "_config.txt", r.config_echo);
    for (const auto& [name, content] : out.files) r.manifest.emplace_back(name, content.size());
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + opt.out_dir + "': " + ec.message());
    const std::filesystem::path dir(opt.out_dir);
    for (const auto& [name, content] : out.files) write_file((dir / name).string(), content);
    write_file((dir / (cfg.output.prefix + "_report.txt")).string(), r.render());
    return r;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"NV wide-field magnetometry simulator for segmented nanowires", "nvwire"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(NVWIRE_VERSION));
    RunOptions opt;
    bool no_timestamp = false;
    const std::map<std::string, std::string> help = {
        {"simulate", "render the wire's magnetic image and dipole features"},
        {"vectormap", "image along all four NV axes and reconstruct Bx, By, Bz"},
        {"fit", "grid-search Ms and diameter against a measured map"},
        {"hysteresis", "sweep the external field through a bistable switching model"},
        {"export-mif", "write a MIF 2.1 relaxation problem for the wire"},
        {"ingest-ovf", "image a magnetization grid read from an OVF 2.0 file"},
    };
    for (const char* name : kCommands) {
        auto* sub = app.add_subcommand(name, help.at(name));
        sub->add_option("-c,--config", opt.config_path, "config file (defaults when omitted)");
        sub->add_option("-o,--out", opt.out_dir, "output directory");
        if (std::string(name) == "fit" || std::string(name) == "ingest-ovf") {
            auto* in = sub->add_option("-i,--input", opt.input, "input file");
            if (std::string(name) == "ingest-ovf") in->required();
        }
        sub->add_flag("--no-timestamp", no_timestamp, "omit timestamp and timings from the report");
        sub->callback([&opt, name] { opt.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << NVWIRE_VERSION << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: stage=arguments kind=usage message=" << one_line(e.what()) << "\n";
        return 2;
    }
    opt.timestamp = !no_timestamp;
    std::string stage = "config";
    try {
        const auto r = run_command(opt, stage);
        for (const auto& [name, bytes] : r.manifest) out << "wrote " << name << " (" << bytes << " bytes)\n";
        out << "wrote " << r.manifest.size() + 1 << " files to " << opt.out_dir << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: stage=" << stage << " kind=" << e.kind() << " message=" << one_line(e.what()) << "\n";
    } catch (const std::exception& e) {
        err << "error: stage=" << stage << " kind=internal message=" << one_line(e.what()) << "\n";
    }
    return 1;
}

}  // namespace nvwire
