#include "nvwire/mapset_io.hpp"

#include "nvwire/errors.hpp"
#include "nvwire/format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace nvwire {

std::string write_mapset_csv(const MapSet& map) {
    std::string out = "x_m,y_m,b_T,contrast,linewidth_Hz,fit_ok\n";
    const auto& l = map.lattice;
    for (int j = 0; j < l.ny; ++j) {
        for (int i = 0; i < l.nx; ++i) {
            const std::size_t p = l.index(i, j);
            out += format_double(l.x(i));
            out += ',';
            out += format_double(l.y(j));
            out += ',';
            out += format_double(map.b_parallel[p]);
            out += ',';
            out += format_double(map.contrast[p]);
            out += ',';
            out += format_double(map.linewidth[p]);
            out += ',';
            out += map.fit_ok[p] ? '1' : '0';
            out += '\n';
        }
    }
    return out;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

MapSet parse_mapset_csv(std::string_view text) {
    struct Row {
        double x, y, b, c, w;
        bool ok;
    };
    std::vector<Row> rows;
    int line_no = 0;
    bool header = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        if (!header) {
            if (line != "x_m,y_m,b_T,contrast,linewidth_Hz,fit_ok") {
                throw FormatError(line_no, "expected header x_m,y_m,b_T,contrast,linewidth_Hz,fit_ok");
            }
            header = true;
            continue;
        }
        const auto f = split_commas(line);
        if (f.size() != 6) throw FormatError(line_no, "expected 6 columns, found " + std::to_string(f.size()));
        Row r{};
        if (!parse_double(f[0], r.x) || !parse_double(f[1], r.y) || !parse_double(f[2], r.b) ||
            !parse_double(f[3], r.c) || !parse_double(f[4], r.w)) {
            throw FormatError(line_no, "non-numeric value");
        }
        if (f[5] != "0" && f[5] != "1") throw FormatError(line_no, "fit_ok must be 0 or 1");
        r.ok = f[5] == "1";
        rows.push_back(r);
    }
    if (!header) throw FormatError(line_no, "missing header");
    if (rows.empty()) throw FormatError(line_no, "no pixel rows");

    // i runs fastest: the first row change in y gives nx.
    std::size_t nx = 1;
    while (nx < rows.size() && rows[nx].y == rows[0].y) ++nx;
    if (rows.size() % nx != 0) throw FormatError(line_no, "pixel rows do not form a complete grid");
    MapSet m;
    auto& l = m.lattice;
    l.nx = static_cast<int>(nx);
    l.ny = static_cast<int>(rows.size() / nx);
    l.x0 = rows[0].x;
    l.y0 = rows[0].y;
    l.pitch = nx > 1 ? rows[1].x - rows[0].x : (l.ny > 1 ? rows[nx].y - rows[0].y : 0.0);
    if (!(l.pitch > 0.0) && rows.size() > 1) throw FormatError(2, "pixel coordinates are not increasing");
    // A neighbouring pitch that reproduces every coordinate bitwise beats the
    // first difference, so a written map reads back to the same lattice.
    const auto exact = [&](double pitch) {
        PlaneLattice t = l;
        t.pitch = pitch;
        for (std::size_t p = 0; p < rows.size(); ++p) {
            if (rows[p].x != t.x(static_cast<int>(p % nx)) || rows[p].y != t.y(static_cast<int>(p / nx))) return false;
        }
        return true;
    };
    if (rows.size() > 1 && !exact(l.pitch)) {
        const double span = nx > 1 ? (rows[nx - 1].x - rows[0].x) / static_cast<double>(nx - 1)
                                   : (rows.back().y - rows[0].y) / static_cast<double>(l.ny - 1);
        for (double start : {span, l.pitch}) {
            double lo = start;
            double hi = start;
            bool found = false;
            for (int k = 0; k < 16 && !found; ++k) {
                if (exact(hi)) {
                    l.pitch = hi;
                    found = true;
                } else if (exact(lo)) {
                    l.pitch = lo;
                    found = true;
                }
                hi = std::nextafter(hi, 1.0);
                lo = std::nextafter(lo, 0.0);
            }
            if (found) break;
        }
    }
    const double tol = 1e-6 * std::max(l.pitch, 1e-30);
    for (std::size_t p = 0; p < rows.size(); ++p) {
        const int i = static_cast<int>(p % nx);
        const int j = static_cast<int>(p / nx);
        if (std::abs(rows[p].x - l.x(i)) > tol || std::abs(rows[p].y - l.y(j)) > tol) {
            throw FormatError(static_cast<int>(p) + 2, "pixel coordinates are not a regular grid");
        }
        m.b_parallel.push_back(rows[p].b);
        m.contrast.push_back(rows[p].c);
        m.linewidth.push_back(rows[p].w);
        m.fit_ok.push_back(rows[p].ok ? 1 : 0);
    }
    return m;
}

PgmScale pgm_scale(const MapSet& map) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t p = 0; p < map.b_parallel.size(); ++p) {
        if (!map.fit_ok[p]) continue;
        lo = std::min(lo, map.b_parallel[p]);
        hi = std::max(hi, map.b_parallel[p]);
    }
    if (!(lo <= hi)) return {-1e-9, 1e-9};
    if (lo == hi) return {lo - 1e-9, hi + 1e-9};
    return {lo, hi};
}

std::string write_pgm(const MapSet& map, const PgmScale& scale) {
    if (!(scale.max_t > scale.min_t)) throw InvalidArgumentError("PGM scale needs max > min");
    const auto& l = map.lattice;
    std::string out = "P5\n" + std::to_string(l.nx) + " " + std::to_string(l.ny) + "\n65535\n";
    out.reserve(out.size() + 2 * map.b_parallel.size());
    for (int j = l.ny - 1; j >= 0; --j) {
        for (int i = 0; i < l.nx; ++i) {
            const std::size_t p = l.index(i, j);
            unsigned v = 0;
            if (map.fit_ok[p]) {
                const double t = std::clamp((map.b_parallel[p] - scale.min_t) / (scale.max_t - scale.min_t), 0.0, 1.0);
                v = 1U + static_cast<unsigned>(std::lround(t * 65534.0));
            }
            out += static_cast<char>((v >> 8) & 0xFFU);
            out += static_cast<char>(v & 0xFFU);
        }
    }
    return out;
}

std::string write_pgm_sidecar(const MapSet& map, const PgmScale& scale) {
    const auto& l = map.lattice;
    std::string s;
    s += "quantity = b_parallel\n";
    s += "unit = T\n";
    s += "min_T = " + format_double(scale.min_t) + "\n";
    s += "max_T = " + format_double(scale.max_t) + "\n";
    s += "mapping = value = min_T + (sample - 1) / 65534 * (max_T - min_T)\n";
    s += "invalid_sample = 0\n";
    s += "width = " + std::to_string(l.nx) + "\n";
    s += "height = " + std::to_string(l.ny) + "\n";
    s += "pixel_pitch_m = " + format_double(l.pitch) + "\n";
    s += "x0_m = " + format_double(l.x0) + "\n";
    s += "y0_m = " + format_double(l.y0) + "\n";
    s += "row_order = top row is largest y\n";
    return s;
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("write failed for " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace nvwire
