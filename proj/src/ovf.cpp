#include "nvwire/errors.hpp"
#include "nvwire/format.hpp"
#include "nvwire/oommf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

namespace nvwire {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

struct Line {
    int number;
    std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
    std::vector<Line> lines;
    int number = 1;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        const auto stop = end == std::string_view::npos ? text.size() : end;
        lines.push_back({number++, text.substr(pos, stop - pos)});
        if (end == std::string_view::npos) {
            break;
        }
        pos = end + 1;
    }
    return lines;
}

double header_number(const std::map<std::string, std::pair<std::string, int>>& header, const std::string& key,
                     int fallback_line) {
    const auto it = header.find(key);
    if (it == header.end()) {
        throw FormatError(fallback_line, "missing header field '" + key + "'");
    }
    double v = 0.0;
    if (!parse_double(it->second.first, v)) {
        throw FormatError(it->second.second, "header field '" + key + "' is not a number");
    }
    return v;
}

}  // namespace

MagnetizationGrid parse_ovf(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty() || lower(trim(lines.front().text)).rfind("# oommf ovf 2.0", 0) != 0) {
        throw FormatError(1, "expected '# OOMMF OVF 2.0' signature");
    }

    std::map<std::string, std::pair<std::string, int>> header;
    std::size_t idx = 1;
    int data_line = -1;
    for (; idx < lines.size(); ++idx) {
        const auto raw = trim(lines[idx].text);
        if (raw.empty()) {
            continue;
        }
        if (raw.front() != '#') {
            throw FormatError(lines[idx].number, "unexpected content before the data section");
        }
        auto body = trim(raw.substr(raw.find_first_not_of('#')));
        if (body.rfind("##", 0) == 0 || body.empty()) {
            continue;
        }
        const auto colon = body.find(':');
        if (colon == std::string_view::npos) {
            continue;
        }
        const std::string key = lower(trim(body.substr(0, colon)));
        const auto value = trim(body.substr(colon + 1));
        if (key == "begin" && lower(value).rfind("data", 0) == 0) {
            if (lower(value) != "data text") {
                throw FormatError(lines[idx].number, "only 'Data Text' sections are supported");
            }
            data_line = lines[idx].number;
            ++idx;
            break;
        }
        if (key == "begin" || key == "end") {
            continue;
        }
        header[key] = {std::string(value), lines[idx].number};
    }
    if (data_line < 0) {
        throw FormatError(lines.back().number, "no 'Begin: Data Text' section");
    }

    const auto meshtype = header.find("meshtype");
    if (meshtype == header.end() || lower(meshtype->second.first) != "rectangular") {
        throw FormatError(meshtype == header.end() ? data_line : meshtype->second.second,
                          "mesh type must be 'rectangular'");
    }
    const auto valuedim = header.find("valuedim");
    if (valuedim != header.end() && trim(valuedim->second.first) != "3") {
        throw FormatError(valuedim->second.second, "valuedim must be 3");
    }
    if (const auto unit = header.find("meshunit"); unit != header.end() && lower(unit->second.first) != "m") {
        throw FormatError(unit->second.second, "mesh unit must be 'm'");
    }

    const double nxd = header_number(header, "xnodes", data_line);
    const double nyd = header_number(header, "ynodes", data_line);
    const double nzd = header_number(header, "znodes", data_line);
    const double hx = header_number(header, "xstepsize", data_line);
    const double hy = header_number(header, "ystepsize", data_line);
    const double hz = header_number(header, "zstepsize", data_line);
    if (nxd < 1 || nyd < 1 || nzd < 1 || nxd != std::floor(nxd) || nyd != std::floor(nyd) ||
        nzd != std::floor(nzd)) {
        throw FormatError(header.at("xnodes").second, "node counts must be positive integers");
    }
    if (!(hx > 0.0) || hx != hy || hx != hz) {
        throw FormatError(header.at("xstepsize").second, "only cubic cells are supported");
    }

    Vec3 corner;
    const char* axes[3] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a) {
        const std::string min_key = std::string(axes[a]) + "min";
        if (header.count(min_key) != 0) {
            corner[a] = header_number(header, min_key, data_line);
        } else {
            corner[a] = header_number(header, std::string(axes[a]) + "base", data_line) - 0.5 * hx;
        }
    }
    double multiplier = 1.0;
    if (header.count("valuemultiplier") != 0) {
        multiplier = header_number(header, "valuemultiplier", data_line);
    }

    MagnetizationGrid grid(hx, {static_cast<int>(nxd), static_cast<int>(nyd), static_cast<int>(nzd)}, corner);
    const std::size_t expected = grid.cell_count();
    std::size_t count = 0;
    bool closed = false;
    for (; idx < lines.size(); ++idx) {
        const auto raw = trim(lines[idx].text);
        if (raw.empty()) {
            continue;
        }
        if (raw.front() == '#') {
            const auto body = lower(trim(raw.substr(raw.find_first_not_of('#'))));
            if (body.rfind("end:", 0) == 0) {
                if (count != expected) {
                    throw FormatError(lines[idx].number, "data section holds " + std::to_string(count) +
                                                             " rows but the header declares " +
                                                             std::to_string(expected) + " cells");
                }
                closed = true;
                break;
            }
            continue;
        }
        if (count >= expected) {
            throw FormatError(lines[idx].number, "more data rows than the " + std::to_string(expected) +
                                                     " cells declared in the header");
        }
        std::istringstream in{std::string(raw)};
        std::string token;
        Vec3 v;
        int n = 0;
        while (in >> token) {
            if (n >= 3 || !parse_double(token, v[n])) {
                throw FormatError(lines[idx].number, "expected three numeric values");
            }
            ++n;
        }
        if (n != 3) {
            throw FormatError(lines[idx].number, "expected three numeric values");
        }
        grid.m[count++] = multiplier == 1.0 ? v : Vec3(v * multiplier);
    }
    if (!closed) {
        throw FormatError(lines.back().number, "data section not terminated ('# End: Data Text' missing); read " +
                                                   std::to_string(count) + " of " + std::to_string(expected) +
                                                   " rows");
    }
    return grid;
}

std::string write_ovf(const MagnetizationGrid& grid, std::string_view title) {
    const double h = grid.cell_size;
    const Vec3 hi = grid.origin + h * Vec3(grid.dims[0], grid.dims[1], grid.dims[2]);
    std::ostringstream out;
    out << "# OOMMF OVF 2.0\n"
        << "# Segment count: 1\n"
        << "# Begin: Segment\n"
        << "# Begin: Header\n"
        << "# Title: " << title << "\n"
        << "# meshtype: rectangular\n"
        << "# meshunit: m\n"
        << "# xmin: " << format_double(grid.origin.x()) << "\n"
        << "# ymin: " << format_double(grid.origin.y()) << "\n"
        << "# zmin: " << format_double(grid.origin.z()) << "\n"
        << "# xmax: " << format_double(hi.x()) << "\n"
        << "# ymax: " << format_double(hi.y()) << "\n"
        << "# zmax: " << format_double(hi.z()) << "\n"
        << "# valuedim: 3\n"
        << "# valuelabels: m_x m_y m_z\n"
        << "# valueunits: A/m A/m A/m\n"
        << "# xbase: " << format_double(grid.origin.x() + 0.5 * h) << "\n"
        << "# ybase: " << format_double(grid.origin.y() + 0.5 * h) << "\n"
        << "# zbase: " << format_double(grid.origin.z() + 0.5 * h) << "\n"
        << "# xnodes: " << grid.dims[0] << "\n"
        << "# ynodes: " << grid.dims[1] << "\n"
        << "# znodes: " << grid.dims[2] << "\n"
        << "# xstepsize: " << format_double(h) << "\n"
        << "# ystepsize: " << format_double(h) << "\n"
        << "# zstepsize: " << format_double(h) << "\n"
        << "# End: Header\n"
        << "# Begin: Data Text\n";
    for (const auto& v : grid.m) {
        out << format_double(v.x()) << ' ' << format_double(v.y()) << ' ' << format_double(v.z()) << '\n';
    }
    out << "# End: Data Text\n"
        << "# End: Segment\n";
    return out.str();
}

}  // namespace nvwire
