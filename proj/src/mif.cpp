#include "nvwire/errors.hpp"
#include "nvwire/format.hpp"
#include "nvwire/oommf.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace nvwire {

namespace {

std::string num(double v) { return format_double(v); }

struct Region {
    std::string name;
    Material material;
};

}  // namespace

std::string export_mif(const WireSpec& spec, double relax_cell) {
    spec.validate();
    if (!(relax_cell > 0.0)) {
        throw InvalidArgumentError("relaxation cell size must be positive");
    }

    std::vector<Region> regions;
    std::vector<int> segment_region;
    for (const auto& s : spec.segments) {
        if (std::isnan(s.material.k1) || std::isnan(s.material.a_ex)) {
            throw IncompleteMaterialError("material '" + s.material.name +
                                          "' lacks the anisotropy constant or exchange stiffness needed for MIF export");
        }
        auto it = std::find_if(regions.begin(), regions.end(),
                               [&](const Region& r) { return r.name == s.material.name; });
        if (it == regions.end()) {
            regions.push_back({s.material.name, s.material});
            it = regions.end() - 1;
        } else if (!(it->material == s.material)) {
            throw InvalidArgumentError("material name '" + s.material.name + "' used with different constants");
        }
        segment_region.push_back(static_cast<int>(it - regions.begin()) + 1);
    }

    // Bounding box padded by one relaxation cell, sides rounded up to whole cells.
    const double r = 0.5 * spec.diameter;
    const Vec3 tail = spec.origin + spec.total_length() * spec.axis;
    Vec3 lo = spec.origin.cwiseMin(tail) - Vec3::Constant(r + relax_cell);
    Vec3 hi = spec.origin.cwiseMax(tail) + Vec3::Constant(r + relax_cell);
    for (int a = 0; a < 3; ++a) {
        const double cells = std::ceil((hi[a] - lo[a]) / relax_cell - 1e-9);
        hi[a] = lo[a] + cells * relax_cell;
    }

    std::ostringstream out;
    out << "# MIF 2.1\n"
        << "# Segmented cylindrical wire, " << spec.segments.size() << " segment(s)\n\n"
        << "set wire_origin {" << num(spec.origin.x()) << ' ' << num(spec.origin.y()) << ' '
        << num(spec.origin.z()) << "}\n"
        << "set wire_axis {" << num(spec.axis.x()) << ' ' << num(spec.axis.y()) << ' ' << num(spec.axis.z())
        << "}\n"
        << "set wire_radius " << num(r) << "\n"
        << "# Segment table: {end_position region_index mx my mz}\n"
        << "set wire_segments {\n";
    double end = 0.0;
    for (std::size_t i = 0; i < spec.segments.size(); ++i) {
        const auto& s = spec.segments[i];
        end += s.length;
        const Vec3 m0 = s.scale * s.direction;
        out << "  {" << num(end) << ' ' << segment_region[i] << ' ' << num(m0.x()) << ' ' << num(m0.y()) << ' '
            << num(m0.z()) << "}\n";
    }
    out << "}\n\n"
        << "proc WireLocate {x y z} {\n"
        << "  global wire_origin wire_axis wire_radius wire_segments\n"
        << "  set dx [expr {$x - [lindex $wire_origin 0]}]\n"
        << "  set dy [expr {$y - [lindex $wire_origin 1]}]\n"
        << "  set dz [expr {$z - [lindex $wire_origin 2]}]\n"
        << "  set s [expr {$dx*[lindex $wire_axis 0] + $dy*[lindex $wire_axis 1] + $dz*[lindex $wire_axis 2]}]\n"
        << "  set rr [expr {$dx*$dx + $dy*$dy + $dz*$dz - $s*$s}]\n"
        << "  if {$s < 0 || $rr > $wire_radius*$wire_radius} { return {} }\n"
        << "  foreach seg $wire_segments {\n"
        << "    if {$s < [lindex $seg 0]} { return $seg }\n"
        << "  }\n"
        << "  return {}\n"
        << "}\n\n"
        << "proc WireRegion {x y z} {\n"
        << "  set seg [WireLocate $x $y $z]\n"
        << "  if {[llength $seg] == 0} { return 0 }\n"
        << "  return [lindex $seg 1]\n"
        << "}\n\n"
        << "proc WireM0 {x y z} {\n"
        << "  set seg [WireLocate $x $y $z]\n"
        << "  if {[llength $seg] == 0} { return [list 0 0 1] }\n"
        << "  set mx [lindex $seg 2]\n"
        << "  set my [lindex $seg 3]\n"
        << "  set mz [lindex $seg 4]\n"
        << "  if {$mx == 0 && $my == 0 && $mz == 0} { return [list 0 0 1] }\n"
        << "  return [list $mx $my $mz]\n"
        << "}\n\n";

    out << "Specify Oxs_ScriptAtlas:atlas {\n"
        << "  xrange {" << num(lo.x()) << ' ' << num(hi.x()) << "}\n"
        << "  yrange {" << num(lo.y()) << ' ' << num(hi.y()) << "}\n"
        << "  zrange {" << num(lo.z()) << ' ' << num(hi.z()) << "}\n"
        << "  regions {";
    for (std::size_t i = 0; i < regions.size(); ++i) {
        out << (i ? " " : "") << regions[i].name;
    }
    out << "}\n"
        << "  script_args rawpt\n"
        << "  script WireRegion\n"
        << "}\n\n"
        << "Specify Oxs_RectangularMesh:mesh {\n"
        << "  cellsize {" << num(relax_cell) << ' ' << num(relax_cell) << ' ' << num(relax_cell) << "}\n"
        << "  atlas :atlas\n"
        << "}\n\n";

    out << "Specify Oxs_Exchange6Ngbr {\n"
        << "  atlas :atlas\n"
        << "  default_A 0\n"
        << "  A {\n";
    for (std::size_t i = 0; i < regions.size(); ++i) {
        for (std::size_t j = i; j < regions.size(); ++j) {
            const double a = regions[i].material.a_ex;
            const double b = regions[j].material.a_ex;
            const double cross = (a + b) > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
            out << "    " << regions[i].name << ' ' << regions[j].name << ' ' << num(i == j ? a : cross) << "\n";
        }
    }
    out << "  }\n"
        << "}\n\n"
        << "Specify Oxs_UniaxialAnisotropy {\n"
        << "  K1 { Oxs_AtlasScalarField {\n"
        << "    atlas :atlas\n"
        << "    default_value 0\n"
        << "    values {\n";
    for (const auto& reg : regions) {
        out << "      " << reg.name << ' ' << num(reg.material.k1) << "\n";
    }
    out << "    }\n"
        << "  }}\n"
        << "  axis {" << num(spec.axis.x()) << ' ' << num(spec.axis.y()) << ' ' << num(spec.axis.z()) << "}\n"
        << "}\n\n"
        << "Specify Oxs_Demag {}\n\n"
        << "Specify Oxs_CGEvolve:evolve {}\n\n"
        << "Specify Oxs_MinDriver {\n"
        << "  evolver :evolve\n"
        << "  stopping_mxHxm 0.1\n"
        << "  mesh :mesh\n"
        << "  Ms { Oxs_AtlasScalarField {\n"
        << "    atlas :atlas\n"
        << "    default_value 0\n"
        << "    values {\n";
    for (const auto& reg : regions) {
        out << "      " << reg.name << ' ' << num(reg.material.ms) << "\n";
    }
    out << "    }\n"
        << "  }}\n"
        << "  m0 { Oxs_ScriptVectorField {\n"
        << "    atlas :atlas\n"
        << "    script_args rawpt\n"
        << "    script WireM0\n"
        << "    norm 1\n"
        << "  }}\n"
        << "}\n\n"
        << "Destination archive mmArchive\n"
        << "Schedule Oxs_MinDriver::Magnetization archive Stage 1\n";
    return out.str();
}

}  // namespace nvwire
