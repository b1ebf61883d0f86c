#pragma once

#include "nvwire/magnetostatics.hpp"

#include <string>
#include <string_view>

namespace nvwire {

/// Reads an OVF 2.0 text file (rectangular mesh, valuedim 3, "Data Text").
/// Header lengths are metres; values are scaled by `valuemultiplier` when
/// present. Cells must be cubic. Throws FormatError naming the line.
MagnetizationGrid parse_ovf(std::string_view text);

/// Writes an OVF 2.0 rectangular-mesh text file with round-trip decimal values.
std::string write_ovf(const MagnetizationGrid& grid, std::string_view title = "nvwire magnetization");

/// Emits a MIF 2.1 problem description of the wire for an external
/// micromagnetic relaxation: a script atlas with one region per material,
/// uniform exchange/anisotropy/Ms per region, demag, and a minimization
/// driver seeded with the segment magnetizations.
/// Throws IncompleteMaterialError when a material lacks k1 or a_ex.
std::string export_mif(const WireSpec& spec, double relax_cell = 4e-9);

}  // namespace nvwire
