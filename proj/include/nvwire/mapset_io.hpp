#pragma once

#include "nvwire/imaging.hpp"

#include <string>
#include <string_view>

namespace nvwire {

/// One row per pixel, i fastest: x_m,y_m,b_T,contrast,linewidth_Hz,fit_ok.
/// Invalid pixels print "nan" in the three value columns.
std::string write_mapset_csv(const MapSet& map);

/// Inverse of write_mapset_csv. The lattice is recovered from the x/y columns,
/// which must form a complete regular grid in i-fastest order.
MapSet parse_mapset_csv(std::string_view text);

/// Linear 16-bit scaling of the field map for PGM export.
struct PgmScale {
    double min_t = 0.0;
    double max_t = 0.0;
};

/// Range used by write_pgm: min/max of b_parallel over valid pixels
/// (a zero-width range is widened by 1 nT each side).
PgmScale pgm_scale(const MapSet& map);

/// Binary P5 image, maxval 65535, big-endian samples. Row 0 of the image is
/// the top (largest y). Valid pixels map to 1..65535 linearly over the
/// scale; invalid pixels are 0.
std::string write_pgm(const MapSet& map, const PgmScale& scale);

/// Sidecar text describing the PGM scaling.
std::string write_pgm_sidecar(const MapSet& map, const PgmScale& scale);

/// Writes `content` to `path` (binary), throwing IoError on failure.
void write_file(const std::string& path, std::string_view content);

/// Reads a whole file, throwing IoError on failure.
std::string read_file(const std::string& path);

}  // namespace nvwire
