#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ktraj/core.hpp"
#include "ktraj/density.hpp"

namespace ktraj::io {

/// Trajectory file ("SPKT" version 1), little-endian:
///   "SPKT" | u32 version | u8 dims | u32 shots | u32 samples | f64 k_max[dims] |
///   f64 raster_dt | f32 coords[shots * samples * dims]  (shot-major, axis innermost)
struct TrajectoryFile {
    SamplingPattern pattern;
    std::vector<double> k_max;  // 1/m, per axis
    double raster_dt = 0.0;     // s
};

inline constexpr std::uint32_t kSpktVersion = 1;

void write_spkt(std::ostream& out, const TrajectoryFile& file);
TrajectoryFile read_spkt(std::istream& in);

void save_spkt(const std::string& path, const TrajectoryFile& file);
TrajectoryFile load_spkt(const std::string& path);

/// CSV with header `shot,sample,kx,ky[,kz]`, normalized coordinates, 9 significant digits.
void write_csv(std::ostream& out, const SamplingPattern& pattern);
SamplingPattern read_csv(std::istream& in);

/// Loads either format; SPKT is recognized by its magic bytes, anything else is parsed as CSV.
/// CSV files carry no k_max / raster_dt, so those fields come back empty / zero.
TrajectoryFile load_trajectory(const std::string& path);

/// Density grid file: "SPKD" | u8 dims | u32 side (2N+1) | f64 values (row-major).
void write_spkd(std::ostream& out, const TargetDensity& density);
TargetDensity read_spkd(std::istream& in);

void save_spkd(const std::string& path, const TargetDensity& density);
TargetDensity load_spkd(const std::string& path);

}  // namespace ktraj::io
