#pragma once

#include "nelsonmc/sampler.hpp"

#include <string>

namespace nelsonmc {

/// Binary path archive, little-endian:
///   u64 magic "NMCARCH1", u32 version,
///   u32 fingerprint length + bytes,
///   f64 half_width, f64 dt, f64 t_margin,
///   i32 dim, u8 pinned, i32 n_chains, i32 n_paths,
///   per chain:  i32 n_kept, f64 accept_bead/block/shift, tau_int, ess,
///   per path:   i32 chain index, n_beads*dim f64 coordinates.
/// Byte-identical for identical SampleSets.
void write_archive(const SampleSet& samples, const std::string& path);
SampleSet read_archive(const std::string& path);

} // namespace nelsonmc
