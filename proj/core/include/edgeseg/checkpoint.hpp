#pragma once

#include <string>

#include "edgeseg/graph.hpp"

namespace edgeseg {

/// Binary checkpoint, all integers little-endian:
///   "ESEG"                          4-byte magic
///   u32 version (= 1)
///   u32 config byte length, config bytes (canonical JSON)
///   u32 tensor count
///   per tensor: u16 name length, name bytes, u8 rank, rank x u32 extents,
///               raw float32 elements row-major
///   u32 CRC-32 over everything after the magic
///
/// Carries every serialized tensor: conv weights/biases, batch-norm
/// gamma/beta, and running statistics.
void save_checkpoint(NetworkGraph<float>& graph, const std::string& path);

NetworkGraph<float> load_checkpoint(const std::string& path);

}  // namespace edgeseg
