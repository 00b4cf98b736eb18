#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnhf/core.hpp"

namespace pnhf::io {

// --- dataset file, magic "PNHF" ---------------------------------------
// Little-endian. Header: magic, u32 version=1, u32 example_count,
// u32 n_particles, u32 snapshot_count S, S x f64 snapshot times.
// Per example: f64 mu_q, sigma_q, mu_p, sigma_p, then S blocks of
// (N x f64 q, N x f64 p). All examples share N and the time ladder.

void write_dataset(const std::string& path, const std::vector<SnapshotSeries>& examples);
std::vector<SnapshotSeries> read_dataset(const std::string& path);

// --- named-tensor file, magic "PNHW" ----------------------------------
// Little-endian. Header: magic, u32 version=1, u32 tensor_count.
// Per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
// prod(dims) x f64 data (row-major for rank-2 tensors).

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> data;
};

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::string& path);

// --- misc ---------------------------------------------------------------

// Shortest round-trippable decimal form of a double.
std::string format_double(double x);

// Writes to <path>.tmp and renames, so readers never observe a partial file.
void atomic_write_text(const std::string& path, const std::string& content);
void atomic_write_binary(const std::string& path, const std::vector<std::uint8_t>& bytes);

// FNV-1a 64 over a string, hex-encoded; used to stamp configs into metadata.
std::string fnv1a_hex(const std::string& s);

}  // namespace pnhf::io
