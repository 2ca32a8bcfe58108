#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gma/tape.hpp"
#include "gma/tensor.hpp"

namespace gma {

// GMAT binary tensor format, little-endian:
//   magic "GMAT" | u8 version=1 | u8 dtype=1 (f64) | u8 rank |
//   rank x u64 dims | row-major f64 payload
// Read/write round-trips bit-exactly.
void write_gmat(std::ostream& os, const Tensor& t);
Tensor read_gmat(std::istream& is);
void write_gmat_file(const std::string& path, const Tensor& t);
Tensor read_gmat_file(const std::string& path);

// Checkpoint container: back-to-back records of
//   u64 name length | name bytes | GMAT tensor
// holding every parameter's value in registration order.
void write_checkpoint(const std::string& path,
                      const std::vector<const Parameter*>& params);
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path);

// CSV grid export for plotting (full double precision, row per grid row).
void write_csv_grid(const std::string& path, const Tensor& grid);

// FNV-1a hash of a file's bytes, as fixed-width hex; manifest entries use it.
std::string file_hash_hex(const std::string& path);

}  // namespace gma
