#pragma once

#include <filesystem>
#include <iosfwd>

#include "pmp/tensor.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

// PMT1 layout: "PMT1", u32 rank, rank x u32 dims, then row-major f32 values.
// All integers and floats are little-endian.

void write_pmt1(std::ostream& os, const Tensor& t);
Tensor read_pmt1(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

PMP_PRECISION_END
}  // namespace pmp
