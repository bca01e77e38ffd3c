#pragma once

#include <filesystem>

#include "dg/tensor.hpp"

namespace dg {

/// Binary tensor container, little-endian:
///   magic "DGT1" | u32 version=1 | u32 ndim | ndim x u32 dims |
///   product(dims) float32 payload, row-major.
/// Values are narrowed to float32 on save and widened on load.
void save_tensor(const std::filesystem::path& path, const Tensor& t);

/// Throws FormatError (naming the byte offset involved) on bad magic,
/// unsupported version, or truncation.
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace dg
