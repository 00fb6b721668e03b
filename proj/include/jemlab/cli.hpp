#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "jemlab/tensor.hpp"

namespace jemlab {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitOracle = 5;

/// Runs the tool on `args` (without the program name). Never throws; every
/// failure is reported on `err` and mapped to an exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Binary PGM (one channel) or PPM (three channels) of an image [C x H x W]
/// with values mapped linearly from [-1, 1] to [0, 255], rounded and clamped.
std::vector<std::uint8_t> encode_pnm(const Tensor& image);
void write_pnm(const Tensor& image, const std::filesystem::path& path);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits; used in manifests.
std::string file_digest(const std::filesystem::path& path);

}  // namespace jemlab
