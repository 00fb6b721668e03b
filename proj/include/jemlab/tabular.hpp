#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "jemlab/tensor.hpp"

namespace jemlab {

// ---- JTNS tensor files ------------------------------------------------------
// "JTNS", u32 version, u32 ndims, ndims x u64 dims, little-endian f64 payload.

inline constexpr std::uint32_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

// ---- CSV --------------------------------------------------------------------
// Mandatory header line; lines starting with '#' and blank lines are skipped.
// Fields are plain comma-separated values without quoting.

class CsvTable {
 public:
  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  static CsvTable parse(const std::string& text, const std::string& source = "<memory>");
  static CsvTable read(const std::filesystem::path& path);

  std::string to_string() const;
  void write(const std::filesystem::path& path) const;

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }

  void add_row(std::vector<std::string> fields);

  /// Index of a named column; FormatError naming the column when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;

  const std::string& cell(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }
  /// Parsed cell; FormatError with source and line number on malformed input.
  double number(std::size_t row, std::size_t col) const;
  std::int64_t integer(std::size_t row, std::size_t col) const;
  std::size_t index(std::size_t row, std::size_t col) const;

  /// Source line of a data row (1-based, counting the header).
  std::size_t line_of(std::size_t row) const { return lines_.at(row); }

 private:
  [[noreturn]] void fail(std::size_t row, std::size_t col, const std::string& what) const;

  std::string source_ = "<memory>";
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace jemlab
