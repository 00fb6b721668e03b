#include "jemlab/tabular.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "jemlab/error.hpp"

namespace jemlab {

namespace {

constexpr char kTensorMagic[4] = {'J', 'T', 'N', 'S'};

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  binio::Writer w;
  w.bytes(kTensorMagic, 4);
  w.u32(kTensorFileVersion);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  w.f64s(t.data());
  return std::move(w.buffer());
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes, "tensor file");
  char magic[4];
  r.bytes(magic, 4);
  if (std::string_view(magic, 4) != std::string_view(kTensorMagic, 4)) throw FormatError("tensor file: bad magic");
  const auto version = r.u32();
  if (version != kTensorFileVersion) throw FormatError("tensor file: unsupported version " + std::to_string(version));
  const auto rank = r.u32();
  if (rank > 16) throw FormatError("tensor file: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = r.u64();
    if (d == 0) throw FormatError("tensor file: zero dimension");
  }
  const auto n = shape_numel(shape);
  if (n > r.remaining() / 8) throw FormatError("tensor file: truncated payload");
  std::vector<double> data(n);
  r.f64s(data);
  if (r.remaining() != 0) throw FormatError("tensor file: trailing bytes");
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) { binio::write_file(path.string(), encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path.string());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("read failure on " + path.string());
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failure on " + path.string());
}

namespace {

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

CsvTable CsvTable::parse(const std::string& text, const std::string& source) {
  CsvTable t;
  t.source_ = source;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    auto fields = split_fields(line);
    if (!have_header) {
      t.header_ = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != t.header_.size()) {
        throw FormatError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header_.size()) +
                          " fields, found " + std::to_string(fields.size()));
      }
      t.rows_.push_back(std::move(fields));
      t.lines_.push_back(line_no);
    }
    if (nl == text.size()) break;
  }
  if (!have_header) throw FormatError(source + ": missing header line");
  return t;
}

CsvTable CsvTable::read(const std::filesystem::path& path) { return parse(read_text(path), path.string()); }

std::string CsvTable::to_string() const {
  std::string out;
  auto join = [&](const std::vector<std::string>& f) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i) out += ',';
      out += f[i];
    }
    out += '\n';
  };
  join(header_);
  for (const auto& r : rows_) join(r);
  return out;
}

void CsvTable::write(const std::filesystem::path& path) const { write_text(path, to_string()); }

void CsvTable::add_row(std::vector<std::string> fields) {
  if (fields.size() != header_.size()) throw DimensionError("csv row width does not match header");
  rows_.push_back(std::move(fields));
  lines_.push_back(rows_.size() + 1);
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& h : header_) {
    if (h == name) return true;
  }
  return false;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw FormatError(source_ + ": missing column '" + name + "'");
}

void CsvTable::fail(std::size_t row, std::size_t col, const std::string& what) const {
  throw FormatError(source_ + ":" + std::to_string(lines_.at(row)) + ": column '" + header_.at(col) + "': " + what +
                    " '" + rows_.at(row).at(col) + "'");
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const auto& s = cell(row, col);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) fail(row, col, "not a number");
  return v;
}

std::int64_t CsvTable::integer(std::size_t row, std::size_t col) const {
  const auto& s = cell(row, col);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) fail(row, col, "not an integer");
  return v;
}

std::size_t CsvTable::index(std::size_t row, std::size_t col) const {
  const auto v = integer(row, col);
  if (v < 0) fail(row, col, "negative index");
  return static_cast<std::size_t>(v);
}

}  // namespace jemlab
