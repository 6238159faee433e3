#include "stemfit/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

namespace stemfit {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[at + static_cast<std::size_t>(b)]) << (8 * b);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

float get_f32(std::span<const std::uint8_t> bytes, std::size_t at) { return std::bit_cast<float>(get_u32(bytes, at)); }

void check_magic(std::span<const std::uint8_t> bytes, const char* magic, std::size_t header) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
    throw FormatError(std::string("bad magic: expected \"") + magic + "\"");
  if (bytes.size() < header) throw FormatError(std::string(magic) + " header truncated");
}

std::uint32_t to_u32_dim(Index v) {
  if (v <= 0 || v > static_cast<Index>(std::numeric_limits<std::uint32_t>::max()))
    throw DimensionError("dimension does not fit the file format");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_s4dm(const Dataset4D& data) {
  std::vector<std::uint8_t> out;
  out.reserve(kS4dmHeaderBytes + data.values().size() * 4);
  out.insert(out.end(), {'S', '4', 'D', 'M'});
  put_u32(out, kS4dmVersion);
  for (const Index d : data.dims()) put_u32(out, to_u32_dim(d));
  for (const float v : data.values()) put_f32(out, v);
  return out;
}

Dataset4D decode_s4dm(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, "S4DM", kS4dmHeaderBytes);
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kS4dmVersion) throw FormatError("unsupported S4DM version " + std::to_string(version));
  std::array<std::uint64_t, 4> dims{};
  std::uint64_t count = 1;
  for (std::size_t d = 0; d < 4; ++d) {
    dims[d] = get_u32(bytes, 8 + 4 * d);
    if (dims[d] == 0) throw FormatError("S4DM dimension is zero");
    if (count > (std::numeric_limits<std::uint64_t>::max() / 4) / dims[d]) throw FormatError("S4DM dims overflow");
    count *= dims[d];
  }
  if (count > static_cast<std::uint64_t>(std::numeric_limits<std::ptrdiff_t>::max() / 4))
    throw FormatError("S4DM dims overflow");
  const std::uint64_t payload = count * 4;
  if (bytes.size() - kS4dmHeaderBytes < payload)
    throw FormatError("S4DM payload truncated: expected " + std::to_string(payload) + " bytes, found " +
                      std::to_string(bytes.size() - kS4dmHeaderBytes));
  if (bytes.size() - kS4dmHeaderBytes > payload) throw FormatError("S4DM file has trailing bytes");
  std::vector<float> values(static_cast<std::size_t>(count));
  for (std::size_t q = 0; q < values.size(); ++q) values[q] = get_f32(bytes, kS4dmHeaderBytes + 4 * q);
  try {
    return Dataset4D(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]), static_cast<Index>(dims[2]),
                     static_cast<Index>(dims[3]), std::move(values));
  } catch (const NumericalError& e) {
    throw FormatError(std::string("S4DM payload invalid: ") + e.what());
  }
}

Dataset4D load_s4dm(const std::filesystem::path& path) { return decode_s4dm(read_file_bytes(path)); }

void store_s4dm(const Dataset4D& data, const std::filesystem::path& path) {
  write_file_atomic(path, encode_s4dm(data));
}

std::vector<std::uint8_t> encode_f4dm(const FilterImage& filter) {
  std::vector<std::uint8_t> out;
  out.reserve(kF4dmHeaderBytes + static_cast<std::size_t>(filter.weights.size()) * 4);
  out.insert(out.end(), {'F', '4', 'D', 'M'});
  put_u32(out, kF4dmVersion);
  put_u32(out, to_u32_dim(filter.rows()));
  put_u32(out, to_u32_dim(filter.cols()));
  const double* w = filter.weights.data();
  for (Index q = 0; q < filter.weights.size(); ++q) {
    if (!std::isfinite(w[q])) throw NumericalError("filter contains a non-finite weight");
    put_f32(out, static_cast<float>(w[q]));
  }
  return out;
}

FilterImage decode_f4dm(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, "F4DM", kF4dmHeaderBytes);
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kF4dmVersion) throw FormatError("unsupported F4DM version " + std::to_string(version));
  const std::uint64_t K = get_u32(bytes, 8);
  const std::uint64_t L = get_u32(bytes, 12);
  if (K == 0 || L == 0) throw FormatError("F4DM dimension is zero");
  const std::uint64_t payload = K * L * 4;
  if (bytes.size() - kF4dmHeaderBytes != payload) throw FormatError("F4DM payload size mismatch");
  FilterImage f(static_cast<Index>(K), static_cast<Index>(L));
  double* w = f.weights.data();
  for (std::size_t q = 0; q < K * L; ++q) {
    const float v = get_f32(bytes, kF4dmHeaderBytes + 4 * q);
    if (!std::isfinite(v)) throw FormatError("F4DM contains a non-finite weight");
    w[q] = static_cast<double>(v);
  }
  return f;
}

FilterImage load_filter(const std::filesystem::path& path) { return decode_f4dm(read_file_bytes(path)); }

void store_filter(const FilterImage& filter, const std::filesystem::path& path) {
  write_file_atomic(path, encode_f4dm(filter));
}

FilterImage quantize_to_f32(const FilterImage& filter) {
  FilterImage out = filter;
  out.weights = filter.weights.cast<float>().cast<double>();
  return out;
}

std::vector<std::uint16_t> pgm16_samples(const RealImage& image) {
  const auto& v = image.values;
  if (!v.allFinite()) throw NumericalError("image contains non-finite values");
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  std::vector<std::uint16_t> out(static_cast<std::size_t>(v.size()), 0);
  if (!(hi > lo)) return out;
  const double* data = v.data();
  for (Index q = 0; q < v.size(); ++q)
    out[static_cast<std::size_t>(q)] = static_cast<std::uint16_t>(std::lround((data[q] - lo) / (hi - lo) * 65535.0));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

double parse_double(std::string_view token) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r')) token.remove_suffix(1);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || token.empty())
    throw FormatError("not a number: \"" + std::string(token) + "\"");
  return v;
}

std::string image_to_csv(const RealImage& image) {
  std::string out;
  for (Index i = 0; i < image.rows(); ++i) {
    for (Index j = 0; j < image.cols(); ++j) {
      if (j > 0) out += ',';
      out += format_double(image(i, j));
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      return parts;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

RealImage image_from_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError("image CSV is empty");
  const auto cols = static_cast<Index>(split(lines.front(), ',').size());
  RealImage out(static_cast<Index>(lines.size()), cols);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (static_cast<Index>(cells.size()) != cols) throw FormatError("image CSV rows have differing lengths");
    for (std::size_t j = 0; j < cells.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = parse_double(cells[j]);
  }
  return out;
}

RealImage read_image_csv(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return image_from_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void export_image(const RealImage& image, ImageFormat format, const std::filesystem::path& path) {
  if (image.rows() == 0 || image.cols() == 0) throw DimensionError("cannot export an empty image");
  if (format == ImageFormat::csv) {
    write_file_atomic(path, image_to_csv(image));
    return;
  }
  const auto samples = pgm16_samples(image);
  const std::string header = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n65535\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + samples.size() * 2);
  for (const auto s : samples) {
    bytes.push_back(static_cast<std::uint8_t>(s >> 8));
    bytes.push_back(static_cast<std::uint8_t>(s & 0xFFu));
  }
  write_file_atomic(path, bytes);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw FormatError("CSV table has no column \"" + std::string(name) + "\"");
}

std::string CsvTable::to_string() const {
  std::string out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out += ',';
      out += cells[c];
    }
    out += '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return out;
}

CsvTable parse_csv_table(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError("CSV table is empty");
  CsvTable t;
  for (const auto cell : split(lines.front(), ',')) t.header.emplace_back(cell);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != t.header.size())
      throw FormatError("CSV row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(t.header.size()));
    t.rows.emplace_back(cells.begin(), cells.end());
  }
  return t;
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_csv_table(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace stemfit
