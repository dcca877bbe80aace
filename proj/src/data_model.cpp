#include "mscate/data_model.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "mscate/error.hpp"

namespace mscate {
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string format_float9(float v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, end);
}

double parse_double(std::string_view text, bool* ok) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  *ok = ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

// ---------------------------------------------------------------------------
// Raster

void RasterBundle::validate() const {
  require(width >= 1 && height >= 1, ErrorCode::InvalidArgument, "raster width and height must be >= 1");
  require(bands >= 1, ErrorCode::InvalidArgument, "raster must have at least one band");
  const std::size_t expected = static_cast<std::size_t>(width) * height * bands;
  require(data.size() == expected, ErrorCode::SizeMismatch,
          "raster holds " + std::to_string(data.size()) + " values, expected " + std::to_string(expected));
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(std::isfinite(data[i]), ErrorCode::NonFiniteValue, "raster value at offset " + std::to_string(i));
  }
}

fs::path raster_payload_path(const fs::path& header_path) {
  fs::path p = header_path;
  p.replace_extension(".bin");
  return p;
}

RasterBundle load_raster(const fs::path& header_path) {
  const std::string text = read_file(header_path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedHeader, header_path.string() + ": " + e.what());
  }
  require(header.is_object(), ErrorCode::MalformedHeader, "header is not an object");

  auto get_int = [&](const char* field) {
    require(header.contains(field) && header[field].is_number_integer(), ErrorCode::MalformedHeader,
            std::string("field '") + field + "' missing or not an integer");
    const auto v = header[field].get<std::int64_t>();
    require(v >= 1 && v <= (1LL << 30), ErrorCode::MalformedHeader, std::string("field '") + field + "' out of range");
    return static_cast<int>(v);
  };

  RasterBundle b;
  b.width = get_int("width");
  b.height = get_int("height");
  b.bands = get_int("bands");
  require(header.contains("pixel_size_m") && header["pixel_size_m"].is_number(), ErrorCode::MalformedHeader,
          "field 'pixel_size_m' missing or not a number");
  b.pixel_size_m = header["pixel_size_m"].get<double>();
  require(header.contains("dtype") && header["dtype"] == "f32", ErrorCode::MalformedHeader,
          "field 'dtype' must be \"f32\"");
  if (header.contains("origin")) {
    const auto& o = header["origin"];
    require(o.is_array() && o.size() == 2 && o[0].is_number() && o[1].is_number(), ErrorCode::MalformedHeader,
            "field 'origin' must be [x, y]");
    b.origin_x = o[0].get<double>();
    b.origin_y = o[1].get<double>();
  }
  fs::path payload = raster_payload_path(header_path);
  if (header.contains("payload")) {
    require(header["payload"].is_string(), ErrorCode::MalformedHeader, "field 'payload' must be a string");
    payload = header_path.parent_path() / header["payload"].get<std::string>();
  }

  const std::string bytes = read_file(payload);
  const std::size_t count = static_cast<std::size_t>(b.width) * b.height * b.bands;
  require(bytes.size() == count * 4, ErrorCode::SizeMismatch,
          "payload " + payload.string() + " has " + std::to_string(bytes.size()) + " bytes, header declares " +
              std::to_string(count * 4));
  b.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t raw;
    std::memcpy(&raw, bytes.data() + 4 * i, 4);
    b.data[i] = std::bit_cast<float>(to_little_endian(raw));
    require(std::isfinite(b.data[i]), ErrorCode::NonFiniteValue, "payload value at offset " + std::to_string(i));
  }
  return b;
}

void save_raster(const RasterBundle& bundle, const fs::path& header_path) {
  bundle.validate();
  const fs::path payload = raster_payload_path(header_path);
  nlohmann::ordered_json header;
  header["width"] = bundle.width;
  header["height"] = bundle.height;
  header["bands"] = bundle.bands;
  header["pixel_size_m"] = bundle.pixel_size_m;
  header["dtype"] = "f32";
  header["origin"] = {bundle.origin_x, bundle.origin_y};
  header["payload"] = payload.filename().string();
  write_text(header_path, header.dump(2) + "\n");

  std::string bytes(bundle.data.size() * 4, '\0');
  for (std::size_t i = 0; i < bundle.data.size(); ++i) {
    const std::uint32_t raw = to_little_endian(std::bit_cast<std::uint32_t>(bundle.data[i]));
    std::memcpy(bytes.data() + 4 * i, &raw, 4);
  }
  write_text(payload, bytes);
}

// ---------------------------------------------------------------------------
// Units

void validate_units(std::span<const UnitRecord> units) {
  std::unordered_set<std::string_view> seen;
  for (const auto& u : units) {
    require(!u.id.empty(), ErrorCode::InvalidArgument, "empty unit id");
    require(seen.insert(u.id).second, ErrorCode::DuplicateId, "unit id '" + u.id + "'");
    require(u.w == 0 || u.w == 1, ErrorCode::NonBinaryTreatment, "unit '" + u.id + "' has w=" + std::to_string(u.w));
    require(std::isfinite(u.x) && std::isfinite(u.y), ErrorCode::NonFiniteValue, "unit '" + u.id + "' location");
    require(std::isfinite(u.outcome), ErrorCode::NonFiniteValue, "unit '" + u.id + "' outcome");
  }
}

std::vector<UnitRecord> load_units(const fs::path& path) {
  const auto lines = read_lines(path);
  require(!lines.empty(), ErrorCode::UnparsableRow, path.string() + ": missing header");
  const auto header = split_fields(lines[0]);
  const std::vector<std::string_view> expected{"id", "x", "y", "w", "outcome"};
  require(header == expected, ErrorCode::UnparsableRow, path.string() + ": header must be id,x,y,w,outcome");

  std::vector<UnitRecord> units;
  std::unordered_set<std::string> seen;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(ln + 1);
    const auto f = split_fields(lines[ln]);
    require(f.size() == 5, ErrorCode::UnparsableRow, where + ": expected 5 fields");
    UnitRecord u;
    u.id = std::string(f[0]);
    require(!u.id.empty(), ErrorCode::UnparsableRow, where + ": empty id");
    bool ok_x, ok_y, ok_w, ok_o;
    u.x = parse_double(f[1], &ok_x);
    u.y = parse_double(f[2], &ok_y);
    const double w = parse_double(f[3], &ok_w);
    u.outcome = parse_double(f[4], &ok_o);
    require(ok_x && ok_y && ok_w && ok_o, ErrorCode::UnparsableRow, where + ": non-numeric field");
    require(w == 0.0 || w == 1.0, ErrorCode::NonBinaryTreatment, where + ": w=" + std::string(f[3]));
    u.w = static_cast<int>(w);
    require(std::isfinite(u.x) && std::isfinite(u.y) && std::isfinite(u.outcome), ErrorCode::NonFiniteValue,
            where);
    require(seen.insert(u.id).second, ErrorCode::DuplicateId, where + ": '" + u.id + "'");
    units.push_back(std::move(u));
  }
  return units;
}

void save_units(std::span<const UnitRecord> units, const fs::path& path) {
  validate_units(units);
  std::string out = "id,x,y,w,outcome\n";
  for (const auto& u : units) {
    out += u.id + "," + format_double(u.x) + "," + format_double(u.y) + "," + std::to_string(u.w) + "," +
           format_double(u.outcome) + "\n";
  }
  write_text(path, out);
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingTable::EmbeddingTable(std::vector<std::string> unit_ids, int scale_tag, MatrixF values)
    : unit_ids_(std::move(unit_ids)), scale_tag_(scale_tag), values_(std::move(values)) {
  require(unit_ids_.size() == values_.rows(), ErrorCode::DimMismatch,
          std::to_string(unit_ids_.size()) + " ids for " + std::to_string(values_.rows()) + " rows");
  require(values_.cols() >= 1 || values_.rows() == 0, ErrorCode::DimMismatch, "embedding dim must be >= 1");
  for (std::size_t i = 0; i < unit_ids_.size(); ++i) {
    require(index_.emplace(unit_ids_[i], i).second, ErrorCode::DuplicateId, "embedding id '" + unit_ids_[i] + "'");
  }
  for (float v : values_.values()) require(std::isfinite(v), ErrorCode::NonFiniteValue, "embedding value");
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

MatrixF EmbeddingTable::aligned(std::span<const std::string> ids) const {
  MatrixF out(ids.size(), dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = find(ids[i]);
    require(row.has_value(), ErrorCode::UnknownUnitId, "'" + ids[i] + "' not in embedding table");
    auto src = values_.row(*row);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::string embeddings_to_text(const EmbeddingTable& table) {
  std::string out = "# scale_tag=" + std::to_string(table.scale_tag()) + "\n";
  out += "id";
  for (std::size_t j = 0; j < table.dim(); ++j) out += ",f" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.unit_ids()[i];
    for (float v : table.values().row(i)) {
      out += ',';
      out += format_float9(v);
    }
    out += '\n';
  }
  return out;
}

void save_embeddings(const EmbeddingTable& table, const fs::path& path) { write_text(path, embeddings_to_text(table)); }

EmbeddingTable load_embeddings(const fs::path& path) {
  const auto lines = read_lines(path);
  std::size_t ln = 0;
  int scale_tag = 0;
  while (ln < lines.size() && !lines[ln].empty() && lines[ln][0] == '#') {
    std::string_view c = trim(std::string_view(lines[ln]).substr(1));
    if (c.starts_with("scale_tag=")) {
      bool ok;
      const double s = parse_double(c.substr(10), &ok);
      require(ok && s >= 0 && s == std::floor(s), ErrorCode::MalformedHeader, path.string() + ": bad scale_tag");
      scale_tag = static_cast<int>(s);
    }
    ++ln;
  }
  require(ln < lines.size(), ErrorCode::MalformedHeader, path.string() + ": missing header row");
  const auto header = split_fields(lines[ln]);
  require(!header.empty() && header[0] == "id", ErrorCode::MalformedHeader, path.string() + ": first column must be id");
  const std::size_t dim = header.size() - 1;
  for (std::size_t j = 0; j < dim; ++j) {
    require(header[j + 1] == "f" + std::to_string(j), ErrorCode::MalformedHeader,
            path.string() + ": column " + std::to_string(j + 1) + " must be f" + std::to_string(j));
  }
  ++ln;
  std::vector<std::string> ids;
  std::vector<float> values;
  for (; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const auto f = split_fields(lines[ln]);
    const std::string where = path.string() + ":" + std::to_string(ln + 1);
    require(f.size() == dim + 1, ErrorCode::DimMismatch,
            where + ": " + std::to_string(f.size() - 1) + " values, header declares " + std::to_string(dim));
    ids.emplace_back(f[0]);
    for (std::size_t j = 0; j < dim; ++j) {
      std::string_view t = f[j + 1];
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      require(ec == std::errc() && ptr == t.data() + t.size(), ErrorCode::UnparsableRow,
              where + ": bad value '" + std::string(t) + "'");
      values.push_back(v);
    }
  }
  const std::size_t rows = ids.size();
  return EmbeddingTable(std::move(ids), scale_tag, MatrixF(rows, dim, std::move(values)));
}

}  // namespace mscate
