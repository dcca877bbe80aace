#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mscate/matrix.hpp"

namespace mscate {

// Multi-band pixel grid. Storage is band-major (band, row, column), which is
// also the on-disk payload layout.
struct RasterBundle {
  int width = 0;
  int height = 0;
  int bands = 0;
  double pixel_size_m = 0.0;  // metadata only
  double origin_x = 0.0;      // frame coordinate of the top-left pixel corner
  double origin_y = 0.0;
  std::vector<float> data;

  float at(int band, int row, int col) const noexcept {
    return data[(static_cast<std::size_t>(band) * height + row) * width + col];
  }
  float& at(int band, int row, int col) noexcept {
    return data[(static_cast<std::size_t>(band) * height + row) * width + col];
  }
  std::span<const float> plane(int band) const noexcept {
    return {data.data() + static_cast<std::size_t>(band) * height * width,
            static_cast<std::size_t>(height) * width};
  }

  // Throws SizeMismatch / NonFiniteValue / InvalidArgument.
  void validate() const;
};

// Header is JSON: {"width", "height", "bands", "pixel_size_m", "dtype": "f32",
// optional "origin": [x, y], optional "payload": file name}. The payload is raw
// little-endian float32; by default it sits next to the header with the
// extension replaced by ".bin".
RasterBundle load_raster(const std::filesystem::path& header_path);
void save_raster(const RasterBundle& bundle, const std::filesystem::path& header_path);
std::filesystem::path raster_payload_path(const std::filesystem::path& header_path);

struct UnitRecord {
  std::string id;
  double x = 0.0;  // pixel column in the bundle frame
  double y = 0.0;  // pixel row
  int w = 0;
  double outcome = 0.0;

  friend bool operator==(const UnitRecord&, const UnitRecord&) = default;
};

// Comma-delimited with header "id,x,y,w,outcome".
std::vector<UnitRecord> load_units(const std::filesystem::path& path);
void save_units(std::span<const UnitRecord> units, const std::filesystem::path& path);
void validate_units(std::span<const UnitRecord> units);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  // Throws DimMismatch, DuplicateId, NonFiniteValue.
  EmbeddingTable(std::vector<std::string> unit_ids, int scale_tag, MatrixF values);

  const std::vector<std::string>& unit_ids() const noexcept { return unit_ids_; }
  int scale_tag() const noexcept { return scale_tag_; }
  std::size_t dim() const noexcept { return values_.cols(); }
  std::size_t size() const noexcept { return values_.rows(); }
  const MatrixF& values() const noexcept { return values_; }

  std::optional<std::size_t> find(std::string_view id) const;

  // Rows reordered to match ids. Throws UnknownUnitId.
  MatrixF aligned(std::span<const std::string> ids) const;

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.unit_ids_ == b.unit_ids_ && a.scale_tag_ == b.scale_tag_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> unit_ids_;
  int scale_tag_ = 0;
  MatrixF values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Text format: optional "# scale_tag=<s>" line, header "id,f0,...,f{d-1}",
// then one row per unit with values written to 9 significant digits.
std::string embeddings_to_text(const EmbeddingTable& table);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// Locale-independent number formatting shared by all writers.
std::string format_double(double v);             // shortest round-trip
std::string format_float9(float v);              // 9 significant digits
double parse_double(std::string_view text, bool* ok);

std::vector<std::string_view> split_fields(std::string_view line, char delim = ',');

}  // namespace mscate
