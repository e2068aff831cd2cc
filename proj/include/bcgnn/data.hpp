#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcgnn/num/matrix.hpp"

namespace bcgnn::data {

enum class ColumnKind { continuous, categorical };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> categories;  // categorical only, ordered

  std::size_t category_count() const { return categories.size(); }
  bool operator==(const Column&) const = default;
};

/// Declared table layout. `columns` follows CSV column order; `label`, when
/// set, names the column holding the prediction target.
struct Schema {
  std::vector<Column> columns;
  std::optional<std::string> label;

  /// Validates names, kinds and categories; throws ConfigError.
  void validate() const;
  std::optional<std::size_t> label_index() const;
  /// Columns excluding the label, in CSV order.
  std::vector<Column> features() const;

  static Schema from_json(const nlohmann::json& j);
  static Schema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

  bool operator==(const Schema&) const = default;
};

/// Binary observation mask, 1 = observed.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, std::uint8_t fill = 1)
      : rows_(rows), cols_(cols), bits_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::uint8_t operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c]; }
  std::uint8_t& operator()(std::size_t r, std::size_t c) { return bits_[r * cols_ + c]; }
  bool observed(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  std::size_t count_observed() const;
  std::size_t count_missing() const { return bits_.size() - count_observed(); }
  /// Entry-wise AND with another mask of identical shape.
  Mask operator&(const Mask& other) const;

  bool operator==(const Mask&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Observed feature table plus optional labels.
///
/// `raw` holds original units (categorical cells store the category index);
/// `scaled` holds [0, 1] values once a scaler is applied. Both carry NaN at
/// every missing position so an accidental read surfaces as a non-finite loss.
struct Dataset {
  Schema schema;
  std::vector<Column> features;
  std::optional<Column> label_column;
  num::Matrix raw;
  num::Matrix scaled;
  Mask mask;
  std::vector<double> labels;             // raw units, NaN when missing
  std::vector<double> labels_scaled;      // filled by ScalerStats::apply
  std::vector<std::uint8_t> label_mask;   // 1 = label observed

  std::size_t rows() const { return raw.rows(); }
  std::size_t cols() const { return raw.cols(); }
  bool has_labels() const { return label_column.has_value(); }

  /// Hides every cell where `extra` is 0. `extra` may cover the feature columns
  /// only or every CSV column (then its label column masks the labels).
  void apply_mask(const Mask& extra);
  /// Subset of rows, in the given order.
  Dataset select_rows(const std::vector<std::size_t>& rows) const;
};

/// Strict CSV loader: header must equal schema names, empty cells are missing,
/// no whitespace trimming. Throws DataError naming the row and column.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema);
Dataset parse_csv(const std::string& text, const Schema& schema);

/// Writes `values` (original units) under the schema's feature header; the
/// label column, if any, is written from `labels`.
void write_csv(const std::filesystem::path& path, const Schema& schema, const num::Matrix& values,
               const std::vector<double>* labels = nullptr);

/// Mask CSV: header row of column names, then 0/1 cells.
void write_mask(const std::filesystem::path& path, const std::vector<std::string>& header,
                const Mask& mask);
Mask read_mask(const std::filesystem::path& path);
Mask parse_mask(const std::string& text);

/// Per-column MinMax statistics fit on observed entries only.
struct ScalerStats {
  struct ColumnStats {
    double min = 0.0;
    double max = 0.0;
    std::size_t categories = 0;  // > 0 marks a categorical column
  };
  std::vector<ColumnStats> columns;
  std::optional<ColumnStats> label;

  /// Continuous: (x - min) / (max - min), 0 when max == min.
  /// Categorical: index / (K - 1).
  double transform(std::size_t col, double raw) const;
  double inverse_transform(std::size_t col, double scaled) const;
  double transform_label(double raw) const;
  double inverse_transform_label(double scaled) const;

  /// Fills ds.scaled and ds.labels_scaled; missing entries stay NaN.
  void apply(Dataset& ds) const;

  nlohmann::json to_json() const;
  static ScalerStats from_json(const nlohmann::json& j);
};

/// Throws DataError for a feature column without observed entries. Label
/// statistics use only rows whose label is observed and marked in
/// `label_train` (all observed labels when null).
ScalerStats fit_minmax(const Dataset& ds, const std::vector<std::uint8_t>* label_train = nullptr);

/// 7:3 train/test label split: marks min(ceil(0.7 k), k - 1) of the k rows
/// with an observed label as training rows, uniformly under `seed`.
/// Throws DataError when fewer than two labels are observed.
std::vector<std::uint8_t> split_labels(const std::vector<std::uint8_t>& label_mask,
                                       std::uint64_t seed);

}  // namespace bcgnn::data
