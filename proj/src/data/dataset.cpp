#include "bcgnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "bcgnn/error.hpp"
#include "bcgnn/rng.hpp"

namespace bcgnn::data {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

// Comma split with RFC 4180 double-quote escaping.
std::vector<std::string> split_cells(const std::string& line, std::size_t row) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"' && cur.empty()) {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) throw DataError("row " + std::to_string(row) + ": unterminated quote");
  cells.push_back(std::move(cur));
  return cells;
}

std::string escape_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

[[noreturn]] void cell_error(std::size_t row, const std::string& col, const std::string& what) {
  throw DataError("row " + std::to_string(row) + ", column '" + col + "': " + what);
}

double parse_number(const std::string& cell, std::size_t row, const std::string& col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    cell_error(row, col, "'" + cell + "' is not a finite number");
  }
  return v;
}

double parse_cell(const std::string& cell, const Column& column, std::size_t row) {
  if (column.kind == ColumnKind::continuous) return parse_number(cell, row, column.name);
  const auto it = std::find(column.categories.begin(), column.categories.end(), cell);
  if (it == column.categories.end()) cell_error(row, column.name, "unknown category '" + cell + "'");
  return static_cast<double>(it - column.categories.begin());
}

}  // namespace

void Schema::validate() const {
  if (columns.empty()) throw ConfigError("schema: no columns declared");
  std::set<std::string> names;
  for (const Column& c : columns) {
    if (c.name.empty()) throw ConfigError("schema: empty column name");
    if (!names.insert(c.name).second) throw ConfigError("schema: duplicate column '" + c.name + "'");
    if (c.kind == ColumnKind::categorical) {
      if (c.categories.size() < 2) {
        throw ConfigError("schema: categorical column '" + c.name + "' needs >= 2 categories");
      }
      std::set<std::string> cats(c.categories.begin(), c.categories.end());
      if (cats.size() != c.categories.size()) {
        throw ConfigError("schema: duplicate category in column '" + c.name + "'");
      }
    } else if (!c.categories.empty()) {
      throw ConfigError("schema: continuous column '" + c.name + "' lists categories");
    }
  }
  if (label && !label_index()) throw ConfigError("schema: label '" + *label + "' is not a column");
  if (features().empty()) throw ConfigError("schema: no feature columns");
}

std::optional<std::size_t> Schema::label_index() const {
  if (!label) return std::nullopt;
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == *label) return i;
  return std::nullopt;
}

std::vector<Column> Schema::features() const {
  std::vector<Column> out;
  for (const Column& c : columns)
    if (!label || c.name != *label) out.push_back(c);
  return out;
}

Schema Schema::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("columns") || !j.at("columns").is_array()) {
    throw ConfigError("schema: expected an object with a 'columns' array");
  }
  for (const auto& [key, _] : j.items()) {
    if (key != "columns" && key != "label") throw ConfigError("schema: unknown key '" + key + "'");
  }
  Schema s;
  try {
    for (const auto& cj : j.at("columns")) {
      Column c;
      c.name = cj.at("name").get<std::string>();
      const auto kind = cj.at("kind").get<std::string>();
      if (kind == "continuous") {
        c.kind = ColumnKind::continuous;
      } else if (kind == "categorical") {
        c.kind = ColumnKind::categorical;
        c.categories = cj.at("categories").get<std::vector<std::string>>();
      } else {
        throw ConfigError("schema: column '" + c.name + "' has unknown kind '" + kind + "'");
      }
      s.columns.push_back(std::move(c));
    }
    if (j.contains("label")) s.label = j.at("label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const Column& c : columns) {
    nlohmann::json cj = {{"name", c.name},
                         {"kind", c.kind == ColumnKind::continuous ? "continuous" : "categorical"}};
    if (c.kind == ColumnKind::categorical) cj["categories"] = c.categories;
    cols.push_back(std::move(cj));
  }
  nlohmann::json j = {{"columns", std::move(cols)}};
  if (label) j["label"] = *label;
  return j;
}

void Schema::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

std::size_t Mask::count_observed() const {
  return static_cast<std::size_t>(std::count_if(bits_.begin(), bits_.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

Mask Mask::operator&(const Mask& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw ShapeError("Mask &: shape mismatch");
  Mask out(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i)
    out.bits_[i] = (bits_[i] != 0 && other.bits_[i] != 0) ? 1 : 0;
  return out;
}

void Dataset::apply_mask(const Mask& extra) {
  const std::size_t n = rows();
  const std::size_t m = cols();
  const bool full = extra.cols() == schema.columns.size() && schema.label.has_value();
  if (extra.rows() != n || (extra.cols() != m && !full)) {
    throw DataError("mask shape (" + std::to_string(extra.rows()) + "x" +
                    std::to_string(extra.cols()) + ") does not match data (" + std::to_string(n) +
                    "x" + std::to_string(full ? schema.columns.size() : m) + ")");
  }
  const auto label_at = schema.label_index();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < extra.cols(); ++c) {
      const bool keep = extra.observed(i, c);
      if (full && label_at && c == *label_at) {
        if (!keep) {
          label_mask[i] = 0;
          labels[i] = kMissing;
          if (!labels_scaled.empty()) labels_scaled[i] = kMissing;
        }
        continue;
      }
      if (!keep) {
        mask(i, f) = 0;
        raw(i, f) = kMissing;
        if (!scaled.empty()) scaled(i, f) = kMissing;
      }
      ++f;
    }
  }
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.schema = schema;
  out.features = features;
  out.label_column = label_column;
  const std::size_t m = cols();
  out.raw = num::Matrix(rows.size(), m);
  if (!scaled.empty()) out.scaled = num::Matrix(rows.size(), m);
  out.mask = Mask(rows.size(), m);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    for (std::size_t j = 0; j < m; ++j) {
      out.raw(k, j) = raw(r, j);
      if (!scaled.empty()) out.scaled(k, j) = scaled(r, j);
      out.mask(k, j) = mask(r, j);
    }
    if (!labels.empty()) {
      out.labels.push_back(labels[r]);
      out.label_mask.push_back(label_mask[r]);
      if (!labels_scaled.empty()) out.labels_scaled.push_back(labels_scaled[r]);
    }
  }
  return out;
}

Dataset parse_csv(const std::string& text, const Schema& schema) {
  schema.validate();
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("csv: missing header row");
  const auto header = split_cells(lines[0], 0);
  if (header.size() != schema.columns.size()) {
    throw DataError("csv header has " + std::to_string(header.size()) + " columns, schema declares " +
                    std::to_string(schema.columns.size()));
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] != schema.columns[c].name) {
      throw DataError("csv header column " + std::to_string(c) + " is '" + header[c] +
                      "', schema expects '" + schema.columns[c].name + "'");
    }
  }
  Dataset ds;
  ds.schema = schema;
  ds.features = schema.features();
  const auto label_at = schema.label_index();
  if (label_at) ds.label_column = schema.columns[*label_at];
  const std::size_t n = lines.size() - 1;
  const std::size_t m = ds.features.size();
  ds.raw = num::Matrix(n, m);
  ds.mask = Mask(n, m);
  if (label_at) {
    ds.labels.assign(n, kMissing);
    ds.label_mask.assign(n, 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = i + 1;  // 1-based data row, header excluded
    const auto cells = split_cells(lines[i + 1], row);
    if (cells.size() != schema.columns.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(schema.columns.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    std::size_t f = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const Column& col = schema.columns[c];
      const bool missing = cells[c].empty();
      if (label_at && c == *label_at) {
        if (!missing) {
          ds.labels[i] = parse_cell(cells[c], col, row);
          ds.label_mask[i] = 1;
        }
        continue;
      }
      if (missing) {
        ds.raw(i, f) = kMissing;
        ds.mask(i, f) = 0;
      } else {
        ds.raw(i, f) = parse_cell(cells[c], col, row);
      }
      ++f;
    }
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  return parse_csv(read_file(path), schema);
}

void write_csv(const std::filesystem::path& path, const Schema& schema, const num::Matrix& values,
               const std::vector<double>* labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const auto label_at = schema.label_index();
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (c) out << ',';
    out << escape_cell(schema.columns[c].name);
  }
  out << '\n';
  auto render = [](const Column& col, double v) -> std::string {
    if (std::isnan(v)) return "";
    if (col.kind == ColumnKind::categorical) {
      const auto idx = static_cast<std::size_t>(std::llround(v));
      return escape_cell(col.categories.at(idx));
    }
    return format_double(v);
  };
  for (std::size_t i = 0; i < values.rows(); ++i) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (c) out << ',';
      const Column& col = schema.columns[c];
      if (label_at && c == *label_at) {
        if (labels) out << render(col, (*labels)[i]);
        continue;
      }
      out << render(col, values(i, f));
      ++f;
    }
    out << '\n';
  }
}

void write_mask(const std::filesystem::path& path, const std::vector<std::string>& header,
                const Mask& mask) {
  if (header.size() != mask.cols()) throw ShapeError("write_mask: header/mask width mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << escape_cell(header[c]);
  out << '\n';
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t c = 0; c < mask.cols(); ++c) out << (c ? "," : "") << int(mask(i, c));
    out << '\n';
  }
}

Mask parse_mask(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("mask: empty file");
  const std::size_t cols = split_cells(lines[0], 0).size();
  Mask mask(lines.size() - 1, cols);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_cells(lines[i], i);
    if (cells.size() != cols) {
      throw DataError("mask row " + std::to_string(i) + ": expected " + std::to_string(cols) +
                      " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (cells[c] == "1") {
        mask(i - 1, c) = 1;
      } else if (cells[c] == "0") {
        mask(i - 1, c) = 0;
      } else {
        throw DataError("mask row " + std::to_string(i) + ", column " + std::to_string(c) +
                        ": expected 0 or 1, found '" + cells[c] + "'");
      }
    }
  }
  return mask;
}

Mask read_mask(const std::filesystem::path& path) { return parse_mask(read_file(path)); }

double ScalerStats::transform(std::size_t col, double raw) const {
  const ColumnStats& s = columns.at(col);
  if (s.categories > 0) return raw / static_cast<double>(s.categories - 1);
  if (s.max == s.min) return 0.0;
  return (raw - s.min) / (s.max - s.min);
}

double ScalerStats::inverse_transform(std::size_t col, double scaled) const {
  const ColumnStats& s = columns.at(col);
  if (s.categories > 0) return scaled * static_cast<double>(s.categories - 1);
  return s.min + scaled * (s.max - s.min);
}

double ScalerStats::transform_label(double raw) const {
  if (!label) throw DataError("scaler has no label statistics");
  if (label->categories > 0) return raw;  // class index
  if (label->max == label->min) return 0.0;
  return (raw - label->min) / (label->max - label->min);
}

double ScalerStats::inverse_transform_label(double scaled) const {
  if (!label) throw DataError("scaler has no label statistics");
  if (label->categories > 0) return scaled;
  return label->min + scaled * (label->max - label->min);
}

void ScalerStats::apply(Dataset& ds) const {
  if (columns.size() != ds.cols()) {
    throw DataError("scaler covers " + std::to_string(columns.size()) + " columns, data has " +
                    std::to_string(ds.cols()));
  }
  ds.scaled = num::Matrix(ds.rows(), ds.cols(), kMissing);
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t j = 0; j < ds.cols(); ++j)
      if (ds.mask.observed(i, j)) ds.scaled(i, j) = transform(j, ds.raw(i, j));
  ds.labels_scaled.assign(ds.labels.size(), kMissing);
  if (label) {
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
      if (ds.label_mask[i]) ds.labels_scaled[i] = transform_label(ds.labels[i]);
  }
}

nlohmann::json ScalerStats::to_json() const {
  auto encode = [](const ColumnStats& s) {
    return nlohmann::json{{"min", s.min}, {"max", s.max}, {"categories", s.categories}};
  };
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& s : columns) cols.push_back(encode(s));
  nlohmann::json j = {{"columns", cols}};
  if (label) j["label"] = encode(*label);
  return j;
}

ScalerStats ScalerStats::from_json(const nlohmann::json& j) {
  auto decode = [](const nlohmann::json& sj) {
    ColumnStats s;
    s.min = sj.at("min").get<double>();
    s.max = sj.at("max").get<double>();
    s.categories = sj.at("categories").get<std::size_t>();
    return s;
  };
  ScalerStats out;
  for (const auto& sj : j.at("columns")) out.columns.push_back(decode(sj));
  if (j.contains("label")) out.label = decode(j.at("label"));
  return out;
}

ScalerStats fit_minmax(const Dataset& ds, const std::vector<std::uint8_t>* label_train) {
  ScalerStats stats;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    ScalerStats::ColumnStats s;
    const Column& col = ds.features[j];
    if (col.kind == ColumnKind::categorical) {
      s.categories = col.category_count();
      s.max = static_cast<double>(s.categories - 1);
    } else {
      bool any = false;
      for (std::size_t i = 0; i < ds.rows(); ++i) {
        if (!ds.mask.observed(i, j)) continue;
        const double v = ds.raw(i, j);
        if (!any) {
          s.min = s.max = v;
          any = true;
        } else {
          s.min = std::min(s.min, v);
          s.max = std::max(s.max, v);
        }
      }
      if (!any) throw DataError("column '" + col.name + "' has no observed entries");
    }
    stats.columns.push_back(s);
  }
  if (ds.label_column) {
    ScalerStats::ColumnStats s;
    if (ds.label_column->kind == ColumnKind::categorical) {
      s.categories = ds.label_column->category_count();
      s.max = static_cast<double>(s.categories - 1);
    } else {
      bool any = false;
      for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (!ds.label_mask[i] || (label_train && !(*label_train)[i])) continue;
        if (!any) {
          s.min = s.max = ds.labels[i];
          any = true;
        } else {
          s.min = std::min(s.min, ds.labels[i]);
          s.max = std::max(s.max, ds.labels[i]);
        }
      }
    }
    stats.label = s;
  }
  return stats;
}

std::vector<std::uint8_t> split_labels(const std::vector<std::uint8_t>& label_mask,
                                       std::uint64_t seed) {
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < label_mask.size(); ++i)
    if (label_mask[i]) present.push_back(i);
  const std::size_t k = present.size();
  if (k < 2) throw DataError("label split needs at least 2 observed labels, found " + std::to_string(k));
  // ceil(0.7 k) in integer arithmetic; 0.7 * k in floating point overshoots.
  const std::size_t train = std::min((7 * k + 9) / 10, k - 1);
  Rng rng(seed);
  for (std::size_t i = k; i > 1; --i) std::swap(present[i - 1], present[rng.index(i)]);
  std::vector<std::uint8_t> out(label_mask.size(), 0);
  for (std::size_t i = 0; i < train; ++i) out[present[i]] = 1;
  return out;
}

}  // namespace bcgnn::data
