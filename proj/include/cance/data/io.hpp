/*
 * Copyright 2026 The CANCE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cance/core/error.hpp"
#include "cance/data/dataset.hpp"
#include "cance/nn/serialize.hpp"

namespace cance::data {

// Columns are named by header text, or by 0-based index when the file has
// no header. Categorical columns are one-hot encoded over their sorted
// distinct values; every other non-label column must be numeric.
struct CsvSchema {
  bool header = true;
  char delimiter = ',';
  std::optional<std::string> label_column;
  std::optional<std::string> class_column;
  std::vector<std::string> categorical;
  std::vector<std::string> ignore;
};

namespace detail {

// RFC-4180 subset: quoted fields, doubled quotes inside quotes, no
// embedded newlines.
inline std::vector<std::string> split_csv_line(const std::string& line, char delim, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (ch == delim) {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw FormatError("line " + std::to_string(line_no) + ": unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<int> parse_int(const std::string& s) {
  const std::string t = trim(s);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::vector<std::string> names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line, schema.delimiter, line_no);
    if (schema.header && names.empty()) {
      for (auto& f : fields) names.push_back(detail::trim(f));
      continue;
    }
    if (names.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) names.push_back(std::to_string(i));
    }
    if (fields.size() != names.size()) {
      throw FormatError(path + ": row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(names.size()));
    }
    rows.push_back(std::move(fields));
    line_numbers.push_back(line_no);
  }

  auto column = [&](const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw FormatError(path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  };
  enum class Kind { numeric, categorical, label, cls, ignored };
  std::vector<Kind> kinds(names.size(), Kind::numeric);
  for (const auto& c : schema.categorical) kinds[column(c)] = Kind::categorical;
  for (const auto& c : schema.ignore) kinds[column(c)] = Kind::ignored;
  if (schema.label_column) kinds[column(*schema.label_column)] = Kind::label;
  if (schema.class_column) kinds[column(*schema.class_column)] = Kind::cls;

  std::map<std::size_t, std::vector<std::string>> levels;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (kinds[c] != Kind::categorical) continue;
    std::set<std::string> distinct;
    for (const auto& r : rows) distinct.insert(detail::trim(r[c]));
    levels[c].assign(distinct.begin(), distinct.end());
  }

  Dataset d;
  d.name = path;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (kinds[c] == Kind::numeric) d.feature_names.push_back(names[c]);
    if (kinds[c] == Kind::categorical)
      for (const auto& v : levels[c]) d.feature_names.push_back(names[c] + "=" + v);
  }
  d.features = Matrix(rows.size(), d.feature_names.size());
  if (schema.label_column) d.labels.emplace();
  if (schema.class_column) d.class_ids.emplace();

  auto cell_error = [&](std::size_t r, std::size_t c, const std::string& what) {
    return FormatError(path + ": row " + std::to_string(line_numbers[r]) + ", column " + std::to_string(c + 1) +
                       " ('" + names[c] + "'): " + what);
  };
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t out = 0;
    for (std::size_t c = 0; c < names.size(); ++c) {
      const std::string& cell = rows[r][c];
      switch (kinds[c]) {
        case Kind::numeric: {
          const auto v = detail::parse_double(cell);
          if (!v) throw cell_error(r, c, "cannot parse '" + cell + "' as a number");
          d.features(r, out++) = *v;
          break;
        }
        case Kind::categorical: {
          const auto& lv = levels[c];
          const auto pos = std::find(lv.begin(), lv.end(), detail::trim(cell)) - lv.begin();
          for (std::size_t k = 0; k < lv.size(); ++k) d.features(r, out + k) = k == static_cast<std::size_t>(pos);
          out += lv.size();
          break;
        }
        case Kind::label: {
          const auto v = detail::parse_int(cell);
          if (!v || (*v != 0 && *v != 1)) throw cell_error(r, c, "label '" + cell + "' is not 0 or 1");
          d.labels->push_back(*v);
          break;
        }
        case Kind::cls: {
          const auto v = detail::parse_int(cell);
          if (!v) throw cell_error(r, c, "class '" + cell + "' is not an integer");
          d.class_ids->push_back(*v);
          break;
        }
        case Kind::ignored: break;
      }
    }
  }
  return d;
}

// Numeric columns, then "label" and "class" when present. Values are
// written with 17 significant digits so they read back exactly.
inline void write_csv(const std::string& path, const Dataset& d) {
  d.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  std::vector<std::string> header = d.feature_names;
  if (header.empty())
    for (std::size_t j = 0; j < d.dim(); ++j) header.push_back("f" + std::to_string(j));
  if (d.labels) header.push_back("label");
  if (d.class_ids) header.push_back("class");
  for (std::size_t j = 0; j < header.size(); ++j) {
    const bool quote = header[j].find_first_of(",\"") != std::string::npos;
    std::string h = header[j];
    if (quote) {
      std::string esc;
      for (char ch : h) {
        if (ch == '"') esc.push_back('"');
        esc.push_back(ch);
      }
      h = "\"" + esc + "\"";
    }
    out << (j ? "," : "") << h;
  }
  out << "\n";
  char buf[32];
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t j = 0; j < d.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", d.features(r, j));
      out << (j ? "," : "") << buf;
    }
    if (d.labels) out << (d.dim() ? "," : "") << (*d.labels)[r];
    if (d.class_ids) out << (d.dim() || d.labels ? "," : "") << (*d.class_ids)[r];
    out << "\n";
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

inline CsvSchema written_schema(const Dataset& d) {
  CsvSchema s;
  if (d.labels) s.label_column = "label";
  if (d.class_ids) s.class_column = "class";
  return s;
}

// IDX files (big-endian): images 0x00000803 n x rows x cols bytes,
// labels 0x00000801 n bytes. Pixels are scaled to [0, 1].
namespace detail {

inline std::uint32_t be32(const std::string& b, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3]));
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::string img = nn::detail::read_file(images_path);
  const std::string lab = nn::detail::read_file(labels_path);
  if (img.size() < 16 || detail::be32(img, 0) != kIdxImageMagic) {
    throw FormatError(images_path + ": not an IDX image file (bad magic)");
  }
  if (lab.size() < 8 || detail::be32(lab, 0) != kIdxLabelMagic) {
    throw FormatError(labels_path + ": not an IDX label file (bad magic)");
  }
  const std::size_t n = detail::be32(img, 4), h = detail::be32(img, 8), w = detail::be32(img, 12);
  const std::size_t n_labels = detail::be32(lab, 4);
  if (n != n_labels) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images, " + std::to_string(n_labels) +
                      " labels");
  }
  const std::size_t dim = h * w;
  if (img.size() != 16 + n * dim) throw FormatError(images_path + ": payload size does not match header");
  if (lab.size() != 8 + n) throw FormatError(labels_path + ": payload size does not match header");
  Dataset d;
  d.name = images_path;
  d.features = Matrix(n, dim);
  d.class_ids = std::vector<int>(n);
  for (std::size_t i = 0; i < n * dim; ++i)
    d.features.data()[i] = static_cast<unsigned char>(img[16 + i]) / 255.0;
  for (std::size_t i = 0; i < n; ++i) (*d.class_ids)[i] = static_cast<unsigned char>(lab[8 + i]);
  return d;
}

// Embedding container:
//   "CANCEEMB" | u32 version | u64 n | u64 D | u32 flags
//   | n*D f64 | [n i32 class ids if flags&1] | [n i32 labels if flags&2]
// all little-endian.
inline constexpr char kEmbeddingMagic[8] = {'C', 'A', 'N', 'C', 'E', 'E', 'M', 'B'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline std::string serialize_embeddings(const Dataset& d) {
  d.validate();
  std::string out(kEmbeddingMagic, 8);
  nn::detail::put_u32(out, kEmbeddingVersion);
  nn::detail::put_u64(out, d.size());
  nn::detail::put_u64(out, d.dim());
  nn::detail::put_u32(out, (d.class_ids ? 1u : 0u) | (d.labels ? 2u : 0u));
  for (double v : d.features.storage()) nn::detail::put_f64(out, v);
  for (const auto* ints : {&d.class_ids, &d.labels}) {
    if (!*ints) continue;
    for (int v : **ints) nn::detail::put_u32(out, static_cast<std::uint32_t>(v));
  }
  return out;
}

inline Dataset deserialize_embeddings(const std::string& bytes, const std::string& name = "embeddings") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 32 || !std::equal(kEmbeddingMagic, kEmbeddingMagic + 8, bytes.data())) {
    throw FormatError(name + ": not an embedding container (bad magic)");
  }
  if (nn::detail::get_u32(p + 8) != kEmbeddingVersion) throw FormatError(name + ": unsupported version");
  const std::uint64_t n = nn::detail::get_u64(p + 12), dim = nn::detail::get_u64(p + 20);
  const std::uint32_t flags = nn::detail::get_u32(p + 28);
  const std::uint64_t ints = ((flags & 1u) ? n : 0) + ((flags & 2u) ? n : 0);
  if (dim != 0 && n > (bytes.size() / 8) / dim) throw FormatError(name + ": header/payload size mismatch");
  if (bytes.size() != 32 + 8 * n * dim + 4 * ints) {
    throw FormatError(name + ": header/payload size mismatch (" + std::to_string(bytes.size()) + " bytes)");
  }
  Dataset d;
  d.name = name;
  d.features = Matrix(n, dim);
  std::size_t at = 32;
  for (double& v : d.features.data()) {
    v = nn::detail::get_f64(p + at);
    at += 8;
  }
  auto read_ints = [&] {
    std::vector<int> v(n);
    for (auto& x : v) {
      x = static_cast<int>(nn::detail::get_u32(p + at));
      at += 4;
    }
    return v;
  };
  if (flags & 1u) d.class_ids = read_ints();
  if (flags & 2u) d.labels = read_ints();
  d.validate();
  return d;
}

inline void save_embeddings(const std::string& path, const Dataset& d) {
  nn::detail::write_file(path, serialize_embeddings(d));
}
inline Dataset load_embeddings(const std::string& path) {
  return deserialize_embeddings(nn::detail::read_file(path), path);
}

}  // namespace cance::data
