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

// Model container format, shared by every persisted model:
//
//   offset  size  field
//   0       8     magic "CANCEMDL"
//   8       4     format version, u32 little-endian
//   12      8     header length in bytes, u64 little-endian
//   20      H     header, UTF-8 JSON (layer specs, dims, hyperparameters)
//   20+H    8     parameter count P, u64 little-endian
//   28+H    8P    parameters, IEEE-754 binary64 little-endian
//   28+H+8P 8     FNV-1a 64 checksum of every preceding byte, u64 little-endian
//
// Tensors are referenced from the header by {rows, cols, offset} into the
// parameter blob.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/nn/network.hpp"

namespace cance::nn {

using json = nlohmann::json;

inline constexpr std::array<char, 8> kModelMagic = {'C', 'A', 'N', 'C', 'E', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

inline std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace detail

struct ModelContainer {
  json header = json::object();
  std::vector<double> blob;

  void put_matrix(const std::string& key, const Matrix& m) { header[key] = append(m); }

  Matrix get_matrix(const std::string& key) const {
    if (!header.contains(key)) throw FormatError("model header has no entry '" + key + "'");
    return read(header.at(key));
  }

  void put_vector(const std::string& key, std::span<const double> v) {
    put_matrix(key, Matrix::row_vector(v));
  }
  Vector get_vector(const std::string& key) const {
    const Matrix m = get_matrix(key);
    return Vector(m.data().begin(), m.data().end());
  }

  void put_network(const std::string& key, const Network& net) {
    json layers = json::array();
    for (const auto& l : net.layers()) {
      if (const auto* d = std::get_if<DenseLayer>(&l)) {
        layers.push_back({{"type", "dense"},
                          {"in", d->in_dim()},
                          {"out", d->out_dim()},
                          {"activation", to_string(d->activation)},
                          {"weights", append(d->weights)},
                          {"bias", append(d->bias)}});
      } else {
        const auto& bn = std::get<BatchNormLayer>(l);
        layers.push_back({{"type", "batchnorm"},
                          {"dim", bn.dim()},
                          {"momentum", bn.momentum},
                          {"epsilon", bn.epsilon},
                          {"gamma", append(bn.gamma)},
                          {"beta", append(bn.beta)},
                          {"running_mean", append(bn.running_mean)},
                          {"running_var", append(bn.running_var)}});
      }
    }
    header[key] = {{"layers", std::move(layers)}};
  }

  Network get_network(const std::string& key) const {
    if (!header.contains(key)) throw FormatError("model header has no network '" + key + "'");
    Network net;
    try {
      for (const auto& spec : header.at(key).at("layers")) {
        const std::string type = spec.at("type");
        if (type == "dense") {
          const std::size_t in = spec.at("in"), out = spec.at("out");
          Matrix w = read(spec.at("weights"));
          Matrix b = read(spec.at("bias"));
          expect_shape(w, out, in, "dense weights");
          expect_shape(b, 1, out, "dense bias");
          net.add(DenseLayer(std::move(w), std::move(b),
                             parse_activation(spec.at("activation").get<std::string>())));
        } else if (type == "batchnorm") {
          const std::size_t dim = spec.at("dim");
          BatchNormLayer bn(dim, spec.at("momentum").get<double>(), spec.at("epsilon").get<double>());
          bn.gamma = read(spec.at("gamma"));
          bn.beta = read(spec.at("beta"));
          bn.running_mean = read(spec.at("running_mean"));
          bn.running_var = read(spec.at("running_var"));
          for (const Matrix* m : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var})
            expect_shape(*m, 1, dim, "batchnorm vector");
          net.add(std::move(bn));
        } else {
          throw FormatError("unknown layer type '" + type + "'");
        }
      }
    } catch (const json::exception& e) {
      throw FormatError("malformed network entry '" + key + "': " + e.what());
    }
    return net;
  }

  std::string serialize() const {
    std::string out(kModelMagic.begin(), kModelMagic.end());
    detail::put_u32(out, kModelFormatVersion);
    const std::string text = header.dump();
    detail::put_u64(out, text.size());
    out += text;
    detail::put_u64(out, blob.size());
    out.reserve(out.size() + 8 * blob.size() + 8);
    for (double v : blob) detail::put_f64(out, v);
    const auto* bytes = reinterpret_cast<const unsigned char*>(out.data());
    detail::put_u64(out, detail::fnv1a(bytes, out.size()));
    return out;
  }

  static ModelContainer deserialize(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    if (n < 12 || std::memcmp(p, kModelMagic.data(), 8) != 0) {
      throw VersionError("not a model file (bad magic bytes)");
    }
    const std::uint32_t version = detail::get_u32(p + 8);
    if (version != kModelFormatVersion) {
      throw VersionError("unsupported model format version " + std::to_string(version));
    }
    if (n < 20) throw FormatError("truncated model file (header length)");
    const std::uint64_t hlen = detail::get_u64(p + 12);
    if (hlen > n || 20 + hlen + 8 > n) throw FormatError("truncated model file (header)");
    const std::uint64_t count = detail::get_u64(p + 20 + hlen);
    const std::uint64_t expected = 28 + hlen + 8 * count + 8;
    if (count > n / 8 || expected != n) {
      throw FormatError("truncated model file: expected " + std::to_string(expected) +
                        " bytes, found " + std::to_string(n));
    }
    const std::uint64_t stored = detail::get_u64(p + n - 8);
    if (stored != detail::fnv1a(p, n - 8)) throw FormatError("model file checksum mismatch");
    ModelContainer c;
    try {
      c.header = json::parse(bytes.substr(20, hlen));
    } catch (const json::exception& e) {
      throw FormatError(std::string("model header is not valid JSON: ") + e.what());
    }
    c.blob.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) c.blob[i] = detail::get_f64(p + 28 + hlen + 8 * i);
    return c;
  }

  void save(const std::string& path) const { detail::write_file(path, serialize()); }
  static ModelContainer load(const std::string& path) {
    return deserialize(detail::read_file(path));
  }

 private:
  json append(const Matrix& m) {
    json ref = {{"rows", m.rows()}, {"cols", m.cols()}, {"offset", blob.size()}};
    blob.insert(blob.end(), m.data().begin(), m.data().end());
    return ref;
  }

  Matrix read(const json& ref) const {
    const std::size_t rows = ref.at("rows"), cols = ref.at("cols"), offset = ref.at("offset");
    if (offset > blob.size() || rows * cols > blob.size() - offset) {
      throw ShapeError("tensor " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " at offset " + std::to_string(offset) + " exceeds parameter blob of " +
                       std::to_string(blob.size()));
    }
    return Matrix(rows, cols,
                  Vector(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                         blob.begin() + static_cast<std::ptrdiff_t>(offset + rows * cols)));
  }

  static void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols,
                           const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
      throw ShapeError(std::string(what) + " declared " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " but stored " + m.shape_string());
    }
  }
};

inline void save_model(const std::string& path, const Network& net) {
  ModelContainer c;
  c.header["kind"] = "network";
  c.put_network("network", net);
  c.save(path);
}

inline Network load_model(const std::string& path) {
  return ModelContainer::load(path).get_network("network");
}

}  // namespace cance::nn
