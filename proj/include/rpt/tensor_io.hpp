/* Copyright 2026 The RPT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// TensorFile container.
//
//   offset  size        field
//   0       4           magic "RPTT"
//   4       1           version (1)
//   5       1           dtype (1 = f32 LE, 2 = u8, 3 = u16 LE)
//   6       1           rank
//   7       4 * rank    dims, u32 LE
//   ...     prod(dims) * width(dtype)   payload, row-major
//
// A bundle is a directory of TensorFiles plus `index.txt`, one
// `name file dims...` line per tensor; used for models and cluster tables.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "rpt/error.hpp"
#include "rpt/tensor.hpp"

namespace rpt {

enum class DType : std::uint8_t { kF32 = 1, kU8 = 2, kU16 = 3 };

inline std::size_t dtype_width(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kU8: return 1;
    case DType::kU16: return 2;
  }
  throw FormatError("unknown dtype");
}

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::variant<std::vector<float>, std::vector<std::uint8_t>, std::vector<std::uint16_t>> payload;

  DType dtype() const { return static_cast<DType>(payload.index() + 1); }
  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  template <class T>
  const std::vector<T>& values() const { return std::get<std::vector<T>>(payload); }

  friend bool operator==(const RawTensor&, const RawTensor&) = default;
};

inline constexpr std::array<char, 4> kTensorMagic = {'R', 'P', 'T', 'T'};
inline constexpr std::uint8_t kTensorVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::string encode_tensor(const RawTensor& t) {
  if (t.dims.empty() || t.dims.size() > 255) throw FormatError("tensor rank must be in [1,255]");
  const std::size_t n = t.element_count();
  std::string out(kTensorMagic.begin(), kTensorMagic.end());
  out.push_back(static_cast<char>(kTensorVersion));
  out.push_back(static_cast<char>(t.dtype()));
  out.push_back(static_cast<char>(t.dims.size()));
  for (auto d : t.dims) detail::put_u32(out, d);
  std::visit(
      [&](const auto& values) {
        using V = typename std::decay_t<decltype(values)>::value_type;
        if (values.size() != n) throw LengthError("payload length does not match dims");
        for (V v : values) {
          if constexpr (std::is_same_v<V, float>) {
            detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
          } else if constexpr (std::is_same_v<V, std::uint16_t>) {
            out.push_back(static_cast<char>(v & 0xFF));
            out.push_back(static_cast<char>(v >> 8));
          } else {
            out.push_back(static_cast<char>(v));
          }
        }
      },
      t.payload);
  return out;
}

inline RawTensor decode_tensor(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 7) throw FormatError("tensor header truncated");
  if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin())) throw FormatError("bad tensor magic");
  if (p[4] != kTensorVersion) throw FormatError("unsupported tensor version " + std::to_string(p[4]));
  const std::uint8_t code = p[5];
  if (code < 1 || code > 3) throw FormatError("unknown dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const std::size_t rank = p[6];
  if (rank == 0) throw FormatError("tensor rank 0");
  const std::size_t header = 7 + 4 * rank;
  if (bytes.size() < header) throw FormatError("tensor dims truncated");

  RawTensor t;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    t.dims.push_back(detail::get_u32(p + 7 + 4 * i));
    n *= t.dims.back();
  }
  const std::size_t expected = header + n * dtype_width(dtype);
  if (bytes.size() != expected)
    throw LengthError("tensor payload is " + std::to_string(bytes.size() - header) + " bytes, expected " +
                      std::to_string(expected - header));
  const unsigned char* body = p + header;
  switch (dtype) {
    case DType::kF32: {
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(detail::get_u32(body + 4 * i));
      t.payload = std::move(v);
      break;
    }
    case DType::kU8:
      t.payload = std::vector<std::uint8_t>(body, body + n);
      break;
    case DType::kU16: {
      std::vector<std::uint16_t> v(n);
      for (std::size_t i = 0; i < n; ++i)
        v[i] = static_cast<std::uint16_t>(body[2 * i] | (body[2 * i + 1] << 8));
      t.payload = std::move(v);
      break;
    }
  }
  return t;
}

inline void write_tensor(const std::filesystem::path& path, const RawTensor& t) {
  const std::string bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline RawTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_tensor(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const LengthError& e) {
    throw LengthError(path.string() + ": " + e.what());
  }
}

// Conversions between domain grids and raw tensors. Real grids are stored as
// f32; values that are already f32-representable round-trip exactly.

template <class Tag>
RawTensor to_raw(const Grid<double, Tag>& g) {
  std::vector<float> v(g.data().begin(), g.data().end());
  return {{static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width()),
           static_cast<std::uint32_t>(g.depth())},
          std::move(v)};
}

inline RawTensor to_raw(const LabelMap& g) {
  return {{static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width())}, g.data()};
}

inline RawTensor to_raw(const SuperpixelMap& sp) {
  return {{static_cast<std::uint32_t>(sp.height()), static_cast<std::uint32_t>(sp.width())}, sp.ids.data()};
}

inline RawTensor to_raw(const Matrix& m) {
  std::vector<float> v(m.data.begin(), m.data.end());
  return {{static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)}, std::move(v)};
}

template <class GridT>
GridT grid_from_raw(const RawTensor& t) {
  if (t.dtype() != DType::kF32) throw FormatError("expected f32 tensor");
  if (t.dims.size() != 3) throw FormatError("expected rank-3 tensor (height, width, channels)");
  const auto& v = t.values<float>();
  return GridT(t.dims[0], t.dims[1], t.dims[2], std::vector<double>(v.begin(), v.end()));
}

inline LabelMap labels_from_raw(const RawTensor& t) {
  if (t.dtype() != DType::kU8 || t.dims.size() != 2) throw FormatError("expected rank-2 u8 label tensor");
  return LabelMap(t.dims[0], t.dims[1], 1, t.values<std::uint8_t>());
}

/// Rebuilds a SuperpixelMap; ids must be dense.
inline SuperpixelMap superpixels_from_raw(const RawTensor& t) {
  if (t.dtype() != DType::kU16 || t.dims.size() != 2) throw FormatError("expected rank-2 u16 superpixel tensor");
  SuperpixelMap sp;
  sp.ids = Grid<std::uint16_t, SuperpixelTag>(t.dims[0], t.dims[1], 1, t.values<std::uint16_t>());
  std::vector<bool> seen;
  for (auto id : sp.ids.data()) {
    if (id >= seen.size()) seen.resize(id + 1, false);
    seen[id] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw FormatError("superpixel ids are not dense");
  sp.count = seen.size();
  return sp;
}

inline Matrix matrix_from_raw(const RawTensor& t) {
  if (t.dtype() != DType::kF32 || t.dims.size() != 2) throw FormatError("expected rank-2 f32 matrix");
  Matrix m(t.dims[0], t.dims[1]);
  const auto& v = t.values<float>();
  std::copy(v.begin(), v.end(), m.data.begin());
  return m;
}

/// Named tensors stored as one directory.
class TensorBundle {
 public:
  void put(const std::string& name, RawTensor t) { tensors_[name] = std::move(t); }
  const RawTensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw FormatError("bundle has no tensor named '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const std::map<std::string, RawTensor>& tensors() const { return tensors_; }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.txt", std::ios::trunc);
    if (!index) throw Error("cannot write bundle index in " + dir.string());
    for (const auto& [name, t] : tensors_) {
      const std::string file = name + ".rptt";
      write_tensor(dir / file, t);
      index << name << ' ' << file;
      for (auto d : t.dims) index << ' ' << d;
      index << '\n';
    }
  }

  static TensorBundle load(const std::filesystem::path& dir) {
    std::ifstream index(dir / "index.txt");
    if (!index) throw FormatError("missing bundle index in " + dir.string());
    TensorBundle b;
    std::string line;
    while (std::getline(index, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string name, file;
      if (!(ls >> name >> file)) throw FormatError("malformed bundle index line: " + line);
      std::vector<std::uint32_t> dims;
      std::uint32_t d;
      while (ls >> d) dims.push_back(d);
      RawTensor t = read_tensor(dir / file);
      if (t.dims != dims) throw FormatError("bundle index dims disagree with " + file);
      b.put(name, std::move(t));
    }
    return b;
  }

 private:
  std::map<std::string, RawTensor> tensors_;
};

}  // namespace rpt
