/*
 * Copyright (c) 2026 The linet Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Binary checkpoint of named tensors.
//
//   magic        7 bytes  "LINET\x00\x01"
//   count        u64      number of tensors
//   per tensor:
//     name_len   u32, then name_len bytes of UTF-8
//     width      u8       4 (float32) or 8 (float64)
//     rank       u8
//     extents    rank x u64
//     values     numel x width bytes, row-major
//
// All integers and values are little-endian.

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "linet/error.hpp"
#include "linet/params.hpp"

namespace linet {

inline constexpr std::array<char, 7> kCheckpointMagic = {'L', 'I', 'N', 'E', 'T', '\x00', '\x01'};

namespace detail {

template <class U>
void put_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <class U>
U get_le(std::istream& is) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = is.get();
    if (c == EOF) throw ParseError("checkpoint truncated");
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

template <class F>
void put_float(std::ostream& os, F f) {
  using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  U bits;
  std::memcpy(&bits, &f, sizeof(F));
  put_le(os, bits);
}

template <class F>
F get_float(std::istream& is) {
  using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  const U bits = get_le<U>(is);
  F f;
  std::memcpy(&f, &bits, sizeof(F));
  return f;
}

}  // namespace detail

template <class S>
void save_checkpoint(std::ostream& os, const ParamSet<S>& ps) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint64_t>(os, ps.size());
  for (const auto& p : ps) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put_le<std::uint8_t>(os, sizeof(S));
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(p.tensor.rank()));
    for (auto e : p.tensor.shape()) detail::put_le<std::uint64_t>(os, e);
    for (S v : p.tensor.data()) detail::put_float(os, v);
  }
  if (!os) throw IoError("checkpoint write failed");
}

/// Values stored at the other width are converted to S.
template <class S>
ParamSet<S> load_checkpoint(std::istream& is) {
  std::array<char, 7> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw ParseError("not a linet checkpoint (bad magic)");
  const auto count = detail::get_le<std::uint64_t>(is);
  ParamSet<S> ps;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = detail::get_le<std::uint32_t>(is);
    if (len > (1u << 16)) throw ParseError("checkpoint: implausible name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto width = detail::get_le<std::uint8_t>(is);
    if (width != 4 && width != 8)
      throw ParseError("checkpoint: tensor '" + name + "' has element width " + std::to_string(width));
    const auto rank = detail::get_le<std::uint8_t>(is);
    if (rank < 1 || rank > 3) throw ParseError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    for (int r = 0; r < rank; ++r) shape.push_back(detail::get_le<std::uint64_t>(is));
    std::vector<S> data(shape_numel(shape));
    for (auto& v : data)
      v = width == 4 ? static_cast<S>(detail::get_float<float>(is))
                     : static_cast<S>(detail::get_float<double>(is));
    ps.add(std::move(name), Tensor<S>(std::move(shape), std::move(data), true));
  }
  return ps;
}

template <class S>
void save_checkpoint(const std::string& path, const ParamSet<S>& ps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint '" + path + "'");
  save_checkpoint(os, ps);
}

template <class S>
ParamSet<S> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint<S>(is);
}

}  // namespace linet
