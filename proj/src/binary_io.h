// Copyright 2026 The cnnsens Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CNNSENS_SRC_BINARY_IO_H_
#define CNNSENS_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace cnnsens::detail {

// Explicit little-endian encoding, independent of host byte order.

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFFu), static_cast<char>((v >> 8) & 0xFFu),
                         static_cast<char>((v >> 16) & 0xFFu),
                         static_cast<char>((v >> 24) & 0xFFu)};
  out.write(bytes, 4);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw std::runtime_error("truncated " + what);
  }
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

inline float get_f32(std::istream& in, const std::string& what) {
  return std::bit_cast<float>(get_u32(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char buf[4] = {};
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw std::runtime_error("bad magic in " + what + ", expected \"" + magic + "\"");
  }
}

}  // namespace cnnsens::detail

#endif  // CNNSENS_SRC_BINARY_IO_H_
