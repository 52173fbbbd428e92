// Copyright 2026 The bvv Authors.
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

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "bvv/error.hpp"

namespace bvv::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class Writer {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    buf_.append(p, sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_span(std::span<const T> values) {
    const auto* p = reinterpret_cast<const char*>(values.data());
    buf_.append(p, values.size_bytes());
  }

  void put_bytes(std::string_view bytes) { buf_.append(bytes); }

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

/// Bounds-checked cursor; every short read is a kTruncated error.
class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void get_into(std::span<T> out) {
    const auto src = take(out.size_bytes());
    std::memcpy(out.data(), src.data(), out.size_bytes());
  }

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw Error(ErrorCode::kTruncated,
                  "need " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", have " +
                      std::to_string(bytes_.size() - pos_));
    }
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t offset() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed: " + path);
  return bytes;
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

}  // namespace bvv::binio
