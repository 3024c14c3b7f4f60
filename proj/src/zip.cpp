/*
 * Copyright 2026 The PPS Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pps/zip.hpp"

#include <cstdint>
#include <cstring>

#include <zlib.h>

#include "pps/error.hpp"

namespace pps::zip {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get16(std::string_view s, std::size_t at) {
  if (at + 2 > s.size()) throw Error("MalformedArchive", "truncated zip structure");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) |
                                    (static_cast<unsigned char>(s[at + 1]) << 8));
}

std::uint32_t get32(std::string_view s, std::size_t at) {
  return static_cast<std::uint32_t>(get16(s, at)) |
         (static_cast<std::uint32_t>(get16(s, at + 2)) << 16);
}

std::string deflate_raw(std::string_view in) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error("MalformedArchive", "deflateInit2 failed");
  }
  std::string out(deflateBound(&zs, static_cast<uLong>(in.size())), '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error("MalformedArchive", "deflate failed");
  return out;
}

std::string inflate_raw(std::string_view in, std::size_t expected) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) throw Error("MalformedArchive", "inflateInit2 failed");
  std::string out(expected + 1, '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const std::size_t produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) {
    throw Error("MalformedArchive", "corrupt deflate stream");
  }
  out.resize(expected);
  return out;
}

std::uint32_t crc_of(std::string_view data) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

}  // namespace

std::string write(const std::vector<Entry>& entries) {
  std::string out;
  std::string central;
  for (const Entry& e : entries) {
    const std::string packed = deflate_raw(e.data);
    const std::uint32_t crc = crc_of(e.data);
    const auto offset = static_cast<std::uint32_t>(out.size());

    put32(out, kLocalSig);
    put16(out, 20);
    put16(out, 0);
    put16(out, 8);
    put16(out, 0);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, static_cast<std::uint32_t>(packed.size()));
    put32(out, static_cast<std::uint32_t>(e.data.size()));
    put16(out, static_cast<std::uint16_t>(e.name.size()));
    put16(out, 0);
    out += e.name;
    out += packed;

    put32(central, kCentralSig);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, 8);
    put16(central, 0);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, static_cast<std::uint32_t>(packed.size()));
    put32(central, static_cast<std::uint32_t>(e.data.size()));
    put16(central, static_cast<std::uint16_t>(e.name.size()));
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    central += e.name;
  }
  const auto central_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, central_offset);
  put16(out, 0);
  return out;
}

std::vector<Entry> read(std::string_view archive) {
  if (archive.size() < 22) throw Error("MalformedArchive", "not a zip archive");
  std::size_t eocd = std::string_view::npos;
  const std::size_t lowest = archive.size() > 22 + 65535 ? archive.size() - 22 - 65535 : 0;
  for (std::size_t at = archive.size() - 22 + 1; at-- > lowest;) {
    if (get32(archive, at) == kEndSig) {
      eocd = at;
      break;
    }
  }
  if (eocd == std::string_view::npos) throw Error("MalformedArchive", "end of central directory not found");

  const std::uint16_t count = get16(archive, eocd + 10);
  std::size_t at = get32(archive, eocd + 16);
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    if (get32(archive, at) != kCentralSig) throw Error("MalformedArchive", "bad central directory entry");
    const std::uint16_t method = get16(archive, at + 10);
    const std::uint32_t crc = get32(archive, at + 16);
    const std::uint32_t packed_size = get32(archive, at + 20);
    const std::uint32_t size = get32(archive, at + 24);
    const std::uint16_t name_len = get16(archive, at + 28);
    const std::uint16_t extra_len = get16(archive, at + 30);
    const std::uint16_t comment_len = get16(archive, at + 32);
    const std::uint32_t local = get32(archive, at + 42);
    if (at + 46 + name_len > archive.size()) throw Error("MalformedArchive", "truncated entry name");
    std::string name(archive.substr(at + 46, name_len));
    at += 46 + name_len + extra_len + comment_len;

    if (get32(archive, local) != kLocalSig) throw Error("MalformedArchive", "bad local header for " + name);
    const std::size_t data_at = local + 30 + get16(archive, local + 26) + get16(archive, local + 28);
    if (data_at + packed_size > archive.size()) throw Error("MalformedArchive", "truncated data for " + name);
    if (!name.empty() && name.back() == '/') continue;

    const std::string_view raw = archive.substr(data_at, packed_size);
    std::string data;
    if (method == 0) {
      data.assign(raw);
    } else if (method == 8) {
      data = inflate_raw(raw, size);
    } else {
      throw Error("MalformedArchive", "unsupported compression method for " + name);
    }
    if (crc_of(data) != crc) throw Error("MalformedArchive", "CRC mismatch for " + name);
    entries.push_back({std::move(name), std::move(data)});
  }
  return entries;
}

}  // namespace pps::zip
