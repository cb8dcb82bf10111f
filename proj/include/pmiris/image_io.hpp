#pragma once

#include <zlib.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pmiris/error.hpp"
#include "pmiris/grid.hpp"

namespace pmiris {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound(path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

// All pipeline outputs go through this: write to a sibling temp file, then
// rename into place so readers never observe a half-written file.
inline void atomic_write_bytes(const std::string& path, const void* data, std::size_t n) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out.write(static_cast<const char*>(data), std::streamsize(n));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline void atomic_write_text(const std::string& path, const std::string& text) {
  atomic_write_bytes(path, text.data(), text.size());
}

// shortest stable decimal for report/CSV fields
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

namespace detail {

// ---- PGM (P5, maxval 255) ----

inline GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw UnsupportedFormat("bad PGM header in " + path);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw UnsupportedFormat("not a P5 PGM: " + path);
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (maxval != 255) throw UnsupportedFormat("PGM maxval " + std::to_string(maxval) +
                                             " != 255 (8-bit only): " + path);
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw UnsupportedFormat("bad PGM header in " + path);
  ++pos;  // single whitespace after maxval
  if (w < 1 || h < 1) throw UnsupportedFormat("bad PGM dims in " + path);
  const std::size_t need = std::size_t(w) * std::size_t(h);
  if (bytes.size() - pos < need) throw ParseError("truncated PGM payload: " + path);
  std::vector<std::uint8_t> px(bytes.begin() + long(pos), bytes.begin() + long(pos) + long(need));
  return GrayImage(int(w), int(h), std::move(px));
}

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", img.width(), img.height());
  std::vector<std::uint8_t> out(header, header + n);
  out.insert(out.end(), img.data().begin(), img.data().end());
  return out;
}

// ---- PNG (8-bit, non-interlaced; gray written, gray/RGB/GA/RGBA read) ----

inline void put_u32be(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(std::uint8_t(x >> 24));
  v.push_back(std::uint8_t(x >> 16));
  v.push_back(std::uint8_t(x >> 8));
  v.push_back(std::uint8_t(x));
}

inline std::uint32_t get_u32be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::vector<std::uint8_t>& data) {
  put_u32be(out, std::uint32_t(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const std::uint32_t crc =
      std::uint32_t(::crc32(0, out.data() + start, uInt(out.size() - start)));
  put_u32be(out, crc);
}

inline const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

inline std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  std::vector<std::uint8_t> out(png_sig, png_sig + 8);
  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, std::uint32_t(img.width()));
  put_u32be(ihdr, std::uint32_t(img.height()));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // color type: grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // interlace: none
  append_chunk(out, "IHDR", ihdr);

  // filter byte 0 per scanline
  std::vector<std::uint8_t> raw;
  raw.reserve(std::size_t(img.height()) * (img.width() + 1));
  for (int y = 0; y < img.height(); ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), img.row(y), img.row(y) + img.width());
  }
  uLongf bound = ::compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> idat(bound);
  if (::compress2(idat.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw Error("zlib compression failed");
  idat.resize(bound);
  append_chunk(out, "IDAT", idat);
  append_chunk(out, "IEND", {});
  return out;
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return std::uint8_t(a);
  if (pb <= pc) return std::uint8_t(b);
  return std::uint8_t(c);
}

inline GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), png_sig, 8) != 0)
    throw UnsupportedFormat("not a PNG: " + path);
  std::size_t pos = 8;
  int w = 0, h = 0, depth = 0, color = 0, interlace = 0;
  bool have_ihdr = false;
  std::vector<std::uint8_t> idat;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = get_u32be(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw UnsupportedFormat("truncated PNG chunk: " + path);
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const std::uint8_t* data = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw UnsupportedFormat("bad IHDR: " + path);
      w = int(get_u32be(data));
      h = int(get_u32be(data + 4));
      depth = data[8];
      color = data[9];
      interlace = data[12];
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!have_ihdr || w < 1 || h < 1) throw UnsupportedFormat("missing/bad IHDR: " + path);
  if (depth != 8)
    throw UnsupportedFormat("PNG bit depth " + std::to_string(depth) + " != 8: " + path);
  int channels;
  switch (color) {
    case 0: channels = 1; break;
    case 2: channels = 3; break;
    case 4: channels = 2; break;
    case 6: channels = 4; break;
    default: throw UnsupportedFormat("PNG color type " + std::to_string(color) + ": " + path);
  }
  if (interlace != 0) throw UnsupportedFormat("interlaced PNG not supported: " + path);

  const std::size_t stride = std::size_t(w) * channels;
  std::vector<std::uint8_t> raw(std::size_t(h) * (stride + 1));
  uLongf raw_len = uLongf(raw.size());
  const int zret = ::uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
  if (zret != Z_OK || raw_len != raw.size())
    throw UnsupportedFormat("bad PNG image data: " + path);

  // undo per-row filters in place, then collapse channels
  std::vector<std::uint8_t> px(std::size_t(w) * h);
  std::vector<std::uint8_t> prev(stride, 0);
  std::vector<std::uint8_t> cur(stride);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* src = &raw[std::size_t(y) * (stride + 1)];
    const std::uint8_t filter = src[0];
    ++src;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= std::size_t(channels) ? cur[i - channels] : 0;
      const int b = prev[i];
      const int c = i >= std::size_t(channels) ? prev[i - channels] : 0;
      int v;
      switch (filter) {
        case 0: v = src[i]; break;
        case 1: v = src[i] + a; break;
        case 2: v = src[i] + b; break;
        case 3: v = src[i] + (a + b) / 2; break;
        case 4: v = src[i] + paeth(a, b, c); break;
        default: throw UnsupportedFormat("bad PNG filter type: " + path);
      }
      cur[i] = std::uint8_t(v);
    }
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* s = &cur[std::size_t(x) * channels];
      int v;
      if (channels == 1) v = s[0];
      else if (channels == 2) v = s[0];                       // gray + alpha
      else v = int(std::lround((s[0] + s[1] + s[2]) / 3.0));  // luminance average
      px[std::size_t(y) * w + x] = std::uint8_t(v);
    }
    std::swap(prev, cur);
  }
  return GrayImage(w, h, std::move(px));
}

}  // namespace detail

// Loads an 8-bit single-channel image (PGM P5 or PNG; multi-channel PNG is
// collapsed by luminance average). Format is detected from magic bytes.
inline GrayImage load_gray(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), detail::png_sig, 8) == 0)
    return detail::decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return detail::decode_pgm(bytes, path);
  throw UnsupportedFormat("unrecognized image format: " + path);
}

// Saves by extension: .pgm -> P5, .png -> 8-bit grayscale PNG.
inline void save_gray(const std::string& path, const GrayImage& img) {
  auto ext_of = [](const std::string& p) {
    const auto dot = p.rfind('.');
    std::string e = dot == std::string::npos ? "" : p.substr(dot + 1);
    for (auto& ch : e) ch = char(std::tolower(ch));
    return e;
  };
  const std::string ext = ext_of(path);
  std::vector<std::uint8_t> bytes;
  if (ext == "pgm") bytes = detail::encode_pgm(img);
  else if (ext == "png") bytes = detail::encode_png(img);
  else throw UnsupportedFormat("save_gray: unsupported extension ." + ext);
  atomic_write_bytes(path, bytes.data(), bytes.size());
}

// [0,1] real raster to 8-bit for inspection dumps.
inline GrayImage quantize_unit(const RealGrid& g) {
  GrayImage out(g.width(), g.height());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double v = g.data()[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    out.data()[i] = std::uint8_t(std::lround(v * 255.0));
  }
  return out;
}

}  // namespace pmiris
