#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "fnvr/common.hpp"
#include "fnvr/image.hpp"

namespace fnvr {

namespace detail_io {

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  int v = 0;
  if (!(in >> v)) fail("pnm: bad header field in " + path);
  return v;
}

inline bool host_little_endian() {
  const uint16_t one = 1;
  return *reinterpret_cast<const uint8_t*>(&one) == 1;
}

}  // namespace detail_io

// ---- PPM (P6, 8-bit, 3 channels) ----

inline void write_ppm(const std::string& path, const Image<uint8_t>& img) {
  if (img.channels != 3) fail("write_ppm: 3-channel image required");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("write_ppm: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.size()));
  if (!f) fail("write_ppm: write failed for " + path);
}

inline Image<uint8_t> read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("read_ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") fail("read_ppm: bad magic in " + path);
  const int w = detail_io::read_pnm_int(f, path);
  const int h = detail_io::read_pnm_int(f, path);
  const int maxval = detail_io::read_pnm_int(f, path);
  if (maxval != 255) fail("read_ppm: unsupported maxval in " + path);
  f.get();  // single whitespace after header
  Image<uint8_t> img(w, h, 3);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.size()))
    fail("read_ppm: truncated pixel data in " + path);
  return img;
}

// ---- PGM (P5, 8-bit, 1 channel) ----

inline void write_pgm(const std::string& path, const Image<uint8_t>& img) {
  if (img.channels != 1) fail("write_pgm: 1-channel image required");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("write_pgm: cannot open " + path);
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.size()));
  if (!f) fail("write_pgm: write failed for " + path);
}

inline Image<uint8_t> read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("read_pgm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") fail("read_pgm: bad magic in " + path);
  const int w = detail_io::read_pnm_int(f, path);
  const int h = detail_io::read_pnm_int(f, path);
  const int maxval = detail_io::read_pnm_int(f, path);
  if (maxval != 255) fail("read_pgm: unsupported maxval in " + path);
  f.get();
  Image<uint8_t> img(w, h, 1);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.size()))
    fail("read_pgm: truncated pixel data in " + path);
  return img;
}

// ---- PFM ("Pf", grayscale 32-bit float; negative scale = little-endian,
//      rows stored bottom-to-top per the format) ----

inline void write_pfm(const std::string& path, const Image<float>& img) {
  if (img.channels != 1) fail("write_pfm: 1-channel image required");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("write_pfm: cannot open " + path);
  f << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
  for (int y = img.height - 1; y >= 0; --y)
    f.write(reinterpret_cast<const char*>(&img.data[static_cast<size_t>(y) * img.width]),
            static_cast<std::streamsize>(sizeof(float)) * img.width);
  if (!f) fail("write_pfm: write failed for " + path);
}

inline Image<float> read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("read_pfm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "Pf") fail("read_pfm: bad magic in " + path + " (color PF unsupported)");
  const int w = detail_io::read_pnm_int(f, path);
  const int h = detail_io::read_pnm_int(f, path);
  detail_io::skip_pnm_space(f);
  double scale = 0;
  if (!(f >> scale) || scale == 0) fail("read_pfm: bad scale in " + path);
  f.get();
  const bool file_le = scale < 0;
  Image<float> img(w, h, 1);
  std::vector<float> row(static_cast<size_t>(w));
  for (int y = h - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(sizeof(float)) * w);
    if (f.gcount() != static_cast<std::streamsize>(sizeof(float)) * w)
      fail("read_pfm: truncated pixel data in " + path);
    if (file_le != detail_io::host_little_endian()) {
      for (float& v : row) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        bits = __builtin_bswap32(bits);
        std::memcpy(&v, &bits, 4);
      }
    }
    std::memcpy(&img.data[static_cast<size_t>(y) * w], row.data(), sizeof(float) * static_cast<size_t>(w));
  }
  return img;
}

}  // namespace fnvr
