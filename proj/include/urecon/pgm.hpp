#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "urecon/errors.hpp"

// 8-bit binary portable graymap (P5) output for reconstructions and error
// maps.

namespace urecon {

inline void write_pgm(const std::string& path, std::size_t width,
                      std::size_t height,
                      const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != width * height)
    throw ContractError("pgm pixel count does not match dimensions");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()),
           static_cast<std::streamsize>(pixels.size()));
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<std::uint8_t> read_pgm(const std::string& path,
                                          std::size_t& width,
                                          std::size_t& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw IoError("not a binary PGM: " + path);
  std::size_t maxval = 0;
  is >> width >> height >> maxval;
  if (!is || maxval != 255) throw IoError("unsupported PGM header: " + path);
  is.get();  // single whitespace after the header
  std::vector<std::uint8_t> pixels(width * height);
  is.read(reinterpret_cast<char*>(pixels.data()),
          static_cast<std::streamsize>(pixels.size()));
  if (!is) throw IoError("truncated PGM: " + path);
  return pixels;
}

}  // namespace urecon
