#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flynet/error.hpp"

namespace flynet {

// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 255;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

namespace detail {

inline bool read_pnm_token(std::istream& in, std::string& tok) {
  tok.clear();
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch) && ch != '#') {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  if (ch == '#') in.putback('#');
  // exactly one whitespace byte separates the header from the raster
  return !tok.empty();
}

}  // namespace detail

// Binary PGM (P5), maxval <= 255.
inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::string tok;
  if (!detail::read_pnm_token(in, tok) || tok != "P5")
    throw DataError(path.string() + ": not a binary PGM (missing P5 magic)");
  std::size_t fields[3] = {0, 0, 0};
  for (auto& f : fields) {
    if (!detail::read_pnm_token(in, tok)) throw DataError(path.string() + ": truncated PGM header");
    try {
      std::size_t used = 0;
      f = std::stoul(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": malformed PGM header field '" + tok + "'");
    }
  }
  GrayImage img;
  img.width = fields[0];
  img.height = fields[1];
  if (img.width == 0 || img.height == 0) throw DataError(path.string() + ": zero image dimension");
  if (fields[2] == 0 || fields[2] > 255)
    throw DataError(path.string() + ": unsupported maxval " + std::to_string(fields[2]) +
                    " (8-bit PGM only)");
  img.maxval = static_cast<unsigned>(fields[2]);
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
    throw DataError(path.string() + ": truncated raster (expected " + std::to_string(img.pixels.size()) +
                    " bytes, got " + std::to_string(in.gcount()) + ")");
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "P5\n" << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw DataError(path.string() + ": write failed");
}

}  // namespace flynet
