#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flynet/error.hpp"
#include "flynet/loss.hpp"
#include "flynet/pgm.hpp"
#include "flynet/tensor.hpp"

namespace flynet {

enum class Stage { larva, pupa, adult };

inline constexpr Stage kAllStages[] = {Stage::larva, Stage::pupa, Stage::adult};

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::larva: return "larva";
    case Stage::pupa: return "pupa";
    case Stage::adult: return "adult";
  }
  return "unknown";
}

inline Stage stage_from_string(std::string_view s) {
  for (Stage st : kAllStages)
    if (to_string(st) == s) return st;
  throw std::invalid_argument("unknown stage '" + std::string(s) + "'");
}

struct FramePair {
  Tensor4<float> image;  // (1, 1, h, w), values in [0, 1]
  BinaryMask mask;
  std::int64_t frame_index = 0;
  std::string stem;  // file stem when loaded from / written to disk

  friend bool operator==(const FramePair&, const FramePair&) = default;
};

struct FlyDataset {
  std::string id;
  Stage stage = Stage::larva;
  double fps = 0.0;
  std::vector<FramePair> frames;

  friend bool operator==(const FlyDataset&, const FlyDataset&) = default;
};

using Corpus = std::vector<FlyDataset>;

inline Tensor4<float> image_from_gray(const GrayImage& g) {
  Tensor4<float> t({1, 1, g.height, g.width});
  const float scale = 1.0f / static_cast<float>(g.maxval);
  for (std::size_t i = 0; i < g.pixels.size(); ++i)
    t[i] = std::min(1.0f, static_cast<float>(g.pixels[i]) * scale);
  return t;
}

inline GrayImage gray_from_image(const Tensor4<float>& t) {
  GrayImage g{t.shape().w, t.shape().h, 255, std::vector<std::uint8_t>(t.shape().plane())};
  auto src = t.plane(0, 0);
  for (std::size_t i = 0; i < src.size(); ++i)
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f));
  return g;
}

// Any stored value above 127 (on a 0..255 scale) is heart.
inline BinaryMask mask_from_gray(const GrayImage& g) {
  BinaryMask m(g.height, g.width);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    const unsigned v = g.maxval == 255 ? g.pixels[i] : g.pixels[i] * 255U / g.maxval;
    m.data[i] = v > 127 ? 1 : 0;
  }
  return m;
}

inline GrayImage gray_from_mask(const BinaryMask& m) {
  GrayImage g{m.w, m.h, 255, std::vector<std::uint8_t>(m.size())};
  for (std::size_t i = 0; i < m.size(); ++i) g.pixels[i] = m.data[i] ? 255 : 0;
  return g;
}

namespace detail {

inline std::vector<std::filesystem::path> list_pgm(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError(dir.string() + ": directory not found");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.stem().string() < b.stem().string(); });
  return files;
}

// Trailing decimal digits of every stem when they increase strictly; else ordinal positions.
inline std::vector<std::int64_t> frame_indices(const std::vector<std::filesystem::path>& files) {
  std::vector<std::int64_t> idx;
  for (const auto& f : files) {
    const std::string s = f.stem().string();
    std::size_t p = s.size();
    while (p > 0 && std::isdigit(static_cast<unsigned char>(s[p - 1]))) --p;
    if (p == s.size() || s.size() - p > 15) {
      idx.clear();
      break;
    }
    const std::int64_t v = std::stoll(s.substr(p));
    if (!idx.empty() && v <= idx.back()) {
      idx.clear();
      break;
    }
    idx.push_back(v);
  }
  if (idx.size() != files.size()) {
    idx.resize(files.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
  }
  return idx;
}

inline std::string require_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw DataError(where + ": field '" + key + "' missing or not a string");
  return j.at(key).get<std::string>();
}

}  // namespace detail

// Manifest: {"datasets":[{"id","stage","fps","frames_dir","masks_dir"}]}; relative
// directories resolve against the manifest's own directory.
inline Corpus load_corpus(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError(manifest_path.string() + ": cannot open manifest");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": invalid JSON: " + e.what());
  }
  const std::string where = manifest_path.string();
  if (!doc.is_object() || !doc.contains("datasets") || !doc.at("datasets").is_array())
    throw DataError(where + ": manifest must be an object with a 'datasets' array");

  const auto root = manifest_path.parent_path();
  Corpus corpus;
  std::set<std::string> seen;
  for (const auto& entry : doc.at("datasets")) {
    if (!entry.is_object()) throw DataError(where + ": dataset entry is not an object");
    FlyDataset ds;
    ds.id = detail::require_string(entry, "id", where);
    const std::string ctx = where + " [" + ds.id + "]";
    if (ds.id.empty() || !seen.insert(ds.id).second) throw DataError(ctx + ": empty or duplicate dataset id");
    try {
      ds.stage = stage_from_string(detail::require_string(entry, "stage", ctx));
    } catch (const std::invalid_argument& e) {
      throw DataError(ctx + ": " + e.what());
    }
    if (!entry.contains("fps") || !entry.at("fps").is_number())
      throw DataError(ctx + ": field 'fps' missing or not a number");
    ds.fps = entry.at("fps").get<double>();
    if (!(ds.fps > 0.0) || !std::isfinite(ds.fps)) throw DataError(ctx + ": fps must be positive");
    const auto frames_dir = root / detail::require_string(entry, "frames_dir", ctx);
    const auto masks_dir = root / detail::require_string(entry, "masks_dir", ctx);

    const auto frames = detail::list_pgm(frames_dir);
    const auto masks = detail::list_pgm(masks_dir);
    if (frames.size() != masks.size())
      throw DataError(ctx + ": " + std::to_string(frames.size()) + " frames in " + frames_dir.string() +
                      " but " + std::to_string(masks.size()) + " masks in " + masks_dir.string());
    const auto indices = detail::frame_indices(frames);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].stem() != masks[i].stem())
        throw DataError(ctx + ": frame " + frames[i].string() + " has no mask with the same stem (found " +
                        masks[i].string() + ")");
      const GrayImage img = read_pgm(frames[i]);
      const GrayImage msk = read_pgm(masks[i]);
      if (img.width != msk.width || img.height != msk.height)
        throw DataError("shape mismatch: frame " + frames[i].string() + " is " + std::to_string(img.width) +
                        "x" + std::to_string(img.height) + " but mask " + masks[i].string() + " is " +
                        std::to_string(msk.width) + "x" + std::to_string(msk.height));
      if (!ds.frames.empty() && (ds.frames.front().mask.w != img.width || ds.frames.front().mask.h != img.height))
        throw DataError("resolution mismatch within dataset: " + frames[i].string());
      ds.frames.push_back({image_from_gray(img), mask_from_gray(msk), indices[i], frames[i].stem().string()});
    }
    corpus.push_back(std::move(ds));
  }
  return corpus;
}

inline std::string frame_stem(const FramePair& f) {
  if (!f.stem.empty()) return f.stem;
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05lld", static_cast<long long>(f.frame_index));
  return buf;
}

// Writes <out>/<id>/{frames,masks}/<stem>.pgm and <out>/manifest.json.
inline std::filesystem::path save_corpus(const Corpus& corpus, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError(out_dir.string() + ": cannot create directory: " + ec.message());
  nlohmann::json datasets = nlohmann::json::array();
  for (const auto& ds : corpus) {
    const fs::path frames_rel = fs::path(ds.id) / "frames";
    const fs::path masks_rel = fs::path(ds.id) / "masks";
    fs::create_directories(out_dir / frames_rel, ec);
    if (!ec) fs::create_directories(out_dir / masks_rel, ec);
    if (ec) throw DataError((out_dir / ds.id).string() + ": cannot create directory: " + ec.message());
    for (const auto& f : ds.frames) {
      const std::string stem = frame_stem(f);
      write_pgm(out_dir / frames_rel / (stem + ".pgm"), gray_from_image(f.image));
      write_pgm(out_dir / masks_rel / (stem + ".pgm"), gray_from_mask(f.mask));
    }
    datasets.push_back({{"id", ds.id},
                        {"stage", to_string(ds.stage)},
                        {"fps", ds.fps},
                        {"frames_dir", frames_rel.generic_string()},
                        {"masks_dir", masks_rel.generic_string()}});
  }
  const fs::path manifest = out_dir / "manifest.json";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw DataError(manifest.string() + ": cannot open for writing");
  out << nlohmann::json{{"datasets", std::move(datasets)}}.dump(2) << '\n';
  if (!out) throw DataError(manifest.string() + ": write failed");
  return manifest;
}

}  // namespace flynet
