#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flynet/trainer.hpp"

namespace flynet {

// Layout: "FLYN" | u32 LE version | u64 LE header length | JSON header |
// f32 LE parameter blob | f32 LE Adam first moments | f32 LE Adam second moments.
inline constexpr char kCheckpointMagic[4] = {'F', 'L', 'Y', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Code { io, bad_magic, version_mismatch, truncated_header, malformed_header, truncated_blob, length_mismatch };

  CheckpointError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}
inline std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}
inline void put_floats(std::string& out, std::span<const float> vals) {
  for (float f : vals) put_u32(out, std::bit_cast<std::uint32_t>(f));
}
inline void get_floats(const std::string& in, std::size_t pos, std::span<float> vals) {
  for (std::size_t i = 0; i < vals.size(); ++i)
    vals[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, pos + 4 * i, 4)));
}

inline void put_paramset(std::string& out, const ParamSet<float>& ps) {
  for (const auto& [id, p] : ps) {
    put_floats(out, p.weights.data());
    put_floats(out, p.bias);
  }
}

// Fills `ps` (already shaped) from consecutive floats at `pos`; returns bytes consumed.
inline std::size_t get_paramset(const std::string& in, std::size_t pos, ParamSet<float>& ps) {
  std::size_t off = pos;
  for (auto& [id, p] : ps) {
    get_floats(in, off, p.weights.data());
    off += 4 * p.weights.size();
    get_floats(in, off, p.bias);
    off += 4 * p.bias.size();
  }
  return off - pos;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [id, p] : ck.params) {
    const auto& label = ck.spec.nodes.at(static_cast<std::size_t>(id)).label;
    const Shape s = p.weights.shape();
    tensors.push_back({{"layer", id}, {"label", label}, {"part", "weights"},
                       {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}, {"bytes", 4 * s.size()}});
    offset += 4 * s.size();
    tensors.push_back({{"layer", id}, {"label", label}, {"part", "bias"},
                       {"shape", {p.bias.size()}}, {"offset", offset}, {"bytes", 4 * p.bias.size()}});
    offset += 4 * p.bias.size();
  }
  nlohmann::json layer_order = nlohmann::json::array();
  for (const auto& [id, p] : ck.params) layer_order.push_back(id);
  const nlohmann::json header{{"network", ck.spec},
                              {"config", ck.config},
                              {"history", ck.history},
                              {"layer_order", layer_order},
                              {"tensors", tensors},
                              {"param_blob_bytes", offset},
                              {"adam", {{"t", ck.adam.t}, {"moment_blob_bytes", 2 * offset}}}};
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, text.size());
  out += text;
  detail::put_paramset(out, ck.params);
  detail::put_paramset(out, ck.adam.m);
  detail::put_paramset(out, ck.adam.v);
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  using Code = CheckpointError::Code;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError(Code::bad_magic, "bad magic: not a FLYN checkpoint");
  if (bytes.size() < 16) throw CheckpointError(Code::truncated_header, "truncated header: file ends inside the preamble");
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 4, 4));
  if (version != kCheckpointVersion)
    throw CheckpointError(Code::version_mismatch, "version mismatch: file has version " + std::to_string(version) +
                                                      ", reader supports " + std::to_string(kCheckpointVersion));
  const std::uint64_t header_len = detail::get_le(bytes, 8, 8);
  if (header_len > bytes.size() - 16)
    throw CheckpointError(Code::truncated_header, "truncated header: declared " + std::to_string(header_len) +
                                                      " bytes, " + std::to_string(bytes.size() - 16) + " available");
  nlohmann::json header;
  Checkpoint ck;
  std::size_t param_bytes = 0;
  std::size_t moment_bytes = 0;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(header_len));
    ck.spec = header.at("network").get<NetworkSpec>();
    ck.config = header.at("config").get<TrainConfig>();
    ck.history = header.at("history").get<TrainHistory>();
    ck.adam.t = header.at("adam").at("t").get<std::uint64_t>();
    param_bytes = header.at("param_blob_bytes").get<std::size_t>();
    moment_bytes = header.at("adam").at("moment_blob_bytes").get<std::size_t>();
  } catch (const std::exception& e) {
    throw CheckpointError(Code::malformed_header, std::string("malformed header: ") + e.what());
  }
  if (ck.spec != make_spec(ck.spec.arch, ck.spec.input_size, ck.spec.base_width))
    throw CheckpointError(Code::malformed_header, "malformed header: network graph does not match its architecture");

  // Shapes come from the architecture; the header's tensor table must agree.
  for (int id : ck.spec.param_layers()) {
    const auto& spec = ck.spec.nodes[static_cast<std::size_t>(id)].spec;
    ck.params.emplace(id, LayerParams<float>{Tensor4<float>(spec.weight_shape()),
                                             std::vector<float>(spec.out_channels, 0.0f)});
  }
  std::size_t expected = 0;
  for (const auto& [id, p] : ck.params) expected += 4 * (p.weights.size() + p.bias.size());
  const auto& table = header.at("tensors");
  std::size_t offset = 0;
  bool table_ok = table.is_array() && table.size() == 2 * ck.params.size();
  if (table_ok) {
    std::size_t row = 0;
    for (const auto& [id, p] : ck.params) {
      for (std::size_t part = 0; part < 2 && table_ok; ++part, ++row) {
        const auto& t = table[row];
        const std::size_t n = part == 0 ? p.weights.size() : p.bias.size();
        table_ok = t.value("layer", -1) == id && t.value("offset", std::size_t{0}) == offset &&
                   t.value("bytes", std::size_t{0}) == 4 * n;
        offset += 4 * n;
      }
    }
  }
  if (!table_ok || param_bytes != expected || moment_bytes != 2 * expected)
    throw CheckpointError(Code::length_mismatch, "header/blob length disagreement: architecture needs " +
                                                     std::to_string(expected) + " parameter bytes, header declares " +
                                                     std::to_string(param_bytes));
  const std::size_t blob_start = 16 + header_len;
  const std::size_t available = bytes.size() - blob_start;
  if (available < 3 * expected)
    throw CheckpointError(Code::truncated_blob, "truncated parameter blob: expected " + std::to_string(3 * expected) +
                                                    " bytes, found " + std::to_string(available));
  if (available > 3 * expected)
    throw CheckpointError(Code::length_mismatch, "header/blob length disagreement: " +
                                                     std::to_string(available - 3 * expected) + " trailing bytes");
  ck.adam.m = zeros_like(ck.params);
  ck.adam.v = zeros_like(ck.params);
  std::size_t pos = blob_start;
  pos += detail::get_paramset(bytes, pos, ck.params);
  pos += detail::get_paramset(bytes, pos, ck.adam.m);
  detail::get_paramset(bytes, pos, ck.adam.v);
  return ck;
}

// Written to a sibling temporary and renamed into place.
inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ck);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Code::io, tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Code::io, tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointError::Code::io, path.string() + ": rename failed: " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Code::io, path.string() + ": cannot open");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace flynet
