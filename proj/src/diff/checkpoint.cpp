#include "explore/diff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <json.hpp>

namespace explore::diff {
namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("checkpoint: " + msg); }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params) {
  nlohmann::json header;
  header["format"] = "explore-params";
  header["version"] = 1;
  header["tensors"] = nlohmann::json::array();
  for (auto* p : params.items()) {
    header["tensors"].push_back({{"name", p->name()}, {"shape", {p->rows(), p->cols()}}});
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + 8 * params.scalar_count());
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (auto* p : params.items()) {
    for (double v : p->value) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

void decode_checkpoint(const std::vector<std::uint8_t>& bytes, const ParameterSet& params) {
  if (bytes.size() < 8) fail("truncated header length");
  const std::uint64_t hlen = get_u64(bytes.data());
  if (hlen > bytes.size() - 8) fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  if (header.value("format", "") != "explore-params") fail("unknown format");
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) fail("tensor count mismatch");
  std::size_t total = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = params[k];
    const auto& t = tensors[k];
    if (t.at("name").get<std::string>() != p.name()) fail("name mismatch at tensor " + std::to_string(k));
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p.rows() || shape[1] != p.cols()) fail("shape mismatch for " + p.name());
    total += p.size();
  }
  const std::size_t payload = 8 + hlen;
  if (bytes.size() != payload + 8 * total) fail("payload size mismatch");
  const std::uint8_t* cur = bytes.data() + payload;
  for (auto* p : params.items()) {
    for (double& v : p->value) {
      v = std::bit_cast<double>(get_u64(cur));
      cur += 8;
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail("write failed: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  decode_checkpoint(bytes, params);
}

}  // namespace explore::diff
