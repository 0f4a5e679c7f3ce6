#include "embmark/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <functional>
#include <numeric>

#include "embmark/crypto.hpp"
#include "embmark/error.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

namespace embmark {

std::size_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string encode_safetensors(const std::vector<Tensor>& tensors) {
  nlohmann::ordered_json header = nlohmann::ordered_json::object();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    if (t.numel() != t.data.size()) {
      throw Error(Errc::ShapeMismatch, "tensor '" + t.name + "' shape does not match its data");
    }
    const std::size_t bytes = 4 * t.data.size();
    header[t.name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string json = header.dump();
  json.append((8 - json.size() % 8) % 8, ' ');

  std::string out(8, '\0');
  const std::uint64_t n = json.size();
  std::memcpy(out.data(), &n, 8);
  out += json;
  const std::size_t data_start = out.size();
  out.resize(data_start + offset);
  std::size_t pos = data_start;
  for (const auto& t : tensors) {
    std::memcpy(out.data() + pos, t.data.data(), 4 * t.data.size());
    pos += 4 * t.data.size();
  }
  return out;
}

std::vector<Tensor> decode_safetensors(std::string_view bytes) {
  if (bytes.size() < 8) throw Error(Errc::FormatError, "file shorter than the 8-byte header length");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  if (n > bytes.size() - 8) throw Error(Errc::FormatError, "header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, n));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::FormatError, std::string("bad header JSON: ") + e.what());
  }
  if (!header.is_object()) throw Error(Errc::FormatError, "header is not a JSON object");

  const std::string_view payload = bytes.substr(8 + n);
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t begin, end;
  };
  std::vector<Entry> entries;
  try {
    for (const auto& [name, info] : header.items()) {
      if (name == "__metadata__") continue;
      if (info.at("dtype").get<std::string>() != "F32") {
        throw Error(Errc::FormatError, "tensor '" + name + "' has unsupported dtype " +
                                           info.at("dtype").get<std::string>());
      }
      const auto offsets = info.at("data_offsets").get<std::vector<std::size_t>>();
      if (offsets.size() != 2 || offsets[0] > offsets[1]) {
        throw Error(Errc::FormatError, "tensor '" + name + "' has invalid data_offsets");
      }
      entries.push_back({name, info.at("shape").get<std::vector<std::size_t>>(), offsets[0], offsets[1]});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, std::string("bad tensor entry: ") + e.what());
  }
  // Payload order is defined by the offsets, not by header key order.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.begin < b.begin; });

  std::vector<Tensor> out;
  std::size_t expected = 0;
  for (const auto& e : entries) {
    Tensor t{e.name, e.shape, {}};
    const std::size_t count = t.numel();
    if (e.begin != expected || e.end - e.begin != 4 * count) {
      throw Error(Errc::FormatError, "tensor '" + e.name + "' data_offsets do not match its shape");
    }
    if (e.end > payload.size()) throw Error(Errc::FormatError, "payload truncated in tensor '" + e.name + "'");
    t.data.resize(count);
    std::memcpy(t.data.data(), payload.data() + e.begin, 4 * count);
    expected = e.end;
    out.push_back(std::move(t));
  }
  if (expected != payload.size()) throw Error(Errc::FormatError, "trailing bytes after tensor payload");
  return out;
}

void write_safetensors(const std::filesystem::path& path, const std::vector<Tensor>& tensors) {
  write_text_file(path, encode_safetensors(tensors));
}

std::vector<Tensor> read_safetensors(const std::filesystem::path& path) {
  return decode_safetensors(read_text_file(path));
}

}  // namespace embmark
