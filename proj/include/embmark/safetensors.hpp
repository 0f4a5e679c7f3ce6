#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace embmark {

// F32 tensor in row-major order.
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t numel() const;
};

// safetensors container: 8-byte little-endian header length N, N bytes of
// UTF-8 JSON header (space padded to a multiple of 8), then the raw
// little-endian payload. Only F32 tensors are supported. Tensors are written
// in the given order with contiguous data_offsets.
std::string encode_safetensors(const std::vector<Tensor>& tensors);
std::vector<Tensor> decode_safetensors(std::string_view bytes);

void write_safetensors(const std::filesystem::path& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_safetensors(const std::filesystem::path& path);

}  // namespace embmark
