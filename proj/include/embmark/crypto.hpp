#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace embmark {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);
std::string to_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

class RsaPublicKey {
 public:
  static RsaPublicKey from_pem(std::string_view pem);
  std::string to_pem() const;
  // RSASSA-PKCS1-v1_5 over SHA-256.
  bool verify(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signature) const;
  int bits() const;

 private:
  friend class RsaPrivateKey;
  std::shared_ptr<void> key_;  // EVP_PKEY
};

class RsaPrivateKey {
 public:
  // bits must be 2048, 3072 or 4096 (UnsupportedKeySize otherwise).
  static RsaPrivateKey generate(int bits);
  static RsaPrivateKey from_pem(std::string_view pem);
  std::string to_pem() const;
  RsaPublicKey public_key() const;
  // Deterministic RSASSA-PKCS1-v1_5 signature over SHA-256.
  Bytes sign(std::span<const std::uint8_t> message) const;
  int bits() const;

 private:
  std::shared_ptr<void> key_;  // EVP_PKEY
};

}  // namespace embmark
