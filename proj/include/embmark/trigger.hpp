#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "embmark/corpus.hpp"
#include "embmark/crypto.hpp"
#include "json.hpp"

namespace embmark {

struct OwnerIdentity {
  std::string owner;  // identity string s
  RsaPrivateKey private_key;
};

// Field separator between message parts.
inline constexpr std::uint8_t kMessageSeparator = 0x1F;

// UTF-8(owner) 0x1F decimal(i) 0x1F decimal(collision_counter)
Bytes derivation_message(std::string_view owner, std::uint32_t i, std::uint64_t collision_counter);

// Big-endian unsigned value of the digest modulo `modulus`.
std::uint64_t digest_mod(const Digest& digest, std::uint64_t modulus);

struct DerivationRecord {
  std::uint32_t i = 0;  // 1-based trigger ordinal
  std::uint64_t collision_counter = 0;
  Bytes message;
  Bytes signature;
  Digest digest{};
  std::uint64_t index = 0;
  std::string token;

  bool operator==(const DerivationRecord&) const = default;
};

struct TriggerSet {
  TokenList tokens;
  std::vector<DerivationRecord> records;
};

// Sign -> SHA-256 -> mod |candidates| for i = 1..n, bumping a per-i counter on
// index collisions. Throws InvalidArgument when n is 0 or exceeds the
// candidate count, CandidateExhaustion after |candidates| failed attempts.
TriggerSet derive_trigger_set(const OwnerIdentity& identity, const CandidateSet& candidates,
                              std::size_t n);

struct AuditResult {
  bool ok = true;
  std::vector<std::string> reasons;
};

// Re-checks every record with the public key only. When `owner` is non-empty
// each message must also name that owner.
AuditResult audit_derivation(const RsaPublicKey& public_key,
                             const std::vector<DerivationRecord>& records,
                             const CandidateSet& candidates, std::string_view owner = {});

struct TokenPair {
  std::string trigger;
  std::string replacement;

  bool operator==(const TokenPair&) const = default;
};

struct MappingSet {
  std::vector<TokenPair> pairs;
  std::uint64_t pairing_seed = 0;

  std::size_t size() const { return pairs.size(); }
  bool operator==(const MappingSet&) const = default;
};

// Fisher-Yates shuffle of the replacements under CounterRng(pairing_seed),
// zipped with the triggers in order. Throws LengthMismatch.
MappingSet build_mapping(const TriggerSet& triggers, const ReplacementSet& replacements,
                         std::uint64_t pairing_seed);

// The unit exchanged with a verifier: everything needed to re-audit the
// derivation with the public key and to run verification.
struct WatermarkManifest {
  std::string owner;
  std::string public_key_pem;
  CandidateSet candidates;
  std::vector<DerivationRecord> records;
  ReplacementSet replacements;
  MappingSet mapping;

  nlohmann::ordered_json to_json() const;
  static WatermarkManifest from_json(const nlohmann::json& j);
  static WatermarkManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace embmark
