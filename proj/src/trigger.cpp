#include "embmark/trigger.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "embmark/error.hpp"
#include "embmark/rng.hpp"

namespace embmark {

namespace {

constexpr std::string_view kManifestFormat = "embmark-watermark-manifest/1";
constexpr std::string_view kSignatureScheme = "RSASSA-PKCS1-v1_5/SHA-256";

void append_decimal(Bytes& out, std::uint64_t value) {
  const std::string s = std::to_string(value);
  out.insert(out.end(), s.begin(), s.end());
}

struct ParsedMessage {
  std::string owner;
  std::uint64_t i = 0;
  std::uint64_t counter = 0;
};

std::optional<std::uint64_t> parse_decimal(std::string_view s) {
  if (s.empty() || (s.size() > 1 && s[0] == '0')) return std::nullopt;
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<ParsedMessage> parse_message(const Bytes& msg) {
  const std::string_view text(reinterpret_cast<const char*>(msg.data()), msg.size());
  const auto last = text.rfind(static_cast<char>(kMessageSeparator));
  if (last == std::string_view::npos || last == 0) return std::nullopt;
  const auto mid = text.rfind(static_cast<char>(kMessageSeparator), last - 1);
  if (mid == std::string_view::npos) return std::nullopt;
  auto i = parse_decimal(text.substr(mid + 1, last - mid - 1));
  auto counter = parse_decimal(text.substr(last + 1));
  if (!i || !counter) return std::nullopt;
  return ParsedMessage{std::string(text.substr(0, mid)), *i, *counter};
}

std::string field(const DerivationRecord& r, std::string_view what) {
  return std::string(what) + " at i=" + std::to_string(r.i);
}

}  // namespace

Bytes derivation_message(std::string_view owner, std::uint32_t i, std::uint64_t collision_counter) {
  Bytes out(owner.begin(), owner.end());
  out.push_back(kMessageSeparator);
  append_decimal(out, i);
  out.push_back(kMessageSeparator);
  append_decimal(out, collision_counter);
  return out;
}

std::uint64_t digest_mod(const Digest& digest, std::uint64_t modulus) {
  unsigned __int128 r = 0;
  for (auto b : digest) r = ((r << 8) | b) % modulus;
  return static_cast<std::uint64_t>(r);
}

TriggerSet derive_trigger_set(const OwnerIdentity& identity, const CandidateSet& candidates,
                              std::size_t n) {
  const std::size_t m = candidates.tokens.size();
  if (n == 0) throw Error(Errc::InvalidArgument, "trigger count n must be at least 1");
  if (identity.owner.empty()) throw Error(Errc::InvalidArgument, "owner identity string is empty");
  if (m < n) {
    throw Error(Errc::InvalidArgument, "candidate set has " + std::to_string(m) +
                                           " tokens but n = " + std::to_string(n));
  }
  TriggerSet out;
  std::set<std::uint64_t> taken;
  for (std::uint32_t i = 1; i <= n; ++i) {
    bool placed = false;
    for (std::uint64_t counter = 0; counter < m; ++counter) {
      DerivationRecord rec;
      rec.i = i;
      rec.collision_counter = counter;
      rec.message = derivation_message(identity.owner, i, counter);
      rec.signature = identity.private_key.sign(rec.message);
      rec.digest = sha256(rec.signature);
      rec.index = digest_mod(rec.digest, m);
      if (taken.contains(rec.index)) continue;
      taken.insert(rec.index);
      rec.token = candidates.tokens[rec.index];
      out.tokens.push_back(rec.token);
      out.records.push_back(std::move(rec));
      placed = true;
      break;
    }
    if (!placed) {
      throw Error(Errc::CandidateExhaustion, "could not find a fresh index for trigger " +
                                                 std::to_string(i) + " after " + std::to_string(m) +
                                                 " attempts");
    }
  }
  return out;
}

AuditResult audit_derivation(const RsaPublicKey& public_key,
                             const std::vector<DerivationRecord>& records,
                             const CandidateSet& candidates, std::string_view owner) {
  AuditResult result;
  auto fail = [&](std::string reason) {
    result.ok = false;
    result.reasons.push_back(std::move(reason));
  };
  const std::size_t m = candidates.tokens.size();
  if (records.empty()) fail("no derivation records");
  if (m == 0) fail("empty candidate set");
  std::set<std::uint64_t> indices;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (r.i != k + 1) fail(field(r, "ordinal out of sequence"));
    const auto parsed = parse_message(r.message);
    if (!parsed) {
      fail(field(r, "malformed message"));
    } else {
      if (parsed->i != r.i || parsed->counter != r.collision_counter) {
        fail(field(r, "message does not match ordinal/counter"));
      }
      if (!owner.empty() && parsed->owner != owner) fail(field(r, "owner mismatch"));
    }
    if (!public_key.verify(r.message, r.signature)) fail(field(r, "signature invalid"));
    if (sha256(r.signature) != r.digest) fail(field(r, "digest mismatch"));
    if (m == 0) continue;
    const auto index = digest_mod(r.digest, m);
    if (index != r.index) fail(field(r, "index mismatch"));
    if (r.index >= m || candidates.tokens[r.index] != r.token || candidates.tokens[index] != r.token) {
      fail(field(r, "token mismatch"));
    }
    if (!indices.insert(r.index).second) fail(field(r, "duplicate index"));
  }
  return result;
}

MappingSet build_mapping(const TriggerSet& triggers, const ReplacementSet& replacements,
                         std::uint64_t pairing_seed) {
  const std::size_t n = triggers.tokens.size();
  if (n != replacements.tokens.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(n) + " triggers vs " +
                                          std::to_string(replacements.tokens.size()) + " replacements");
  }
  std::set<std::string> seen;
  for (const auto& t : triggers.tokens) seen.insert(t);
  for (const auto& r : replacements.tokens) {
    if (!seen.insert(r).second) {
      throw Error(Errc::InvalidArgument, "token '" + r + "' appears more than once in the mapping");
    }
  }
  TokenList shuffled = replacements.tokens;
  CounterRng rng(pairing_seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(shuffled[i - 1], shuffled[j]);
  }
  MappingSet out;
  out.pairing_seed = pairing_seed;
  for (std::size_t i = 0; i < n; ++i) out.pairs.push_back({triggers.tokens[i], shuffled[i]});
  return out;
}

nlohmann::ordered_json WatermarkManifest::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = kManifestFormat;
  j["owner"] = owner;
  j["signature_scheme"] = kSignatureScheme;
  j["message_layout"] = "owner 0x1F decimal(i) 0x1F decimal(collision_counter)";
  j["public_key_pem"] = public_key_pem;
  j["candidates"] = {{"band", candidates.band.to_json()},
                     {"count", candidates.tokens.size()},
                     {"tokens", candidates.tokens}};
  auto recs = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    recs.push_back({{"i", r.i},
                    {"collision_counter", r.collision_counter},
                    {"message", base64_encode(r.message)},
                    {"signature", base64_encode(r.signature)},
                    {"digest", base64_encode(r.digest)},
                    {"index", r.index},
                    {"token", r.token}});
  }
  j["records"] = recs;
  j["replacements"] = replacements.tokens;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : mapping.pairs) pairs.push_back({{"trigger", p.trigger}, {"replacement", p.replacement}});
  j["mapping"] = {{"pairing_seed", mapping.pairing_seed}, {"pairs", pairs}};
  return j;
}

WatermarkManifest WatermarkManifest::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kManifestFormat) {
      throw Error(Errc::FormatError, "unknown manifest format");
    }
    WatermarkManifest m;
    m.owner = j.at("owner").get<std::string>();
    m.public_key_pem = j.at("public_key_pem").get<std::string>();
    const auto& c = j.at("candidates");
    m.candidates.band = FrequencyBand::from_json(c.at("band"));
    m.candidates.tokens = c.at("tokens").get<TokenList>();
    if (c.at("count").get<std::size_t>() != m.candidates.tokens.size()) {
      throw Error(Errc::FormatError, "candidate count does not match token list");
    }
    for (const auto& r : j.at("records")) {
      DerivationRecord rec;
      rec.i = r.at("i").get<std::uint32_t>();
      rec.collision_counter = r.at("collision_counter").get<std::uint64_t>();
      rec.message = base64_decode(r.at("message").get<std::string>());
      rec.signature = base64_decode(r.at("signature").get<std::string>());
      const Bytes digest = base64_decode(r.at("digest").get<std::string>());
      if (digest.size() != rec.digest.size()) throw Error(Errc::FormatError, "digest must be 32 bytes");
      std::copy(digest.begin(), digest.end(), rec.digest.begin());
      rec.index = r.at("index").get<std::uint64_t>();
      rec.token = r.at("token").get<std::string>();
      m.records.push_back(std::move(rec));
    }
    m.replacements.tokens = j.at("replacements").get<TokenList>();
    const auto& map = j.at("mapping");
    m.mapping.pairing_seed = map.at("pairing_seed").get<std::uint64_t>();
    for (const auto& p : map.at("pairs")) {
      m.mapping.pairs.push_back({p.at("trigger").get<std::string>(), p.at("replacement").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, std::string("malformed watermark manifest: ") + e.what());
  }
}

WatermarkManifest WatermarkManifest::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::FormatError, path.string() + ": " + e.what());
  }
}

void WatermarkManifest::save(const std::filesystem::path& path) const {
  write_text_file(path, to_json().dump(2) + "\n");
}

}  // namespace embmark
