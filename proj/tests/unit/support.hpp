#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "embmark/crypto.hpp"
#include "embmark/model.hpp"
#include "embmark/rng.hpp"
#include "embmark/trigger.hpp"

namespace embmark::test {

inline std::filesystem::path data_dir() { return EMBMARK_TEST_DATA; }

inline std::filesystem::path cli_path() { return EMBMARK_CLI; }

// Fresh per-process scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("embmark_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline OwnerIdentity owner_identity(int k, std::string owner = "acme-med") {
  const auto pem = read_text_file(data_dir() / "keys" / ("owner" + std::to_string(k) + ".pem"));
  return OwnerIdentity{std::move(owner), RsaPrivateKey::from_pem(pem)};
}

inline std::vector<std::string> words(std::size_t n, const std::string& prefix = "w") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline EmbeddingMatrix random_matrix(std::vector<std::string> tokens, std::size_t d, std::uint64_t seed,
                                     double sd = 1.0) {
  Vocab vocab = Vocab::with_reserved(std::move(tokens));
  const CounterRng rng(seed);
  std::vector<float> data(vocab.size() * d);
  for (std::size_t k = 0; k < data.size(); ++k) data[k] = static_cast<float>(sd * rng.normal_at(k));
  return EmbeddingMatrix(std::move(vocab), d, std::move(data));
}

inline ToyModel random_model(std::size_t n_words, std::size_t d, std::size_t classes, std::uint64_t seed,
                             bool generator = true) {
  ToyModel m;
  m.embeddings = random_matrix(words(n_words), d, seed);
  const CounterRng rng(seed, 1);
  for (std::size_t c = 0; c < classes; ++c) m.labels.push_back("c" + std::to_string(c));
  m.head_w.resize(classes * d);
  for (std::size_t k = 0; k < m.head_w.size(); ++k) m.head_w[k] = static_cast<float>(rng.normal_at(k));
  m.head_b.assign(classes, 0.0f);
  for (std::size_t c = 0; c < classes; ++c) m.head_b[c] = static_cast<float>(0.1 * rng.normal_at(10'000 + c));
  if (generator) {
    m.context_w.resize(d * d);
    for (std::size_t k = 0; k < m.context_w.size(); ++k)
      m.context_w[k] = static_cast<float>((k / d == k % d ? 1.0 : 0.0) + 0.3 * rng.normal_at(20'000 + k));
  }
  return m;
}

inline int run_cli(const std::string& args) {
  const std::string cmd = "\"" + cli_path().string() + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace embmark::test
