#include "embmark/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "embmark/crypto.hpp"
#include "embmark/error.hpp"
#include "embmark/kernels.hpp"
#include "embmark/rng.hpp"

namespace embmark {

namespace {

// Flat parameter views in a fixed order: embeddings, head_w, head_b, context_w.
std::vector<std::span<float>> parameter_blocks(ToyModel& m) {
  return {m.embeddings.data(), m.head_w, m.head_b, m.context_w};
}

std::vector<std::span<const float>> parameter_blocks(const ToyModel& m) {
  return {m.embeddings.data(), m.head_w, m.head_b, m.context_w};
}

void quantize_block(std::span<float> values, int qmax) {
  const double scale = static_cast<double>(kernels::parallel::max_abs(values)) / qmax;
  kernels::parallel::quantize(values, scale, qmax, values);
}

}  // namespace

ToyModel prune_global(const ToyModel& model, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(Errc::InvalidArgument, "prune rate must be in [0, 1)");
  ToyModel out = model;
  auto blocks = parameter_blocks(out);
  std::vector<float*> flat;
  for (auto b : blocks)
    for (float& x : b) flat.push_back(&x);
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(flat.size())));
  if (k == 0) return out;

  std::vector<std::uint32_t> order(flat.size());
  std::iota(order.begin(), order.end(), 0u);
  auto less = [&](std::uint32_t a, std::uint32_t b) {
    const float fa = std::fabs(*flat[a]);
    const float fb = std::fabs(*flat[b]);
    return fa < fb || (fa == fb && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), less);
  for (std::size_t i = 0; i < k; ++i) *flat[order[i]] = 0.0f;
  return out;
}

ToyModel quantize(const ToyModel& model, int bits, bool per_row) {
  if (bits != 8 && bits != 4) throw Error(Errc::InvalidArgument, "quantization bits must be 8 or 4");
  const int qmax = (1 << (bits - 1)) - 1;
  ToyModel out = model;
  if (per_row) {
    for (std::size_t r = 0; r < out.embeddings.rows(); ++r) quantize_block(out.embeddings.row(r), qmax);
  } else {
    quantize_block(out.embeddings.data(), qmax);
  }
  quantize_block(out.head_w, qmax);
  quantize_block(out.head_b, qmax);
  quantize_block(out.context_w, qmax);
  return out;
}

ToyModel fuse(const ToyModel& model_w, const ToyModel& model_ref, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidArgument, "fuse alpha must be in [0, 1]");
  if (!(model_w.embeddings.vocab() == model_ref.embeddings.vocab())) {
    throw Error(Errc::VocabMismatch, "fused models have different vocabularies");
  }
  if (model_w.dim() != model_ref.dim() || model_w.head_w.size() != model_ref.head_w.size() ||
      model_w.head_b.size() != model_ref.head_b.size() || model_w.context_w.size() != model_ref.context_w.size()) {
    throw Error(Errc::ShapeMismatch, "fused models have different parameter shapes");
  }
  if (alpha == 1.0) return model_w;
  if (alpha == 0.0) {
    ToyModel out = model_ref;
    out.labels = model_w.labels;
    return out;
  }
  ToyModel out = model_w;
  auto dst = parameter_blocks(out);
  const auto a = parameter_blocks(model_w);
  const auto b = parameter_blocks(model_ref);
  for (std::size_t i = 0; i < dst.size(); ++i) kernels::parallel::blend(a[i], b[i], alpha, dst[i]);
  return out;
}

ToyModel linear_transform_embeddings(const ToyModel& model, double scale, double shift) {
  if (scale == 0.0) throw Error(Errc::ZeroScale, "linear transform scale must be non-zero");
  if (!std::isfinite(scale) || !std::isfinite(shift)) throw Error(Errc::InvalidArgument, "non-finite transform");
  ToyModel out = model;
  kernels::parallel::affine(out.embeddings.data(), scale, shift);
  return out;
}

ToyModel linear_transform_embeddings(const ToyModel& model, const std::vector<double>& matrix,
                                     const std::vector<double>& shift) {
  const std::size_t d = model.dim();
  if (matrix.size() != d * d || shift.size() != d) {
    throw Error(Errc::ShapeMismatch, "transform must be d x d with a length-d shift");
  }
  ToyModel out = model;
  std::vector<double> tmp(d);
  for (std::size_t r = 0; r < out.embeddings.rows(); ++r) {
    auto row = out.embeddings.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = shift[i];
      for (std::size_t j = 0; j < d; ++j) acc += matrix[i * d + j] * static_cast<double>(row[j]);
      tmp[i] = acc;
    }
    for (std::size_t i = 0; i < d; ++i) {
      row[i] = static_cast<float>(tmp[i]);
      if (!std::isfinite(row[i])) throw Error(Errc::NonFiniteValue, "transform produced a non-finite value");
    }
  }
  return out;
}

ToyModel reinit_embeddings(const ToyModel& model, std::uint64_t seed) {
  ToyModel out = model;
  auto data = out.embeddings.data();
  const CounterRng rng(seed);
  const auto n = static_cast<std::int64_t>(data.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t k = 0; k < n; ++k) {
    data[static_cast<std::size_t>(k)] = static_cast<float>(kReinitStddev * rng.normal_at(static_cast<std::uint64_t>(k)));
  }
  return out;
}

TokenList rewrite_outputs(const TokenList& tokens, const SynonymTable& table, std::uint64_t seed, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidArgument, "rewrite probability must be in [0, 1]");
  const CounterRng rng(seed);
  TokenList out = tokens;
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto it = table.find(out[k]);
    if (it == table.end() || it->second.empty()) continue;
    if (rng.uniform_at(2 * k) >= p) continue;
    const auto& choices = it->second;
    auto pick = static_cast<std::size_t>(rng.uniform_at(2 * k + 1) * static_cast<double>(choices.size()));
    out[k] = choices[std::min(pick, choices.size() - 1)];
  }
  return out;
}

SynonymTable load_synonym_table(const std::filesystem::path& path) {
  SynonymTable table;
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    for (const auto& [key, value] : j.items()) {
      auto list = value.get<std::vector<std::string>>();
      if (list.empty()) throw Error(Errc::FormatError, path.string() + ": empty synonym list for '" + key + "'");
      table.emplace(key, std::move(list));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, path.string() + ": " + e.what());
  }
  return table;
}

std::string_view attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::Prune: return "prune";
    case AttackKind::Quantize: return "quantize";
    case AttackKind::Fuse: return "fuse";
    case AttackKind::LinearTransform: return "linear_transform";
    case AttackKind::Reinit: return "reinit";
    case AttackKind::Rewrite: return "rewrite";
  }
  return "prune";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (auto k : {AttackKind::Prune, AttackKind::Quantize, AttackKind::Fuse, AttackKind::LinearTransform,
                 AttackKind::Reinit, AttackKind::Rewrite}) {
    if (attack_kind_name(k) == name) return k;
  }
  throw Error(Errc::InvalidArgument, "unknown attack kind '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  switch (kind) {
    case AttackKind::Prune:
      if (!(prune_rate >= 0.0 && prune_rate < 1.0)) throw Error(Errc::InvalidArgument, "prune_rate must be in [0, 1)");
      break;
    case AttackKind::Quantize:
      if (bits != 8 && bits != 4) throw Error(Errc::InvalidArgument, "bits must be 8 or 4");
      break;
    case AttackKind::Fuse:
      if (!(fuse_alpha >= 0.0 && fuse_alpha <= 1.0)) throw Error(Errc::InvalidArgument, "fuse_alpha must be in [0, 1]");
      if (!fuse_reference) throw Error(Errc::InvalidArgument, "fuse needs a reference bundle");
      break;
    case AttackKind::LinearTransform:
      if (!transform_matrix && scale == 0.0) throw Error(Errc::ZeroScale, "linear transform scale must be non-zero");
      break;
    case AttackKind::Reinit:
      break;
    case AttackKind::Rewrite:
      if (!synonym_table) throw Error(Errc::InvalidArgument, "rewrite needs a synonym table");
      if (!(rewrite_p >= 0.0 && rewrite_p <= 1.0)) throw Error(Errc::InvalidArgument, "rewrite_p must be in [0, 1]");
      break;
  }
}

nlohmann::json AttackConfig::to_json() const {
  nlohmann::json j{{"kind", attack_kind_name(kind)}};
  switch (kind) {
    case AttackKind::Prune: j["prune_rate"] = prune_rate; break;
    case AttackKind::Quantize:
      j["bits"] = bits;
      j["per_row"] = per_row;
      break;
    case AttackKind::Fuse:
      j["fuse_alpha"] = fuse_alpha;
      if (fuse_reference) j["fuse_reference"] = fuse_reference->string();
      break;
    case AttackKind::LinearTransform:
      if (transform_matrix) {
        j["transform_matrix"] = transform_matrix->string();
      } else {
        j["scale"] = scale;
        j["shift"] = shift;
      }
      break;
    case AttackKind::Reinit:
      j["seed"] = seed;
      j["stddev"] = kReinitStddev;
      break;
    case AttackKind::Rewrite:
      j["seed"] = seed;
      j["rewrite_p"] = rewrite_p;
      if (synonym_table) j["synonym_table"] = synonym_table->string();
      break;
  }
  return j;
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) {
  AttackConfig c;
  try {
    c.kind = parse_attack_kind(j.at("kind").get<std::string>());
    c.prune_rate = j.value("prune_rate", c.prune_rate);
    c.bits = j.value("bits", c.bits);
    c.per_row = j.value("per_row", c.per_row);
    c.fuse_alpha = j.value("fuse_alpha", c.fuse_alpha);
    if (j.contains("fuse_reference")) c.fuse_reference = j.at("fuse_reference").get<std::string>();
    c.scale = j.value("scale", c.scale);
    c.shift = j.value("shift", c.shift);
    if (j.contains("transform_matrix")) c.transform_matrix = j.at("transform_matrix").get<std::string>();
    c.seed = j.value("seed", c.seed);
    if (j.contains("synonym_table")) c.synonym_table = j.at("synonym_table").get<std::string>();
    c.rewrite_p = j.value("rewrite_p", c.rewrite_p);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad attack config: ") + e.what());
  }
  c.validate();
  return c;
}

ToyModel apply_attack(const ToyModel& model, const AttackConfig& config) {
  config.validate();
  switch (config.kind) {
    case AttackKind::Prune: return prune_global(model, config.prune_rate);
    case AttackKind::Quantize: return quantize(model, config.bits, config.per_row);
    case AttackKind::Fuse: return fuse(model, load_bundle(*config.fuse_reference), config.fuse_alpha);
    case AttackKind::LinearTransform:
      if (config.transform_matrix) {
        const auto j = nlohmann::json::parse(read_text_file(*config.transform_matrix));
        return linear_transform_embeddings(model, j.at("matrix").get<std::vector<double>>(),
                                           j.at("shift").get<std::vector<double>>());
      }
      return linear_transform_embeddings(model, config.scale, config.shift);
    case AttackKind::Reinit: return reinit_embeddings(model, config.seed);
    case AttackKind::Rewrite: return model;
  }
  return model;
}

nlohmann::json attack_bundle(const std::filesystem::path& in, const std::filesystem::path& out,
                             const AttackConfig& config) {
  config.validate();
  const ToyModel model = load_bundle(in);
  nlohmann::json log = nlohmann::json::array();
  if (std::filesystem::exists(in / "attack_log.json")) {
    try {
      log = nlohmann::json::parse(read_text_file(in / "attack_log.json"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BundleLoadError, (in / "attack_log.json").string() + ": " + e.what());
    }
  }
  const std::string input_hash = bundle_sha256(in);
  save_bundle(apply_attack(model, config), out);

  nlohmann::json entry{{"kind", attack_kind_name(config.kind)},
                       {"params", config.to_json()},
                       {"input_sha256", input_hash},
                       {"output_sha256", bundle_sha256(out)}};
  log.push_back(entry);
  write_text_file(out / "attack_log.json", log.dump(2) + "\n");
  return entry;
}

}  // namespace embmark
