#include <chrono>
#include <cmath>
#include <functional>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "embmark/attacks.hpp"
#include "embmark/corpus.hpp"
#include "embmark/crypto.hpp"
#include "embmark/embedding.hpp"
#include "embmark/error.hpp"
#include "embmark/harness.hpp"
#include "embmark/model.hpp"
#include "embmark/pipeline.hpp"
#include "embmark/rng.hpp"
#include "embmark/synth.hpp"
#include "embmark/trigger.hpp"
#include "embmark/verify.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace embmark;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Settings of one command: the --config file (top level, then the section
// named after the command) with explicit flags layered on top.
class Settings {
 public:
  enum class Type { Text, Integer, Real, Flag };

  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON config file; flags override its values");
  }

  void text(const std::string& key, const std::string& help) { add(key, Type::Text, help); }
  void integer(const std::string& key, const std::string& help) { add(key, Type::Integer, help); }
  void real(const std::string& key, const std::string& help) { add(key, Type::Real, help); }
  void flag(const std::string& key, const std::string& help) {
    auto& e = entries_[key];
    e.type = Type::Flag;
    e.option = app_->add_flag("--" + flag_name(key), e.flag, help);
  }

  void resolve() {
    if (!config_path_.empty()) {
      json file;
      try {
        file = json::parse(read_text_file(config_path_));
      } catch (const json::exception& e) {
        throw Error(Errc::InvalidArgument, "config " + config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw Error(Errc::InvalidArgument, "config must be a JSON object");
      for (auto it = file.begin(); it != file.end(); ++it)
        if (!it.value().is_object() && entries_.count(it.key())) values_[it.key()] = it.value();
      const auto section = file.find(app_->get_name());
      if (section != file.end() && section->is_object()) {
        for (auto it = section->begin(); it != section->end(); ++it) {
          if (!entries_.count(it.key())) throw Error(Errc::InvalidArgument, "unknown config key: " + it.key());
          values_[it.key()] = it.value();
        }
      }
    }
    for (auto& [key, e] : entries_) {
      if (e.option->count() == 0) continue;
      switch (e.type) {
        case Type::Text: values_[key] = e.raw; break;
        case Type::Integer: values_[key] = parse_integer(key, e.raw); break;
        case Type::Real: values_[key] = parse_real(key, e.raw); break;
        case Type::Flag: values_[key] = e.flag; break;
      }
    }
  }

  bool has(const std::string& key) const { return values_.contains(key) && !values_.at(key).is_null(); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return values_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(Errc::InvalidArgument, "setting '" + key + "' has the wrong type");
    }
  }

  std::string path(const std::string& key) const {
    if (!has(key)) throw Error(Errc::InvalidArgument, "missing required setting --" + flag_name(key));
    return get<std::string>(key, "");
  }

  const json& values() const { return values_; }

 private:
  struct Entry {
    Type type = Type::Text;
    std::string raw;
    bool flag = false;
    CLI::Option* option = nullptr;
  };

  static std::string flag_name(std::string key) {
    for (auto& c : key)
      if (c == '_') c = '-';
    return key;
  }

  static json parse_integer(const std::string& key, const std::string& raw) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "--" + flag_name(key) + " expects a non-negative integer, got '" + raw + "'");
    }
  }

  static json parse_real(const std::string& key, const std::string& raw) {
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "--" + flag_name(key) + " expects a number, got '" + raw + "'");
    }
  }

  void add(const std::string& key, Type type, const std::string& help) {
    auto& e = entries_[key];
    e.type = type;
    e.option = app_->add_option("--" + flag_name(key), e.raw, help);
  }

  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, Entry> entries_;
  json values_ = json::object();
};

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Settings> settings;
  std::function<int(const Settings&)> run;
};

fs::path output_dir(const Settings& s) {
  const fs::path out = s.path("out");
  fs::create_directories(out);
  return out;
}

RunManifest start_manifest(const std::string& command, const Settings& s) {
  RunManifest m;
  m.command = command;
  m.config = s.values();
  return m;
}

void save_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

WatermarkParams watermark_params(const Settings& s) {
  WatermarkParams p;
  p.lambda = s.get("lambda", p.lambda);
  p.mu = s.get("mu", p.mu);
  p.sigma2 = s.get("sigma2", p.sigma2);
  p.noise_seed = s.get<std::uint64_t>("noise_seed", p.noise_seed);
  p.validate();
  return p;
}

void watermark_flags(Settings& s) {
  s.real("lambda", "scaling factor (default 1.5)");
  s.real("mu", "noise mean (default 0.1)");
  s.real("sigma2", "noise variance (default 0.01)");
  s.integer("noise_seed", "noise stream seed (default 0)");
}

OwnerIdentity load_identity(const Settings& s) {
  return OwnerIdentity{s.path("owner"), RsaPrivateKey::from_pem(read_text_file(s.path("key")))};
}

std::set<std::string> stopwords(const Settings& s) {
  return s.has("stopwords") ? load_word_list(s.path("stopwords")) : default_stopwords();
}

// --- keygen -----------------------------------------------------------------

void keygen_flags(Settings& s) {
  s.text("out", "output directory");
  s.integer("bits", "RSA modulus size: 2048, 3072 or 4096 (default 2048)");
  s.text("name", "file stem (default owner)");
}

int keygen(const Settings& s) {
  const auto out = output_dir(s);
  const auto bits = s.get<int>("bits", 2048);
  const auto name = s.get<std::string>("name", "owner");
  const auto key = RsaPrivateKey::generate(bits);
  auto m = start_manifest("keygen", s);
  write_text_file(out / (name + ".pem"), key.to_pem());
  fs::permissions(out / (name + ".pem"), fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
  write_text_file(out / (name + ".pub.pem"), key.public_key().to_pem());
  m.add_output(out / (name + ".pub.pem"));
  m.results = {{"bits", bits}, {"private_key", (out / (name + ".pem")).string()}};
  m.save(out);
  std::cout << "wrote " << (out / (name + ".pem")).string() << " and " << (out / (name + ".pub.pem")).string() << "\n";
  return 0;
}

// --- stats ------------------------------------------------------------------

void stats_flags(Settings& s) {
  s.text("corpus", "corpus file (one document per line) or directory of .txt files");
  s.text("out", "output directory");
  s.text("band", "optional band to list: low, rare, high or LO,HI");
}

int stats(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("stats", s);
  m.add_input(s.path("corpus"));
  const auto st = compute_stats(load_corpus(s.path("corpus")));
  save_json(out / "stats.json", st.to_json());
  m.add_output(out / "stats.json");
  m.results = {{"types", st.counts.size()}, {"tokens", st.total}};
  if (s.has("band")) {
    const auto band = FrequencyBand::parse(s.path("band"));
    const auto cand = select_band(st, band);
    json j = {{"band", band.to_json()}, {"tokens", cand.tokens}};
    save_json(out / "candidates.json", j);
    m.add_output(out / "candidates.json");
    m.results["candidates"] = cand.tokens.size();
  }
  m.save(out);
  std::cout << st.total << " tokens, " << st.counts.size() << " types\n";
  return 0;
}

// --- derive / audit ---------------------------------------------------------

void derive_flags(Settings& s) {
  s.text("corpus", "corpus file or directory (or use --stats)");
  s.text("stats", "stats.json from the stats command");
  s.text("key", "owner private key (PEM)");
  s.text("owner", "owner identity string");
  s.text("band", "frequency band: low, rare, high or LO,HI (default low)");
  s.integer("n", "number of trigger/replacement pairs (default 8)");
  s.integer("pairing_seed", "seed of the pairing shuffle (default 0)");
  s.text("stopwords", "stopword list, one per line (default built-in)");
  s.text("out", "output directory");
}

TokenStats load_stats(const Settings& s, RunManifest& m) {
  if (s.has("stats")) {
    m.add_input(s.path("stats"));
    return TokenStats::from_json(json::parse(read_text_file(s.path("stats"))));
  }
  m.add_input(s.path("corpus"));
  return compute_stats(load_corpus(s.path("corpus")));
}

int derive(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("derive", s);
  const auto st = load_stats(s, m);
  m.add_input(s.path("key"));
  const auto band = FrequencyBand::parse(s.get<std::string>("band", "low"));
  const auto n = s.get<std::size_t>("n", 8);
  const auto seed = s.get<std::uint64_t>("pairing_seed", 0);
  const auto manifest = make_manifest(st, load_identity(s), band, n, seed, stopwords(s));
  manifest.save(out / "manifest.json");
  m.add_output(out / "manifest.json");
  m.seeds = {{"pairing_seed", seed}};
  m.results = {{"candidates", manifest.candidates.tokens.size()}, {"pairs", manifest.mapping.size()}};
  m.save(out);
  for (const auto& p : manifest.mapping.pairs) std::cout << p.trigger << " -> " << p.replacement << "\n";
  return 0;
}

void audit_flags(Settings& s) {
  s.text("manifest", "manifest.json to audit");
  s.text("public_key", "public key PEM (default: the key embedded in the manifest)");
  s.text("owner", "expected owner identity (optional)");
  s.text("corpus", "recompute the candidate set from this corpus instead of trusting the manifest");
  s.text("out", "output directory");
}

int audit(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("audit", s);
  m.add_input(s.path("manifest"));
  const auto manifest = WatermarkManifest::load(s.path("manifest"));
  const auto pub = RsaPublicKey::from_pem(s.has("public_key") ? read_text_file(s.path("public_key"))
                                                                : manifest.public_key_pem);
  auto candidates = manifest.candidates;
  if (s.has("corpus")) {
    m.add_input(s.path("corpus"));
    candidates = select_band(compute_stats(load_corpus(s.path("corpus"))), manifest.candidates.band);
  }
  const auto result = audit_derivation(pub, manifest.records, candidates, s.get<std::string>("owner", ""));
  const json j = {{"ok", result.ok}, {"reasons", result.reasons}};
  save_json(out / "audit.json", j);
  m.add_output(out / "audit.json");
  m.results = j;
  m.save(out);
  std::cout << (result.ok ? "audit passed" : "audit FAILED") << "\n";
  for (const auto& r : result.reasons) std::cout << "  " << r << "\n";
  return result.ok ? 0 : exit_code(Errc::KeyError);
}

// --- embed ------------------------------------------------------------------

void embed_flags(Settings& s) {
  s.text("bundle", "model bundle directory (or --matrix/--vocab)");
  s.text("matrix", "embedding matrix (.safetensors)");
  s.text("vocab", "vocab JSON sidecar");
  s.text("manifest", "manifest.json from derive");
  watermark_flags(s);
  s.text("out", "output directory");
}

int embed(const Settings& s) {
  const auto start = Clock::now();
  const auto out = output_dir(s);
  auto m = start_manifest("embed", s);
  const auto params = watermark_params(s);
  m.add_input(s.path("manifest"));
  const auto manifest = WatermarkManifest::load(s.path("manifest"));
  std::optional<ToyModel> model;
  EmbeddingMatrix original;
  if (s.has("bundle")) {
    m.add_input(s.path("bundle"));
    model = load_bundle(s.path("bundle"));
    original = model->embeddings;
  } else {
    m.add_input(s.path("matrix"));
    m.add_input(s.path("vocab"));
    original = load_matrix(s.path("matrix"), s.path("vocab"));
  }
  const auto t0 = Clock::now();
  auto marked = embed_watermark(original, manifest.mapping, params);
  const double embed_ms = ms_since(t0);
  const auto stealth = pair_distance(marked, manifest.mapping);
  if (model) {
    model->embeddings = std::move(marked);
    save_bundle(*model, out / "model");
    m.add_output(out / "model");
  } else {
    save_matrix(marked, out / "embedding.safetensors", out / "vocab.json");
    m.add_output(out / "embedding.safetensors");
    m.add_output(out / "vocab.json");
  }
  std::string csv = "trigger,replacement,distance\n";
  char buf[64];
  for (const auto& p : stealth.per_pair) {
    std::snprintf(buf, sizeof(buf), "%.9g", p.distance);
    csv += p.trigger + "," + p.replacement + "," + buf + "\n";
  }
  write_text_file(out / "stealth.csv", csv);
  m.add_output(out / "stealth.csv");
  m.seeds = {{"noise_seed", params.noise_seed}};
  m.results = {{"params", params.to_json()},
               {"mean_distance", stealth.mean_distance},
               {"embed_ms", embed_ms},
               {"wall_ms", ms_since(start)}};
  m.save(out);
  std::printf("embedded %zu pairs in %.3f ms (command %.1f ms), mean pair distance %.6f\n", manifest.mapping.size(),
              embed_ms, ms_since(start), stealth.mean_distance);
  return 0;
}

// --- attack -----------------------------------------------------------------

void attack_flags(Settings& s) {
  s.text("bundle", "input bundle");
  s.text("out", "output bundle directory");
  s.text("kind", "prune, quantize, fuse, linear_transform, reinit or rewrite");
  s.real("prune_rate", "fraction of parameters zeroed");
  s.integer("bits", "quantization bits: 8 or 4");
  s.flag("per_row", "one quantization scale per embedding row");
  s.real("fuse_alpha", "weight of the input model");
  s.text("fuse_reference", "bundle fused with the input");
  s.real("scale", "linear transform scale");
  s.real("shift", "linear transform shift");
  s.text("transform_matrix", "experimental: JSON {matrix, shift} full transform");
  s.integer("seed", "reinit/rewrite seed");
  s.text("synonym_table", "rewrite synonym table JSON");
  s.real("rewrite_p", "rewrite probability per token");
}

int attack(const Settings& s) {
  const auto out = output_dir(s);
  json cfg = s.values();
  cfg.erase("bundle");
  cfg.erase("out");
  const auto config = AttackConfig::from_json(cfg);
  auto m = start_manifest("attack", s);
  m.add_input(s.path("bundle"));
  if (config.fuse_reference) m.add_input(*config.fuse_reference);
  if (config.synonym_table) m.add_input(*config.synonym_table);
  const auto entry = attack_bundle(s.path("bundle"), out, config);
  m.add_output(out);
  m.seeds = {{"seed", config.seed}};
  m.results = entry;
  m.save(out);
  std::cout << attack_kind_name(config.kind) << " -> " << out.string() << "\n";
  return 0;
}

// --- finetune ---------------------------------------------------------------

void sgd_flags(Settings& s) {
  s.integer("epochs", "training epochs");
  s.integer("batch_size", "minibatch size");
  s.real("lr_head", "head learning rate");
  s.real("lr_embed", "embedding learning rate (default lr_head / 100)");
  s.integer("seed", "shuffle seed");
}

FineTuneConfig sgd_config(const Settings& s, FineTuneConfig c) {
  c.epochs = s.get("epochs", c.epochs);
  c.batch_size = s.get("batch_size", c.batch_size);
  c.lr_head = s.get("lr_head", c.lr_head);
  if (s.has("lr_embed")) c.lr_embed = s.get("lr_embed", 0.0);
  c.rng_seed = s.get("seed", c.rng_seed);
  c.validate();
  return c;
}

void finetune_flags(Settings& s) {
  s.text("bundle", "input bundle");
  s.text("data", "fine-tune data (JSONL)");
  s.text("test", "optional held-out JSONL for accuracy");
  sgd_flags(s);
  s.text("out", "output directory");
}

int finetune(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("finetune", s);
  m.add_input(s.path("bundle"));
  m.add_input(s.path("data"));
  const auto model = load_bundle(s.path("bundle"));
  const auto data = load_dataset(s.path("data"), model.labels);
  FineTuneConfig defaults;
  defaults.epochs = 20;
  defaults.batch_size = 16;
  const auto config = sgd_config(s, defaults);
  const auto tuned = fine_tune(model, data, config);
  save_bundle(tuned, out / "model");
  m.add_output(out / "model");
  const auto drift = measure_drift(model, tuned, data);
  m.seeds = {{"seed", config.rng_seed}};
  m.results = {{"sgd", config.to_json()}, {"drift", drift.to_json()}};
  if (s.has("test") && model.has_classifier()) {
    m.add_input(s.path("test"));
    const auto test = load_dataset(s.path("test"), model.labels);
    m.results["accuracy_before"] = accuracy(model, test.classification);
    m.results["accuracy_after"] = accuracy(tuned, test.classification);
  }
  m.save(out);
  std::printf("embedding row drift %.6g, head row drift %.6g\n", drift.embedding_row_drift, drift.head_row_drift);
  return 0;
}

// --- distill ----------------------------------------------------------------

struct VerifyContext {
  WatermarkManifest manifest;
  VerificationSet set;
  ToyModel reference;
  std::vector<std::string> synonyms;
};

void distill_flags(Settings& s) {
  s.text("teacher", "teacher bundle (the suspect API)");
  s.text("general", "general-domain corpus whose documents are distillation inputs");
  s.text("student", "bundle whose embeddings the student starts from (default: the teacher)");
  s.integer("student_seed", "seed of the fresh student head (default 0)");
  s.flag("keep_head", "start from the --student bundle's own classifier head");
  s.text("heldout", "held-out corpus for label agreement");
  s.text("manifest", "optional manifest for per-epoch NLU WACC");
  s.text("templates", "templates JSON (with --manifest)");
  s.text("reference", "unwatermarked reference bundle (synonym space, with --manifest)");
  sgd_flags(s);
  s.flag("save_snapshots", "write every epoch's student bundle");
  s.text("out", "output directory");
}

int distill_cmd(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("distill", s);
  m.add_input(s.path("teacher"));
  m.add_input(s.path("general"));
  const auto teacher = load_bundle(s.path("teacher"));
  const auto general = load_corpus(s.path("general"));
  const auto student_seed = s.get<std::uint64_t>("student_seed", 0);
  ToyModel student = teacher;
  if (s.has("student")) {
    m.add_input(s.path("student"));
    student = load_bundle(s.path("student"));
  }
  if (!s.get("keep_head", false)) student = init_student(student, student_seed);
  std::vector<TokenList> heldout;
  if (s.has("heldout")) {
    m.add_input(s.path("heldout"));
    for (const auto& d : load_corpus(s.path("heldout")).documents)
      heldout.push_back(tokenize(d, teacher.embeddings.vocab()));
  }
  std::optional<VerifyContext> ctx;
  if (s.has("manifest")) {
    for (const char* k : {"manifest", "templates", "reference"}) m.add_input(s.path(k));
    VerifyContext c{WatermarkManifest::load(s.path("manifest")), {}, load_bundle(s.path("reference")), {}};
    c.set = build_verification_set(c.manifest.mapping, load_templates(s.path("templates")));
    c.synonyms = build_synonyms(c.reference.embeddings, c.manifest.mapping, SynonymTarget::Trigger);
    ctx = std::move(c);
  }
  FineTuneConfig defaults;
  defaults.epochs = 5;
  defaults.batch_size = 8;
  defaults.lr_head = 2.0;
  DistillConfig config{sgd_config(s, defaults), 0};
  const bool snapshots = s.get("save_snapshots", false);
  std::string csv = "epoch,kl,agreement,wacc_nlu\n";
  auto row = [&](std::size_t epoch, const ToyModel& st, std::optional<double> kl) {
    char buf[128];
    std::string line = std::to_string(epoch) + ",";
    if (kl) {
      std::snprintf(buf, sizeof(buf), "%.6f", *kl);
      line += buf;
    }
    line += ",";
    if (!heldout.empty()) {
      std::snprintf(buf, sizeof(buf), "%.4f", label_agreement(teacher, st, heldout));
      line += buf;
    }
    line += ",";
    if (ctx) {
      LocalModel q(st);
      try {
        std::snprintf(buf, sizeof(buf), "%.2f", verify_nlu(q, ctx->set, ctx->manifest.mapping, ctx->synonyms).wacc);
        line += buf;
      } catch (const Error& e) {
        if (e.code() != Errc::EmptyAfterFilter) throw;
      }
    }
    csv += line + "\n";
    std::cout << line << "\n";
  };
  row(0, student, std::nullopt);
  const auto final_student = distill(teacher, general, student, config, [&](std::size_t e, const ToyModel& st, double kl) {
    row(e, st, kl);
    if (snapshots) save_bundle(st, out / ("epoch_" + std::to_string(e)));
  });
  save_bundle(final_student, out / "student");
  write_text_file(out / "distill.csv", csv);
  m.add_output(out / "student");
  m.add_output(out / "distill.csv");
  m.seeds = {{"seed", config.sgd.rng_seed}, {"student_seed", student_seed}};
  m.results = {{"sgd", config.sgd.to_json()}};
  if (!heldout.empty()) m.results["agreement"] = label_agreement(teacher, final_student, heldout);
  m.save(out);
  return 0;
}

// --- verify -----------------------------------------------------------------

void verify_flags(Settings& s) {
  s.text("suspect", "suspect bundle (or --url)");
  s.text("url", "base URL of a served suspect model");
  s.text("reference", "unwatermarked reference bundle");
  s.text("owner_copy", "owner's watermarked bundle (default: reference watermarked with the manifest)");
  watermark_flags(s);
  s.text("manifest", "manifest.json");
  s.text("templates", "templates JSON (pair index -> list of strings with one {SLOT})");
  s.integer("samples_per_pair", "templates used per pair (default 10)");
  s.text("task", "nlu, nlg or both (default both)");
  s.text("synonym_target", "trigger or replacement (default trigger)");
  s.text("synonyms", "synonym override table JSON");
  s.real("gamma", "NLG threshold; skips calibration");
  s.integer("max_len", "generation length (default 8)");
  s.real("temperature", "sampling temperature (default 0)");
  s.integer("seed", "generation seed (default 0)");
  s.integer("repeats", "repeats per sample when temperature > 0 (default 3)");
  s.integer("budget", "maximum number of remote queries");
  s.real("cost_per_query", "price per remote query");
  s.text("provider_url", "external similarity provider base URL");
  s.text("rewrite_table", "simulate an output paraphraser with this synonym table (local suspect)");
  s.real("rewrite_p", "paraphraser replacement probability (default 0.5)");
  s.integer("rewrite_seed", "paraphraser seed (default 0)");
  s.integer("parallelism", "concurrent queries (default 1)");
  s.text("out", "output directory");
}

int verify_cmd(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("verify", s);
  for (const char* k : {"manifest", "templates", "reference"}) m.add_input(s.path(k));
  const auto manifest = WatermarkManifest::load(s.path("manifest"));
  const auto& phi = manifest.mapping;
  const auto reference = load_bundle(s.path("reference"));
  const auto set = build_verification_set(phi, load_templates(s.path("templates")),
                                          s.get<std::size_t>("samples_per_pair", kSamplesPerPair));
  set.save(out / "verification_set.jsonl");
  m.add_output(out / "verification_set.jsonl");

  ToyModel owner_copy;
  if (s.has("owner_copy")) {
    m.add_input(s.path("owner_copy"));
    owner_copy = load_bundle(s.path("owner_copy"));
  } else {
    owner_copy = watermark_model(reference, phi, watermark_params(s));
  }

  const auto task = s.get<std::string>("task", "both");
  if (task != "nlu" && task != "nlg" && task != "both") throw Error(Errc::InvalidArgument, "--task must be nlu, nlg or both");
  const bool nlu = task != "nlg";
  const bool nlg = task != "nlu";
  const auto parallelism = s.get<std::size_t>("parallelism", 1);
  NlgOptions nlg_opt;
  nlg_opt.max_len = s.get("max_len", nlg_opt.max_len);
  nlg_opt.temperature = s.get("temperature", nlg_opt.temperature);
  nlg_opt.seed = s.get("seed", nlg_opt.seed);
  nlg_opt.repeats = s.get("repeats", nlg_opt.repeats);
  nlg_opt.parallelism = parallelism;
  m.seeds = {{"generation_seed", nlg_opt.seed}, {"rewrite_seed", s.get<std::uint64_t>("rewrite_seed", 0)}};

  std::unique_ptr<SimilarityProvider> provider;
  if (s.has("provider_url")) {
    provider = std::make_unique<HttpSimilarityProvider>(s.path("provider_url"));
  } else {
    provider = std::make_unique<PooledEmbeddingProvider>(reference.embeddings);
  }

  QueryBudget budget(s.has("budget") ? std::optional<std::uint64_t>(s.get<std::uint64_t>("budget", 0)) : std::nullopt,
                     s.has("cost_per_query") ? std::optional<double>(s.get("cost_per_query", 0.0)) : std::nullopt);
  std::optional<ToyModel> suspect_model;
  std::unique_ptr<QueryModel> suspect;
  if (s.has("url")) {
    auto remote = std::make_unique<RemoteModel>(s.path("url"), budget);
    m.inputs[s.path("url")] = remote->health();
    suspect = std::move(remote);
  } else {
    m.add_input(s.path("suspect"));
    suspect_model = load_bundle(s.path("suspect"));
    auto local = std::make_unique<LocalModel>(*suspect_model);
    if (s.has("rewrite_table")) {
      m.add_input(s.path("rewrite_table"));
      local->set_rewriter(load_synonym_table(s.path("rewrite_table")), s.get<std::uint64_t>("rewrite_seed", 0),
                          s.get("rewrite_p", 0.5));
    }
    suspect = std::move(local);
  }

  json results = json::object();
  bool aborted = false;
  auto record = [&](const std::string& name, auto&& fn) {
    try {
      const VerificationReport r = fn();
      save_json(out / (name + ".json"), r.to_json());
      write_text_file(out / (name + "_samples.csv"), r.samples_csv());
      m.add_output(out / (name + ".json"));
      m.add_output(out / (name + "_samples.csv"));
      results[name] = {{"value", r.wacc}, {"retained", r.retained}, {"queries", r.total_queries}, {"warnings", r.warnings}};
      std::printf("%-10s %6.2f  (%zu/%zu samples, %llu queries)\n", name.c_str(), r.wacc, r.retained, r.total_samples,
                  static_cast<unsigned long long>(r.total_queries));
    } catch (const Error& e) {
      if (exit_code(e.code()) != 4) throw;
      aborted = aborted || name.rfind("wacc", 0) == 0;
      results[name] = {{"error", e.what()}};
      std::printf("%-10s aborted: %s\n", name.c_str(), e.what());
    }
  };

  if (nlu) {
    SynonymTable overrides;
    if (s.has("synonyms")) {
      m.add_input(s.path("synonyms"));
      overrides = load_synonym_table(s.path("synonyms"));
    }
    const auto synonyms = build_synonyms(reference.embeddings, phi,
                                         parse_synonym_target(s.get<std::string>("synonym_target", "trigger")), overrides);
    results["synonyms"] = synonyms;
    LocalModel ref(reference);
    record("wacc_nlu", [&] { return verify_nlu(*suspect, set, phi, synonyms, parallelism); });
    record("fpr_nlu", [&] { return fpr_nlu(ref, set, phi, synonyms, parallelism); });
  }
  if (nlg) {
    double gamma = 0.0;
    if (s.has("gamma")) {
      gamma = s.get("gamma", 0.0);
    } else {
      LocalModel pos(owner_copy), neg(reference);
      const auto cal = calibrate_nlg(pos, neg, set, phi, *provider, nlg_opt);
      save_json(out / "calibration.json", cal.to_json());
      write_text_file(out / "roc.csv", cal.roc_csv());
      m.add_output(out / "calibration.json");
      m.add_output(out / "roc.csv");
      gamma = cal.gamma;
      results["youden"] = cal.youden;
    }
    results["gamma"] = std::isfinite(gamma) ? json(gamma) : json(gamma > 0 ? "inf" : "-inf");
    LocalModel ref(reference);
    record("wacc_nlg", [&] { return wacc_nlg(*suspect, set, phi, gamma, *provider, nlg_opt); });
    record("fpr_nlg", [&] { return fpr_nlg(ref, set, phi, gamma, *provider, nlg_opt); });
  }
  results["budget_used"] = budget.used();
  if (auto c = budget.cost()) results["cost"] = *c;
  m.results = results;
  m.save(out);
  return aborted ? 4 : 0;
}

// --- serve ------------------------------------------------------------------

void serve_flags(Settings& s) {
  s.text("bundle", "bundle to serve");
  s.text("host", "bind address (default 127.0.0.1)");
  s.integer("port", "port (default 8080)");
  s.text("encoder", "reference bundle whose pooled embeddings back /encode");
}

int serve(const Settings& s) {
  auto server = open_bundle_server(s.path("bundle"));
  if (s.has("encoder")) server->attach_encoder(load_bundle(s.path("encoder")).embeddings);
  const auto host = s.get<std::string>("host", "127.0.0.1");
  const auto port = s.get<int>("port", 8080);
  std::cout << "serving " << s.path("bundle") << " on http://" << host << ":" << port << std::endl;
  server->run(host, port);
  return 0;
}

// --- sweep ------------------------------------------------------------------

void sweep_flags(Settings& s) {
  s.text("axis", "lambda, noise or band");
  s.text("suite", "synthetic suite directory supplying the defaults below");
  s.text("corpus", "corpus for band selection");
  s.text("reference", "reference bundle");
  s.text("templates", "templates JSON");
  s.text("test", "held-out JSONL for the F1 proxy");
  s.text("key", "owner private key (PEM)");
  s.text("owner", "owner identity string");
  s.text("band", "base band (default low)");
  s.integer("n", "pairs (default 8)");
  s.integer("pairing_seed", "pairing seed (default 0)");
  watermark_flags(s);
  s.integer("workers", "concurrent sweep points (default 1)");
  s.text("out", "output directory");
}

int sweep(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("sweep", s);
  const SuitePaths suite{s.has("suite") ? fs::path(s.path("suite")) : fs::path()};
  auto path_or = [&](const char* key, const fs::path& fallback) {
    const fs::path p = s.has(key) ? fs::path(s.path(key)) : fallback;
    if (p.empty() || (!s.has(key) && !s.has("suite"))) {
      throw Error(Errc::InvalidArgument, std::string("missing --") + key + " (or --suite)");
    }
    m.add_input(p);
    return p;
  };
  const auto axis = parse_sweep_axis(s.path("axis"));
  SweepInputs in{compute_stats(load_corpus(path_or("corpus", suite.corpus()))), load_identity(s)};
  m.add_input(s.path("key"));
  in.n = s.get<std::size_t>("n", 8);
  in.pairing_seed = s.get<std::uint64_t>("pairing_seed", 0);
  in.reference = load_bundle(path_or("reference", suite.reference()));
  in.templates = load_templates(path_or("templates", suite.templates()));
  in.test_items = load_dataset(path_or("test", suite.test()), in.reference.labels).classification;
  const auto points =
      default_sweep(axis, watermark_params(s), FrequencyBand::parse(s.get<std::string>("band", "low")));
  const auto rows = run_sweep(in, points, s.get<std::size_t>("workers", 1));
  const auto csv = sweep_csv(axis, rows);
  write_text_file(out / "sweep.csv", csv);
  m.add_output(out / "sweep.csv");
  m.seeds = {{"pairing_seed", in.pairing_seed}};
  m.results = {{"points", rows.size()}};
  m.save(out);
  std::cout << csv;
  return 0;
}

// --- synth ------------------------------------------------------------------

void synth_flags(Settings& s) {
  s.text("out", "suite directory");
  s.text("suite_config", "JSON file of synthetic-suite parameters");
  s.integer("seed", "suite seed (default 7)");
}

int synth(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("synth", s);
  SynthConfig config;
  if (s.has("suite_config")) {
    m.add_input(s.path("suite_config"));
    config = SynthConfig::from_json(json::parse(read_text_file(s.path("suite_config"))));
  }
  config.seed = s.get("seed", config.seed);
  const auto summary = write_synth_suite(config, out);
  m.add_output(out / "suite.json");
  m.seeds = {{"seed", config.seed}};
  m.results = summary;
  m.save(out);
  std::cout << "suite written to " << out.string() << "\n";
  return 0;
}

// --- pca --------------------------------------------------------------------

void pca_flags(Settings& s) {
  s.text("bundle", "bundle (or --matrix/--vocab)");
  s.text("matrix", "embedding matrix");
  s.text("vocab", "vocab JSON sidecar");
  s.text("manifest", "manifest naming triggers and replacements");
  s.integer("ordinary", "number of random ordinary tokens to include (default 500)");
  s.integer("seed", "sampling seed (default 0)");
  s.text("out", "output directory");
}

int pca(const Settings& s) {
  const auto out = output_dir(s);
  auto m = start_manifest("pca", s);
  m.add_input(s.path("manifest"));
  EmbeddingMatrix matrix;
  if (s.has("bundle")) {
    m.add_input(s.path("bundle"));
    matrix = load_bundle(s.path("bundle")).embeddings;
  } else {
    m.add_input(s.path("matrix"));
    matrix = load_matrix(s.path("matrix"), s.path("vocab"));
  }
  const auto manifest = WatermarkManifest::load(s.path("manifest"));
  std::vector<LabeledToken> tokens;
  std::set<std::string> used;
  for (const auto& p : manifest.mapping.pairs) {
    tokens.push_back({p.trigger, TokenClass::Trigger});
    tokens.push_back({p.replacement, TokenClass::Replacement});
    used.insert(p.trigger);
    used.insert(p.replacement);
  }
  const auto want = s.get<std::size_t>("ordinary", 500);
  const auto seed = s.get<std::uint64_t>("seed", 0);
  CounterRng rng(seed);
  const auto& vocab = matrix.vocab();
  const std::size_t target = tokens.size() + want;
  for (std::size_t tries = 0; tokens.size() < target && tries < 100 * (want + 1); ++tries) {
    const auto& t = vocab.token(rng.below(vocab.size()));
    if (Vocab::is_reserved(t) || !used.insert(t).second) continue;
    tokens.push_back({t, TokenClass::Ordinary});
  }
  const auto result = pca_export(matrix, tokens);
  write_text_file(out / "pca.csv", pca_csv(result));
  m.add_output(out / "pca.csv");
  m.seeds = {{"seed", seed}};
  m.results = {{"explained_variance", result.explained_variance}, {"total_variance", result.total_variance}};
  m.save(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free embedding watermarking toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::vector<Command> commands;
  auto add = [&](const char* name, const char* help, void (*flags)(Settings&), int (*run)(const Settings&)) {
    Command c;
    c.app = app.add_subcommand(name, help);
    c.settings = std::make_unique<Settings>(c.app);
    flags(*c.settings);
    c.run = run;
    commands.push_back(std::move(c));
  };
  add("keygen", "generate an owner RSA key pair", keygen_flags, keygen);
  add("stats", "token frequency statistics of a corpus", stats_flags, stats);
  add("derive", "derive triggers and the trigger/replacement mapping", derive_flags, derive);
  add("audit", "re-check a manifest's derivation with the public key", audit_flags, audit);
  add("embed", "write the watermark into an embedding matrix", embed_flags, embed);
  add("attack", "apply a model modification attack to a bundle", attack_flags, attack);
  add("finetune", "fine-tune a bundle on a toy dataset", finetune_flags, finetune);
  add("distill", "distill a student from a teacher bundle", distill_flags, distill_cmd);
  add("verify", "measure WACC and FPR of a suspect model", verify_flags, verify_cmd);
  add("serve", "serve a bundle over HTTP", serve_flags, serve);
  add("sweep", "parameter sweep over lambda, noise or band", sweep_flags, sweep);
  add("synth", "write the synthetic evaluation suite", synth_flags, synth);
  add("pca", "2-D PCA coordinates of trigger, replacement and ordinary rows", pca_flags, pca);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    for (auto& c : commands) {
      if (!c.app->parsed()) continue;
      c.settings->resolve();
      return c.run(*c.settings);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return exit_code(Errc::FormatError);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(Errc::Io);
  }
  return 0;
}
