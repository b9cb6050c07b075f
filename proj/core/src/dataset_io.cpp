#include "conva/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "conva/fs_util.hpp"
#include "conva/logging.hpp"

namespace conva::io {
namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(DumpFault fault) noexcept {
  switch (fault) {
    case DumpFault::kBadMagic: return "bad_magic";
    case DumpFault::kUnsupportedVersion: return "unsupported_version";
    case DumpFault::kHeaderCorrupt: return "header_corrupt";
    case DumpFault::kTruncated: return "truncated";
    case DumpFault::kSizeMismatch: return "size_mismatch";
    case DumpFault::kInvalidLabels: return "invalid_labels";
    case DumpFault::kInvariant: return "invariant";
  }
  return "unknown";
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; headers are far below that.
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::size_t checked_mul(std::size_t a, std::size_t b, const char* what) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) {
    throw DumpError(DumpFault::kInvariant, std::string("dump too large: ") + what);
  }
  return a * b;
}

json header_json(const ActivationDump& dump) {
  return json{{"model_id", dump.model_id},
              {"dim", dump.dim},
              {"layer_count", dump.layer_count},
              {"n_samples", dump.n_samples}};
}

}  // namespace

void validate(const ActivationDump& dump) {
  if (dump.dim == 0) throw DumpError(DumpFault::kInvariant, "dim must be positive");
  if (dump.layer_count == 0) throw DumpError(DumpFault::kInvariant, "layer_count must be positive");
  if (dump.n_samples == 0) throw DumpError(DumpFault::kInvariant, "n_samples must be positive");
  if (dump.labels.size() != dump.n_samples) {
    throw DumpError(DumpFault::kInvalidLabels,
                    "labels length " + std::to_string(dump.labels.size()) +
                        " != n_samples " + std::to_string(dump.n_samples));
  }
  for (std::size_t i = 0; i < dump.labels.size(); ++i) {
    if (dump.labels[i] > 1) {
      throw DumpError(DumpFault::kInvalidLabels,
                      "label " + std::to_string(dump.labels[i]) + " at sample " +
                          std::to_string(i) + " is not 0 or 1");
    }
  }
  if (dump.layers.size() != dump.layer_count) {
    throw DumpError(DumpFault::kInvariant, "expected " + std::to_string(dump.layer_count) +
                                               " layer blocks, got " +
                                               std::to_string(dump.layers.size()));
  }
  const auto block = checked_mul(dump.n_samples, dump.dim, "layer block");
  for (std::size_t l = 0; l < dump.layers.size(); ++l) {
    if (dump.layers[l].size() != block) {
      throw DumpError(DumpFault::kInvariant,
                      "layer " + std::to_string(l) + " holds " +
                          std::to_string(dump.layers[l].size()) + " values, expected " +
                          std::to_string(block),
                      l);
    }
  }
}

std::vector<std::uint8_t> encode_activation_dump(const ActivationDump& dump) {
  validate(dump);
  const auto header = header_json(dump).dump();
  const auto block = dump.n_samples * dump.dim;

  std::vector<std::uint8_t> out;
  out.reserve(13 + header.size() + dump.n_samples + dump.layer_count * block * 4);
  out.insert(out.end(), std::begin(kDumpMagic), std::end(kDumpMagic));
  out.push_back(kDumpVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  put_u32(out, crc32_of(out));
  out.insert(out.end(), dump.labels.begin(), dump.labels.end());
  for (const auto& layer : dump.layers) {
    for (float f : layer) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

ActivationDump decode_activation_dump(std::span<const std::uint8_t> bytes) {
  const std::size_t size = bytes.size();
  if (size < 4) throw DumpError(DumpFault::kTruncated, "file shorter than the magic bytes");
  if (std::memcmp(bytes.data(), kDumpMagic, 4) != 0) {
    throw DumpError(DumpFault::kBadMagic, "bad magic: expected \"CVAD\"");
  }
  if (size < 5) throw DumpError(DumpFault::kTruncated, "missing version byte");
  if (bytes[4] != kDumpVersion) {
    throw DumpError(DumpFault::kUnsupportedVersion,
                    "unsupported version " + std::to_string(bytes[4]));
  }
  if (size < 9) throw DumpError(DumpFault::kTruncated, "missing header length");
  const std::size_t header_len = get_u32(bytes.data() + 5);
  const std::size_t header_end = 9 + header_len;
  if (size < header_end + 4) {
    throw DumpError(DumpFault::kTruncated, "truncated header (declared " +
                                               std::to_string(header_len) + " bytes)");
  }
  const auto stored_crc = get_u32(bytes.data() + header_end);
  if (stored_crc != crc32_of(bytes.first(header_end))) {
    throw DumpError(DumpFault::kHeaderCorrupt, "header checksum mismatch");
  }

  ActivationDump dump;
  try {
    const auto header = json::parse(bytes.begin() + 9, bytes.begin() + static_cast<std::ptrdiff_t>(header_end));
    dump.model_id = header.at("model_id").get<std::string>();
    dump.dim = header.at("dim").get<std::size_t>();
    dump.layer_count = header.at("layer_count").get<std::size_t>();
    dump.n_samples = header.at("n_samples").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DumpError(DumpFault::kHeaderCorrupt, std::string("malformed header: ") + e.what());
  }
  if (dump.dim == 0 || dump.layer_count == 0 || dump.n_samples == 0) {
    throw DumpError(DumpFault::kInvariant, "header dimensions must be positive");
  }

  std::size_t pos = header_end + 4;
  if (size - pos < dump.n_samples) {
    throw DumpError(DumpFault::kTruncated, "truncated label array");
  }
  dump.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + dump.n_samples));
  pos += dump.n_samples;
  for (std::size_t i = 0; i < dump.labels.size(); ++i) {
    if (dump.labels[i] > 1) {
      throw DumpError(DumpFault::kInvalidLabels, "label byte " + std::to_string(dump.labels[i]) +
                                                     " at sample " + std::to_string(i));
    }
  }

  const auto block = checked_mul(dump.n_samples, dump.dim, "layer block");
  const auto block_bytes = checked_mul(block, 4, "layer block");
  dump.layers.resize(dump.layer_count);
  for (std::size_t l = 0; l < dump.layer_count; ++l) {
    if (size - pos < block_bytes) {
      throw DumpError(DumpFault::kTruncated,
                      "truncated payload in layer " + std::to_string(l) + " (" +
                          std::to_string(size - pos) + " of " + std::to_string(block_bytes) +
                          " bytes)",
                      l);
    }
    auto& layer = dump.layers[l];
    layer.resize(block);
    const auto* p = bytes.data() + pos;
    for (std::size_t i = 0; i < block; ++i) layer[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    pos += block_bytes;
  }
  if (pos != size) {
    throw DumpError(DumpFault::kSizeMismatch,
                    "header declares " + std::to_string(pos) + " bytes but file has " +
                        std::to_string(size));
  }
  return dump;
}

void write_activation_dump(const ActivationDump& dump, const fs::path& path) {
  const auto bytes = encode_activation_dump(dump);
  atomic_write(path, bytes);
}

ActivationDump read_activation_dump(const fs::path& path) {
  const auto bytes = read_binary(path);
  return decode_activation_dump(bytes);
}

// ---------------------------------------------------------------------------
// Text pairs
// ---------------------------------------------------------------------------

TextPairCorpus read_text_pairs(const fs::path& path, std::optional<std::string> value_id) {
  const auto text = read_text(path);
  TextPairCorpus corpus;
  corpus.value_id = value_id ? *value_id : path.stem().string();

  std::set<std::int64_t> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    auto fail = [&](const std::string& why) -> Error {
      return Error(ErrorKind::kFormat,
                   path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw fail("expected a JSON object");
    for (const char* key : {"pair_id", "positive", "negative"}) {
      if (!obj.contains(key)) throw fail(std::string("missing key \"") + key + "\"");
    }
    if (!obj["pair_id"].is_number_integer()) throw fail("pair_id must be an integer");
    if (!obj["positive"].is_string()) throw fail("positive must be a string");
    if (!obj["negative"].is_string()) throw fail("negative must be a string");

    TextPair pair;
    pair.pair_id = obj["pair_id"].get<std::int64_t>();
    pair.positive_text = obj["positive"].get<std::string>();
    pair.negative_text = obj["negative"].get<std::string>();
    if (!seen.insert(pair.pair_id).second) {
      throw fail("duplicate pair_id " + std::to_string(pair.pair_id));
    }
    corpus.pairs.push_back(std::move(pair));
  }

  if (corpus.pairs.empty()) {
    log::warn("empty text-pair corpus", {{"path", path.string()}});
    return corpus;
  }
  const auto n = static_cast<std::int64_t>(corpus.pairs.size());
  if (*seen.begin() != 0 || *seen.rbegin() != n - 1) {
    throw Error(ErrorKind::kInvariant,
                path.string() + ": pair_id values must be contiguous from 0 to " +
                    std::to_string(n - 1));
  }
  log::debug("read text pairs", {{"path", path.string()}, {"count", corpus.pairs.size()}});
  return corpus;
}

void write_text_pairs(const TextPairCorpus& corpus, const fs::path& path) {
  std::string out;
  for (const auto& p : corpus.pairs) {
    out += json{{"pair_id", p.pair_id}, {"positive", p.positive_text}, {"negative", p.negative_text}}
               .dump();
    out += '\n';
  }
  atomic_write(path, out);
}

// ---------------------------------------------------------------------------
// JSON stores
// ---------------------------------------------------------------------------

namespace {

void check_header(const json& doc, std::string_view kind) {
  if (!doc.is_object()) throw Error(ErrorKind::kFormat, "expected a JSON object");
  if (!doc.contains("format_version") || doc["format_version"] != kFormatVersion) {
    throw Error(ErrorKind::kFormat, "unsupported or missing format_version");
  }
  if (doc.contains("kind") && doc["kind"] != kind) {
    throw Error(ErrorKind::kFormat, "expected a " + std::string(kind) + " document, got " +
                                        doc["kind"].dump());
  }
}

template <typename F>
auto parse_guarded(const std::string& text, std::string_view what, F&& body) {
  try {
    return body(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, "malformed " + std::string(what) + ": " + e.what());
  }
}

bool all_finite(const std::vector<double>& xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void validate(const ProbeStore& store) {
  std::set<std::size_t> layers;
  for (const auto& p : store.entries) {
    if (!layers.insert(p.layer).second) {
      throw Error(ErrorKind::kInvariant,
                  "duplicate probe entry for layer " + std::to_string(p.layer));
    }
    if (p.w.size() != store.dim) {
      throw Error(ErrorKind::kDimension, "probe for layer " + std::to_string(p.layer) +
                                             " has w of length " + std::to_string(p.w.size()) +
                                             ", store dim is " + std::to_string(store.dim));
    }
    if (!all_finite(p.w) || !std::isfinite(p.b)) {
      throw Error(ErrorKind::kNumeric,
                  "probe for layer " + std::to_string(p.layer) + " has non-finite parameters");
    }
    for (double acc : {p.train_accuracy, p.test_accuracy}) {
      if (!(acc >= 0.0 && acc <= 1.0)) {
        throw Error(ErrorKind::kInvariant,
                    "accuracy outside [0,1] for layer " + std::to_string(p.layer));
      }
    }
  }
}

std::string probe_store_to_json(const ProbeStore& store) {
  validate(store);
  json probes = json::array();
  for (const auto& p : store.entries) {
    probes.push_back({{"layer", p.layer},
                      {"w", p.w},
                      {"b", p.b},
                      {"train_accuracy", p.train_accuracy},
                      {"test_accuracy", p.test_accuracy}});
  }
  json doc = {{"format_version", kFormatVersion}, {"kind", "probe_store"},
              {"value_id", store.value_id},       {"model_id", store.model_id},
              {"dim", store.dim},                 {"probes", std::move(probes)}};
  return doc.dump(1) + "\n";
}

ProbeStore probe_store_from_json(const std::string& text) {
  auto store = parse_guarded(text, "probe store", [](const json& doc) {
    check_header(doc, "probe_store");
    ProbeStore s;
    s.value_id = doc.at("value_id").get<std::string>();
    s.model_id = doc.value("model_id", std::string{});
    const auto& probes = doc.at("probes");
    if (doc.contains("dim")) {
      s.dim = doc["dim"].get<std::size_t>();
    } else if (!probes.empty()) {
      s.dim = probes.at(0).at("w").size();
    }
    for (const auto& e : probes) {
      ValueProbe p;
      p.value_id = s.value_id;
      p.layer = e.at("layer").get<std::size_t>();
      p.w = e.at("w").get<std::vector<double>>();
      p.b = e.at("b").get<double>();
      p.train_accuracy = e.value("train_accuracy", 0.0);
      p.test_accuracy = e.value("test_accuracy", 0.0);
      s.entries.push_back(std::move(p));
    }
    return s;
  });
  validate(store);
  return store;
}

void write_probe_store(const ProbeStore& store, const fs::path& path) {
  atomic_write(path, probe_store_to_json(store));
}

ProbeStore read_probe_store(const fs::path& path) {
  return probe_store_from_json(read_text(path));
}

void write_value_vectors(const ValueVectorSet& set, const fs::path& path) {
  json vectors = json::array();
  std::set<std::size_t> layers;
  for (const auto& v : set.vectors) {
    if (v.v.size() != set.dim) {
      throw Error(ErrorKind::kDimension, "value vector dimension mismatch at layer " +
                                             std::to_string(v.layer));
    }
    if (!layers.insert(v.layer).second) {
      throw Error(ErrorKind::kInvariant, "duplicate value vector for layer " +
                                             std::to_string(v.layer));
    }
    vectors.push_back({{"layer", v.layer}, {"v", v.v}});
  }
  json doc = {{"format_version", kFormatVersion}, {"kind", "value_vectors"},
              {"value_id", set.value_id},         {"model_id", set.model_id},
              {"dim", set.dim},                   {"vectors", std::move(vectors)}};
  atomic_write(path, doc.dump(1) + "\n");
}

ValueVectorSet read_value_vectors(const fs::path& path) {
  return parse_guarded(read_text(path), "value vectors", [&](const json& doc) {
    check_header(doc, "value_vectors");
    ValueVectorSet set;
    set.value_id = doc.at("value_id").get<std::string>();
    set.model_id = doc.value("model_id", std::string{});
    set.dim = doc.at("dim").get<std::size_t>();
    std::set<std::size_t> layers;
    for (const auto& e : doc.at("vectors")) {
      ValueVector v;
      v.value_id = set.value_id;
      v.layer = e.at("layer").get<std::size_t>();
      v.v = e.at("v").get<std::vector<double>>();
      if (v.v.size() != set.dim) {
        throw Error(ErrorKind::kDimension, path.string() + ": vector for layer " +
                                               std::to_string(v.layer) + " has wrong length");
      }
      if (!layers.insert(v.layer).second) {
        throw Error(ErrorKind::kInvariant, path.string() + ": duplicate layer " +
                                               std::to_string(v.layer));
      }
      set.vectors.push_back(std::move(v));
    }
    return set;
  });
}

namespace {

void validate_plan(const ControlPlan& plan) {
  if (!(plan.p0 > 0.0 && plan.p0 < 1.0)) {
    throw Error(ErrorKind::kInvariant, "p0 must lie strictly inside (0,1)");
  }
  if (!(plan.g0 >= 0.0 && plan.g0 <= 1.0)) {
    throw Error(ErrorKind::kInvariant, "g0 must lie in [0,1]");
  }
  if (!(plan.accuracy_threshold >= 0.0 && plan.accuracy_threshold <= 1.0)) {
    throw Error(ErrorKind::kInvariant, "accuracy_threshold must lie in [0,1]");
  }
  if (!std::is_sorted(plan.selected_layers.begin(), plan.selected_layers.end()) ||
      std::adjacent_find(plan.selected_layers.begin(), plan.selected_layers.end()) !=
          plan.selected_layers.end()) {
    throw Error(ErrorKind::kInvariant, "selected_layers must be strictly ascending");
  }
}

}  // namespace

void write_control_plan(const PlanFile& pf, const fs::path& path) {
  validate_plan(pf.plan);
  const auto& p = pf.plan;
  json doc = {{"format_version", kFormatVersion},
              {"kind", "control_plan"},
              {"value_id", p.value_id},
              {"model_id", pf.model_id},
              {"selected_layers", p.selected_layers},
              {"p0", p.p0},
              {"g0", p.g0},
              {"accuracy_threshold", p.accuracy_threshold},
              {"excluded_tail_layers", p.excluded_tail_layers},
              {"empty_selection", p.empty_selection},
              {"probe_store", pf.probe_store},
              {"value_vectors", pf.value_vectors}};
  atomic_write(path, doc.dump(1) + "\n");
}

PlanFile read_control_plan(const fs::path& path) {
  auto pf = parse_guarded(read_text(path), "control plan", [](const json& doc) {
    check_header(doc, "control_plan");
    PlanFile f;
    auto& p = f.plan;
    p.value_id = doc.at("value_id").get<std::string>();
    p.selected_layers = doc.at("selected_layers").get<std::vector<std::size_t>>();
    p.p0 = doc.at("p0").get<double>();
    p.g0 = doc.at("g0").get<double>();
    p.accuracy_threshold = doc.value("accuracy_threshold", 0.9);
    p.excluded_tail_layers = doc.value("excluded_tail_layers", std::size_t{5});
    p.empty_selection = doc.value("empty_selection", p.selected_layers.empty());
    f.model_id = doc.value("model_id", std::string{});
    f.probe_store = doc.value("probe_store", std::string("probes.json"));
    f.value_vectors = doc.value("value_vectors", std::string("vectors.json"));
    return f;
  });
  validate_plan(pf.plan);
  return pf;
}

LoadedValue load_value(const fs::path& plan_path) {
  LoadedValue lv;
  lv.plan_file = read_control_plan(plan_path);
  const auto base = plan_path.parent_path();
  lv.probes = read_probe_store(base / lv.plan_file.probe_store);
  lv.vectors = read_value_vectors(base / lv.plan_file.value_vectors);

  const auto& plan = lv.plan_file.plan;
  if (lv.probes.value_id != plan.value_id || lv.vectors.value_id != plan.value_id) {
    throw Error(ErrorKind::kPlan, plan_path.string() + ": probe store / vectors belong to a "
                                                       "different value than the plan");
  }
  if (lv.vectors.dim != lv.probes.dim) {
    throw Error(ErrorKind::kDimension, plan_path.string() +
                                           ": value vectors and probes disagree on dim");
  }
  const std::size_t layer_count = lv.probes.entries.size();
  for (auto l : plan.selected_layers) {
    if (l + 1 + plan.excluded_tail_layers > layer_count) {
      throw Error(ErrorKind::kPlan, plan_path.string() + ": selected layer " +
                                        std::to_string(l) + " falls in the excluded tail");
    }
  }
  return lv;
}

}  // namespace conva::io
