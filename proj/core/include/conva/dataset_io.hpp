#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conva/error.hpp"
#include "conva/probe_types.hpp"

namespace conva::io {

// ---------------------------------------------------------------------------
// CVAD activation dumps
//
// Layout (all integers little-endian):
//   "CVAD"                         4 bytes magic
//   0x01                           1 byte version
//   u32 header_length              byte length of the JSON header
//   header_length bytes            UTF-8 JSON {dim, layer_count, model_id, n_samples}
//   u32 header_crc                 CRC-32 over everything above
//   n_samples bytes                labels, each 0 or 1
//   layer_count blocks             n_samples x dim float32, row-major
// ---------------------------------------------------------------------------

inline constexpr char kDumpMagic[4] = {'C', 'V', 'A', 'D'};
inline constexpr std::uint8_t kDumpVersion = 0x01;

/// Which check a dump failed. Each is reported distinctly.
enum class DumpFault {
  kBadMagic,
  kUnsupportedVersion,
  kHeaderCorrupt,
  kTruncated,
  kSizeMismatch,
  kInvalidLabels,
  kInvariant,
};

const char* to_string(DumpFault fault) noexcept;

class DumpError : public Error {
 public:
  DumpError(DumpFault fault, const std::string& what,
            std::optional<std::size_t> layer = std::nullopt)
      : Error(ErrorKind::kFormat, what), fault_(fault), layer_(layer) {}

  DumpFault fault() const noexcept { return fault_; }
  /// Set for truncation inside a layer block.
  std::optional<std::size_t> layer() const noexcept { return layer_; }

 private:
  DumpFault fault_;
  std::optional<std::size_t> layer_;
};

struct ActivationDump {
  std::string model_id;
  std::size_t dim = 0;
  std::size_t layer_count = 0;
  std::size_t n_samples = 0;
  std::vector<std::uint8_t> labels;
  /// One n_samples x dim row-major block per layer.
  std::vector<std::vector<float>> layers;

  std::span<const float> row(std::size_t layer, std::size_t sample) const {
    return std::span<const float>(layers[layer]).subspan(sample * dim, dim);
  }

  bool operator==(const ActivationDump&) const = default;
};

/// Throws DumpError(kInvariant / kInvalidLabels) if the dump is malformed.
void validate(const ActivationDump& dump);

std::vector<std::uint8_t> encode_activation_dump(const ActivationDump& dump);
ActivationDump decode_activation_dump(std::span<const std::uint8_t> bytes);

void write_activation_dump(const ActivationDump& dump,
                           const std::filesystem::path& path);
ActivationDump read_activation_dump(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Text-pair corpora (JSON lines: pair_id, positive, negative)
// ---------------------------------------------------------------------------

struct TextPair {
  std::string positive_text;
  std::string negative_text;
  std::int64_t pair_id = 0;

  bool operator==(const TextPair&) const = default;
};

struct TextPairCorpus {
  std::string value_id;
  std::vector<TextPair> pairs;
};

/// Reads a JSONL corpus in file order. value_id defaults to the file stem.
/// Malformed lines throw Error(kFormat) naming the 1-based line number.
TextPairCorpus read_text_pairs(const std::filesystem::path& path,
                               std::optional<std::string> value_id = {});
void write_text_pairs(const TextPairCorpus& corpus,
                      const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// JSON stores: probes, value vectors, control plans
// ---------------------------------------------------------------------------

inline constexpr int kFormatVersion = 1;

struct ProbeStore {
  std::string value_id;
  std::string model_id;
  std::size_t dim = 0;
  std::vector<ValueProbe> entries;
};

/// At most one entry per layer, every w of length dim.
void validate(const ProbeStore& store);

std::string probe_store_to_json(const ProbeStore& store);
ProbeStore probe_store_from_json(const std::string& text);
void write_probe_store(const ProbeStore& store,
                       const std::filesystem::path& path);
ProbeStore read_probe_store(const std::filesystem::path& path);

struct ValueVectorSet {
  std::string value_id;
  std::string model_id;
  std::size_t dim = 0;
  std::vector<ValueVector> vectors;
};

void write_value_vectors(const ValueVectorSet& set,
                         const std::filesystem::path& path);
ValueVectorSet read_value_vectors(const std::filesystem::path& path);

/// probe_store / value_vectors hold paths relative to the plan file.
struct PlanFile {
  ControlPlan plan;
  std::string model_id;
  std::string probe_store = "probes.json";
  std::string value_vectors = "vectors.json";
};

void write_control_plan(const PlanFile& plan,
                        const std::filesystem::path& path);
PlanFile read_control_plan(const std::filesystem::path& path);

/// A plan together with the probes and vectors it references.
struct LoadedValue {
  PlanFile plan_file;
  ProbeStore probes;
  ValueVectorSet vectors;
};

LoadedValue load_value(const std::filesystem::path& plan_path);

}  // namespace conva::io
