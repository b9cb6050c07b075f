#include <algorithm>
#include <filesystem>
#include <memory>
#include <set>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "conva/analysis.hpp"
#include "conva/dataset_io.hpp"
#include "conva/error.hpp"
#include "conva/fs_util.hpp"
#include "conva/logging.hpp"
#include "conva/probe_trainer.hpp"

namespace conva::cli {
namespace fs = std::filesystem;

namespace {

struct AnalyzeOptions {
  fs::path vectors;
  std::size_t layer = 0;
  fs::path out;
};

struct Found {
  std::string value_id;
  fs::path source;
  ValueVector vector;
};

// Vector files win; probe stores fill in values that have no vector at this
// layer (train only writes vectors for selected layers).
std::vector<Found> collect(const fs::path& dir, std::size_t layer) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::kIo, dir.string() + " is not a directory");

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Found> from_vectors, from_probes;
  for (const auto& f : files) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_text(f));
    } catch (const nlohmann::json::exception&) {
      continue;
    }
    if (!doc.is_object()) continue;
    const auto kind = doc.value("kind", std::string{});
    if (kind == "value_vectors") {
      const auto set = io::read_value_vectors(f);
      for (const auto& v : set.vectors) {
        if (v.layer == layer) from_vectors.push_back({set.value_id, f, v});
      }
    } else if (kind == "probe_store") {
      const auto store = io::read_probe_store(f);
      for (const auto& p : store.entries) {
        if (p.layer == layer) from_probes.push_back({store.value_id, f, probe::value_vector(p)});
      }
    }
  }

  std::set<std::string> covered;
  for (const auto& f : from_vectors) covered.insert(f.value_id);
  std::vector<Found> out = from_vectors;
  for (auto& f : from_probes) {
    if (covered.insert(f.value_id).second) out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end(), [](const Found& a, const Found& b) {
    return a.value_id != b.value_id ? a.value_id < b.value_id : a.source < b.source;
  });
  return out;
}

void run(const AnalyzeOptions& o) {
  const auto found = collect(o.vectors, o.layer);
  if (found.size() < 2) {
    throw Failure(kExitInsufficientInput, "insufficient_input",
                  "need at least 2 value vectors at layer " + std::to_string(o.layer) + ", found " +
                      std::to_string(found.size()));
  }
  std::vector<ValueVector> vectors;
  for (const auto& f : found) {
    auto v = f.vector;
    v.value_id = f.value_id;
    vectors.push_back(std::move(v));
  }
  const auto m = analysis::cosine_matrix(vectors);

  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + o.out.string() + ": " + ec.message());
  const auto stem = "cosine_layer" + std::to_string(o.layer);
  atomic_write(o.out / (stem + ".csv"), analysis::matrix_to_csv(m));
  atomic_write(o.out / (stem + ".json"), analysis::matrix_to_json(m));
  analysis::render_heatmap(m, o.out / (stem + ".svg"));
  log::info("wrote value-structure matrix", {{"layer", o.layer}, {"values", m.value_ids}});
}

}  // namespace

void register_analyze(CLI::App& app) {
  auto opts = std::make_shared<AnalyzeOptions>();
  auto* cmd = app.add_subcommand("analyze", "Pairwise cosine similarity of value vectors at one layer");
  cmd->set_config("--config", "", "Optional key=value file supplying flag defaults");
  cmd->add_option("--vectors", opts->vectors,
                  "Directory searched recursively for vectors.json / probes.json files")
      ->required();
  cmd->add_option("--layer", opts->layer, "Layer to compare")->required();
  cmd->add_option("--out", opts->out, "Output directory for CSV, JSON and SVG")->required();
  cmd->callback([opts] { run(*opts); });
}

}  // namespace conva::cli
