#include <filesystem>
#include <memory>

#include "commands.hpp"
#include "conva/analysis.hpp"
#include "conva/dataset_io.hpp"
#include "conva/error.hpp"
#include "conva/fs_util.hpp"

namespace conva::cli {
namespace fs = std::filesystem;

namespace {

struct WordstatsOptions {
  fs::path pairs;
  std::size_t top_k = 25;
  fs::path out;
  bool no_stopwords = false;
};

void run(const WordstatsOptions& o) {
  const auto corpus = io::read_text_pairs(o.pairs);
  if (corpus.pairs.empty()) {
    throw Failure(kExitInsufficientInput, "insufficient_input", o.pairs.string() + " holds no pairs");
  }
  std::vector<std::string> pos, neg;
  for (const auto& p : corpus.pairs) {
    pos.push_back(p.positive_text);
    neg.push_back(p.negative_text);
  }
  const auto stop = o.no_stopwords ? analysis::no_stopwords() : analysis::default_stopwords();
  const auto stats = analysis::word_stats(pos, neg, o.top_k, stop);
  atomic_write(o.out, analysis::word_stats_to_json(stats));
}

}  // namespace

void register_wordstats(CLI::App& app) {
  auto opts = std::make_shared<WordstatsOptions>();
  auto* cmd = app.add_subcommand("wordstats", "Frequent context words: unique vs common per polarity");
  cmd->set_config("--config", "", "Optional key=value file supplying flag defaults");
  cmd->add_option("--pairs", opts->pairs, "Text-pair corpus (JSON lines)")->required();
  cmd->add_option("--top-k", opts->top_k, "Words kept per polarity")
      ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()))
      ->capture_default_str();
  cmd->add_option("--out", opts->out, "Output JSON path")->required();
  cmd->add_flag("--no-stopwords", opts->no_stopwords, "Keep function words");
  cmd->callback([opts] { run(*opts); });
}

}  // namespace conva::cli
