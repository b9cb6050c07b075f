#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conva/probe_types.hpp"

namespace conva::analysis {

struct ValueStructureMatrix {
  std::size_t layer = 0;
  std::vector<std::string> value_ids;
  std::vector<std::vector<double>> matrix;  // k x k
};

/// Pairwise dot products of unit vectors from one layer.
ValueStructureMatrix cosine_matrix(std::span<const ValueVector> vectors);

std::string matrix_to_csv(const ValueStructureMatrix& m);
std::string matrix_to_json(const ValueStructureMatrix& m);

/// Self-contained SVG: one <rect class="cell"> per entry, row and column
/// labels, and two-decimal annotations.
std::string heatmap_svg(const ValueStructureMatrix& m);
void render_heatmap(const ValueStructureMatrix& m, const std::filesystem::path& path);

/// Diverging scale over [-1, 1]: cold blue at -1, white at 0, warm red at +1.
struct Rgb {
  int r, g, b;
  bool operator==(const Rgb&) const = default;
};
Rgb diverging_color(double value);

// ---------------------------------------------------------------------------
// Frequent context words
// ---------------------------------------------------------------------------

struct WordCount {
  std::string word;
  std::size_t count = 0;
  bool operator==(const WordCount&) const = default;
};

struct WordStats {
  std::size_t top_k = 25;
  std::vector<WordCount> positive_unique;
  std::vector<WordCount> negative_unique;
  /// count is the total across both polarities.
  std::vector<WordCount> common;
  std::string stopword_list_id;
};

struct StopwordList {
  std::string id;
  std::vector<std::string> words;
};

/// The shipped English function-word list.
const StopwordList& default_stopwords();
StopwordList no_stopwords();

/// Lowercase, split on non-alphabetic runs, drop tokens shorter than 2.
std::vector<std::string> tokenize(std::string_view text);

/// Top-k words per polarity (frequency desc, ties lexicographic), partitioned
/// into unique-positive, unique-negative and common.
WordStats word_stats(std::span<const std::string> positive_texts,
                     std::span<const std::string> negative_texts, std::size_t top_k,
                     const StopwordList& stopwords);

std::string word_stats_to_json(const WordStats& stats);

}  // namespace conva::analysis
