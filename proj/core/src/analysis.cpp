#include "conva/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "conva/error.hpp"
#include "conva/fs_util.hpp"

namespace conva::analysis {

namespace {

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

}  // namespace

ValueStructureMatrix cosine_matrix(std::span<const ValueVector> vectors) {
  if (vectors.empty()) throw Error(ErrorKind::kPrecondition, "no value vectors given");
  const auto layer = vectors.front().layer;
  const auto dim = vectors.front().v.size();
  for (const auto& v : vectors) {
    if (v.layer != layer) {
      throw Error(ErrorKind::kPrecondition, "value vectors come from different layers (" +
                                                std::to_string(layer) + " and " +
                                                std::to_string(v.layer) + ")");
    }
    if (v.v.size() != dim) {
      throw Error(ErrorKind::kDimension, "value vector '" + v.value_id + "' has dimension " +
                                             std::to_string(v.v.size()) + ", expected " +
                                             std::to_string(dim));
    }
    double n2 = 0.0;
    for (double x : v.v) n2 += x * x;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) {
      throw Error(ErrorKind::kPrecondition, "value vector '" + v.value_id + "' is not unit norm");
    }
  }

  const auto k = vectors.size();
  ValueStructureMatrix m;
  m.layer = layer;
  m.matrix.assign(k, std::vector<double>(k, 0.0));
  for (const auto& v : vectors) m.value_ids.push_back(v.value_id);
  for (std::size_t i = 0; i < k; ++i) {
    m.matrix[i][i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < dim; ++t) dot += vectors[i].v[t] * vectors[j].v[t];
      dot = std::clamp(dot, -1.0, 1.0);
      m.matrix[i][j] = dot;
      m.matrix[j][i] = dot;
    }
  }
  return m;
}

std::string matrix_to_csv(const ValueStructureMatrix& m) {
  std::string out;
  for (std::size_t i = 0; i < m.value_ids.size(); ++i) {
    if (i) out += ',';
    out += m.value_ids[i];
  }
  out += '\n';
  for (const auto& row : m.matrix) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += format_double(row[j]);
    }
    out += '\n';
  }
  return out;
}

std::string matrix_to_json(const ValueStructureMatrix& m) {
  nlohmann::json doc = {{"format_version", 1},
                        {"layer", m.layer},
                        {"value_ids", m.value_ids},
                        {"matrix", m.matrix}};
  return doc.dump(1) + "\n";
}

Rgb diverging_color(double value) {
  constexpr Rgb cold{59, 76, 192};
  constexpr Rgb mid{255, 255, 255};
  constexpr Rgb warm{180, 4, 38};
  const double t = std::clamp(std::isfinite(value) ? value : 0.0, -1.0, 1.0);
  const Rgb& from = mid;
  const Rgb& to = t < 0.0 ? cold : warm;
  const double a = std::abs(t);
  auto lerp = [a](int x, int y) {
    return static_cast<int>(std::lround(x + (y - x) * a));
  };
  return {lerp(from.r, to.r), lerp(from.g, to.g), lerp(from.b, to.b)};
}

std::string heatmap_svg(const ValueStructureMatrix& m) {
  const auto k = m.value_ids.size();
  constexpr int cell = 48;
  constexpr int left = 130;
  constexpr int top = 130;
  const int width = left + static_cast<int>(k) * cell + 20;
  const int height = top + static_cast<int>(k) * cell + 20;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<title>Value vector cosine similarity, layer " << m.layer << "</title>\n";
  svg << "<style>text{font-family:sans-serif;font-size:11px}"
         ".value{text-anchor:middle;dominant-baseline:central}</style>\n";
  for (std::size_t i = 0; i < k; ++i) {
    const int y = top + static_cast<int>(i) * cell;
    svg << "<text class=\"label row\" x=\"" << left - 6 << "\" y=\"" << y + cell / 2
        << "\" text-anchor=\"end\" dominant-baseline=\"central\">" << xml_escape(m.value_ids[i])
        << "</text>\n";
  }
  for (std::size_t j = 0; j < k; ++j) {
    const int x = left + static_cast<int>(j) * cell + cell / 2;
    svg << "<text class=\"label col\" x=\"" << x << "\" y=\"" << top - 6
        << "\" transform=\"rotate(-45 " << x << ' ' << top - 6 << ")\">"
        << xml_escape(m.value_ids[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double value = m.matrix[i][j];
      const int x = left + static_cast<int>(j) * cell;
      const int y = top + static_cast<int>(i) * cell;
      svg << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << hex(diverging_color(value)) << "\"/>\n";
      char label[16];
      std::snprintf(label, sizeof label, "%.2f", value);
      const char* ink = std::abs(value) > 0.6 ? "#ffffff" : "#000000";
      svg << "<text class=\"value\" x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2
          << "\" fill=\"" << ink << "\">" << label << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

void render_heatmap(const ValueStructureMatrix& m, const std::filesystem::path& path) {
  atomic_write(path, heatmap_svg(m));
}

// ---------------------------------------------------------------------------
// Word statistics
// ---------------------------------------------------------------------------

const StopwordList& default_stopwords() {
  static const StopwordList list{
      "conva-en-stop-v1",
      {"a",       "about",   "above",   "after",   "again",  "against", "all",     "am",
       "an",      "and",     "any",     "are",     "as",     "at",      "be",      "because",
       "been",    "before",  "being",   "below",   "between", "both",   "but",     "by",
       "can",     "could",   "did",     "do",      "does",   "doing",   "down",    "during",
       "each",    "even",    "ever",    "every",   "few",    "for",     "from",    "further",
       "had",     "has",     "have",    "having",  "he",     "her",     "here",    "hers",
       "herself", "him",     "himself", "his",     "how",    "however", "if",      "in",
       "into",    "is",      "it",      "its",     "itself", "just",    "may",     "me",
       "might",   "more",    "most",    "must",    "my",     "myself",  "no",      "nor",
       "not",     "now",     "of",      "off",     "on",     "once",    "one",     "only",
       "or",      "other",   "our",     "ours",    "ourselves", "out",  "over",    "own",
       "same",    "shall",   "she",     "should",  "so",     "some",    "such",    "than",
       "that",    "the",     "their",   "theirs",  "them",   "themselves", "then", "there",
       "these",   "they",    "this",    "those",   "through", "to",     "too",     "under",
       "until",   "up",      "upon",    "us",      "very",   "was",     "we",      "were",
       "what",    "when",    "where",   "which",   "while",  "who",     "whom",    "why",
       "will",    "with",    "would",   "yet",     "you",    "your",    "yours",   "yourself",
       "yourselves"}};
  return list;
}

StopwordList no_stopwords() { return {"none", {}}; }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 2) tokens.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
      current += static_cast<char>(c | 0x20);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

namespace {

std::map<std::string, std::size_t> count_words(std::span<const std::string> texts,
                                               const std::set<std::string>& stop) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    for (auto& tok : tokenize(t)) {
      if (!stop.contains(tok)) ++counts[tok];
    }
  }
  return counts;
}

void rank(std::vector<WordCount>& words) {
  std::sort(words.begin(), words.end(), [](const WordCount& a, const WordCount& b) {
    return a.count != b.count ? a.count > b.count : a.word < b.word;
  });
}

std::vector<WordCount> top(const std::map<std::string, std::size_t>& counts, std::size_t k) {
  std::vector<WordCount> words;
  words.reserve(counts.size());
  for (const auto& [w, c] : counts) words.push_back({w, c});
  rank(words);
  if (words.size() > k) words.resize(k);
  return words;
}

}  // namespace

WordStats word_stats(std::span<const std::string> positive_texts,
                     std::span<const std::string> negative_texts, std::size_t top_k,
                     const StopwordList& stopwords) {
  if (top_k < 1) throw Error(ErrorKind::kPrecondition, "top_k must be at least 1");
  if (positive_texts.empty() || negative_texts.empty()) {
    throw Error(ErrorKind::kPrecondition, "word_stats needs non-empty positive and negative corpora");
  }
  const std::set<std::string> stop(stopwords.words.begin(), stopwords.words.end());
  const auto pos_counts = count_words(positive_texts, stop);
  const auto neg_counts = count_words(negative_texts, stop);
  const auto pos_top = top(pos_counts, top_k);
  const auto neg_top = top(neg_counts, top_k);

  std::set<std::string> neg_set;
  for (const auto& w : neg_top) neg_set.insert(w.word);
  std::set<std::string> pos_set;
  for (const auto& w : pos_top) pos_set.insert(w.word);

  auto lookup = [](const std::map<std::string, std::size_t>& m, const std::string& w) {
    const auto it = m.find(w);
    return it == m.end() ? std::size_t{0} : it->second;
  };

  WordStats stats;
  stats.top_k = top_k;
  stats.stopword_list_id = stopwords.id;
  for (const auto& w : pos_top) {
    if (neg_set.contains(w.word)) {
      stats.common.push_back({w.word, w.count + lookup(neg_counts, w.word)});
    } else {
      stats.positive_unique.push_back(w);
    }
  }
  for (const auto& w : neg_top) {
    if (!pos_set.contains(w.word)) stats.negative_unique.push_back(w);
  }
  rank(stats.common);
  return stats;
}

std::string word_stats_to_json(const WordStats& s) {
  auto list = [](const std::vector<WordCount>& words) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& w : words) arr.push_back({{"word", w.word}, {"count", w.count}});
    return arr;
  };
  nlohmann::json doc = {{"format_version", 1},
                        {"top_k", s.top_k},
                        {"stopword_list_id", s.stopword_list_id},
                        {"positive_unique", list(s.positive_unique)},
                        {"negative_unique", list(s.negative_unique)},
                        {"common", list(s.common)},
                        {"counts",
                         {{"positive_unique", s.positive_unique.size()},
                          {"negative_unique", s.negative_unique.size()},
                          {"common", s.common.size()}}}};
  return doc.dump(1) + "\n";
}

}  // namespace conva::analysis
