#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "conva/analysis.hpp"
#include "conva/error.hpp"
#include "conva/fs_util.hpp"
#include "test_support.hpp"

using namespace conva;
using namespace conva::analysis;

namespace {

std::size_t count_of(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

std::vector<ValueVector> random_unit_vectors(std::mt19937_64& rng, std::size_t k, std::size_t d) {
  std::vector<ValueVector> vs;
  for (std::size_t i = 0; i < k; ++i) {
    auto v = conva::testing::gaussian_vector(rng, d);
    const auto n = std::sqrt(conva::testing::oracle_dot(v, v));
    for (auto& x : v) x = static_cast<double>(x / n);
    vs.push_back({"value" + std::to_string(i), 3, v});
  }
  return vs;
}

std::vector<std::string> words_of(const std::vector<WordCount>& wc) {
  std::vector<std::string> out;
  for (const auto& w : wc) out.push_back(w.word);
  return out;
}

}  // namespace

TEST_CASE("cosine examples") {
  const ValueVector a{"a", 0, {0.6, 0.8}}, b{"b", 0, {1.0, 0.0}}, c{"c", 0, {0.0, 1.0}};
  const auto same = cosine_matrix(std::vector{a, a});
  CHECK(same.matrix == std::vector<std::vector<double>>{{1, 1}, {1, 1}});
  CHECK(cosine_matrix(std::vector{b, c}).matrix[0][1] == 0.0);
  const auto m = cosine_matrix(std::vector{a, b});
  CHECK(m.matrix[0][1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(m.value_ids == std::vector<std::string>{"a", "b"});
}

TEST_CASE("cosine preconditions") {
  const ValueVector a{"a", 0, {0.6, 0.8}};
  CHECK_THROWS_AS(cosine_matrix(std::vector{a, ValueVector{"b", 1, {1.0, 0.0}}}), Error);
  CHECK_THROWS_AS(cosine_matrix(std::vector{a, ValueVector{"b", 0, {1.0, 0.0, 0.0}}}), Error);
  CHECK_THROWS_AS(cosine_matrix(std::vector{a, ValueVector{"b", 0, {2.0, 0.0}}}), Error);
}

TEST_CASE("cosine matrix is symmetric with unit diagonal and permutation equivariant") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const auto vs = random_unit_vectors(rng, 10, 64);
    const auto m = cosine_matrix(vs);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(m.matrix[i][i] == 1.0);
      for (std::size_t j = 0; j < 10; ++j) {
        CHECK(std::abs(m.matrix[i][j] - m.matrix[j][i]) <= 1e-12);
        if (i != j) {
          CHECK(std::abs(m.matrix[i][j] - static_cast<double>(conva::testing::oracle_dot(vs[i].v, vs[j].v))) < 1e-12);
        }
      }
    }
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ValueVector> permuted;
    for (auto p : perm) permuted.push_back(vs[p]);
    const auto pm = cosine_matrix(permuted);
    for (std::size_t i = 0; i < 10; ++i) {
      for (std::size_t j = 0; j < 10; ++j) {
        CHECK(std::abs(pm.matrix[i][j] - m.matrix[perm[i]][perm[j]]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("csv and json carry the exact matrix") {
  std::mt19937_64 rng(67);
  const auto m = cosine_matrix(random_unit_vectors(rng, 4, 8));
  const auto csv = matrix_to_csv(m);
  CHECK(csv.rfind("value0,value1,value2,value3\n", 0) == 0);
  CHECK(count_of(csv, "\n") == 5);

  const auto doc = nlohmann::json::parse(matrix_to_json(m));
  CHECK(doc["layer"] == 3);
  CHECK(doc["matrix"].get<std::vector<std::vector<double>>>() == m.matrix);

  // Parse the CSV back: shortest round-trip decimals reproduce every bit.
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  for (std::size_t i = 0; i < 4; ++i) {
    std::getline(in, line);
    std::istringstream row(line);
    std::string cell;
    for (std::size_t j = 0; j < 4; ++j) {
      std::getline(row, cell, ',');
      CHECK(std::stod(cell) == m.matrix[i][j]);
    }
  }
}

TEST_CASE("heatmap structure") {
  const ValueVector a{"a", 0, {0.6, 0.8}}, b{"b<&>", 0, {1.0, 0.0}};
  const auto svg = heatmap_svg(cosine_matrix(std::vector{a, b}));
  CHECK(count_of(svg, "<rect class=\"cell\"") == 4);
  CHECK(count_of(svg, "class=\"label row\"") == 2);
  CHECK(count_of(svg, "class=\"label col\"") == 2);
  CHECK(count_of(svg, ">0.60</text>") == 2);
  CHECK(count_of(svg, ">1.00</text>") == 2);
  CHECK(svg.find("b&lt;&amp;&gt;") != std::string::npos);
  CHECK(svg.find("b<&>") == std::string::npos);

  std::mt19937_64 rng(71);
  const auto big = heatmap_svg(cosine_matrix(random_unit_vectors(rng, 10, 16)));
  CHECK(count_of(big, "<rect class=\"cell\"") == 100);
  CHECK(count_of(big, "class=\"label ") == 20);
  CHECK(count_of(big, "<text class=\"value\"") == 100);

  conva::testing::TempDir dir;
  render_heatmap(cosine_matrix(std::vector{a, b}), dir / "h.svg");
  CHECK(read_text(dir / "h.svg") == svg);
}

TEST_CASE("diverging color scale") {
  CHECK(diverging_color(-1.0) == Rgb{59, 76, 192});
  CHECK(diverging_color(0.0) == Rgb{255, 255, 255});
  CHECK(diverging_color(1.0) == Rgb{180, 4, 38});
  CHECK(diverging_color(2.0) == diverging_color(1.0));
  const auto half = diverging_color(0.5);
  CHECK(half.r == 218);
  CHECK(half.g == 130);
  CHECK(half.b == 147);
}

TEST_CASE("tokenize") {
  CHECK(tokenize("Safe-family, a SECURE_home! x9y") == std::vector<std::string>{"safe", "family", "secure", "home"});
  CHECK(tokenize("").empty());
}

TEST_CASE("word stats toy corpus") {
  const std::vector<std::string> pos{"safe family", "secure family"}, neg{"free family"};
  const auto s = word_stats(pos, neg, 3, no_stopwords());
  CHECK(words_of(s.common) == std::vector<std::string>{"family"});
  CHECK(s.common[0].count == 3);
  CHECK(words_of(s.positive_unique) == std::vector<std::string>{"safe", "secure"});
  CHECK(words_of(s.negative_unique) == std::vector<std::string>{"free"});
  CHECK(s.stopword_list_id == "none");
  CHECK(s.top_k == 3);

  CHECK_THROWS_AS(word_stats(pos, neg, 0, no_stopwords()), Error);
  CHECK_THROWS_AS(word_stats({}, neg, 3, no_stopwords()), Error);
}

TEST_CASE("identical corpora have no unique words") {
  const std::vector<std::string> texts{"the family keeps the home safe", "order and stability at home"};
  const auto s = word_stats(texts, texts, 25, default_stopwords());
  CHECK(s.positive_unique.empty());
  CHECK(s.negative_unique.empty());
  CHECK_FALSE(s.common.empty());
  CHECK(s.stopword_list_id == "conva-en-stop-v1");
  for (const auto& w : s.common) CHECK(w.word != "the");
}

TEST_CASE("word stats lists partition the top-k union") {
  std::mt19937_64 rng(73);
  const std::vector<std::string> vocab{"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta",
                                       "theta", "iota", "kappa", "lambda", "mu"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), len(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> pos, neg;
    for (int i = 0; i < 5; ++i) {
      std::string p, n;
      for (std::size_t j = 0, m = len(rng); j < m; ++j) p += vocab[pick(rng)] + " ";
      for (std::size_t j = 0, m = len(rng); j < m; ++j) n += vocab[pick(rng)] + " ";
      pos.push_back(p);
      neg.push_back(n);
    }
    const std::size_t k = 1 + trial % 6;
    const auto s = word_stats(pos, neg, k, no_stopwords());
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto* list : {&s.positive_unique, &s.negative_unique, &s.common}) {
      for (const auto& w : *list) {
        seen.insert(w.word);
        ++total;
      }
    }
    CHECK(seen.size() == total);
    CHECK(total <= 2 * k);
    CHECK(s.positive_unique.size() + s.common.size() <= k);
    const auto again = word_stats(pos, neg, k, no_stopwords());
    CHECK(word_stats_to_json(again) == word_stats_to_json(s));
  }
}

TEST_CASE("word stats json") {
  const std::vector<std::string> pos{"safe family"}, neg{"free family"};
  const auto doc = nlohmann::json::parse(word_stats_to_json(word_stats(pos, neg, 25, no_stopwords())));
  CHECK(doc["top_k"] == 25);
  CHECK(doc["counts"]["common"] == 1);
  CHECK(doc["common"][0]["word"] == "family");
  CHECK(doc["common"][0]["count"] == 2);
}
