#include <doctest.h>

#include "conva/error.hpp"
#include "conva/eval_prompts.hpp"

using namespace conva;
using namespace conva::eval;

TEST_CASE("value table") {
  CHECK(value_table().size() == 10);
  const auto* security = find_value("security");
  REQUIRE(security != nullptr);
  CHECK(security->p0 == 0.975);
  CHECK(security->g0 == 0.2);
  CHECK(find_value("achievement")->g0 == 0.6);
  CHECK(find_value("stimulation")->g0 == 0.02);
  CHECK(find_value("wisdom") == nullptr);
  for (const auto& v : value_table()) {
    CHECK(v.p0 > 0.0);
    CHECK(v.p0 < 1.0);
    CHECK(v.g0 >= 0.0);
    CHECK(v.g0 <= 1.0);
    CHECK_FALSE(v.description.empty());
  }
}

TEST_CASE("csr prompt substitutes every slot") {
  const auto prompt = render_csr_prompt("security", "Should I lock the door?", "Yes, always.");
  CHECK(prompt.find("\"security\"") != std::string::npos);
  CHECK(prompt.find("safety, harmony, and stability of society, of relationships, and of self") !=
        std::string::npos);
  CHECK(prompt.find("Human: \"Should I lock the door?\"") != std::string::npos);
  CHECK(prompt.find("Bob: \"Yes, always.\"") != std::string::npos);
  CHECK(prompt.find("high-security") != std::string::npos);
  CHECK(prompt.find('{') == std::string::npos);
  CHECK_THROWS_AS(render_csr_prompt("wisdom", "q", "a"), Error);
}

TEST_CASE("user text is never expanded as a placeholder") {
  const auto prompt = render_csr_prompt("power", "what is {answer}?", "{question} {basic_value}");
  CHECK(prompt.find("Human: \"what is {answer}?\"") != std::string::npos);
  CHECK(prompt.find("Bob: \"{question} {basic_value}\"") != std::string::npos);
}

TEST_CASE("fr prompt") {
  const auto prompt = render_fr_prompt("I am fine");
  CHECK(prompt.find("Bob: \"I am fine\"") != std::string::npos);
  CHECK(prompt.find("obvious grammatical problems") != std::string::npos);
}

TEST_CASE("judge replies") {
  CHECK(parse_judge_reply(JudgeMode::kControlSuccess, "Yes"));
  CHECK_FALSE(parse_judge_reply(JudgeMode::kControlSuccess, "  \"No\". Bob prefers change."));
  CHECK(parse_judge_reply(JudgeMode::kFluency, "**True**"));
  CHECK_FALSE(parse_judge_reply(JudgeMode::kFluency, "False. Broken grammar."));
  CHECK_THROWS_AS(parse_judge_reply(JudgeMode::kControlSuccess, "Maybe"), Error);
  CHECK_THROWS_AS(parse_judge_reply(JudgeMode::kControlSuccess, "True"), Error);
  CHECK_THROWS_AS(parse_judge_reply(JudgeMode::kFluency, "Yes"), Error);
  CHECK_THROWS_AS(parse_judge_reply(JudgeMode::kControlSuccess, "Yesterday"), Error);
  CHECK_THROWS_AS(parse_judge_reply(JudgeMode::kControlSuccess, ""), Error);
  CHECK(parse_mode("csr") == JudgeMode::kControlSuccess);
  CHECK_FALSE(parse_mode("xyz").has_value());
}
