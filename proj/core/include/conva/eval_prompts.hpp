#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace conva::eval {

/// One of the ten basic values with its description and default steering
/// hyperparameters (tuned for a 7B chat model).
struct BasicValue {
  std::string_view id;
  std::string_view description;
  double p0;
  double g0;
};

std::span<const BasicValue> value_table();
/// nullptr for unknown ids.
const BasicValue* find_value(std::string_view id);

enum class JudgeMode { kControlSuccess, kFluency };

std::optional<JudgeMode> parse_mode(std::string_view name);

/// Control-success judge prompt. Throws Error(kNotFound) for unknown values.
std::string render_csr_prompt(std::string_view value_id, std::string_view question,
                              std::string_view answer);
std::string render_fr_prompt(std::string_view answer);

/// "Yes"/"No" for control success, "True"/"False" for fluency. The label must
/// lead the reply; a reason may follow. Anything else throws Error(kFormat).
bool parse_judge_reply(JudgeMode mode, std::string_view reply);

}  // namespace conva::eval
