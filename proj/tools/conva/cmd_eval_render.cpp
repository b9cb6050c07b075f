#include <filesystem>
#include <iostream>
#include <memory>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "conva/error.hpp"
#include "conva/eval_prompts.hpp"
#include "conva/fs_util.hpp"

namespace conva::cli {
namespace fs = std::filesystem;

namespace {

struct EvalOptions {
  std::string mode;
  std::string value_id;
  fs::path question;
  fs::path answer;
  fs::path reply;
  fs::path out;
};

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

void emit(const fs::path& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    atomic_write(out, text);
  }
}

void run(const EvalOptions& o) {
  const auto mode = *eval::parse_mode(o.mode);

  if (!o.reply.empty()) {
    const auto reply = read_text(o.reply);
    const bool label = eval::parse_judge_reply(mode, reply);
    const nlohmann::json doc = {{"mode", o.mode}, {"label", label}};
    emit(o.out, doc.dump() + "\n");
    return;
  }

  if (o.answer.empty()) throw Failure(kExitGeneric, "usage", "--answer is required to render a prompt");
  const auto answer = strip_trailing_newlines(read_text(o.answer));
  std::string prompt;
  if (mode == eval::JudgeMode::kControlSuccess) {
    if (o.value_id.empty()) throw Failure(kExitGeneric, "usage", "--value is required for csr");
    if (o.question.empty()) throw Failure(kExitGeneric, "usage", "--question is required for csr");
    prompt = eval::render_csr_prompt(o.value_id, strip_trailing_newlines(read_text(o.question)), answer);
  } else {
    prompt = eval::render_fr_prompt(answer);
  }
  emit(o.out, prompt);
}

}  // namespace

void register_eval_render(CLI::App& app) {
  auto opts = std::make_shared<EvalOptions>();
  auto* cmd = app.add_subcommand(
      "eval-render", "Render a judge prompt (control success or fluency), or parse a judge reply");
  cmd->set_config("--config", "", "Optional key=value file supplying flag defaults");
  cmd->add_option("--mode", opts->mode, "csr (control success) or fr (fluency)")
      ->required()
      ->check(CLI::IsMember({"csr", "fr"}));
  cmd->add_option("--value", opts->value_id, "Basic value id, e.g. security (csr only)");
  cmd->add_option("--question", opts->question, "File with the evaluation question (csr only)");
  cmd->add_option("--answer", opts->answer, "File with the model's answer");
  cmd->add_option("--reply", opts->reply,
                  "Parse this judge reply file instead of rendering (Yes/No for csr, True/False for fr)");
  cmd->add_option("--out", opts->out, "Output path (stdout when omitted)");
  cmd->callback([opts] { run(*opts); });
}

}  // namespace conva::cli
