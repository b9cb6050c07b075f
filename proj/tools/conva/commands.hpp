#pragma once

#include <stdexcept>
#include <string>

#include <CLI11.hpp>

namespace conva::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitGeneric = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitPlan = 3;
inline constexpr int kExitInsufficientInput = 4;

/// Raised by a subcommand that wants a specific exit code.
class Failure : public std::runtime_error {
 public:
  Failure(int code, std::string kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(std::move(kind)) {}
  int code() const noexcept { return code_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  int code_;
  std::string kind_;
};

void register_train(CLI::App& app);
void register_steer(CLI::App& app);
void register_analyze(CLI::App& app);
void register_wordstats(CLI::App& app);
void register_serve(CLI::App& app);
void register_eval_render(CLI::App& app);

}  // namespace conva::cli
