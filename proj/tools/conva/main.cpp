#include <cstdio>
#include <iostream>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "conva/error.hpp"
#include "conva/logging.hpp"

namespace {

int exit_code_for(conva::ErrorKind kind) {
  using conva::ErrorKind;
  switch (kind) {
    case ErrorKind::kIo: return conva::cli::kExitIo;
    case ErrorKind::kPlan: return conva::cli::kExitPlan;
    default: return conva::cli::kExitGeneric;
  }
}

// One machine-parseable line on stderr.
int report(int code, const std::string& kind, const std::string& message) {
  const nlohmann::json line = {{"error", kind}, {"exit_code", code}, {"message", message}};
  std::cerr << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conva: value-vector probing and gated activation steering"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  conva::log::set_level(conva::log::Level::kWarn);
  app.add_option("--log-level", log_level, "Log level for structured stderr logs")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}))
      ->each([](const std::string& s) { conva::log::set_level(conva::log::parse_level(s)); })
      ->capture_default_str();

  conva::cli::register_train(app);
  conva::cli::register_steer(app);
  conva::cli::register_analyze(app);
  conva::cli::register_wordstats(app);
  conva::cli::register_serve(app);
  conva::cli::register_eval_render(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(conva::cli::kExitGeneric, "usage", e.what());
  } catch (const conva::cli::Failure& e) {
    return report(e.code(), e.kind(), e.what());
  } catch (const conva::Error& e) {
    return report(exit_code_for(e.kind()), conva::to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report(conva::cli::kExitGeneric, "internal", e.what());
  }
  return conva::cli::kExitOk;
}
