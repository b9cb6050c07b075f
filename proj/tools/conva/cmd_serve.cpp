#include <csignal>
#include <memory>

#include <pthread.h>

#include "commands.hpp"
#include "conva/error.hpp"
#include "conva/logging.hpp"
#include "conva/service.hpp"

namespace conva::cli {
namespace fs = std::filesystem;

namespace {

struct ServeFlags {
  fs::path config;
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<std::string> store_dir;
  std::optional<std::size_t> max_body;
  std::optional<std::size_t> max_in_flight;
  std::optional<std::string> gate_backend;
  std::optional<double> gate_constant;
  std::vector<std::string> gate_keywords;
  std::optional<std::string> gate_url;
  bool gate_fail_open = false;
};

void run(const ServeFlags& f, const std::string& log_level_flag) {
  service::ServiceConfig c = f.config.empty() ? service::ServiceConfig{} : service::load_config(f.config);
  if (f.host) c.host = *f.host;
  if (f.port) c.port = *f.port;
  if (f.store_dir) c.store_dir = *f.store_dir;
  if (f.max_body) c.max_body_bytes = *f.max_body;
  if (f.max_in_flight) c.max_in_flight = *f.max_in_flight;
  if (f.gate_backend) c.gate_backend = *f.gate_backend;
  if (f.gate_constant) c.gate_constant = *f.gate_constant;
  if (!f.gate_keywords.empty()) c.gate_keywords = f.gate_keywords;
  if (f.gate_url) c.gate_url = *f.gate_url;
  if (f.gate_fail_open) c.gate_failure = gate::FailureMode::kFailOpen;
  if (!log_level_flag.empty()) c.log_level = log_level_flag;
  service::apply_env_overrides(c);
  log::set_level(log::parse_level(c.log_level));

  auto values = service::load_store_dir(c.store_dir);
  std::shared_ptr<const gate::Backend> backend = service::make_gate_backend(c);
  auto svc = std::make_shared<const service::SteeringService>(std::move(values), backend,
                                                               c.gate_failure, c.max_body_bytes);
  service::validate(c, svc->max_dim());

  // Block termination signals before any worker thread exists, then wait for
  // them here.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::HttpServer server(svc, c);
  server.start();
  log::info("serving", {{"loaded_values", svc->loaded_values()}, {"gate", backend->id()}});
  int sig = 0;
  sigwait(&signals, &sig);
  log::info("shutting down", {{"signal", sig}});
  server.stop();
}

}  // namespace

void register_serve(CLI::App& app) {
  auto f = std::make_shared<ServeFlags>();
  auto level = std::make_shared<std::string>();
  auto* cmd = app.add_subcommand("serve", "Run the HTTP/JSON steering sidecar");
  cmd->add_option("--config", f->config, "Service config file (key=value lines or JSON)");
  cmd->add_option("--host", f->host, "Bind address (CONVA_STEER_ADDR overrides)");
  cmd->add_option("--port", f->port, "Bind port")->check(CLI::Range(1, 65535));
  cmd->add_option("--store-dir", f->store_dir,
                  "Directory of trained values (plan.json at the top or one level below)");
  cmd->add_option("--max-body", f->max_body, "Maximum request body in bytes (default 8 MiB)");
  cmd->add_option("--max-in-flight", f->max_in_flight, "Concurrent request bound (default 64)");
  cmd->add_option("--service-log-level", *level, "Service log level (overrides the config file)")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));
  cmd->add_option("--gate-backend", f->gate_backend, "constant, keywords or remote")
      ->check(CLI::IsMember({"constant", "keywords", "remote"}));
  cmd->add_option("--gate-constant", f->gate_constant, "Score returned by the constant backend")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--gate-keywords", f->gate_keywords, "Keywords for the keyword backend")->delimiter(',');
  cmd->add_option("--gate-url", f->gate_url, "Scoring endpoint for the remote backend");
  cmd->add_flag("--gate-fail-open", f->gate_fail_open,
                "Open the gate (instead of closing it) when the remote backend fails");
  cmd->callback([f, level] { run(*f, *level); });
}

}  // namespace conva::cli
