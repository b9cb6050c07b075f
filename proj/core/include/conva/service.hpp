#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "conva/dataset_io.hpp"
#include "conva/gate.hpp"
#include "conva/steering.hpp"

namespace conva::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8088;
  std::filesystem::path store_dir;
  std::size_t max_body_bytes = 8u << 20;
  std::size_t max_in_flight = 64;
  std::string log_level = "info";

  // Gate backend: "constant", "keywords" or "remote".
  std::string gate_backend = "constant";
  double gate_constant = 1.0;
  std::vector<std::string> gate_keywords;
  std::string gate_url;
  std::chrono::milliseconds gate_timeout{2000};
  std::size_t gate_max_in_flight = 8;
  gate::FailureMode gate_failure = gate::FailureMode::kFailClosed;
};

/// Reads either a JSON object or key=value lines ('#' starts a comment).
/// Keys match the ServiceConfig field names.
ServiceConfig load_config(const std::filesystem::path& path);
ServiceConfig parse_config(std::string_view text);

/// CONVA_STEER_ADDR ("host", "host:port" or ":port") overrides the bind
/// address.
void apply_env_overrides(ServiceConfig& config);

/// Rough upper bound on the JSON size of one embedding of this dimension.
std::size_t embedding_body_bytes(std::size_t dim);

/// Port range and body-limit checks. Throws Error(kPrecondition).
void validate(const ServiceConfig& config, std::size_t max_loaded_dim);

std::unique_ptr<gate::Backend> make_gate_backend(const ServiceConfig& config);

/// Every plan.json directly in `dir` or one level below it.
std::vector<io::LoadedValue> load_store_dir(const std::filesystem::path& dir);

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// Request handling over immutable probe state. Safe to call concurrently.
class SteeringService {
 public:
  SteeringService(std::vector<io::LoadedValue> values,
                  std::shared_ptr<const gate::Backend> gate_backend,
                  gate::FailureMode failure_mode = gate::FailureMode::kFailClosed,
                  std::size_t max_body_bytes = 8u << 20);

  Response handle(std::string_view method, std::string_view path,
                  std::string_view body) const;

  Response values() const;
  Response health() const;
  Response gate(const nlohmann::json& request) const;
  Response steer(const nlohmann::json& request) const;

  std::size_t loaded_values() const noexcept { return values_.size(); }
  std::size_t max_dim() const noexcept;
  std::size_t max_body_bytes() const noexcept { return max_body_bytes_; }

 private:
  struct Value {
    io::LoadedValue loaded;
    steer::PlanExecutor executor;
  };

  std::map<std::string, Value, std::less<>> values_;
  std::shared_ptr<const gate::Backend> gate_backend_;
  gate::FailureMode failure_mode_;
  std::size_t max_body_bytes_;
  std::chrono::steady_clock::time_point started_;
};

/// HTTP/1.1 front end. Bounds concurrent requests at max_in_flight and
/// rejects bodies above max_body_bytes with 413 before parsing them.
class HttpServer {
 public:
  HttpServer(std::shared_ptr<const SteeringService> service, const ServiceConfig& config);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind();
  /// Blocks until stop().
  void serve();
  /// bind() + serve() on a background thread.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace conva::service
