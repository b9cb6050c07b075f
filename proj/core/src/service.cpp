#include "conva/service.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <semaphore>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "conva/error.hpp"
#include "conva/fs_util.hpp"
#include "conva/logging.hpp"
#include "conva/probe_trainer.hpp"

namespace conva::service {
namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

gate::FailureMode parse_failure_mode(const std::string& s) {
  if (s == "closed" || s == "fail_closed") return gate::FailureMode::kFailClosed;
  if (s == "open" || s == "fail_open") return gate::FailureMode::kFailOpen;
  throw Error(ErrorKind::kPrecondition, "gate_failure must be 'closed' or 'open', got '" + s + "'");
}

// Every value arrives as a string so JSON and key=value share one path.
void set_key(ServiceConfig& c, const std::string& key, const std::string& value) {
  auto to_size = [&](const std::string& v) -> std::size_t {
    try {
      std::size_t used = 0;
      const auto n = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kPrecondition, "config key '" + key + "' expects an integer, got '" + v + "'");
    }
  };
  auto to_double = [&](const std::string& v) -> double {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw Error(ErrorKind::kPrecondition, "config key '" + key + "' expects a number, got '" + v + "'");
    }
  };

  if (key == "host") c.host = value;
  else if (key == "port") c.port = static_cast<int>(to_size(value));
  else if (key == "store_dir") c.store_dir = value;
  else if (key == "max_body_bytes") c.max_body_bytes = to_size(value);
  else if (key == "max_in_flight") c.max_in_flight = to_size(value);
  else if (key == "log_level") c.log_level = value;
  else if (key == "gate_backend") c.gate_backend = value;
  else if (key == "gate_constant") c.gate_constant = to_double(value);
  else if (key == "gate_keywords") c.gate_keywords = split_list(value);
  else if (key == "gate_url") c.gate_url = value;
  else if (key == "gate_timeout_ms") c.gate_timeout = std::chrono::milliseconds(to_size(value));
  else if (key == "gate_max_in_flight") c.gate_max_in_flight = to_size(value);
  else if (key == "gate_failure") c.gate_failure = parse_failure_mode(value);
  else throw Error(ErrorKind::kPrecondition, "unknown config key '" + key + "'");
}

}  // namespace

ServiceConfig parse_config(std::string_view text) {
  ServiceConfig c;
  const auto body = trim(text);
  if (!body.empty() && body.front() == '{') {
    json doc;
    try {
      doc = json::parse(body);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kFormat, std::string("malformed JSON config: ") + e.what());
    }
    for (const auto& [key, value] : doc.items()) {
      if (value.is_string()) {
        set_key(c, key, value.get<std::string>());
      } else if (value.is_array()) {
        std::string joined;
        for (const auto& item : value) {
          if (!joined.empty()) joined += ',';
          joined += item.is_string() ? item.get<std::string>() : item.dump();
        }
        set_key(c, key, joined);
      } else {
        set_key(c, key, value.dump());
      }
    }
    return c;
  }

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kFormat, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    set_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

ServiceConfig load_config(const fs::path& path) { return parse_config(read_text(path)); }

void apply_env_overrides(ServiceConfig& config) {
  const char* addr = std::getenv("CONVA_STEER_ADDR");
  if (!addr || !*addr) return;
  const std::string s(addr);
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) {
    config.host = s;
    return;
  }
  if (colon > 0) config.host = s.substr(0, colon);
  const auto port = s.substr(colon + 1);
  if (!port.empty()) {
    try {
      config.port = std::stoi(port);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kPrecondition, "CONVA_STEER_ADDR has an invalid port: '" + s + "'");
    }
  }
}

std::size_t embedding_body_bytes(std::size_t dim) {
  // Up to 24 characters per double plus a separator, and some framing.
  return dim * 25 + 64;
}

void validate(const ServiceConfig& c, std::size_t max_loaded_dim) {
  if (c.port < 1 || c.port > 65535) {
    throw Error(ErrorKind::kPrecondition, "port must lie in [1, 65535], got " + std::to_string(c.port));
  }
  if (c.max_in_flight == 0) throw Error(ErrorKind::kPrecondition, "max_in_flight must be positive");
  if (c.max_body_bytes < embedding_body_bytes(max_loaded_dim)) {
    throw Error(ErrorKind::kPrecondition,
                "max_body_bytes " + std::to_string(c.max_body_bytes) +
                    " cannot hold one embedding of dimension " + std::to_string(max_loaded_dim));
  }
  log::parse_level(c.log_level);
}

std::unique_ptr<gate::Backend> make_gate_backend(const ServiceConfig& c) {
  if (c.gate_backend == "constant") return std::make_unique<gate::ConstantBackend>(c.gate_constant);
  if (c.gate_backend == "keywords") return std::make_unique<gate::KeywordBackend>(c.gate_keywords);
  if (c.gate_backend == "remote") {
    return std::make_unique<gate::RemoteBackend>(
        gate::RemoteOptions{c.gate_url, c.gate_max_in_flight, c.gate_timeout});
  }
  throw Error(ErrorKind::kPrecondition, "unknown gate backend '" + c.gate_backend + "'");
}

std::vector<io::LoadedValue> load_store_dir(const fs::path& dir) {
  std::vector<io::LoadedValue> values;
  if (dir.empty()) return values;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorKind::kIo, "probe store directory " + dir.string() + " does not exist");
  }
  std::vector<fs::path> plans;
  if (fs::exists(dir / "plan.json")) plans.push_back(dir / "plan.json");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "plan.json")) {
      plans.push_back(entry.path() / "plan.json");
    }
  }
  std::sort(plans.begin(), plans.end());
  for (const auto& p : plans) {
    values.push_back(io::load_value(p));
    log::info("loaded value", {{"value_id", values.back().plan_file.plan.value_id},
                               {"plan", p.string()}});
  }
  return values;
}

// ---------------------------------------------------------------------------
// Request handling
// ---------------------------------------------------------------------------

namespace {

Response error_response(int status, std::string_view kind, std::string_view message) {
  return {status, json{{"error", kind}, {"message", message}}};
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kPrecondition:
    case ErrorKind::kDimension:
    case ErrorKind::kFormat:
    case ErrorKind::kNumeric: return 400;
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kPlan: return 422;
    case ErrorKind::kGateUnavailable: return 502;
    default: return 500;
  }
}

}  // namespace

SteeringService::SteeringService(std::vector<io::LoadedValue> values,
                                 std::shared_ptr<const gate::Backend> gate_backend,
                                 gate::FailureMode failure_mode, std::size_t max_body_bytes)
    : gate_backend_(std::move(gate_backend)),
      failure_mode_(failure_mode),
      max_body_bytes_(max_body_bytes),
      started_(std::chrono::steady_clock::now()) {
  for (auto& lv : values) {
    const auto id = lv.plan_file.plan.value_id;
    steer::PlanExecutor executor(lv.plan_file.plan, lv.probes.entries, lv.vectors.vectors);
    if (!values_.emplace(id, Value{std::move(lv), std::move(executor)}).second) {
      throw Error(ErrorKind::kPlan, "value '" + id + "' loaded twice");
    }
  }
}

std::size_t SteeringService::max_dim() const noexcept {
  std::size_t d = 0;
  for (const auto& [_, v] : values_) d = std::max(d, v.loaded.probes.dim);
  return d;
}

Response SteeringService::handle(std::string_view method, std::string_view path,
                                 std::string_view body) const {
  if (body.size() > max_body_bytes_) {
    return error_response(413, "payload_too_large", "request body exceeds max_body_bytes");
  }
  const bool get = method == "GET";
  const bool post = method == "POST";
  if (path == "/v1/values") return get ? values() : error_response(405, "method_not_allowed", "use GET");
  if (path == "/v1/health") return get ? health() : error_response(405, "method_not_allowed", "use GET");
  if (path != "/v1/gate" && path != "/v1/steer") {
    return error_response(404, "not_found", "no such endpoint");
  }
  if (!post) return error_response(405, "method_not_allowed", "use POST");

  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception& e) {
    return error_response(400, "bad_request", std::string("malformed JSON: ") + e.what());
  }
  if (!request.is_object()) return error_response(400, "bad_request", "expected a JSON object");
  return path == "/v1/gate" ? gate(request) : steer(request);
}

Response SteeringService::values() const {
  json list = json::array();
  for (const auto& [id, v] : values_) {
    const auto& plan = v.loaded.plan_file.plan;
    list.push_back({{"value_id", id},
                    {"model_id", v.loaded.plan_file.model_id},
                    {"selected_layers", plan.selected_layers},
                    {"p0", plan.p0},
                    {"g0", plan.g0},
                    {"dim", v.loaded.probes.dim}});
  }
  return {200, std::move(list)};
}

Response SteeringService::health() const {
  const auto up = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_);
  return {200, json{{"status", "ok"}, {"loaded_values", values_.size()}, {"uptime_seconds", up.count()}}};
}

Response SteeringService::gate(const json& request) const {
  if (!request.contains("value_id") || !request["value_id"].is_string()) {
    return error_response(400, "bad_request", "value_id must be a string");
  }
  if (!request.contains("text") || !request["text"].is_string()) {
    return error_response(400, "bad_request", "text must be a string");
  }
  const auto it = values_.find(request["value_id"].get<std::string>());
  if (it == values_.end()) return error_response(404, "unknown_value", "value is not loaded");
  if (!gate_backend_) return error_response(502, "gate_unavailable", "no gate backend configured");

  try {
    const auto d = gate::evaluate(*gate_backend_, request["text"].get<std::string>(),
                                  it->second.loaded.plan_file.plan.g0, failure_mode_);
    if (d.degraded) return {502, json{{"score", nullptr}, {"open", d.open}, {"degraded", true}}};
    return {200, json{{"score", *d.score}, {"open", d.open}}};
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), to_string(e.kind()), e.what());
  }
}

Response SteeringService::steer(const json& request) const {
  if (!request.contains("value_id") || !request["value_id"].is_string()) {
    return error_response(400, "bad_request", "value_id must be a string");
  }
  if (!request.contains("layer") || !request["layer"].is_number_unsigned()) {
    return error_response(400, "bad_request", "layer must be a non-negative integer");
  }
  if (!request.contains("gate_open") || !request["gate_open"].is_boolean()) {
    return error_response(400, "bad_request", "gate_open must be a boolean");
  }
  if (!request.contains("embeddings") || !request["embeddings"].is_array()) {
    return error_response(400, "bad_request", "embeddings must be an array of arrays");
  }
  const bool pass_through = request.value("pass_through", false);
  const auto it = values_.find(request["value_id"].get<std::string>());
  if (it == values_.end()) return error_response(404, "unknown_value", "value is not loaded");
  const auto& value = it->second;
  const auto layer = request["layer"].get<std::size_t>();
  const bool gate_open = request["gate_open"].get<bool>();

  std::vector<std::vector<double>> embeddings;
  try {
    embeddings = request["embeddings"].get<std::vector<std::vector<double>>>();
  } catch (const json::exception&) {
    return error_response(400, "bad_request", "embeddings must be an array of numeric arrays");
  }
  const auto dim = value.loaded.probes.dim;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != dim) {
      return error_response(400, "dimension_mismatch",
                            "embedding " + std::to_string(i) + " has length " +
                                std::to_string(embeddings[i].size()) + ", expected " +
                                std::to_string(dim));
    }
  }

  json results = json::array();
  json steered = json::array();
  if (!value.executor.is_selected(layer)) {
    if (!pass_through) {
      return error_response(422, "layer_not_selected",
                            "layer " + std::to_string(layer) + " is not in the control plan");
    }
    const auto* layer_probe = value.executor.probe(layer);
    for (const auto& e : embeddings) {
      json p = layer_probe ? json(probe::classify(*layer_probe, e)) : json(nullptr);
      results.push_back({{"epsilon", 0.0}, {"pre_p", p}, {"post_p", p}, {"applied", false}});
      steered.push_back(e);
    }
    return {200, json{{"results", std::move(results)}, {"steered", std::move(steered)}}};
  }

  try {
    const auto out = value.executor.apply_detailed(layer, embeddings, gate_open);
    for (const auto& r : out) {
      results.push_back({{"epsilon", r.epsilon},
                         {"pre_p", r.pre_probability},
                         {"post_p", r.post_probability},
                         {"applied", r.applied}});
      steered.push_back(r.steered);
    }
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), to_string(e.kind()), e.what());
  }
  return {200, json{{"results", std::move(results)}, {"steered", std::move(steered)}}};
}

// ---------------------------------------------------------------------------
// HTTP front end
// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  std::shared_ptr<const SteeringService> service;
  ServiceConfig config;
  httplib::Server server;
  std::counting_semaphore<> in_flight;
  std::thread thread;
  bool bound = false;

  Impl(std::shared_ptr<const SteeringService> s, const ServiceConfig& c)
      : service(std::move(s)),
        config(c),
        in_flight(static_cast<std::ptrdiff_t>(std::max<std::size_t>(c.max_in_flight, 1))) {
    const auto workers = std::max<std::size_t>(c.max_in_flight, 1);
    server.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
    server.set_payload_max_length(c.max_body_bytes);

    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
      in_flight.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight};
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = service->handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
      log::debug("request", {{"method", req.method},
                             {"path", req.path},
                             {"status", r.status},
                             {"ms", std::chrono::duration<double, std::milli>(
                                        std::chrono::steady_clock::now() - t0)
                                        .count()}});
    };
    server.Get(R"(/.*)", dispatch);
    server.Post(R"(/.*)", dispatch);
    server.Put(R"(/.*)", dispatch);
    server.Delete(R"(/.*)", dispatch);
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.status == 413) {
        res.set_content(json{{"error", "payload_too_large"},
                             {"message", "request body exceeds max_body_bytes"}}
                            .dump(),
                        "application/json");
      }
    });
  }
};

HttpServer::HttpServer(std::shared_ptr<const SteeringService> service, const ServiceConfig& config)
    : impl_(std::make_unique<Impl>(std::move(service), config)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& s = impl_->server;
  int port = impl_->config.port;
  if (port == 0) {
    port = s.bind_to_any_port(impl_->config.host);
  } else if (!s.bind_to_port(impl_->config.host, port)) {
    port = -1;
  }
  if (port <= 0) {
    throw Error(ErrorKind::kIo, "cannot bind " + impl_->config.host + ":" +
                                    std::to_string(impl_->config.port));
  }
  impl_->bound = true;
  log::info("listening", {{"host", impl_->config.host}, {"port", port}});
  return port;
}

void HttpServer::serve() {
  if (!impl_->bound) bind();
  impl_->server.listen_after_bind();
}

int HttpServer::start() {
  const int port = bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace conva::service
