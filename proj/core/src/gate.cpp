#include "conva/gate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <semaphore>
#include <set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "conva/analysis.hpp"
#include "conva/error.hpp"
#include "conva/logging.hpp"

namespace conva::gate {

namespace {

void require_text(std::string_view text) {
  const bool blank = std::all_of(text.begin(), text.end(),
                                 [](unsigned char c) { return std::isspace(c) != 0; });
  if (blank) throw Error(ErrorKind::kPrecondition, "gate input text is empty");
}

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

GateDecision decide(double score, double g0) {
  if (!in_unit_interval(score) || !in_unit_interval(g0)) {
    throw Error(ErrorKind::kPrecondition, "gate score and threshold must lie in [0,1]");
  }
  GateDecision d;
  d.score = score;
  d.g0 = g0;
  d.open = score > g0;
  return d;
}

ConstantBackend::ConstantBackend(double value) : value_(value) {
  if (!in_unit_interval(value)) {
    throw Error(ErrorKind::kPrecondition, "constant gate score must lie in [0,1]");
  }
}

double ConstantBackend::score(std::string_view text) const {
  require_text(text);
  return value_;
}

std::string ConstantBackend::id() const { return "constant:" + std::to_string(value_); }

KeywordBackend::KeywordBackend(std::vector<std::string> keywords) {
  std::set<std::string> unique;
  for (auto& k : keywords) {
    std::transform(k.begin(), k.end(), k.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!k.empty()) unique.insert(k);
  }
  keywords_.assign(unique.begin(), unique.end());
  if (keywords_.empty()) throw Error(ErrorKind::kPrecondition, "keyword gate needs at least one keyword");
}

double KeywordBackend::score(std::string_view text) const {
  require_text(text);
  const auto tokens = analysis::tokenize(text);
  const std::set<std::string> present(tokens.begin(), tokens.end());
  const auto matched = std::count_if(keywords_.begin(), keywords_.end(),
                                     [&](const std::string& k) { return present.contains(k); });
  return static_cast<double>(matched) / static_cast<double>(keywords_.size());
}

std::string KeywordBackend::id() const {
  return "keywords:" + std::to_string(keywords_.size());
}

struct RemoteBackend::Impl {
  RemoteOptions options;
  std::string origin;  // scheme://host[:port]
  std::string path;
  mutable std::counting_semaphore<> slots;

  explicit Impl(RemoteOptions opts)
      : options(std::move(opts)),
        slots(static_cast<std::ptrdiff_t>(std::max<std::size_t>(options.max_in_flight, 1))) {
    const auto& url = options.url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0) {
      throw Error(ErrorKind::kPrecondition, "remote gate URL must start with http://, got '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    origin = url.substr(0, path_start);
    path = path_start == std::string::npos ? "/" : url.substr(path_start);
  }
};

RemoteBackend::RemoteBackend(RemoteOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::id() const { return "remote:" + impl_->options.url; }

double RemoteBackend::score(std::string_view text) const {
  require_text(text);
  auto unavailable = [&](const std::string& why) {
    return Error(ErrorKind::kGateUnavailable, "gate backend " + impl_->options.url + ": " + why);
  };

  if (!impl_->slots.try_acquire_for(impl_->options.timeout)) {
    throw unavailable("too many in-flight requests");
  }
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{impl_->slots};

  httplib::Client client(impl_->origin);
  const auto timeout = impl_->options.timeout;
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const auto body = nlohmann::json{{"text", text}}.dump();
  const auto res = client.Post(impl_->path, body, "application/json");
  if (!res) throw unavailable("request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw unavailable("HTTP status " + std::to_string(res->status));
  }
  try {
    const auto doc = nlohmann::json::parse(res->body);
    const auto& s = doc.at("score");
    if (!s.is_number()) throw unavailable("score is not a number");
    const double value = s.get<double>();
    if (!in_unit_interval(value)) throw unavailable("score outside [0,1]");
    return value;
  } catch (const nlohmann::json::exception& e) {
    throw unavailable(std::string("malformed response body: ") + e.what());
  }
}

GateDecision evaluate(const Backend& backend, std::string_view text, double g0, FailureMode mode) {
  if (!in_unit_interval(g0)) throw Error(ErrorKind::kPrecondition, "g0 must lie in [0,1]");
  try {
    auto d = decide(backend.score(text), g0);
    d.backend_id = backend.id();
    return d;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kGateUnavailable) throw;
    GateDecision d;
    d.g0 = g0;
    d.degraded = true;
    d.open = mode == FailureMode::kFailOpen;
    d.backend_id = backend.id();
    log::warn("gate backend unavailable", {{"backend", d.backend_id},
                                           {"error", e.what()},
                                           {"fail_open", d.open}});
    return d;
  }
}

}  // namespace conva::gate
