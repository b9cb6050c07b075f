#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>

#include "conva/error.hpp"
#include "conva/fs_util.hpp"
#include "conva/logging.hpp"
#include "conva/service.hpp"
#include "conva/steering.hpp"
#include "test_support.hpp"

using namespace conva;
using namespace conva::service;
using nlohmann::json;

namespace {

struct Fixture {
  conva::testing::TempDir dir;
  std::mt19937_64 rng{101};
  io::LoadedValue security, power;

  Fixture() {
    log::set_level(log::Level::kOff);
    security = conva::testing::write_random_value(dir.path(), "security", 8, 8, {1, 2}, 0.975, 0.2, rng);
    power = conva::testing::write_random_value(dir.path(), "power", 4, 6, {0}, 0.92, 0.06, rng);
  }
  ~Fixture() { log::set_level(log::Level::kWarn); }

  SteeringService make(double constant_score) const {
    return SteeringService(load_store_dir(dir.path()),
                           std::make_shared<gate::ConstantBackend>(constant_score));
  }
};

json steer_request(const std::string& value, std::size_t layer, bool gate,
                   const std::vector<std::vector<double>>& embeddings) {
  return {{"value_id", value}, {"layer", layer}, {"gate_open", gate}, {"embeddings", embeddings}};
}

}  // namespace

TEST_CASE("values are listed in id order") {
  Fixture f;
  const auto svc = f.make(1.0);
  const auto r = svc.handle("GET", "/v1/values", "");
  CHECK(r.status == 200);
  REQUIRE(r.body.size() == 2);
  CHECK(r.body[0]["value_id"] == "power");
  CHECK(r.body[1]["value_id"] == "security");
  CHECK(r.body[1]["selected_layers"] == json::array({1, 2}));
  CHECK(r.body[1]["p0"] == 0.975);
  CHECK(r.body[1]["dim"] == 8);
  CHECK(svc.max_dim() == 8);
}

TEST_CASE("gate endpoint") {
  Fixture f;
  const auto svc = f.make(1.0);
  auto r = svc.handle("POST", "/v1/gate", json{{"value_id", "security"}, {"text", "lock the door"}}.dump());
  CHECK(r.status == 200);
  CHECK(r.body["score"] == 1.0);
  CHECK(r.body["open"] == true);

  const auto equal = f.make(0.2);
  r = equal.handle("POST", "/v1/gate", json{{"value_id", "security"}, {"text", "x"}}.dump());
  CHECK(r.body["open"] == false);

  r = svc.handle("POST", "/v1/gate", json{{"value_id", "wisdom"}, {"text", "x"}}.dump());
  CHECK(r.status == 404);
  r = svc.handle("POST", "/v1/gate", json{{"value_id", "security"}, {"text", " "}}.dump());
  CHECK(r.status == 400);
}

TEST_CASE("gate endpoint reports degraded backends") {
  Fixture f;
  std::string dead_url;
  {
    httplib::Server s;
    dead_url = "http://127.0.0.1:" + std::to_string(s.bind_to_any_port("127.0.0.1")) + "/score";
  }
  auto remote = std::make_shared<gate::RemoteBackend>(
      gate::RemoteOptions{dead_url, 8, std::chrono::milliseconds(300)});
  SteeringService svc(load_store_dir(f.dir.path()), remote);
  const auto r = svc.handle("POST", "/v1/gate", json{{"value_id", "power"}, {"text", "x"}}.dump());
  CHECK(r.status == 502);
  CHECK(r.body["score"].is_null());
  CHECK(r.body["open"] == false);
  CHECK(r.body["degraded"] == true);
}

TEST_CASE("steer endpoint errors") {
  Fixture f;
  const auto svc = f.make(1.0);
  const std::vector<std::vector<double>> one{std::vector<double>(8, 0.0)};
  CHECK(svc.handle("POST", "/v1/steer", steer_request("wisdom", 1, true, one).dump()).status == 404);
  CHECK(svc.handle("POST", "/v1/steer", steer_request("security", 4, true, one).dump()).status == 422);
  CHECK(svc.handle("POST", "/v1/steer", steer_request("security", 1, true, {{1.0, 2.0}}).dump()).status == 400);
  CHECK(svc.handle("POST", "/v1/steer", "{not json").status == 400);
  CHECK(svc.handle("POST", "/v1/steer", "[1,2]").status == 400);
  CHECK(svc.handle("POST", "/v1/steer", json{{"value_id", "security"}}.dump()).status == 400);
  CHECK(svc.handle("GET", "/v1/steer", "").status == 405);
  CHECK(svc.handle("POST", "/v1/health", "").status == 405);
  CHECK(svc.handle("GET", "/nope", "").status == 404);

  SteeringService tiny(load_store_dir(f.dir.path()), std::make_shared<gate::ConstantBackend>(1.0),
                       gate::FailureMode::kFailClosed, 64);
  CHECK(tiny.handle("POST", "/v1/steer", steer_request("security", 1, true, one).dump()).status == 413);
}

TEST_CASE("pass-through layers return the input") {
  Fixture f;
  const auto svc = f.make(1.0);
  std::vector<std::vector<double>> batch{conva::testing::gaussian_vector(f.rng, 8)};
  auto req = steer_request("security", 4, true, batch);
  req["pass_through"] = true;
  const auto r = svc.handle("POST", "/v1/steer", req.dump());
  CHECK(r.status == 200);
  CHECK(r.body["steered"].get<std::vector<std::vector<double>>>() == batch);
  CHECK(r.body["results"][0]["epsilon"] == 0.0);
  CHECK(r.body["results"][0]["applied"] == false);
}

TEST_CASE("steer endpoint matches the library exactly") {
  Fixture f;
  const auto svc = f.make(1.0);
  std::uniform_int_distribution<int> count(0, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t layer = trial % 2 ? 1 : 2;
    const bool gate = trial % 5 != 0;
    std::vector<std::vector<double>> batch;
    for (int i = count(f.rng); i > 0; --i) batch.push_back(conva::testing::gaussian_vector(f.rng, 8, 0.7));

    // Serialize and parse the body as a client would.
    const auto r = svc.handle("POST", "/v1/steer", steer_request("security", layer, gate, batch).dump());
    REQUIRE(r.status == 200);
    const auto body = json::parse(r.body.dump());

    const auto& probe = f.security.probes.entries[layer];
    const auto& vec = f.security.vectors.vectors[layer == 1 ? 0 : 1];
    const auto expected = steer::steer_layer_batch(probe, vec, batch, 0.975, gate);
    REQUIRE(body["results"].size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(body["results"][i]["epsilon"].get<double>() == expected[i].epsilon);
      CHECK(body["results"][i]["pre_p"].get<double>() == expected[i].pre_probability);
      CHECK(body["results"][i]["post_p"].get<double>() == expected[i].post_probability);
      CHECK(body["steered"][i].get<std::vector<double>>() == expected[i].steered);
    }
  }
}

TEST_CASE("health") {
  Fixture f;
  const auto r = f.make(1.0).health();
  CHECK(r.body["status"] == "ok");
  CHECK(r.body["loaded_values"] == 2);
  CHECK(r.body["uptime_seconds"].get<double>() >= 0.0);
}

TEST_CASE("store directory errors") {
  conva::testing::TempDir empty;
  CHECK(load_store_dir(empty.path()).empty());
  CHECK_THROWS_AS(load_store_dir(empty / "missing"), Error);
}

TEST_CASE("http server handles concurrent clients and rejects large bodies") {
  Fixture f;
  auto svc = std::make_shared<const SteeringService>(load_store_dir(f.dir.path()),
                                                     std::make_shared<gate::ConstantBackend>(1.0));
  ServiceConfig c;
  c.port = 0;
  c.max_in_flight = 4;
  c.max_body_bytes = 4096;
  HttpServer server(svc, c);
  const int port = server.start();
  REQUIRE(port > 0);

  std::atomic<int> ok{0};
  std::vector<std::thread> clients;
  for (int t = 0; t < 8; ++t) {
    clients.emplace_back([&] {
      httplib::Client client("127.0.0.1", port);
      for (int i = 0; i < 10; ++i) {
        const auto res = client.Get("/v1/health");
        if (res && res->status == 200 && json::parse(res->body)["status"] == "ok") ++ok;
      }
    });
  }
  for (auto& t : clients) t.join();
  CHECK(ok == 80);

  httplib::Client client("127.0.0.1", port);
  const std::vector<std::vector<double>> one{std::vector<double>(8, 0.25)};
  auto res = client.Post("/v1/steer", steer_request("security", 1, true, one).dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["results"][0]["applied"] == true);

  res = client.Post("/v1/steer", std::string(10000, ' '), "application/json");
  REQUIRE(res);
  CHECK(res->status == 413);
  server.stop();
}

TEST_CASE("config parsing") {
  const auto kv = parse_config(
      "# service\nhost = 0.0.0.0\nport=9000\nmax_in_flight = 3\ngate_backend=keywords\n"
      "gate_keywords = safety, order\ngate_failure=open\ngate_timeout_ms=500\n");
  CHECK(kv.host == "0.0.0.0");
  CHECK(kv.port == 9000);
  CHECK(kv.max_in_flight == 3);
  CHECK(kv.gate_keywords == std::vector<std::string>{"safety", "order"});
  CHECK(kv.gate_failure == gate::FailureMode::kFailOpen);
  CHECK(kv.gate_timeout == std::chrono::milliseconds(500));

  const auto js = parse_config(R"({"port": 7000, "gate_constant": 0.3})");
  CHECK(js.port == 7000);
  CHECK(js.gate_constant == 0.3);

  CHECK_THROWS_AS(parse_config("bogus_key = 1\n"), Error);
  CHECK_THROWS_AS(parse_config("port = abc\n"), Error);

  ServiceConfig bad;
  bad.port = 70000;
  CHECK_THROWS_AS(validate(bad, 8), Error);
  ServiceConfig small;
  small.max_body_bytes = 10;
  CHECK_THROWS_AS(validate(small, 4096), Error);
}

TEST_CASE("bind address can come from the environment") {
  ServiceConfig c;
  ::setenv("CONVA_STEER_ADDR", "10.1.2.3:7777", 1);
  apply_env_overrides(c);
  CHECK(c.host == "10.1.2.3");
  CHECK(c.port == 7777);
  ::setenv("CONVA_STEER_ADDR", ":9999", 1);
  apply_env_overrides(c);
  CHECK(c.host == "10.1.2.3");
  CHECK(c.port == 9999);
  ::setenv("CONVA_STEER_ADDR", "localhost", 1);
  apply_env_overrides(c);
  CHECK(c.host == "localhost");
  CHECK(c.port == 9999);
  ::unsetenv("CONVA_STEER_ADDR");
}
