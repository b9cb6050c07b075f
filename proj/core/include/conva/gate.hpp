#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace conva::gate {

struct GateDecision {
  /// Empty when the backend failed.
  std::optional<double> score;
  double g0 = 0.0;
  bool open = false;
  bool degraded = false;
  std::string backend_id;
};

/// open iff score > g0. Both must lie in [0, 1].
GateDecision decide(double score, double g0);

class Backend {
 public:
  virtual ~Backend() = default;
  /// Relevance score in [0, 1]. Throws Error(kGateUnavailable) when the
  /// backend cannot answer and Error(kPrecondition) for blank text.
  virtual double score(std::string_view text) const = 0;
  virtual std::string id() const = 0;
};

class ConstantBackend final : public Backend {
 public:
  explicit ConstantBackend(double value);
  double score(std::string_view text) const override;
  std::string id() const override;

 private:
  double value_;
};

/// Fraction of the keyword list present among the text's tokens.
class KeywordBackend final : public Backend {
 public:
  explicit KeywordBackend(std::vector<std::string> keywords);
  double score(std::string_view text) const override;
  std::string id() const override;

 private:
  std::vector<std::string> keywords_;
};

struct RemoteOptions {
  std::string url;  // e.g. http://127.0.0.1:9000/score
  std::size_t max_in_flight = 8;
  std::chrono::milliseconds timeout{2000};
};

/// POSTs {"text": ...} and expects {"score": x} with x in [0, 1]. Non-2xx,
/// transport errors and malformed bodies all count as unavailability.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteOptions options);
  ~RemoteBackend() override;
  RemoteBackend(const RemoteBackend&) = delete;
  RemoteBackend& operator=(const RemoteBackend&) = delete;

  double score(std::string_view text) const override;
  std::string id() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

enum class FailureMode { kFailClosed, kFailOpen };

/// Scores a prompt once and applies the threshold. Backend failure never
/// opens the gate unless FailureMode::kFailOpen was configured, and is always
/// logged and flagged as degraded.
GateDecision evaluate(const Backend& backend, std::string_view text, double g0,
                      FailureMode mode = FailureMode::kFailClosed);

}  // namespace conva::gate
