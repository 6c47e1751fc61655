#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

namespace nbhd::elicit {

struct EndpointRequest {
  std::string model_name;
  std::string image_ref;
  int prompt_id = 0;
  int round = 0;
  int attempt = 0;
  std::string prompt;
  double temperature = 0.0;
};

/// Transport-level failure (connection refused, HTTP error status, timeout).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A vision-language model behind some transport. Implementations must be
/// safe to call from several threads at once.
class EndpointClient {
 public:
  virtual ~EndpointClient() = default;
  /// Returns the raw reply text. Throws TransportError on transport failure.
  virtual std::string complete(const EndpointRequest& request) = 0;
};

enum class MockProfile { Affluent, Deprived, Mixed };
MockProfile parse_mock_profile(const std::string& s);

/// Deterministic stand-in for a model: every reply is schema-valid JSON and a
/// pure function of (seed, image_ref, prompt_id, round).
class MockEndpoint final : public EndpointClient {
 public:
  MockEndpoint(std::uint64_t seed, MockProfile profile);
  std::string complete(const EndpointRequest& request) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::uint64_t seed_;
  MockProfile profile_;
  std::atomic<std::size_t> calls_{0};
};

std::unique_ptr<MockEndpoint> mock_endpoint(std::uint64_t seed, MockProfile profile);

/// JSON-over-HTTP(S) client. POSTs {model, image_ref, prompt, temperature,
/// prompt_id, round} to `url`; accepts either a plain-text body, a JSON body
/// with a "text" field, or a chat-completions style "choices" array.
class HttpEndpoint final : public EndpointClient {
 public:
  HttpEndpoint(std::string url, std::chrono::milliseconds timeout, std::string credential_env = {});
  std::string complete(const EndpointRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::chrono::milliseconds timeout_;
  std::string credential_env_;
};

}  // namespace nbhd::elicit
