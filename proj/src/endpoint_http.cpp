#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "nbhd/endpoint.hpp"
#include "nbhd/error.hpp"

namespace nbhd::elicit {

HttpEndpoint::HttpEndpoint(std::string url, std::chrono::milliseconds timeout, std::string credential_env)
    : timeout_(timeout), credential_env_(std::move(credential_env)) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::ConfigInvalid, "endpoint URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = url;
    path_ = "/";
  } else {
    scheme_host_port_ = url.substr(0, path_start);
    path_ = url.substr(path_start);
  }
}

std::string HttpEndpoint::complete(const EndpointRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!credential_env_.empty()) {
    const char* token = std::getenv(credential_env_.c_str());
    if (!token) throw TransportError("credential variable " + credential_env_ + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const nlohmann::json body{{"model", request.model_name},   {"image_ref", request.image_ref},
                            {"prompt", request.prompt},      {"temperature", request.temperature},
                            {"prompt_id", request.prompt_id}, {"round", request.round}};
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransportError(scheme_host_port_ + path_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200) throw TransportError(scheme_host_port_ + path_ + ": HTTP " + std::to_string(res->status));

  // Unwrap common envelopes; otherwise the body is the reply.
  auto doc = nlohmann::json::parse(res->body, nullptr, false);
  if (doc.is_object()) {
    if (doc.contains("text") && doc["text"].is_string()) return doc["text"].get<std::string>();
    if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
      const auto& c = doc["choices"][0];
      if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string())
        return c["message"]["content"].get<std::string>();
    }
  }
  return res->body;
}

}  // namespace nbhd::elicit
