#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "factens/error.hpp"
#include "factens/llm.hpp"

namespace factens {

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpChatBackend::complete(const CompletionRequest& request) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);

    nlohmann::json body;
    body["model"] = request.model_id;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post(config_.endpoint, headers, body.dump(), "application/json");
    if (!res) throw TransientBackendError("http: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
        throw TransientBackendError("http status " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw BackendError("http status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    try {
        const auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed completion response: ") + e.what());
    }
}

}  // namespace factens
