// Eigen (through prior.hpp) has to come before httplib: <resolv.h> defines a
// _res macro that collides with Eigen parameter names.
#include "bayesrisk/prior.hpp"

#include <cstdlib>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "bayesrisk/errors.hpp"

namespace bayesrisk {

namespace {

class HttpClient : public CompletionClient {
public:
    explicit HttpClient(const EndpointConfig& config) : config_(config) {
        static const std::regex url_re(R"(^(https?)://([^/:]+)(:[0-9]+)?(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(config.url, m, url_re)) throw ConfigError("endpoint url must look like http(s)://host[:port]/path");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (m[1] == "https") throw ConfigError("https endpoints need a build with OpenSSL");
#endif
        if (config.timeout_seconds <= 0.0) throw ConfigError("endpoint timeout must be positive");
        origin_ = m[1].str() + "://" + m[2].str() + m[3].str();
        path_ = m[4].matched ? m[4].str() : "/";
        if (const char* token = std::getenv(config.token_env.c_str())) token_ = token;
    }

    std::string complete(const std::string& prompt) override {
        httplib::Client client(origin_);
        const auto secs = static_cast<time_t>(config_.timeout_seconds);
        const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

        nlohmann::json body{{"prompt", prompt}};
        if (!config_.model.empty()) body["model"] = config_.model;
        const auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res) throw TransportError("completion endpoint: " + httplib::to_string(res.error()));
        if (res->status != 200) throw TransportError("completion endpoint returned HTTP " + std::to_string(res->status));

        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error&) {
            throw TransportError("completion endpoint returned invalid JSON");
        }
        for (const char* key : {"text", "completion"}) {
            if (doc.contains(key) && doc[key].is_string()) return doc[key].get<std::string>();
        }
        if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
            const auto& c = doc["choices"][0];
            if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
            if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string())
                return c["message"]["content"].get<std::string>();
        }
        throw TransportError("completion endpoint response has no completion text");
    }

private:
    EndpointConfig config_;
    std::string origin_;
    std::string path_;
    std::string token_;
};

}  // namespace

std::unique_ptr<CompletionClient> make_http_client(const EndpointConfig& config) {
    return std::make_unique<HttpClient>(config);
}

}  // namespace bayesrisk
