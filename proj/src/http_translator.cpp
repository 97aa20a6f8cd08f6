#include "newsim/http_translator.hpp"

#include "newsim/error.hpp"

#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace newsim {

HttpTranslatorConfig http_translator_config_from_json(const nlohmann::json &j)
{
    try {
        HttpTranslatorConfig c;
        c.endpoint = j.at("endpoint").get<std::string>();
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.requests_per_second = j.value("requests_per_second", c.requests_per_second);
        c.timeout = std::chrono::seconds{j.value("timeout_seconds", c.timeout.count())};
        return c;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError{std::string{"invalid translator config: "} + e.what()};
    }
}

HttpTranslator::HttpTranslator(HttpTranslatorConfig config) : config_{std::move(config)}
{
    const auto &url = config_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError{"translator endpoint '" + url + "' has no scheme"};
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw ConfigError{"translator endpoint scheme must be http or https, got '" + scheme + "'"};
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https")
        throw ConfigError{"this build has no TLS support; use an http:// endpoint"};
#endif
    const auto path_start = url.find('/', scheme_end + 3);
    base_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
    if (base_.size() <= scheme_end + 3)
        throw ConfigError{"translator endpoint '" + url + "' has no host"};
    if (config_.requests_per_second < 0)
        throw ConfigError{"requests_per_second must be non-negative"};

    if (!config_.api_key_env.empty()) {
        const char *key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw ConfigError{"environment variable " + config_.api_key_env + " is not set"};
        api_key_ = key;
    }
}

HttpTranslator::~HttpTranslator() = default;

void HttpTranslator::wait_for_slot()
{
    if (config_.requests_per_second == 0)
        return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>{1.0 / config_.requests_per_second});
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock{rate_mutex_};
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
}

std::string HttpTranslator::translate(std::string_view text, Lang source, Lang target)
{
    wait_for_slot();

    httplib::Client client{base_};
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    auto path = path_;
    if (!api_key_.empty())
        path += (path.find('?') == std::string::npos ? "?key=" : "&key=") +
                httplib::detail::encode_query_param(api_key_);

    const nlohmann::json body{{"q", std::string{text}},
                              {"source", std::string{to_string(source)}},
                              {"target", std::string{to_string(target)}},
                              {"format", "text"}};
    const auto response = client.Post(path, body.dump(), "application/json");
    const auto what = std::string{to_string(source)} + "->" + std::string{to_string(target)};
    if (!response)
        throw DataError{"translation request " + what + " failed: " + httplib::to_string(response.error())};
    if (response->status != 200)
        throw DataError{"translation request " + what + " returned HTTP " + std::to_string(response->status)};

    try {
        const auto reply = nlohmann::json::parse(response->body);
        return reply.at("data").at("translations").at(0).at("translatedText").get<std::string>();
    } catch (const nlohmann::json::exception &e) {
        throw DataError{"unexpected translation response for " + what + ": " + e.what()};
    }
}

} // namespace newsim
