#pragma once

#include "newsim/augment.hpp"

#include <chrono>
#include <mutex>
#include <string>

namespace newsim {

struct HttpTranslatorConfig {
    // http:// or https:// URL of a Translation-v2-style endpoint.
    std::string endpoint;
    // Name of the environment variable that holds the API key, sent as the
    // "key" query parameter. Empty means no key.
    std::string api_key_env;
    double requests_per_second = 5.0; // 0 disables rate limiting
    std::chrono::seconds timeout{30};
};

HttpTranslatorConfig http_translator_config_from_json(const nlohmann::json &j);

// POSTs {"q", "source", "target", "format": "text"} and reads
// data.translations[0].translatedText from the response.
class HttpTranslator final : public Translator {
public:
    /// Throws ConfigError for a malformed endpoint or a missing key variable.
    explicit HttpTranslator(HttpTranslatorConfig config);
    ~HttpTranslator() override;

    /// Throws DataError on transport failures, non-200 responses or
    /// unexpected response bodies.
    std::string translate(std::string_view text, Lang source, Lang target) override;

private:
    void wait_for_slot();

    HttpTranslatorConfig config_;
    std::string base_;
    std::string path_;
    std::string api_key_;
    std::mutex rate_mutex_;
    std::chrono::steady_clock::time_point next_slot_{};
};

} // namespace newsim
