#include "newsim/error.hpp"
#include "newsim/http_translator.hpp"

#include <atomic>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace newsim;
using nlohmann::json;

namespace {

// A loopback server that answers POST /translate with a handler chosen by the test.
class FakeEndpoint {
public:
    using Handler = std::function<void(const httplib::Request &, httplib::Response &)>;

    explicit FakeEndpoint(Handler handler) : handler_{std::move(handler)}
    {
        server_.Post("/translate", [this](const httplib::Request &req, httplib::Response &res) {
            ++requests_;
            handler_(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread{[this] { server_.listen_after_bind(); }};
        server_.wait_until_ready();
    }

    ~FakeEndpoint()
    {
        server_.stop();
        thread_.join();
    }

    std::string url(const std::string &path = "/translate") const
    {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

    int requests() const { return requests_; }

private:
    Handler handler_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::atomic<int> requests_{0};
};

HttpTranslatorConfig config_for(const std::string &url)
{
    HttpTranslatorConfig c;
    c.endpoint = url;
    c.requests_per_second = 0;
    c.timeout = std::chrono::seconds{5};
    return c;
}

void reply_with(httplib::Response &res, const std::string &text)
{
    const json body{{"data", {{"translations", json::array({{{"translatedText", text}}})}}}};
    res.set_content(body.dump(), "application/json");
}

} // namespace

TEST_CASE("http translator sends the request shape and reads the translation")
{
    json seen;
    std::string key;
    FakeEndpoint endpoint{[&](const httplib::Request &req, httplib::Response &res) {
        seen = json::parse(req.body);
        key = req.has_param("key") ? req.get_param_value("key") : "";
        reply_with(res, "Hallo Welt\nZweite Zeile");
    }};

    ::setenv("NEWSIM_TEST_TRANSLATOR_KEY", "s3cret&x=1", 1);
    auto config = config_for(endpoint.url());
    config.api_key_env = "NEWSIM_TEST_TRANSLATOR_KEY";
    HttpTranslator translator{config};

    CHECK(translator.translate("Hello world\nSecond line", Lang::en, Lang::de) == "Hallo Welt\nZweite Zeile");
    CHECK(seen["q"] == "Hello world\nSecond line");
    CHECK(seen["source"] == "en");
    CHECK(seen["target"] == "de");
    CHECK(seen["format"] == "text");
    CHECK(key == "s3cret&x=1");
    ::unsetenv("NEWSIM_TEST_TRANSLATOR_KEY");
}

TEST_CASE("http translator preserves non-ASCII text")
{
    FakeEndpoint endpoint{[](const httplib::Request &req, httplib::Response &res) {
        reply_with(res, json::parse(req.body)["q"].get<std::string>() + " 你好");
    }};
    HttpTranslator translator{config_for(endpoint.url())};
    CHECK(translator.translate("Zażółć gęślą jaźń", Lang::pl, Lang::zh) == "Zażółć gęślą jaźń 你好");
}

TEST_CASE("http translator failure modes are data errors")
{
    SUBCASE("non-200 status")
    {
        FakeEndpoint endpoint{[](const httplib::Request &, httplib::Response &res) {
            res.status = 503;
            res.set_content("busy", "text/plain");
        }};
        HttpTranslator translator{config_for(endpoint.url())};
        try {
            translator.translate("x", Lang::en, Lang::de);
            FAIL("expected a DataError");
        } catch (const DataError &e) {
            CHECK(std::string{e.what()}.find("503") != std::string::npos);
        }
    }
    SUBCASE("body without a translation")
    {
        FakeEndpoint endpoint{[](const httplib::Request &, httplib::Response &res) {
            res.set_content(R"({"data": {"translations": []}})", "application/json");
        }};
        HttpTranslator translator{config_for(endpoint.url())};
        CHECK_THROWS_AS(translator.translate("x", Lang::en, Lang::de), DataError);
    }
    SUBCASE("body that is not JSON")
    {
        FakeEndpoint endpoint{[](const httplib::Request &, httplib::Response &res) {
            res.set_content("<html>", "text/html");
        }};
        HttpTranslator translator{config_for(endpoint.url())};
        CHECK_THROWS_AS(translator.translate("x", Lang::en, Lang::de), DataError);
    }
    SUBCASE("unknown path")
    {
        FakeEndpoint endpoint{[](const httplib::Request &, httplib::Response &res) { reply_with(res, "y"); }};
        HttpTranslator translator{config_for(endpoint.url("/elsewhere"))};
        CHECK_THROWS_AS(translator.translate("x", Lang::en, Lang::de), DataError);
    }
    SUBCASE("nothing listening")
    {
        int port = 0;
        {
            FakeEndpoint endpoint{[](const httplib::Request &, httplib::Response &res) { reply_with(res, "y"); }};
            port = std::stoi(endpoint.url("").substr(std::string{"http://127.0.0.1:"}.size()));
        }
        auto config = config_for("http://127.0.0.1:" + std::to_string(port) + "/translate");
        config.timeout = std::chrono::seconds{1};
        HttpTranslator translator{config};
        CHECK_THROWS_AS(translator.translate("x", Lang::en, Lang::de), DataError);
    }
}

TEST_CASE("http translator rate limit spaces out requests")
{
    FakeEndpoint endpoint{[](const httplib::Request &, httplib::Response &res) { reply_with(res, "y"); }};
    auto config = config_for(endpoint.url());
    config.requests_per_second = 20;
    HttpTranslator translator{config};
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 5; ++i)
        translator.translate("x", Lang::en, Lang::de);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(elapsed >= std::chrono::milliseconds{195});
    CHECK(endpoint.requests() == 5);
}

TEST_CASE("http translator configuration errors")
{
    CHECK_THROWS_AS(HttpTranslator{config_for("127.0.0.1:80/translate")}, ConfigError);
    CHECK_THROWS_AS(HttpTranslator{config_for("ftp://host/translate")}, ConfigError);
    CHECK_THROWS_AS(HttpTranslator{config_for("http:///translate")}, ConfigError);
    auto negative = config_for("http://localhost/translate");
    negative.requests_per_second = -1;
    CHECK_THROWS_AS(HttpTranslator{negative}, ConfigError);
    auto keyed = config_for("http://localhost/translate");
    keyed.api_key_env = "NEWSIM_TEST_UNSET_VARIABLE";
    ::unsetenv("NEWSIM_TEST_UNSET_VARIABLE");
    CHECK_THROWS_AS(HttpTranslator{keyed}, ConfigError);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    CHECK_THROWS_AS(HttpTranslator{config_for("https://localhost/translate")}, ConfigError);
#else
    CHECK_NOTHROW(HttpTranslator{config_for("https://localhost/translate")});
#endif

    const auto parsed = http_translator_config_from_json(
        json{{"endpoint", "http://h/t"}, {"api_key_env", "K"}, {"requests_per_second", 2.5}, {"timeout_seconds", 7}});
    CHECK(parsed.endpoint == "http://h/t");
    CHECK(parsed.api_key_env == "K");
    CHECK(parsed.requests_per_second == 2.5);
    CHECK(parsed.timeout == std::chrono::seconds{7});
    CHECK_THROWS_AS(http_translator_config_from_json(json{{"api_key_env", "K"}}), ConfigError);
    CHECK_THROWS_AS(http_translator_config_from_json(json{{"endpoint", 3}}), ConfigError);
}
