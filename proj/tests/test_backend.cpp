#include "doctest.h"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "helpers.hpp"
#include "mad/backend.hpp"
#include "mad/mock_backend.hpp"
#include "mad/openai_backend.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

using namespace mad;

TEST_CASE("estimate_cost matches hand-computed references") {
    PriceTable prices{2.50, 10.00, 1.0, "USD"};
    CHECK(estimate_cost({0, 0}, prices) == doctest::Approx(0.0));
    // 1,068,517 * 2.5 + 453,126 * 10 = 7,202,552.5 per million
    CHECK(estimate_cost({1'068'517, 453'126}, prices) == doctest::Approx(7.2025525).epsilon(1e-9));
    CHECK(format_cost(estimate_cost({1'068'517, 453'126}, prices)) == "7.20");
    // 152,145 * 2.5 + 8,694 * 10 = 467,302.5 per million
    CHECK(estimate_cost({152'145, 8'694}, prices) == doctest::Approx(0.4673025).epsilon(1e-9));
    CHECK(format_cost(estimate_cost({152'145, 8'694}, prices)) == "0.47");
}

TEST_CASE("estimate_cost is linear in usage") {
    std::mt19937 rng(99);
    PriceTable prices{1.75, 6.25, 0.92, "EUR"};
    for (int i = 0; i < 200; ++i) {
        Usage a{static_cast<std::int64_t>(rng() % 2'000'000),
                static_cast<std::int64_t>(rng() % 500'000)};
        Usage b{static_cast<std::int64_t>(rng() % 2'000'000),
                static_cast<std::int64_t>(rng() % 500'000)};
        double lhs = estimate_cost(a + b, prices);
        double rhs = estimate_cost(a, prices) + estimate_cost(b, prices);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("format_cost rounds half-up at display time") {
    CHECK(format_cost(0.0) == "0.00");
    CHECK(format_cost(7.2026) == "7.20");
    CHECK(format_cost(0.435) == "0.44");
    CHECK(format_cost(14.405105) == "14.41");
}

TEST_CASE("price table rejects non-positive entries") {
    auto dir = std::filesystem::temp_directory_path();
    auto file = dir / "mad_test_prices.json";
    {
        std::ofstream out(file);
        out << R"({"input_price_per_million": 0.0, "output_price_per_million": 10.0})";
    }
    CHECK_THROWS(PriceTable::load(file));
    {
        std::ofstream out(file);
        out << R"({"input_price_per_million": 2.5, "output_price_per_million": 10.0,
                   "currency_rate": 0.92, "currency": "EUR"})";
    }
    auto prices = PriceTable::load(file);
    CHECK(prices.currency == "EUR");
    CHECK(prices.currency_rate == doctest::Approx(0.92));
    std::filesystem::remove(file);
}

namespace {

ChatRequest simple_request(const std::string& text, const std::string& speaker = "tester",
                           int round = -1) {
    ChatRequest request;
    request.system_prompt = "system";
    request.turns.push_back({"task", text});
    request.tag = {speaker, round};
    return request;
}

}  // namespace

TEST_CASE("mock matches a last-turn substring and estimates tokens") {
    MockBackend mock({ScriptRule{std::nullopt, "login", std::nullopt, std::nullopt,
                                 "CLASSIFICATION: F"}});
    auto request = simple_request("The user shall login with a password.");
    auto response = mock.complete(request);
    CHECK(response.text == "CLASSIFICATION: F");
    // Estimator oracle: ceil(bytes / 4) over system + turns and over the reply.
    std::string full = request.system_prompt + "\n" + request.turns[0].text;
    CHECK(response.usage.input_tokens ==
          static_cast<std::int64_t>((full.size() + 3) / 4));
    CHECK(response.usage.output_tokens ==
          static_cast<std::int64_t>((response.text.size() + 3) / 4));
}

TEST_CASE("mock rules are tried in order, first match wins") {
    MockBackend mock({
        ScriptRule{std::nullopt, std::nullopt, std::string("judge"), std::nullopt, "first"},
        ScriptRule{std::nullopt, std::nullopt, std::nullopt, std::nullopt, "fallback"},
    });
    CHECK(mock.complete(simple_request("x", "judge")).text == "first");
    CHECK(mock.complete(simple_request("x", "debater")).text == "fallback");
}

TEST_CASE("mock matches on round and whole-request substring") {
    MockBackend mock({
        ScriptRule{std::string("needle"), std::nullopt, std::nullopt, 2, "both"},
        ScriptRule{std::nullopt, std::nullopt, std::nullopt, std::nullopt, "other"},
    });
    ChatRequest request;
    request.system_prompt = "a needle in the system prompt";
    request.turns.push_back({"task", "no match here"});
    request.tag = {"d0", 2};
    CHECK(mock.complete(request).text == "both");
    request.tag.round = 1;
    CHECK(mock.complete(request).text == "other");
}

TEST_CASE("mock without a matching rule reports a script miss") {
    MockBackend mock({ScriptRule{std::nullopt, std::string("never"), std::nullopt,
                                 std::nullopt, "x"}});
    try {
        mock.complete(simple_request("unmatched"));
        FAIL("expected BackendError");
    } catch (const BackendError& err) {
        CHECK(err.kind() == BackendError::Kind::ScriptMiss);
    }
}

TEST_CASE("mock is a pure function of the request, under concurrency too") {
    MockBackend mock({
        ScriptRule{std::nullopt, std::string("alpha"), std::nullopt, std::nullopt, "A"},
        ScriptRule{std::nullopt, std::nullopt, std::nullopt, std::nullopt, "B"},
    });
    auto request = simple_request("alpha beta");
    auto first = mock.complete(request);
    auto second = mock.complete(request);
    CHECK(first.text == second.text);
    CHECK(first.usage == second.usage);

    std::vector<ChatResponse> results(64);
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 8; ++i) {
                int slot = t * 8 + i;
                results[slot] = mock.complete(
                    simple_request(slot % 2 ? "alpha" : "other", "s" + std::to_string(slot)));
            }
        });
    }
    for (auto& th : threads) th.join();
    for (int slot = 0; slot < 64; ++slot) {
        CHECK(results[slot].text == (slot % 2 ? "A" : "B"));
    }
}

TEST_CASE("mock script files load strictly") {
    auto dir = std::filesystem::temp_directory_path();
    auto file = dir / "mad_test_script.json";
    {
        std::ofstream out(file);
        out << R"({"rules": [
            {"match": {"speaker": "judge", "contains": "login"}, "response": "CLASSIFICATION: NF"},
            {"match": {}, "response": "fallback"}
        ]})";
    }
    auto mock = MockBackend::load(file);
    auto request = simple_request("please login now", "judge");
    CHECK(mock.complete(request).text == "CLASSIFICATION: NF");
    CHECK(mock.complete(simple_request("anything")).text == "fallback");

    {
        std::ofstream out(file);
        out << R"({"rules": [{"match": {"speakr": "judge"}, "response": "x"}]})";
    }
    CHECK_THROWS(MockBackend::load(file));
    std::filesystem::remove(file);
}

namespace {

struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit LocalServer(httplib::Server::Handler handler) {
        server.Post("/v1/chat/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread.join();
    }
    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port) + "/v1";
    }
};

RemoteConfig fast_remote(const std::string& endpoint) {
    RemoteConfig config;
    config.endpoint = endpoint;
    config.api_key = "test-key";
    config.params.model_id = "test-model";
    config.retry.initial_backoff = std::chrono::milliseconds(1);
    return config;
}

const char* kCompletionBody = R"({
    "choices": [{"message": {"role": "assistant", "content": "CLASSIFICATION: NF"}}],
    "usage": {"prompt_tokens": 41, "completion_tokens": 7}
})";

}  // namespace

TEST_CASE("remote backend parses content and provider-reported usage") {
    std::atomic<int> hits{0};
    std::string seen_auth;
    std::string seen_body;
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(kCompletionBody, "application/json");
    });
    OpenAiBackend backend(fast_remote(server.endpoint()));
    auto request = simple_request("classify this");
    request.params.temperature = 0.0;
    auto response = backend.complete(request);
    CHECK(response.text == "CLASSIFICATION: NF");
    CHECK(response.usage.input_tokens == 41);
    CHECK(response.usage.output_tokens == 7);
    CHECK(hits == 1);
    CHECK(seen_auth == "Bearer test-key");
    CHECK(seen_body.find("\"model\":\"test-model\"") != std::string::npos);
    CHECK(seen_body.find("\"temperature\":0.0") != std::string::npos);
}

TEST_CASE("remote backend retries 5xx and succeeds") {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        if (++hits < 3) {
            res.status = 500;
            res.set_content("oops", "text/plain");
        } else {
            res.set_content(kCompletionBody, "application/json");
        }
    });
    OpenAiBackend backend(fast_remote(server.endpoint()));
    auto response = backend.complete(simple_request("retry me"));
    CHECK(response.usage.input_tokens == 41);
    CHECK(hits == 3);
}

TEST_CASE("remote backend gives up on rate limits after the retry budget") {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 429;
        res.set_content("slow down", "text/plain");
    });
    OpenAiBackend backend(fast_remote(server.endpoint()));
    try {
        backend.complete(simple_request("x"));
        FAIL("expected BackendError");
    } catch (const BackendError& err) {
        CHECK(err.kind() == BackendError::Kind::Provider);
    }
    CHECK(hits == 3);
}

TEST_CASE("remote backend never retries auth failures") {
    std::atomic<int> hits{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
        res.set_content(R"({"error": {"message": "bad key"}})", "application/json");
    });
    OpenAiBackend backend(fast_remote(server.endpoint()));
    try {
        backend.complete(simple_request("x"));
        FAIL("expected BackendError");
    } catch (const BackendError& err) {
        CHECK(err.kind() == BackendError::Kind::Provider);
    }
    CHECK(hits == 1);
}

TEST_CASE("remote backend caps concurrent requests at the in-flight limit") {
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        int now = ++active;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(25));
        --active;
        res.set_content(kCompletionBody, "application/json");
    });
    auto config = fast_remote(server.endpoint());
    config.max_in_flight = 2;
    OpenAiBackend backend(std::move(config));
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) {
        threads.emplace_back([&] { backend.complete(simple_request("x")); });
    }
    for (auto& t : threads) t.join();
    CHECK(peak.load() >= 1);
    CHECK(peak.load() <= 2);
}

TEST_CASE("remote backend rejects a success response without usage") {
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices": [{"message": {"content": "hi"}}]})",
                        "application/json");
    });
    OpenAiBackend backend(fast_remote(server.endpoint()));
    CHECK_THROWS_AS(backend.complete(simple_request("x")), BackendError);
}
