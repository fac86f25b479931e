#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "phytune/errors.hpp"
#include "phytune/llm_client.hpp"
#include "phytune/mllm_client.hpp"
#include "phytune/verifier.hpp"
#include "support.hpp"

using namespace phytune;

namespace {

// Local stand-in for both remote backends.
class FakeBackend {
public:
    FakeBackend() {
        server_.Post("/api/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("Authorization");
            last_body = nlohmann::json::parse(req.body);
            if (fail_next) {
                res.status = 503;
                res.set_content("overloaded", "text/plain");
                return;
            }
            const auto content = last_body["messages"][0]["content"].get<std::string>();
            nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo:" + content}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("Authorization");
            last_body = nlohmann::json::parse(req.body);
            nlohmann::json reply = {{"vocab", {"yes", "no", "banana"}}, {"logits", {std::log(3.0), nullptr, 4.0}}};
            if (garbage) reply = {{"vocab", {"yes"}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeBackend() {
        server_.stop();
        thread_.join();
    }
    std::string url(const std::string& path = "") const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

    std::string last_auth;
    nlohmann::json last_body;
    bool fail_next = false;
    bool garbage = false;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST_CASE("chat completion client speaks the OpenAI-style protocol") {
    FakeBackend backend;
    const HttpLlmClient client(backend.url("/api"), "tiny-model", "secret", 5);
    DecodeParams params;
    params.seed = 4;
    params.attempt = 1;
    CHECK(client.complete("hello", params) == "echo:hello");
    CHECK(backend.last_auth == "Bearer secret");
    CHECK(backend.last_body["model"] == "tiny-model");
    CHECK(backend.last_body["seed"] == 5);
    backend.fail_next = true;
    CHECK_THROWS_AS(client.complete("x", {}), ClientError);
}

TEST_CASE("verifier client speaks the score protocol") {
    FakeBackend backend;
    const HttpMllmClient client(backend.url(), "", 5);
    const PixelVideo video{ag::Var::constant(Tensor({4, 3, 8, 8}, 0.5))};
    const Verifier verifier(client, PromptLibrary::bundled(), {0.5, 1});
    const auto v = verifier.verify_fact(video, {1, "fact", {}});
    CHECK(std::abs(v.expected - 1.0) < 1e-15);  // "no" is null (-inf), "banana" is filtered
    CHECK(backend.last_auth.empty());
    CHECK(backend.last_body["video"]["shape"] == nlohmann::json({4, 3, 8, 8}));
    CHECK(backend.last_body["video"]["data"].size() == 4 * 3 * 8 * 8);
    CHECK(backend.last_body["question"].get<std::string>().find("[check: fact]") != std::string::npos);
    CHECK_FALSE(client.differentiable());
    backend.garbage = true;
    CHECK_THROWS_AS(verifier.verify_fact(video, {1, "fact", {}}), ClientError);
}

TEST_CASE("unreachable backends are client errors") {
    const HttpLlmClient llm("http://127.0.0.1:1", "m", "", 1);
    CHECK_THROWS_AS(llm.complete("x", {}), ClientError);
    const HttpMllmClient mllm("http://127.0.0.1:1", "", 1);
    CHECK_THROWS_AS(mllm.score_logits({ag::Var::constant(Tensor({1, 3, 2, 2}, 0.5))}, "[check: fact]",
                                      ScoreSpec::binary()),
                    ClientError);
}
