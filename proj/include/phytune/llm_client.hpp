#pragma once

#include <cstdint>
#include <future>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace phytune {

struct DecodeParams {
    std::uint64_t seed = 0;
    double temperature = 0.0;
    int max_tokens = 1024;
    // Retry ordinal; backends may use it to vary sampling.
    int attempt = 0;
};

// Text-completion backend. Implementations must tolerate concurrent calls.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string name() const = 0;
    // Throws ClientError on backend failure.
    virtual std::string complete(const std::string& prompt, const DecodeParams& params) const = 0;

    // Each future resolves to the completion of its own request.
    std::future<std::string> complete_async(std::string prompt, DecodeParams params) const;
};

// Fixture-keyed mock. Prompts rendered from the bundled templates carry a
// `[task: name]` line and an `<input>...</input>` block; the pair
// (task, canonical input) selects a canned completion list indexed by
// DecodeParams::attempt. Unknown inputs fall through to a deterministic
// template generator seeded by (prompt, seed).
class MockLlmClient : public LlmClient {
public:
    struct Fixture {
        std::string task;
        std::string input;
        std::vector<std::string> completions;
    };

    MockLlmClient() = default;
    explicit MockLlmClient(std::vector<Fixture> fixtures);
    static MockLlmClient from_json_file(const std::string& path);
    static MockLlmClient from_json(const nlohmann::json& j);

    std::string name() const override { return "mock-llm"; }
    std::string complete(const std::string& prompt, const DecodeParams& params) const override;

    static std::string fixture_key(std::string_view task, std::string_view input);
    std::size_t fixture_count() const noexcept { return table_.size(); }

private:
    std::string fallthrough(std::string_view task, std::string_view input, std::uint64_t seed) const;

    std::map<std::string, std::vector<std::string>> table_;
};

// OpenAI-compatible chat completion endpoint (POST {base_url}/v1/chat/completions).
class HttpLlmClient : public LlmClient {
public:
    HttpLlmClient(std::string base_url, std::string model, std::string api_key, int timeout_seconds = 120);
    std::string name() const override { return "http-llm:" + model_; }
    std::string complete(const std::string& prompt, const DecodeParams& params) const override;

private:
    std::string base_url_;
    std::string model_;
    std::string api_key_;
    int timeout_seconds_;
};

// Extracts `[task: X]` and the `<input>` block from a rendered prompt.
std::string prompt_task(std::string_view prompt);
std::string prompt_input(std::string_view prompt);

}  // namespace phytune
