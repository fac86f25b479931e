#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/layers.hpp"
#include "phytune/toy_dit.hpp"
#include "phytune/trainer.hpp"

namespace phytune {

inline constexpr int kConfigVersion = 1;

struct BackendConfig {
    std::string llm = "mock";   // mock | http
    std::string mllm = "mock";  // mock | http
    std::string llm_url;
    std::string llm_model;
    std::string mllm_url;
    std::string fixtures;  // mock LLM fixture table; empty selects the bundled one
};

struct DatasetConfig {
    std::string classifier = "keyword";
    double threshold = 0.5;
    std::size_t workers = 1;
};

struct CliConfig {
    int version = kConfigVersion;
    std::string output_dir = "phytune_out";
    DitConfig model;
    AdapterConfig adapter;
    TrainConfig train;
    std::size_t max_facts = 8;
    BackendConfig backends;
    DatasetConfig dataset;
    InferenceOptions infer;
    std::vector<std::string> prompts;

    // ConfigError describing the first invalid setting.
    void validate() const;
};

// Parses a config document; unknown keys at any level are a ConfigError.
CliConfig parse_config(const nlohmann::json& j);
CliConfig load_config(const std::string& path);
nlohmann::json config_to_json(const CliConfig& c);

// API keys come from PHYTUNE_LLM_API_KEY / PHYTUNE_MLLM_API_KEY only.
std::string llm_api_key();
std::string mllm_api_key();

}  // namespace phytune
