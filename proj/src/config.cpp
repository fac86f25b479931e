#include "phytune/config.hpp"

#include <cstdlib>
#include <set>

#include "phytune/errors.hpp"
#include "phytune/util.hpp"

namespace phytune {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

}  // namespace

void CliConfig::validate() const {
    if (version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(version));
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    model.validate();
    try {
        adapter.validate();
        train.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    if (max_facts == 0) throw ConfigError("reasoner.max_facts must be at least 1");
    for (const auto& b : {backends.llm, backends.mllm}) {
        if (b != "mock" && b != "http") throw ConfigError("backend must be 'mock' or 'http', got '" + b + "'");
    }
    if (backends.llm == "http" && backends.llm_url.empty()) throw ConfigError("backends.llm_url is required for http");
    if (backends.mllm == "http" && backends.mllm_url.empty()) throw ConfigError("backends.mllm_url is required for http");
    if (dataset.classifier != "keyword") throw ConfigError("unknown realism classifier '" + dataset.classifier + "'");
    if (!(dataset.threshold >= 0.0 && dataset.threshold <= 1.0)) throw ConfigError("dataset.threshold must lie in [0, 1]");
    if (infer.passes != 1 && infer.passes != 2) throw ConfigError("infer.passes must be 1 or 2");
    if (infer.sample_steps < 2) throw ConfigError("infer.sample_steps must be at least 2");
}

CliConfig parse_config(const nlohmann::json& j) {
    reject_unknown(j, {"version", "output_dir", "model", "adapter", "train", "reasoner", "backends", "dataset",
                       "infer", "prompts"},
                   "config");
    CliConfig c;
    read(j, "version", c.version, "config");
    read(j, "output_dir", c.output_dir, "config");
    read(j, "prompts", c.prompts, "config");
    if (j.contains("model")) c.model = j.at("model").get<DitConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("adapter")) {
        const auto& a = j.at("adapter");
        reject_unknown(a, {"rank", "alpha"}, "adapter");
        read(a, "rank", c.adapter.rank, "adapter");
        read(a, "alpha", c.adapter.alpha, "adapter");
    }
    if (j.contains("reasoner")) {
        const auto& r = j.at("reasoner");
        reject_unknown(r, {"max_facts"}, "reasoner");
        read(r, "max_facts", c.max_facts, "reasoner");
    }
    if (j.contains("backends")) {
        const auto& b = j.at("backends");
        reject_unknown(b, {"llm", "mllm", "llm_url", "llm_model", "mllm_url", "fixtures"}, "backends");
        read(b, "llm", c.backends.llm, "backends");
        read(b, "mllm", c.backends.mllm, "backends");
        read(b, "llm_url", c.backends.llm_url, "backends");
        read(b, "llm_model", c.backends.llm_model, "backends");
        read(b, "mllm_url", c.backends.mllm_url, "backends");
        read(b, "fixtures", c.backends.fixtures, "backends");
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        reject_unknown(d, {"classifier", "threshold", "workers"}, "dataset");
        read(d, "classifier", c.dataset.classifier, "dataset");
        read(d, "threshold", c.dataset.threshold, "dataset");
        read(d, "workers", c.dataset.workers, "dataset");
    }
    if (j.contains("infer")) {
        const auto& i = j.at("infer");
        reject_unknown(i, {"passes", "sample_steps", "seed"}, "infer");
        read(i, "passes", c.infer.passes, "infer");
        read(i, "sample_steps", c.infer.sample_steps, "infer");
        read(i, "seed", c.infer.seed, "infer");
    }
    c.validate();
    return c;
}

CliConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
    return parse_config(j);
}

nlohmann::json config_to_json(const CliConfig& c) {
    return {{"version", c.version},
            {"output_dir", c.output_dir},
            {"model", c.model},
            {"adapter", {{"rank", c.adapter.rank}, {"alpha", c.adapter.alpha}}},
            {"train", c.train},
            {"reasoner", {{"max_facts", c.max_facts}}},
            {"backends",
             {{"llm", c.backends.llm},
              {"mllm", c.backends.mllm},
              {"llm_url", c.backends.llm_url},
              {"llm_model", c.backends.llm_model},
              {"mllm_url", c.backends.mllm_url},
              {"fixtures", c.backends.fixtures}}},
            {"dataset",
             {{"classifier", c.dataset.classifier}, {"threshold", c.dataset.threshold}, {"workers", c.dataset.workers}}},
            {"infer", {{"passes", c.infer.passes}, {"sample_steps", c.infer.sample_steps}, {"seed", c.infer.seed}}},
            {"prompts", c.prompts}};
}

std::string llm_api_key() {
    const char* v = std::getenv("PHYTUNE_LLM_API_KEY");
    return v ? v : "";
}

std::string mllm_api_key() {
    const char* v = std::getenv("PHYTUNE_MLLM_API_KEY");
    return v ? v : "";
}

}  // namespace phytune
