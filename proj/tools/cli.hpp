#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "citecrit/embedding.hpp"
#include "citecrit/pipelines.hpp"
#include "citecrit/ragclient.hpp"
#include "citecrit/textfeatures.hpp"

namespace citecrit::cli {

struct RagSettings {
    net::Endpoint endpoint;
    rag::ServiceConfig service;
    double lcs_threshold = 0.6;
    std::string archive;  // default <out>/raw_responses
};

struct RunConfig {
    std::string corpus;
    std::string out = "out";
    std::string lexicons;  // directory overriding compiled-in word lists
    std::string lm;        // saved n-gram model; default trains on the corpus
    PipelineConfig pipeline{128, 128, 0};
    std::uint64_t seed = 1;
    EmbedderConfig embedder;
    FeatureConfig features;
    std::set<Family> families = {Family::ols, Family::logit, Family::probit, Family::ordered_logit,
                                 Family::ordered_probit};
    RagSettings rag;
    nlohmann::json simulate = nlohmann::json::object();
    /// Effective document before ${VAR} interpolation; hashed into manifests
    /// so that credentials never reach disk.
    nlohmann::json effective = nlohmann::json::object();
};

/// Replaces every ${NAME} in string values with the environment variable.
/// Unset variables are added to `problems`.
nlohmann::json interpolate_env(const nlohmann::json& j, std::vector<std::string>& problems);

/// Reads and validates a config document. Every problem found is listed in
/// one config error rather than stopping at the first.
RunConfig parse_run_config(const nlohmann::json& doc);

/// Runs the command line and returns the process exit code. Errors are
/// printed to `err` as `error[<category>]: <message>`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace citecrit::cli
