#pragma once

#include "mrt/bandit.hpp"
#include "mrt/trial.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace mrt {

/// Everything a reproducible experiment needs, serializable to JSON. Every
/// field has a default matching the deployed trial, so "{}" is a valid
/// config.
struct RunConfig {
    TrialConfig trial;
    Prior prior = Prior::deployed();
    SmoothingConfig smoothing;
    PolicyMode policy_mode = PolicyMode::full_pooling;
    int reps = 500;
    std::optional<std::string> fault_plan_path;
    std::string output_dir = "out";

    void validate() const;
};

/// Strict parse: unknown keys anywhere are rejected by name.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize_run_config(const RunConfig& config);

} // namespace mrt
