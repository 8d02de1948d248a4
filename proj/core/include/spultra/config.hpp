#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spultra/error.hpp"
#include "spultra/geometry.hpp"
#include "spultra/recon.hpp"
#include "spultra/sim.hpp"
#include "spultra/spstats.hpp"
#include "spultra/ultra.hpp"

namespace spultra {

enum class Subcommand { simulate, learn, reconstruct, evaluate, all };

Subcommand parse_subcommand(const std::string& name);
std::string to_string(Subcommand s);

/// Every problem found while reading a config, one message per entry.
class ConfigValidationError : public ConfigError {
public:
    explicit ConfigValidationError(std::vector<std::string> errors);
    const std::vector<std::string>& errors() const { return errors_; }

private:
    std::vector<std::string> errors_;
};

struct LearningConfig {
    std::size_t K = 5;
    std::size_t v = 64;
    std::size_t stride = 1;     // patch stride on the training image
    double gamma_c = 1e-3;
    double lambda0 = 31e-3;
    std::size_t iters = 50;
    std::string phantom = "thorax_train";
};

struct ExperimentConfig {
    SystemGeometry geometry;
    SpModel model;
    std::string phantom = "water_disk";
    std::uint64_t seed = 0;
    LearningConfig learning;
    ReconConfig recon;
    std::size_t recon_stride = 1;
    double mu_water = kMuWater;
    std::string roi = "body";   // body | full
    std::filesystem::path out_dir = "out";
    std::optional<std::filesystem::path> transforms;  // pre-learned transforms to use instead of learning

    /// Stable text form of every effective value; hashed into the run manifest.
    std::string canonical() const;
};

/// Reads an INI file with sections [geometry], [model], [phantom], [learning],
/// [recon], [metrics] and [io]. Unknown, duplicate, missing-required and malformed
/// keys are all collected and reported together as ConfigValidationError.
ExperimentConfig parse_config(const std::filesystem::path& path, Subcommand sub = Subcommand::all);
ExperimentConfig parse_config_text(const std::string& text, Subcommand sub = Subcommand::all);

} // namespace spultra
