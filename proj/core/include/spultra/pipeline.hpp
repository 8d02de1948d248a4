#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spultra/config.hpp"

namespace spultra {

enum class Method { fbp, pwls_ep, pwls_ultra, spultra };

Method parse_method(const std::string& name);
std::string to_string(Method m);

struct PipelineOptions {
    Subcommand sub = Subcommand::all;
    std::optional<Method> method;  // reconstruct/evaluate only this method
    bool deterministic_noise = false;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 1;
inline constexpr int missing_artifact = 2;
inline constexpr int numerical = 3;
inline constexpr int manifest_mismatch = 4;
} // namespace exit_code

/// Runs the requested stages under cfg.out_dir. Writes SPIM images and
/// sinograms, PGM previews, the transform file, per-method trace CSVs,
/// metrics.csv (metrics_<method>.csv for a single method) and manifest.json. Diagnostics go to `log`. Returns one of
/// the exit_code values; never throws.
int run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opts, std::ostream& log);

/// Body mask (truth > 0) or the full grid, per cfg.roi.
RoiMask evaluation_roi(const ImageGrid& truth, const std::string& roi);

} // namespace spultra
