#pragma once

#include "collabevo/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace collabevo {

struct CurvePoint
{
    double mean = 0.0;
    double stderr_mean = 0.0;
};

/// Per-generation curve over several runs: mean of the run means and their
/// standard error across runs. A single run falls back to its own
/// within-generation standard error. Runs must have equal length.
std::vector<CurvePoint> aggregate_runs(std::span<const std::vector<GenerationRecord>> runs);

/// Line plot of the mean with a shaded +-stderr band, as PNG bytes.
std::vector<std::uint8_t> render_fitness_curve_png(std::span<const CurvePoint> curve, const std::string& title,
                                                   int width = 800, int height = 500);

} // namespace collabevo
