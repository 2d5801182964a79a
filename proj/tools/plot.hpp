#pragma once

#include <filesystem>

#include "joined/config.hpp"
#include "joined/nn/networks.hpp"
#include "joined/types.hpp"

namespace joined::tools {

/// Line chart of every numeric column against the first one. Empty cells are
/// gaps.
void plot_loss_csv(const std::filesystem::path& csv, const std::filesystem::path& png);

/// One row: image, distance map, heatmaps (OD red, fovea green), coarse mask,
/// fine mask (when a fine segmenter is given).
void plot_panel(nn::JsdmNet<float>& coarse, nn::FsmNet<float>* fsm, const FundusSample& s,
                const config::RunConfig& cfg, const std::filesystem::path& png);

}  // namespace joined::tools
