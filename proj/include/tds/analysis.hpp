#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tds/invariant.hpp"
#include "tds/quasipoly.hpp"
#include "tds/types.hpp"

namespace tds {

/// Stability data for one (sub)system analyzed on its own.
struct SubsystemReport {
  TimeDelaySystem system;
  std::vector<CrossingPoint> crossings;
  StabilityMap map;
};

/// Result of the decompose-on-degeneracy stability pipeline. When the whole
/// system analyzes cleanly there is a single block and combined == its map.
struct StabilityAnalysis {
  bool decomposed = false;
  std::optional<DecompositionResult> decomposition;  // first split, when any
  std::vector<SubsystemReport> blocks;               // leaves, in block order
  StabilityMap combined;                             // NU summed over blocks
  std::vector<std::string> warnings;
};

/// Whole-system stability map; on a degenerate crossing (repeated axis root)
/// decomposes via a common invariant subspace and analyzes the blocks,
/// recursively. Throws DegenerateCrossing when auto_decompose is off, and
/// NoDecomposition when a degenerate block cannot be split further.
StabilityAnalysis analyze_stability(const TimeDelaySystem& sys, double tau_max,
                                    const ToleranceConfig& cfg = {}, bool auto_decompose = true,
                                    double omega_max = 0.0, int grid_points = 2000,
                                    int collocation_nodes = 64);

/// Merges per-block maps into the map of the product characteristic function.
StabilityMap combine_maps(const std::vector<StabilityMap>& maps, double tau_max);

}  // namespace tds
