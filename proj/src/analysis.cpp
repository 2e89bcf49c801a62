#include "tds/analysis.hpp"

#include <algorithm>
#include <sstream>

namespace tds {

StabilityMap combine_maps(const std::vector<StabilityMap>& maps, double tau_max) {
  StabilityMap out;
  for (const auto& m : maps) {
    out.nu0 += m.nu0;
    out.events.insert(out.events.end(), m.events.begin(), m.events.end());
    out.degenerate = out.degenerate || m.degenerate;
    out.degenerate_frequencies.insert(out.degenerate_frequencies.end(),
                                      m.degenerate_frequencies.begin(),
                                      m.degenerate_frequencies.end());
  }
  std::sort(out.events.begin(), out.events.end(), [](const auto& a, const auto& b) {
    if (a.tau != b.tau) return a.tau < b.tau;
    return a.omega < b.omega;
  });
  int nu = out.nu0;
  double lo = 0.0;
  for (const auto& e : out.events) {
    if (e.tau > tau_max) break;
    if (e.tau > lo + 1e-12) {
      out.intervals.push_back({lo, e.tau, nu});
      lo = e.tau;
    }
    nu += e.delta_nu;
    if (nu < 0) {
      throw NumericalError("combine_maps: unstable-pole count went negative");
    }
  }
  if (lo < tau_max) out.intervals.push_back({lo, tau_max, nu});
  return out;
}

namespace {

void analyze_recursive(const TimeDelaySystem& sys, double tau_max, const ToleranceConfig& cfg,
                       bool auto_decompose, double omega_max, int grid_points,
                       int collocation_nodes, StabilityAnalysis& result) {
  const CharacteristicFunction F = char_function(sys);
  try {
    SubsystemReport rep;
    rep.system = sys;
    rep.crossings = crossing_sweep(F, omega_max > 0.0 ? omega_max : default_omega_max(sys),
                                   grid_points);
    rep.map = stability_map(F, sys, tau_max, cfg, TendencyPolicy::kAnalytic, std::nullopt,
                            omega_max, grid_points, collocation_nodes);
    result.blocks.push_back(std::move(rep));
    return;
  } catch (const DegenerateCrossing& degenerate) {
    if (!auto_decompose) throw;
    SystemDecomposition split;
    try {
      split = decompose_system(sys, cfg);
    } catch (const NoDecomposition&) {
      throw NoDecomposition("analyze_stability: degenerate crossing at omega = " +
                            std::to_string(degenerate.omega) +
                            " and no common invariant subspace to decompose with");
    }
    std::ostringstream msg;
    msg << "degenerate crossing at omega = " << degenerate.omega << "; decomposed "
        << sys.dim() << " -> {" << split.transform.k << ", " << (sys.dim() - split.transform.k)
        << "} (residual " << split.transform.residual << ")";
    result.warnings.push_back(msg.str());
    result.decomposed = true;
    if (!result.decomposition) result.decomposition = split.transform;
    for (const auto& sub : split.subsystems) {
      analyze_recursive(sub, tau_max, cfg, auto_decompose, 0.0, grid_points, collocation_nodes,
                        result);
    }
  }
}

}  // namespace

StabilityAnalysis analyze_stability(const TimeDelaySystem& sys, double tau_max,
                                    const ToleranceConfig& cfg, bool auto_decompose,
                                    double omega_max, int grid_points, int collocation_nodes) {
  sys.validate();
  cfg.validate();
  StabilityAnalysis result;
  analyze_recursive(sys, tau_max, cfg, auto_decompose, omega_max, grid_points, collocation_nodes,
                    result);
  std::vector<StabilityMap> maps;
  for (const auto& b : result.blocks) maps.push_back(b.map);
  result.combined = combine_maps(maps, tau_max);
  return result;
}

}  // namespace tds
