#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "modeconn/network.hpp"

namespace modeconn {

// ---- output-range intervals ----

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Width-delta intervals starting every delta/2: [0, d], [d/2, 3d/2], ...,
/// [1 - d, 1]; 2/delta - 1 of them. Requires 1/delta to be an integer.
std::vector<Interval> interval_labels(double delta);

// ---- Lipschitz bound ----

struct PowerIterationConfig {
  double tol = 1e-9;
  std::size_t max_iters = 100000;
  std::uint64_t seed = 0;
};

/// Largest singular value of the linear map of layer `index` (bias dropped),
/// by power iteration on A^T A using the layer's forward and adjoint passes.
/// Parameter-free layers return their Lipschitz constant, 1.
double layer_operator_norm(const Network& net, std::size_t index, const PowerIterationConfig& cfg = {});

struct LipschitzReport {
  double bound = 0.0;
  std::vector<double> layer_norms;
  double final_activation = 1.0;
};

/// Product of every layer's operator norm (activations, flatten and pooling
/// contribute 1) times `final_activation`, the Lipschitz constant of whatever
/// is applied to the logits. Throws OptimizationError when power iteration
/// does not converge.
LipschitzReport lipschitz_bound(const Network& net, double final_activation = 1.0,
                                const PowerIterationConfig& cfg = {});

/// (delta - delta_prime) / M.
double epsilon_grid(double lipschitz, double delta, double delta_prime);
/// Side of the grid cube with diagonal epsilon in `dim` dimensions.
double cube_side(double epsilon, std::size_t dim);

// ---- site percolation ----

enum class LatticeMode { discrete, threshold };

std::string_view to_string(LatticeMode mode);
LatticeMode lattice_mode_from_string(std::string_view name);

/// Discrete mode: `param` is the per-label probability p. Sites take one of
/// K = ceil(1/p) labels; the first K - 1 labels have probability p each and
/// the last takes the remaining mass. Neighbors connect when labels agree.
/// Threshold mode: `param` is delta; sites carry u ~ U[0, 1] and neighbors
/// connect when |u - u'| <= delta.
struct LatticeConfig {
  std::size_t dimension = 2;
  std::size_t side = 64;
  LatticeMode mode = LatticeMode::discrete;
  double param = 0.5;
  bool periodic = false;
  std::uint64_t seed = 0;
  /// Random compatible pairs drawn to estimate pair connectivity in threshold mode.
  std::size_t pair_samples = 100000;

  std::size_t sites() const;
  void validate() const;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n);
  std::size_t find(std::size_t x);
  /// Returns false when already joined.
  bool unite(std::size_t a, std::size_t b);
  std::size_t size_of(std::size_t x) { return size_[find(x)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

/// Site values: label index (as a double) or u, drawn from cfg.seed.
std::vector<double> draw_sites(const LatticeConfig& cfg);
bool sites_compatible(const LatticeConfig& cfg, double a, double b);

/// Component id of every site: the smallest site index in its component.
/// Sites are indexed with coordinate 0 varying fastest.
std::vector<std::size_t> lattice_components(const LatticeConfig& cfg, const std::vector<double>& sites);

struct PercolationResult {
  std::size_t dimension = 0;
  std::size_t side = 0;
  LatticeMode mode = LatticeMode::discrete;
  double param = 0.0;
  /// dimension * per-site connection probability: p for discrete mode,
  /// 2 delta - delta^2 for threshold mode.
  double q = 0.0;
  std::vector<std::size_t> component_sizes;  // descending
  double largest_fraction = 0.0;
  double pair_connectivity = 0.0;
  /// Zero in discrete mode, where pair connectivity is computed exactly.
  double stderr_pair = 0.0;
};

PercolationResult simulate_lattice(const LatticeConfig& cfg);

/// Root of P = 1 - exp(-q P) in (0, 1] for q > 1, 0 otherwise.
double mean_field_P(double q);

struct SweepConfig {
  std::vector<std::size_t> dimensions = {2, 3, 4, 5, 6, 7};
  double q = 1.5;
  LatticeMode mode = LatticeMode::discrete;
  std::size_t max_sites = 1000000;
  std::size_t seeds = 3;
  std::uint64_t seed = 0;
  bool periodic = false;
  std::size_t pair_samples = 100000;
};

struct SweepRow {
  std::size_t dimension = 0;
  std::size_t side = 0;
  LatticeMode mode = LatticeMode::discrete;
  double param = 0.0;
  double q = 0.0;
  double largest_fraction = 0.0;  // mean over seeds
  double pair_connectivity = 0.0;  // mean over seeds
  double stderr_pair = 0.0;        // standard error over seeds
  double mean_field = 0.0;
  std::uint64_t seed = 0;
};

/// At every dimension d, the parameter is chosen so the per-site connection
/// probability is q / d, and the side is the largest L with L^d <= max_sites.
std::vector<SweepRow> connectivity_vs_dimension(const SweepConfig& cfg);

/// Header `d,L,mode,param,q,largest_frac,pair_conn,stderr,mean_field_P,seed`.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace modeconn
