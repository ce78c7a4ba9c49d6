#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "modeconn/errors.hpp"
#include "modeconn/parallel.hpp"
#include "modeconn/percolation.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

std::string_view to_string(LatticeMode mode) {
  return mode == LatticeMode::discrete ? "discrete" : "threshold";
}

LatticeMode lattice_mode_from_string(std::string_view name) {
  if (name == "discrete") return LatticeMode::discrete;
  if (name == "threshold") return LatticeMode::threshold;
  throw ConfigError("mode", "unknown lattice mode '" + std::string(name) + "'");
}

std::size_t LatticeConfig::sites() const {
  std::size_t n = 1;
  for (std::size_t k = 0; k < dimension; ++k) {
    if (n > std::numeric_limits<std::size_t>::max() / side) throw ConfigError("side", "lattice size overflows");
    n *= side;
  }
  return n;
}

void LatticeConfig::validate() const {
  if (dimension == 0) throw ConfigError("dimension", "must be at least 1");
  if (side < 2) throw ConfigError("side", "must be at least 2");
  if (mode == LatticeMode::discrete && !(param > 0.0 && param <= 1.0))
    throw ConfigError("param", "per-label probability must lie in (0, 1]");
  if (mode == LatticeMode::threshold && !(param >= 0.0 && param <= 1.0))
    throw ConfigError("param", "delta must lie in [0, 1]");
  if (sites() > (std::size_t{1} << 31)) throw ConfigError("side", "lattice exceeds 2^31 sites");
}

UnionFind::UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
  std::iota(parent_.begin(), parent_.end(), 0);
}

std::size_t UnionFind::find(std::size_t x) {
  std::size_t root = x;
  while (parent_[root] != root) root = parent_[root];
  while (parent_[x] != root) x = std::exchange(parent_[x], root);
  return root;
}

bool UnionFind::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (size_[a] < size_[b]) std::swap(a, b);
  parent_[b] = a;
  size_[a] += size_[b];
  return true;
}

namespace {

std::size_t label_count(double p) {
  return static_cast<std::size_t>(std::ceil(1.0 / p - 1e-12));
}

double connection_probability(LatticeMode mode, double param) {
  return mode == LatticeMode::discrete ? param : 2.0 * param - param * param;
}

}  // namespace

std::vector<double> draw_sites(const LatticeConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.sites();
  std::vector<double> sites(n);
  constexpr std::size_t kChunk = 1 << 16;
  const Rng root(cfg.seed);
  const std::size_t labels = cfg.mode == LatticeMode::discrete ? label_count(cfg.param) : 0;
  parallel_for((n + kChunk - 1) / kChunk, [&](std::size_t chunk) {
    Rng rng = root.split(chunk);
    const std::size_t end = std::min(n, (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      const double u = rng.uniform();
      sites[i] = cfg.mode == LatticeMode::threshold
                     ? u
                     : static_cast<double>(std::min(labels - 1, static_cast<std::size_t>(u / cfg.param)));
    }
  });
  return sites;
}

bool sites_compatible(const LatticeConfig& cfg, double a, double b) {
  return cfg.mode == LatticeMode::discrete ? a == b : std::abs(a - b) <= cfg.param;
}

std::vector<std::size_t> lattice_components(const LatticeConfig& cfg, const std::vector<double>& sites) {
  cfg.validate();
  const std::size_t n = cfg.sites();
  if (sites.size() != n) throw InvalidArgument("lattice_components: site count mismatch");
  UnionFind uf(n);
  std::vector<std::size_t> stride(cfg.dimension, 1);
  for (std::size_t k = 1; k < cfg.dimension; ++k) stride[k] = stride[k - 1] * cfg.side;

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < cfg.dimension; ++k) {
      const std::size_t coord = (i / stride[k]) % cfg.side;
      std::size_t j;
      if (coord + 1 < cfg.side) j = i + stride[k];
      else if (cfg.periodic) j = i - coord * stride[k];
      else continue;
      if (sites_compatible(cfg, sites[i], sites[j])) uf.unite(i, j);
    }

  std::vector<std::size_t> id(n);
  std::vector<std::size_t> first(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = uf.find(i);
    if (first[r] == n) first[r] = i;
    id[i] = first[r];
  }
  return id;
}

PercolationResult simulate_lattice(const LatticeConfig& cfg) {
  cfg.validate();
  const auto sites = draw_sites(cfg);
  const auto id = lattice_components(cfg, sites);
  const std::size_t n = sites.size();

  PercolationResult r;
  r.dimension = cfg.dimension;
  r.side = cfg.side;
  r.mode = cfg.mode;
  r.param = cfg.param;
  r.q = static_cast<double>(cfg.dimension) * connection_probability(cfg.mode, cfg.param);

  std::vector<std::size_t> size(n, 0);
  for (auto c : id) ++size[c];
  for (std::size_t i = 0; i < n; ++i)
    if (size[i] > 0) r.component_sizes.push_back(size[i]);
  std::sort(r.component_sizes.begin(), r.component_sizes.end(), std::greater<>());
  r.largest_fraction = static_cast<double>(r.component_sizes.front()) / static_cast<double>(n);

  if (cfg.mode == LatticeMode::discrete) {
    // Exact: P(same component | same label) for two sites drawn with replacement.
    std::unordered_map<double, double> label_sizes;
    for (double s : sites) label_sizes[s] += 1.0;
    double same_label = 0.0, same_component = 0.0;
    for (const auto& [label, count] : label_sizes) same_label += count * count;
    for (std::size_t i = 0; i < n; ++i)
      if (size[i] > 0) same_component += static_cast<double>(size[i]) * static_cast<double>(size[i]);
    r.pair_connectivity = same_component / same_label;
  } else {
    Rng rng = Rng(cfg.seed).split("pairs");
    std::size_t hits = 0;
    for (std::size_t s = 0; s < cfg.pair_samples; ++s) {
      std::size_t a, b;
      do {
        a = rng.below(n);
        b = rng.below(n);
      } while (!sites_compatible(cfg, sites[a], sites[b]));
      hits += id[a] == id[b];
    }
    const double m = static_cast<double>(cfg.pair_samples);
    r.pair_connectivity = static_cast<double>(hits) / m;
    r.stderr_pair = std::sqrt(r.pair_connectivity * (1.0 - r.pair_connectivity) / m);
  }
  return r;
}

std::vector<SweepRow> connectivity_vs_dimension(const SweepConfig& cfg) {
  if (!(cfg.q > 0.0)) throw ConfigError("q", "must be positive");
  if (cfg.seeds == 0) throw ConfigError("seeds", "must be at least 1");
  struct Cell {
    std::size_t row, seed_index;
  };
  std::vector<SweepRow> rows;
  std::vector<LatticeConfig> lattices;
  for (auto d : cfg.dimensions) {
    if (d == 0) throw ConfigError("dimensions", "must be positive");
    const double p = cfg.q / static_cast<double>(d);
    if (p > 1.0) throw ConfigError("q", "q / d exceeds 1 at d = " + std::to_string(d));
    auto side = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(cfg.max_sites), 1.0 / static_cast<double>(d))));
    auto fits = [&](std::size_t l) {
      double total = 1.0;
      for (std::size_t k = 0; k < d; ++k) total *= static_cast<double>(l);
      return total <= static_cast<double>(cfg.max_sites);
    };
    while (side > 2 && !fits(side)) --side;
    while (fits(side + 1)) ++side;
    if (side < 2) throw ConfigError("max_sites", "too small for d = " + std::to_string(d));
    LatticeConfig lc;
    lc.dimension = d;
    lc.side = side;
    lc.mode = cfg.mode;
    lc.param = cfg.mode == LatticeMode::discrete ? p : 1.0 - std::sqrt(1.0 - p);
    lc.periodic = cfg.periodic;
    lc.pair_samples = cfg.pair_samples;
    lattices.push_back(lc);
    SweepRow row;
    row.dimension = d;
    row.side = side;
    row.mode = cfg.mode;
    row.param = lc.param;
    row.q = cfg.q;
    row.mean_field = mean_field_P(cfg.q);
    row.seed = cfg.seed;
    rows.push_back(row);
  }

  std::vector<Cell> cells;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t s = 0; s < cfg.seeds; ++s) cells.push_back({r, s});
  const Rng root(cfg.seed);
  const auto results = parallel_map<PercolationResult>(cells.size(), [&](std::size_t c) {
    LatticeConfig lc = lattices[cells[c].row];
    lc.seed = root.split(lc.dimension).split(cells[c].seed_index).next_u64();
    return simulate_lattice(lc);
  });

  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<double> pc, lf;
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (cells[c].row == r) {
        pc.push_back(results[c].pair_connectivity);
        lf.push_back(results[c].largest_fraction);
      }
    const double m = static_cast<double>(pc.size());
    rows[r].pair_connectivity = std::accumulate(pc.begin(), pc.end(), 0.0) / m;
    rows[r].largest_fraction = std::accumulate(lf.begin(), lf.end(), 0.0) / m;
    if (pc.size() > 1) {
      double ss = 0.0;
      for (double v : pc) ss += (v - rows[r].pair_connectivity) * (v - rows[r].pair_connectivity);
      rows[r].stderr_pair = std::sqrt(ss / (m - 1.0) / m);
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "d,L,mode,param,q,largest_frac,pair_conn,stderr,mean_field_P,seed\n";
  out << std::setprecision(17);
  for (const auto& r : rows)
    out << r.dimension << ',' << r.side << ',' << to_string(r.mode) << ',' << r.param << ',' << r.q << ','
        << r.largest_fraction << ',' << r.pair_connectivity << ',' << r.stderr_pair << ','
        << r.mean_field << ',' << r.seed << '\n';
}

}  // namespace modeconn
