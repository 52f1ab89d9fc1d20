#pragma once

#include <algorithm>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "triad/affinity.hpp"
#include "triad/error.hpp"
#include "triad/partition.hpp"

namespace triad {

enum class Linkage { average, single, complete };

inline Linkage parse_linkage(const std::string& s) {
  if (s == "average") return Linkage::average;
  if (s == "single") return Linkage::single;
  if (s == "complete") return Linkage::complete;
  throw UsageError("unknown linkage '" + s + "' (expected average, single or complete)");
}

struct ClusterConfig {
  double threshold = 3.5;
  Linkage linkage = Linkage::average;

  void read(KeyValues& kv) {
    kv.read("threshold", threshold);
    std::string l;
    kv.read("linkage", l);
    if (!l.empty()) linkage = parse_linkage(l);
  }
};

// One merge; clusters are named by their smallest member, a < b.
struct Merge {
  MentionId a = 0;
  MentionId b = 0;
  double distance = 0.0;
  std::size_t size = 0;  // members after the merge

  friend bool operator==(const Merge&, const Merge&) = default;
};

struct Dendrogram {
  std::size_t points = 0;
  std::vector<Merge> merges;  // nondecreasing distance
};

// Nearest-neighbour chain with Lance-Williams updates. All three linkages
// are reducible, so the merges found are exactly those of the greedy
// procedure, only discovered out of order; a stable sort by distance
// restores the order (children always precede their parents).
inline Dendrogram agglomerate(const DistanceMatrix& dist, Linkage linkage = Linkage::average) {
  const std::size_t n = dist.size();
  if (n == 0) throw UsageError("cannot cluster an empty distance matrix");
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (!(dist(a, b) >= 0.0)) throw ModelError("distance matrix has a negative or undefined entry");

  Dendrogram out;
  out.points = n;
  std::vector<double> d(n * n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) d[a * n + b] = dist(a, b);
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  std::vector<std::size_t> chain;
  std::size_t remaining = n;

  // A merged cluster lives in the slot of its smaller representative, so a
  // slot index is always the smallest member of the cluster stored there.
  while (remaining > 1) {
    if (chain.empty())
      for (std::size_t i = 0; i < n; ++i)
        if (active[i]) {
          chain.push_back(i);
          break;
        }
    const std::size_t x = chain.back();
    const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
    std::size_t best = n;
    double best_d = 0.0;
    if (prev != n) {
      best = prev;
      best_d = d[x * n + prev];
    }
    for (std::size_t y = 0; y < n; ++y) {
      if (!active[y] || y == x) continue;
      const double v = d[x * n + y];
      if (best == n || v < best_d || (v == best_d && best != prev && y < best)) {
        best = y;
        best_d = v;
      }
    }
    if (best != prev) {
      chain.push_back(best);
      continue;
    }
    chain.pop_back();
    chain.pop_back();
    const std::size_t keep = std::min(x, prev), gone = std::max(x, prev);
    out.merges.push_back({keep, gone, best_d, size[keep] + size[gone]});
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == keep || k == gone) continue;
      const double dk = d[k * n + keep], dg = d[k * n + gone];
      double v;
      switch (linkage) {
        case Linkage::single:
          v = std::min(dk, dg);
          break;
        case Linkage::complete:
          v = std::max(dk, dg);
          break;
        case Linkage::average:
        default:
          v = (static_cast<double>(size[keep]) * dk + static_cast<double>(size[gone]) * dg) /
              static_cast<double>(size[keep] + size[gone]);
      }
      d[k * n + keep] = d[keep * n + k] = v;
    }
    size[keep] += size[gone];
    active[gone] = false;
    --remaining;
  }
  std::stable_sort(out.merges.begin(), out.merges.end(),
                   [](const Merge& l, const Merge& r) { return l.distance < r.distance; });
  return out;
}

// Applies every merge with distance <= t.
inline EntityPartition cut(const Dendrogram& dendrogram, double t) {
  const std::size_t n = dendrogram.points;
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& m : dendrogram.merges) {
    if (!(m.distance <= t)) continue;
    const std::size_t ra = find(m.a), rb = find(m.b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<Cluster> clusters(n);
  for (std::size_t i = 0; i < n; ++i) clusters[find(i)].push_back(i);
  std::erase_if(clusters, [](const Cluster& c) { return c.empty(); });
  return EntityPartition(std::move(clusters));
}

inline EntityPartition cluster_mentions(const DistanceMatrix& dist, const ClusterConfig& cfg = {}) {
  if (dist.size() == 0) return EntityPartition();
  return cut(agglomerate(dist, cfg.linkage), cfg.threshold);
}

// Human-readable listing: one cluster per line, members by id.
inline std::string format_clusters(const EntityPartition& p) {
  std::ostringstream out;
  out << "[\n";
  for (std::size_t c = 0; c < p.size(); ++c) {
    out << "  [";
    for (std::size_t i = 0; i < p.clusters()[c].size(); ++i) out << (i ? ", " : "") << p.clusters()[c][i];
    out << "]" << (c + 1 < p.size() ? "," : "") << "\n";
  }
  out << "]\n";
  return out.str();
}

}  // namespace triad
