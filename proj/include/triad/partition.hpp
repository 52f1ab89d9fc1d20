#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "triad/error.hpp"

namespace triad {

using MentionId = std::size_t;
using Cluster = std::vector<MentionId>;

// A set of disjoint mention clusters. Kept in canonical form: members sorted
// ascending inside each cluster, clusters ordered by their smallest member.
class EntityPartition {
 public:
  EntityPartition() = default;
  explicit EntityPartition(std::vector<Cluster> clusters) : clusters_(std::move(clusters)) {
    canonicalize();
  }

  const std::vector<Cluster>& clusters() const noexcept { return clusters_; }
  std::size_t size() const noexcept { return clusters_.size(); }
  bool empty() const noexcept { return clusters_.empty(); }

  std::size_t mention_count() const {
    std::size_t n = 0;
    for (const auto& c : clusters_) n += c.size();
    return n;
  }

  std::set<MentionId> mentions() const {
    std::set<MentionId> out;
    for (const auto& c : clusters_) out.insert(c.begin(), c.end());
    return out;
  }

  // mention -> index of its cluster
  std::map<MentionId, std::size_t> membership() const {
    std::map<MentionId, std::size_t> out;
    for (std::size_t i = 0; i < clusters_.size(); ++i)
      for (MentionId m : clusters_[i]) out[m] = i;
    return out;
  }

  // Throws if clusters overlap or one is empty.
  void validate() const {
    std::set<MentionId> seen;
    for (const auto& c : clusters_) {
      if (c.empty()) throw DataError("partition contains an empty cluster");
      for (MentionId m : c)
        if (!seen.insert(m).second)
          throw DataError("mention " + std::to_string(m) + " appears in two clusters");
    }
  }

  friend bool operator==(const EntityPartition& a, const EntityPartition& b) {
    return a.clusters_ == b.clusters_;
  }

 private:
  void canonicalize() {
    for (auto& c : clusters_) std::sort(c.begin(), c.end());
    std::sort(clusters_.begin(), clusters_.end(), [](const Cluster& a, const Cluster& b) {
      if (a.empty() || b.empty()) return a.size() < b.size();
      return a.front() < b.front();
    });
  }

  std::vector<Cluster> clusters_;
};

// Removes size-1 clusters; only the metric path uses this.
inline EntityPartition strip_singletons(const EntityPartition& p) {
  std::vector<Cluster> kept;
  for (const auto& c : p.clusters())
    if (c.size() > 1) kept.push_back(c);
  return EntityPartition(std::move(kept));
}

// One cluster per mention.
inline EntityPartition singleton_partition(std::size_t n) {
  std::vector<Cluster> clusters(n);
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};
  return EntityPartition(std::move(clusters));
}

}  // namespace triad
