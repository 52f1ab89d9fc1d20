#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "triad/config.hpp"
#include "triad/corpus.hpp"
#include "triad/error.hpp"
#include "triad/features.hpp"
#include "triad/model.hpp"
#include "triad/rng.hpp"

namespace triad {

// Windows are "stretches": mention-index distance plus one, so a stretch of
// 15 admits pairs with at most 14 mentions between them.
struct PolyadSpec {
  std::size_t order = 3;
  std::size_t train_window = 15;
  std::size_t eval_window = 40;
  std::optional<std::size_t> max_third_members;

  void validate() const {
    if (order != 2 && order != 3) throw UsageError("polyad order must be 2 or 3");
    if (train_window < 2 || eval_window < 2) throw UsageError("polyad windows must be at least 2");
    if (max_third_members && *max_third_members == 0) throw UsageError("max_third_members must be positive");
  }

  void read(KeyValues& kv) {
    kv.read("polyad_order", order);
    kv.read("train_window", train_window);
    kv.read("eval_window", eval_window);
    if (kv.has("max_third_members")) {
      std::size_t cap = 0;
      kv.read("max_third_members", cap);
      if (cap > 0) max_third_members = cap;
    }
  }

  std::size_t train_reach() const { return train_window - 1; }
  std::size_t eval_reach() const { return eval_window - 1; }
};

inline std::size_t id_distance(MentionId a, MentionId b) { return a > b ? a - b : b - a; }

// Mentions in slot order; labels for pairs (0,1), (1,2), (2,0).
struct LabeledTriad {
  std::array<MentionId, 3> ids{};
  std::array<std::uint8_t, 3> labels{};

  friend bool operator==(const LabeledTriad&, const LabeledTriad&) = default;
  friend auto operator<=>(const LabeledTriad&, const LabeledTriad&) = default;
};

// Exactly two positive pair labels cannot come from a partition.
inline bool labels_transitive(const std::array<std::uint8_t, 3>& y) { return y[0] + y[1] + y[2] != 2; }

inline std::array<MentionId, 3> degenerate_triad(MentionId a, MentionId b) { return {a, b, a}; }

namespace polyad_detail {

inline int entity_of(const Document& doc, MentionId m) {
  const auto& e = doc.mentions.at(m).entity_id;
  if (!e) throw DataError(doc.doc_key + ": mention " + std::to_string(m) + " has no gold entity");
  return *e;
}

inline LabeledTriad label(const Document& doc, std::array<MentionId, 3> ids) {
  LabeledTriad t{ids, {}};
  for (std::size_t p = 0; p < 3; ++p)
    t.labels[p] = entity_of(doc, ids[p]) == entity_of(doc, ids[(p + 1) % 3]) ? 1 : 0;
  if (!labels_transitive(t.labels))
    throw DataError(doc.doc_key + ": intransitive triad labels for mentions " + std::to_string(ids[0]) + "," +
                    std::to_string(ids[1]) + "," + std::to_string(ids[2]));
  return t;
}

}  // namespace polyad_detail

// All i<j<k with k-i within the training stretch. A two-mention document
// yields its degenerate triad instead.
inline std::vector<LabeledTriad> enumerate_training_triads(const Document& doc, const PolyadSpec& spec) {
  spec.validate();
  std::vector<LabeledTriad> out;
  const std::size_t n = doc.mentions.size();
  if (n == 2) {
    out.push_back(polyad_detail::label(doc, degenerate_triad(0, 1)));
    return out;
  }
  const std::size_t reach = spec.train_reach();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n && j - i <= reach; ++j)
      for (std::size_t k = j + 1; k < n && k - i <= reach; ++k) out.push_back(polyad_detail::label(doc, {i, j, k}));
  return out;
}

// Dyad training pairs as degenerate triads (a, b, a); only slot 0 is used.
inline std::vector<LabeledTriad> enumerate_training_pairs(const Document& doc, const PolyadSpec& spec) {
  spec.validate();
  std::vector<LabeledTriad> out;
  const std::size_t n = doc.mentions.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n && b - a <= spec.train_reach(); ++b)
      out.push_back(polyad_detail::label(doc, degenerate_triad(a, b)));
  return out;
}

inline std::vector<LabeledTriad> enumerate_training_polyads(const Document& doc, const PolyadSpec& spec) {
  return spec.order == 3 ? enumerate_training_triads(doc, spec) : enumerate_training_pairs(doc, spec);
}

// Closed form for the number of i<j<k among n with k-i <= w-1:
// sum over the outer gap g of (n-g) choices of i and (g-1) choices of j.
inline std::size_t training_triad_count(std::size_t n, std::size_t window) {
  std::size_t total = 0;
  for (std::size_t g = 2; g < n && g <= window - 1; ++g) total += (n - g) * (g - 1);
  return total;
}

inline bool in_eval_window(MentionId a, MentionId b, const PolyadSpec& spec) {
  return a != b && id_distance(a, b) <= spec.eval_reach();
}

// Third members c for the pair (a, b), ascending by id unless capped, in
// which case the nearest are kept (ties toward the smaller id).
inline std::vector<MentionId> eval_third_members(std::size_t n, MentionId a, MentionId b, const PolyadSpec& spec) {
  std::vector<MentionId> cs;
  const std::size_t reach = spec.eval_reach();
  const std::size_t lo = std::min(a, b) > reach ? std::min(a, b) - reach : 0;
  const std::size_t hi = std::min(n - 1, std::max(a, b) + reach);
  for (std::size_t c = lo; c <= hi && n > 0; ++c) {
    if (c == a || c == b) continue;
    if (std::min(id_distance(c, a), id_distance(c, b)) <= reach) cs.push_back(c);
  }
  if (spec.max_third_members && cs.size() > *spec.max_third_members) {
    auto closeness = [&](MentionId c) { return std::make_pair(std::min(id_distance(c, a), id_distance(c, b)), c); };
    std::stable_sort(cs.begin(), cs.end(), [&](MentionId x, MentionId y) { return closeness(x) < closeness(y); });
    cs.resize(*spec.max_third_members);
    std::sort(cs.begin(), cs.end());
  }
  return cs;
}

inline std::vector<std::array<MentionId, 3>> enumerate_eval_triads(const Document& doc, MentionId a, MentionId b,
                                                                   const PolyadSpec& spec) {
  if (!in_eval_window(a, b, spec)) throw UsageError("pair outside the evaluation window");
  std::vector<std::array<MentionId, 3>> out;
  for (MentionId c : eval_third_members(doc.mentions.size(), a, b, spec)) out.push_back({a, b, c});
  return out;
}

// ---------------------------------------------------------------------------
// Batching

inline std::vector<std::vector<LabeledTriad>> make_batches(std::vector<LabeledTriad> triads, std::size_t batch_size,
                                                           std::uint64_t seed) {
  if (batch_size == 0) throw UsageError("batch size must be positive");
  Rng rng(seed);
  rng.shuffle(triads);
  std::vector<std::vector<LabeledTriad>> out;
  for (std::size_t i = 0; i < triads.size(); i += batch_size)
    out.emplace_back(triads.begin() + static_cast<std::ptrdiff_t>(i),
                     triads.begin() + static_cast<std::ptrdiff_t>(std::min(triads.size(), i + batch_size)));
  return out;
}

inline PolyadInput polyad_input(const Document& doc, const std::array<MentionId, 3>& ids,
                                const std::array<std::size_t, 3>& slots, const FeatureConfig& features) {
  PolyadInput in;
  in.slot = slots;
  for (std::size_t p = 0; p < 3; ++p)
    in.pair[p] = make_pair_input(doc, doc.mentions[ids[p]], doc.mentions[ids[(p + 1) % 3]], features);
  return in;
}

// Network inputs for one document's triads; `encodings` holds every mention
// of `doc` in id order. Dyad batches keep slot-0 labels only.
inline ModelBatch build_batch(const Document& doc, std::span<const MentionEncoding> encodings,
                              std::span<const LabeledTriad> triads, ModelKind kind, const FeatureConfig& features) {
  ModelBatch b;
  std::map<MentionId, std::size_t> local;
  const std::size_t outs = kind == ModelKind::triad ? 3 : 1;
  b.labels = ad::Tensor(triads.size(), outs);
  for (std::size_t r = 0; r < triads.size(); ++r) {
    const auto& t = triads[r];
    std::array<std::size_t, 3> slots{};
    for (std::size_t q = 0; q < 3; ++q) {
      auto [it, fresh] = local.emplace(t.ids[q], b.mentions.size());
      if (fresh) {
        b.mentions.push_back(encodings[t.ids[q]]);
        b.mention_ids.push_back(t.ids[q]);
      }
      slots[q] = it->second;
    }
    b.items.push_back(polyad_input(doc, t.ids, slots, features));
    for (std::size_t p = 0; p < outs; ++p) b.labels(r, p) = t.labels[p];
  }
  return b;
}

}  // namespace triad
