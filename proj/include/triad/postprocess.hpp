#pragma once

#include <algorithm>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "triad/affinity.hpp"
#include "triad/clustering.hpp"
#include "triad/corpus.hpp"
#include "triad/partition.hpp"

namespace triad {

struct PostprocessFlags {
  bool proper_names = true;
  bool speaker_substitution = true;
  bool pronoun_fix = true;

  friend bool operator==(const PostprocessFlags&, const PostprocessFlags&) = default;
};

inline bool is_pronoun_mention(const Document& doc, const Mention& m) {
  if (m.length() != 1) return false;
  const std::string& pos = doc.tokens.at(m.start).pos;
  return pos == "PRP" || pos == "PRP$";
}

// All tokens tagged NNP/NNPS, or replaced by a speaker name.
inline bool is_proper_name(const Document& doc, const Mention& m) {
  for (std::size_t t = m.start; t <= m.end; ++t) {
    const Token& tok = doc.tokens.at(t);
    if (tok.pos != "NNP" && tok.pos != "NNPS" && !tok.speaker_substituted) return false;
  }
  return true;
}

inline std::vector<std::string> lowered_surface(const Document& doc, const Mention& m) {
  std::vector<std::string> out;
  for (std::size_t t = m.start; t <= m.end; ++t) out.push_back(to_lower(doc.tokens[t].surface));
  return out;
}

// Proper-name mentions with the same token sequence (ignoring case) get the
// minimum distance 1, whatever the prior entry.
inline DistanceMatrix link_same_proper_names(const Document& doc, DistanceMatrix dist) {
  std::vector<std::pair<std::vector<std::string>, MentionId>> names;
  for (const auto& m : doc.mentions)
    if (is_proper_name(doc, m)) names.push_back({lowered_surface(doc, m), m.id});
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = i + 1; j < names.size(); ++j)
      if (names[i].first == names[j].first) dist.set(names[i].second, names[j].second, 1.0);
  return dist;
}

// "I" becomes the token's speaker. "you" becomes the other speaker only when
// the document has exactly two speakers. Surfaces change; tags, spans and
// token counts do not.
inline Document substitute_speakers(Document doc) {
  std::set<std::string> speakers;
  for (const auto& t : doc.tokens)
    if (!t.speaker.empty()) speakers.insert(t.speaker);
  for (const auto& m : doc.mentions) {
    if (m.length() != 1) continue;
    Token& tok = doc.tokens[m.start];
    if (tok.speaker.empty() || tok.speaker_substituted) continue;
    const std::string w = to_lower(tok.surface);
    if (w == "i") {
      tok.surface = tok.speaker;
      tok.speaker_substituted = true;
    } else if (w == "you" && speakers.size() == 2) {
      for (const auto& s : speakers)
        if (s != tok.speaker) tok.surface = s;
      tok.speaker_substituted = true;
    }
  }
  return doc;
}

// Re-clustering callback: affinity in, partition out.
using Recluster = std::function<EntityPartition(const AffinityMatrix&)>;

struct PronounFixResult {
  EntityPartition partition;
  AffinityMatrix affinity;
  std::vector<std::pair<MentionId, MentionId>> links;  // (target, chosen antecedent)
};

inline std::size_t count_pronoun_only_clusters(const Document& doc, const EntityPartition& p) {
  std::size_t n = 0;
  for (const auto& c : p.clusters()) {
    if (c.size() < 2) continue;
    if (std::all_of(c.begin(), c.end(), [&](MentionId m) { return is_pronoun_mention(doc, doc.mentions[m]); })) ++n;
  }
  return n;
}

// For every pronoun-only cluster with two or more members, the first mention
// is linked at affinity 1 to the best of the three closest non-pronoun
// mentions on each side (ties: nearer, then earlier). One re-clustering pass
// over all links together.
inline PronounFixResult resolve_pronoun_only_clusters(const EntityPartition& partition, const Document& doc,
                                                      const AffinityMatrix& aff, const Recluster& recluster) {
  PronounFixResult out{partition, aff, {}};
  const std::size_t n = doc.mentions.size();
  auto pronoun = [&](MentionId m) { return is_pronoun_mention(doc, doc.mentions[m]); };
  for (const auto& c : partition.clusters()) {
    if (c.size() < 2 || !std::all_of(c.begin(), c.end(), pronoun)) continue;
    const MentionId target = c.front();
    std::vector<MentionId> candidates;
    for (std::size_t m = target, found = 0; m > 0 && found < 3; --m)
      if (!pronoun(m - 1)) {
        candidates.push_back(m - 1);
        ++found;
      }
    for (std::size_t m = target + 1, found = 0; m < n && found < 3; ++m)
      if (!pronoun(m)) {
        candidates.push_back(m);
        ++found;
      }
    if (candidates.empty()) continue;
    auto better = [&](MentionId x, MentionId y) {  // is x preferred over y
      const double sx = aff.score(target, x), sy = aff.score(target, y);
      if (sx != sy) return sx > sy;
      if (id_distance(target, x) != id_distance(target, y)) return id_distance(target, x) < id_distance(target, y);
      return x < y;
    };
    MentionId best = candidates.front();
    for (MentionId x : candidates)
      if (better(x, best)) best = x;
    out.affinity = override_affinity(std::move(out.affinity), target, best, 1.0);
    out.links.push_back({target, best});
  }
  if (!out.links.empty()) out.partition = recluster(out.affinity);
  return out;
}

}  // namespace triad
