#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "triad/corpus.hpp"
#include "triad/error.hpp"

namespace triad {

struct FeatureConfig {
  std::size_t context = 8;         // tokens on each side of the mention
  std::size_t max_mention = 10;    // longer mentions keep their last tokens
  double max_token_distance = 2000.0;

  std::size_t window() const noexcept { return 2 * context + max_mention + 2; }
};

// POS tag ids. Four reserved rows come first: padding, unknown tag, mention
// begin and mention end.
class PosVocabulary {
 public:
  static constexpr std::size_t kPad = 0, kUnknown = 1, kBegin = 2, kEnd = 3;

  PosVocabulary() : tags_{"<pad>", "<unk>", "<begin>", "<end>"} { reindex(); }

  static PosVocabulary from_corpus(const std::vector<Document>& docs) {
    std::set<std::string> seen;
    for (const auto& d : docs)
      for (const auto& t : d.tokens) seen.insert(t.pos);
    PosVocabulary v;
    for (const auto& s : seen) v.tags_.push_back(s);
    v.reindex();
    return v;
  }

  // One tag per line, index = line number.
  static PosVocabulary parse(const std::string& text) {
    PosVocabulary v;
    v.tags_.clear();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) v.tags_.push_back(line);
    if (v.tags_.size() < 4 || v.tags_[kPad] != "<pad>" || v.tags_[kUnknown] != "<unk>" ||
        v.tags_[kBegin] != "<begin>" || v.tags_[kEnd] != "<end>")
      throw DataError("POS vocabulary is missing its reserved entries");
    v.reindex();
    return v;
  }

  std::string serialize() const {
    std::string out;
    for (const auto& t : tags_) out += t + "\n";
    return out;
  }

  std::size_t size() const noexcept { return tags_.size(); }
  const std::vector<std::string>& tags() const noexcept { return tags_; }

  std::size_t lookup(const std::string& tag) const {
    auto it = index_.find(tag);
    return it == index_.end() ? kUnknown : it->second;
  }

  friend bool operator==(const PosVocabulary& a, const PosVocabulary& b) { return a.tags_ == b.tags_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tags_.size(); ++i)
      if (!index_.emplace(tags_[i], i).second) throw DataError("duplicate POS tag " + tags_[i]);
  }

  std::vector<std::string> tags_;
  std::map<std::string, std::size_t> index_;
};

// Word/POS id windows for one mention:
//   [left context][BEGIN][mention tail][END][right context][padding]
// The left context is right-aligned against BEGIN, so a mention near the
// document start gets leading padding.
struct MentionEncoding {
  std::vector<std::size_t> word_ids;
  std::vector<std::size_t> pos_ids;
  std::vector<std::uint8_t> mask;

  std::size_t length() const noexcept { return mask.size(); }
  std::size_t unmasked() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
  // One past the last unmasked position.
  std::size_t extent() const {
    for (std::size_t i = mask.size(); i > 0; --i)
      if (mask[i - 1]) return i;
    return 0;
  }

  friend bool operator==(const MentionEncoding&, const MentionEncoding&) = default;
};

inline MentionEncoding encode_mention(const Document& doc, const Mention& mention, const EmbeddingTable& emb,
                                      const PosVocabulary& posvocab, const FeatureConfig& cfg = {}) {
  if (mention.end >= doc.tokens.size() || mention.start > mention.end)
    throw DataError(doc.doc_key + ": mention outside document");
  const std::size_t L = cfg.window();
  MentionEncoding enc;
  enc.word_ids.assign(L, emb.padding());
  enc.pos_ids.assign(L, PosVocabulary::kPad);
  enc.mask.assign(L, 0);

  auto put = [&](std::size_t slot, std::size_t token) {
    enc.word_ids[slot] = emb.lookup(doc.tokens[token].surface);
    enc.pos_ids[slot] = posvocab.lookup(doc.tokens[token].pos);
    enc.mask[slot] = 1;
  };

  const std::size_t left = std::min(cfg.context, mention.start);
  for (std::size_t i = 0; i < left; ++i) put(cfg.context - left + i, mention.start - left + i);

  std::size_t slot = cfg.context;
  enc.word_ids[slot] = emb.begin_marker();
  enc.pos_ids[slot] = PosVocabulary::kBegin;
  enc.mask[slot++] = 1;

  const std::size_t first = mention.length() > cfg.max_mention ? mention.end + 1 - cfg.max_mention : mention.start;
  for (std::size_t t = first; t <= mention.end; ++t) put(slot++, t);

  enc.word_ids[slot] = emb.end_marker();
  enc.pos_ids[slot] = PosVocabulary::kEnd;
  enc.mask[slot++] = 1;

  for (std::size_t i = 1; i <= cfg.context && mention.end + i < doc.tokens.size(); ++i) put(slot++, mention.end + i);
  return enc;
}

struct PairFeatures {
  bool same_speaker = false;
  std::size_t token_distance = 0;
  std::size_t mention_index_distance = 0;

  friend bool operator==(const PairFeatures&, const PairFeatures&) = default;
};

inline PairFeatures pair_features(const Document& doc, const Mention& a, const Mention& b) {
  PairFeatures f;
  const std::string& sa = doc.tokens.at(a.start).speaker;
  const std::string& sb = doc.tokens.at(b.start).speaker;
  f.same_speaker = !sa.empty() && sa == sb;
  f.token_distance = a.start > b.start ? a.start - b.start : b.start - a.start;
  f.mention_index_distance = a.id > b.id ? a.id - b.id : b.id - a.id;
  return f;
}

// log(1 + d) / log(1 + d_max), clipped to 1.
inline double normalize_distance(double token_distance, double max_distance = 2000.0) {
  if (token_distance <= 0) return 0.0;
  return std::min(1.0, std::log1p(token_distance) / std::log1p(max_distance));
}

}  // namespace triad
