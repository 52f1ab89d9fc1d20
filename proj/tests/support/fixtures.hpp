#pragma once

// Small corpora and model configurations shared by the unit tests.

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "triad/corpus.hpp"
#include "triad/features.hpp"
#include "triad/model.hpp"

namespace triad::fixture {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("triad_" + tag + "_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline TriadModelConfig tiny_config(double dropout = 0.0) {
  TriadModelConfig c;
  c.word_emb_dim = 6;
  c.pos_emb_dim = 3;
  c.word_lstm_hidden = 4;
  c.pos_lstm_hidden = 2;
  c.pair_hidden = {8, 6};
  c.shared_context_dim = 5;
  c.decoder_dim = 4;
  c.input_dropout = dropout;
  c.pair_dropout = dropout;
  c.features.context = 1;
  c.features.max_mention = 2;  // window of 6
  return c;
}

inline TriadModelConfig small_config() {
  TriadModelConfig c;
  c.word_emb_dim = 24;
  c.pos_emb_dim = 8;
  c.word_lstm_hidden = 16;
  c.pos_lstm_hidden = 8;
  c.pair_hidden = {64, 32};
  c.shared_context_dim = 32;
  c.decoder_dim = 16;
  return c;
}

inline SynthConfig small_synth(std::size_t docs = 3) {
  SynthConfig s;
  s.documents = docs;
  s.entities_per_document = 3;
  s.mentions_per_entity = 3;
  s.vocabulary_size = 12;
  s.name_pool = 10;
  return s;
}

// One single-token mention per entity id, in order; tokens "m0", "m1", ...
inline Document labeled_document(const std::vector<int>& entities, const std::string& pos = "NN") {
  Document d;
  d.doc_key = "labeled";
  for (std::size_t i = 0; i < entities.size(); ++i) {
    Token t;
    t.surface = "m" + std::to_string(i);
    t.pos = pos;
    t.speaker = "A";
    t.doc_token_index = i;
    d.tokens.push_back(t);
    d.mentions.push_back(Mention{i, i, i, entities[i]});
  }
  return d;
}

struct Setup {
  std::vector<Document> docs;
  EmbeddingTable embeddings;
  PosVocabulary pos;
};

inline Setup make_setup(const SynthConfig& synth, std::size_t dim, std::uint64_t seed = 5) {
  Setup s;
  s.docs = generate_synthetic_corpus(synth, seed);
  s.embeddings = random_embeddings(corpus_vocabulary(s.docs), dim, seed + 1);
  s.pos = PosVocabulary::from_corpus(s.docs);
  return s;
}

inline std::vector<MentionEncoding> encode_doc(const Setup& s, const Document& doc, const FeatureConfig& f) {
  std::vector<MentionEncoding> out;
  for (const auto& m : doc.mentions) out.push_back(encode_mention(doc, m, s.embeddings, s.pos, f));
  return out;
}

// Triad batch over the given mention ids of `doc` (slot order as given).
inline ModelBatch batch_for(const Setup& s, const Document& doc, const std::vector<std::array<std::size_t, 3>>& triads,
                            const FeatureConfig& f, std::size_t arity = 3) {
  ModelBatch b;
  std::map<std::size_t, std::size_t> local;
  for (const auto& t : triads)
    for (std::size_t q = 0; q < arity; ++q)
      if (!local.count(t[q])) {
        local.emplace(t[q], b.mentions.size());
        b.mentions.push_back(encode_mention(doc, doc.mentions[t[q]], s.embeddings, s.pos, f));
        b.mention_ids.push_back(t[q]);
      }
  const std::size_t outs = arity == 3 ? 3 : 1;
  b.labels = ad::Tensor(triads.size(), outs);
  for (std::size_t r = 0; r < triads.size(); ++r) {
    const auto& t = triads[r];
    PolyadInput in;
    for (std::size_t q = 0; q < arity; ++q) in.slot[q] = local.at(t[q]);
    for (std::size_t p = 0; p < outs; ++p) {
      const Mention& a = doc.mentions[t[p]];
      const Mention& c = doc.mentions[t[(p + 1) % arity]];
      in.pair[p] = make_pair_input(doc, a, c, f);
      b.labels(r, p) = a.entity_id == c.entity_id ? 1.0 : 0.0;
    }
    b.items.push_back(in);
  }
  return b;
}

}  // namespace triad::fixture
