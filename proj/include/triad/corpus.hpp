#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "triad/error.hpp"
#include "triad/partition.hpp"
#include "triad/rng.hpp"

namespace triad {

struct Token {
  std::string surface;
  std::string pos;
  std::string speaker;  // empty when the corpus marks no speaker
  std::size_t sentence_index = 0;
  std::size_t doc_token_index = 0;
  // Set when the surface was replaced by a speaker name.
  bool speaker_substituted = false;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Mention {
  MentionId id = 0;
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::optional<int> entity_id;

  std::size_t length() const noexcept { return end - start + 1; }

  friend bool operator==(const Mention&, const Mention&) = default;
};

struct Document {
  std::string doc_key;
  int part = 0;
  std::vector<Token> tokens;
  std::vector<Mention> mentions;

  friend bool operator==(const Document&, const Document&) = default;
};

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Sorts mentions by (start, end) and renumbers ids densely from 0.
inline void renumber_mentions(Document& doc) {
  std::stable_sort(doc.mentions.begin(), doc.mentions.end(), [](const Mention& a, const Mention& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) doc.mentions[i].id = i;
}

// Checks the document-level invariants; throws DataError on violation.
inline void validate_document(const Document& doc) {
  for (std::size_t i = 0; i < doc.tokens.size(); ++i)
    if (doc.tokens[i].doc_token_index != i)
      throw DataError(doc.doc_key + ": token indices are not dense");
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const Mention& m = doc.mentions[i];
    if (m.id != i) throw DataError(doc.doc_key + ": mention ids are not dense");
    if (m.start > m.end || m.end >= doc.tokens.size())
      throw DataError(doc.doc_key + ": mention " + std::to_string(i) + " out of token range");
    if (i > 0) {
      const Mention& p = doc.mentions[i - 1];
      if (p.start > m.start || (p.start == m.start && p.end > m.end))
        throw DataError(doc.doc_key + ": mentions not sorted by (start, end)");
    }
  }
}

// Gold entities of the labeled mentions.
inline EntityPartition gold_partition(const Document& doc) {
  std::map<int, Cluster> by_entity;
  for (const auto& m : doc.mentions)
    if (m.entity_id) by_entity[*m.entity_id].push_back(m.id);
  std::vector<Cluster> clusters;
  for (auto& [_, c] : by_entity) clusters.push_back(std::move(c));
  return EntityPartition(std::move(clusters));
}

// Returns a copy whose mention entity ids come from `partition` (cluster
// index); mentions outside the partition lose their label.
inline Document with_partition(Document doc, const EntityPartition& partition) {
  for (auto& m : doc.mentions) m.entity_id.reset();
  for (std::size_t c = 0; c < partition.size(); ++c)
    for (MentionId id : partition.clusters()[c]) {
      if (id >= doc.mentions.size()) throw DataError("partition references unknown mention");
      doc.mentions[id].entity_id = static_cast<int>(c);
    }
  return doc;
}

// ---------------------------------------------------------------------------
// CoNLL-2012 column format

namespace conll_detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline int parse_entity(std::string_view s, std::size_t line_no) {
  if (s.empty()) throw DataError("line " + std::to_string(line_no) + ": empty coreference id");
  int v = 0;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c)))
      throw DataError("line " + std::to_string(line_no) + ": bad coreference id '" + std::string(s) + "'");
    v = v * 10 + (c - '0');
  }
  return v;
}

struct OpenSpan {
  int entity;
  std::size_t start;
  std::size_t line_no;
};

inline void parse_header(std::string_view rest, Document& doc) {
  // "(name); part 000"
  std::string s(rest);
  while (!s.empty() && s.front() == ' ') s.erase(0, 1);
  auto semi = s.find(';');
  std::string name = s.substr(0, semi);
  if (name.size() >= 2 && name.front() == '(' && name.back() == ')') name = name.substr(1, name.size() - 2);
  doc.doc_key = name;
  doc.part = 0;
  if (semi != std::string::npos) {
    std::istringstream in(s.substr(semi + 1));
    std::string word;
    int part = 0;
    if (in >> word >> part && word == "part") doc.part = part;
  }
}

}  // namespace conll_detail

// word = column 4, POS = 5, speaker = 10 (1-based), coreference = last.
inline std::vector<Document> parse_conll(std::string_view text) {
  using namespace conll_detail;
  std::vector<Document> docs;
  std::optional<Document> cur;
  std::vector<OpenSpan> open;
  std::size_t sentence = 0;
  bool sentence_has_tokens = false;
  std::size_t line_no = 0;

  auto finish = [&](std::size_t at_line) {
    if (!open.empty())
      throw DataError("line " + std::to_string(open.back().line_no) + ": unclosed coreference bracket (" +
                      std::to_string(open.back().entity) + " at end of document (line " + std::to_string(at_line) + ")");
    renumber_mentions(*cur);
    docs.push_back(std::move(*cur));
    cur.reset();
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    ++line_no;

    if (line.rfind("#begin document", 0) == 0) {
      if (cur) throw DataError("line " + std::to_string(line_no) + ": nested #begin document");
      cur.emplace();
      parse_header(line.substr(std::string_view("#begin document").size()), *cur);
      sentence = 0;
      sentence_has_tokens = false;
      open.clear();
      continue;
    }
    if (line.rfind("#end document", 0) == 0) {
      if (!cur) throw DataError("line " + std::to_string(line_no) + ": #end document without #begin");
      finish(line_no);
      continue;
    }
    auto cols = split_ws(line);
    if (cols.empty()) {
      if (sentence_has_tokens) ++sentence;
      sentence_has_tokens = false;
      continue;
    }
    if (cols.front().front() == '#') continue;
    if (!cur) throw DataError("line " + std::to_string(line_no) + ": data outside a document");
    if (cols.size() < 11)
      throw DataError("line " + std::to_string(line_no) + ": expected at least 11 columns, found " +
                      std::to_string(cols.size()));

    Token tok;
    tok.surface = std::string(cols[3]);
    tok.pos = std::string(cols[4]);
    tok.speaker = cols[9] == "-" ? std::string() : std::string(cols[9]);
    tok.sentence_index = sentence;
    tok.doc_token_index = cur->tokens.size();
    const std::size_t t = tok.doc_token_index;
    cur->tokens.push_back(std::move(tok));
    sentence_has_tokens = true;

    std::string_view coref = cols.back();
    if (coref == "-") continue;
    std::size_t a = 0;
    while (a <= coref.size()) {
      std::size_t b = coref.find('|', a);
      if (b == std::string_view::npos) b = coref.size();
      std::string_view piece = coref.substr(a, b - a);
      a = b + 1;
      if (piece.empty()) throw DataError("line " + std::to_string(line_no) + ": empty coreference item");
      const bool opens = piece.front() == '(';
      const bool closes = piece.back() == ')';
      if (!opens && !closes)
        throw DataError("line " + std::to_string(line_no) + ": malformed coreference item '" + std::string(piece) + "'");
      std::string_view body = piece.substr(opens ? 1 : 0);
      if (closes) body.remove_suffix(1);
      const int entity = parse_entity(body, line_no);
      if (opens && closes) {
        cur->mentions.push_back(Mention{0, t, t, entity});
      } else if (opens) {
        open.push_back(OpenSpan{entity, t, line_no});
      } else {
        auto it = std::find_if(open.rbegin(), open.rend(), [&](const OpenSpan& o) { return o.entity == entity; });
        if (it == open.rend())
          throw DataError("line " + std::to_string(line_no) + ": closing bracket " + std::to_string(entity) +
                          ") without matching open");
        cur->mentions.push_back(Mention{0, it->start, t, entity});
        open.erase(std::next(it).base());
      }
    }
  }
  if (cur) throw DataError("line " + std::to_string(line_no) + ": missing #end document for " + cur->doc_key);
  return docs;
}

// Writes documents in a 12-column CoNLL layout that parse_conll reads back.
inline std::string write_conll(const std::vector<Document>& docs) {
  std::ostringstream out;
  for (const auto& doc : docs) {
    char part[16];
    std::snprintf(part, sizeof part, "%03d", doc.part);
    out << "#begin document (" << doc.doc_key << "); part " << part << "\n";
    const std::size_t n = doc.tokens.size();
    std::vector<std::vector<const Mention*>> starts(n), ends(n), singles(n);
    for (const auto& m : doc.mentions) {
      if (!m.entity_id) continue;
      if (m.start == m.end) {
        singles[m.start].push_back(&m);
      } else {
        starts[m.start].push_back(&m);
        ends[m.end].push_back(&m);
      }
    }
    std::size_t word_in_sentence = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const Token& tok = doc.tokens[t];
      if (t > 0 && tok.sentence_index != doc.tokens[t - 1].sentence_index) {
        out << "\n";
        word_in_sentence = 0;
      }
      // outer spans open first; inner spans close first
      std::stable_sort(starts[t].begin(), starts[t].end(), [](auto* a, auto* b) { return a->end > b->end; });
      std::stable_sort(ends[t].begin(), ends[t].end(), [](auto* a, auto* b) { return a->start > b->start; });
      std::string coref;
      auto add = [&](const std::string& s) {
        if (!coref.empty()) coref += '|';
        coref += s;
      };
      for (auto* m : starts[t]) add("(" + std::to_string(*m->entity_id));
      for (auto* m : singles[t]) add("(" + std::to_string(*m->entity_id) + ")");
      for (auto* m : ends[t]) add(std::to_string(*m->entity_id) + ")");
      if (coref.empty()) coref = "-";
      out << doc.doc_key << "\t" << doc.part << "\t" << word_in_sentence++ << "\t" << tok.surface << "\t" << tok.pos
          << "\t-\t-\t-\t-\t" << (tok.speaker.empty() ? "-" : tok.speaker) << "\t*\t" << coref << "\n";
    }
    out << "\n#end document\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Word embeddings

class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return words_.size() + 4; }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<double>& vectors() const noexcept { return vectors_; }

  std::size_t unknown() const noexcept { return words_.size(); }
  std::size_t padding() const noexcept { return words_.size() + 1; }
  std::size_t begin_marker() const noexcept { return words_.size() + 2; }
  std::size_t end_marker() const noexcept { return words_.size() + 3; }

  std::optional<std::size_t> find(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Exact case first, then lowercase, else the unknown row.
  std::size_t lookup(const std::string& surface) const {
    if (auto i = find(surface)) return *i;
    if (auto i = find(to_lower(surface))) return *i;
    return unknown();
  }

  const double* row(std::size_t r) const { return vectors_.data() + r * dim_; }

  // `words` must be distinct; `vectors` is rows() x dim, row-major.
  static EmbeddingTable assemble(std::size_t dim, std::vector<std::string> words, std::vector<double> vectors) {
    EmbeddingTable t;
    t.dim_ = dim;
    t.words_ = std::move(words);
    t.vectors_ = std::move(vectors);
    if (t.vectors_.size() != t.rows() * dim) throw DataError("embedding matrix has wrong size");
    for (std::size_t i = 0; i < t.words_.size(); ++i)
      if (!t.index_.emplace(t.words_[i], i).second) throw DataError("duplicate vocabulary word " + t.words_[i]);
    return t;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> vectors_;
};

inline constexpr double kOovInitRange = 0.05;
// Scale of the stand-in vectors used when no pretrained file is given; close
// to the per-component spread of common pretrained tables.
inline constexpr double kStandInRange = 0.5;

namespace embedding_detail {

inline void append_random_row(std::vector<double>& v, std::size_t dim, Rng& rng, double range) {
  for (std::size_t d = 0; d < dim; ++d) v.push_back(rng.uniform(-range, range));
}

// Vocabulary rows in sorted order, then unknown / padding / begin / end.
inline EmbeddingTable build(const std::set<std::string>& vocab, std::size_t dim, std::uint64_t seed,
                            const std::unordered_map<std::string, std::vector<double>>* pretrained,
                            std::size_t* pretrained_hits, double range = kOovInitRange) {
  Rng rng(seed);
  std::vector<std::string> words(vocab.begin(), vocab.end());
  std::vector<double> vectors;
  vectors.reserve((words.size() + 4) * dim);
  std::size_t hits = 0;
  for (const auto& w : words) {
    const std::vector<double>* found = nullptr;
    if (pretrained) {
      auto it = pretrained->find(w);
      if (it == pretrained->end()) it = pretrained->find(to_lower(w));
      if (it != pretrained->end()) found = &it->second;
    }
    if (found) {
      vectors.insert(vectors.end(), found->begin(), found->end());
      ++hits;
    } else {
      append_random_row(vectors, dim, rng, range);
    }
  }
  append_random_row(vectors, dim, rng, range);  // unknown
  vectors.insert(vectors.end(), dim, 0.0);      // padding
  append_random_row(vectors, dim, rng, range);  // begin marker
  append_random_row(vectors, dim, rng, range);  // end marker
  if (pretrained_hits) *pretrained_hits = hits;
  return EmbeddingTable::assemble(dim, std::move(words), std::move(vectors));
}

}  // namespace embedding_detail

struct EmbeddingLoad {
  EmbeddingTable table;
  std::size_t pretrained_rows = 0;
  std::size_t malformed_lines = 0;
  std::size_t duplicate_lines = 0;
};

// Reads "word v1 ... v_dim" lines. Words of `vocab_filter` found in the file
// keep their pretrained vector; the rest are drawn from U(-0.05, 0.05).
inline EmbeddingLoad load_embeddings(std::string_view text, const std::set<std::string>& vocab_filter,
                                     std::uint64_t seed, std::size_t dim = 300) {
  EmbeddingLoad result;
  std::unordered_map<std::string, std::vector<double>> wanted;
  std::set<std::string> lowered;
  for (const auto& w : vocab_filter) lowered.insert(to_lower(w));

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t a = 0;
    while (a <= line.size()) {
      std::size_t b = line.find(' ', a);
      if (b == std::string_view::npos) b = line.size();
      fields.push_back(line.substr(a, b - a));
      a = b + 1;
    }
    if (fields.size() != dim + 1) {
      ++result.malformed_lines;
      continue;
    }
    std::string word(fields[0]);
    if (!vocab_filter.count(word) && !lowered.count(word)) continue;
    if (wanted.count(word)) {
      ++result.duplicate_lines;
      continue;
    }
    std::vector<double> vec(dim);
    bool ok = true;
    for (std::size_t d = 0; d < dim && ok; ++d) {
      std::string f(fields[d + 1]);
      char* end = nullptr;
      vec[d] = std::strtod(f.c_str(), &end);
      ok = end && *end == '\0' && !f.empty();
    }
    if (!ok) {
      ++result.malformed_lines;
      continue;
    }
    wanted.emplace(std::move(word), std::move(vec));
  }
  if (wanted.empty()) throw DataError("embedding file shares no words with the corpus vocabulary");
  result.table = embedding_detail::build(vocab_filter, dim, seed, &wanted, &result.pretrained_rows);
  return result;
}

// All rows random, drawn from U(-range, range); used when no pretrained
// vectors are supplied.
inline EmbeddingTable random_embeddings(const std::set<std::string>& vocab, std::size_t dim, std::uint64_t seed,
                                        double range = kStandInRange) {
  return embedding_detail::build(vocab, dim, seed, nullptr, nullptr, range);
}

inline std::set<std::string> corpus_vocabulary(const std::vector<Document>& docs) {
  std::set<std::string> vocab;
  for (const auto& d : docs)
    for (const auto& t : d.tokens) vocab.insert(t.surface);
  return vocab;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SynthConfig {
  std::size_t documents = 20;
  std::size_t entities_per_document = 6;
  std::size_t mentions_per_entity = 4;
  std::size_t vocabulary_size = 200;  // filler word types
  double pronoun_rate = 0.5;
  std::size_t speakers = 2;
  std::size_t min_gap = 1;  // filler tokens between consecutive mentions
  std::size_t max_gap = 3;
  std::size_t max_run = 3;  // consecutive mentions of one entity
  std::size_t name_pool = 60;
};

inline const std::vector<std::string>& synthetic_pronouns() {
  static const std::vector<std::string> forms = {"he", "she", "it", "they"};
  return forms;
}

inline std::string synthetic_name(std::size_t k) {
  static const char* const syllables[] = {"ka", "lo", "mi", "ren", "sa", "to", "vu", "xe", "dor", "bel"};
  std::string s;
  std::size_t x = k;
  do {
    s += syllables[x % 10];
    x /= 10;
  } while (x > 0);
  s += syllables[(k * 7 + 3) % 10];
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

// Each entity is one proper-name token type (NNP) plus pronoun mentions (PRP).
// A pronoun is only emitted right after another mention of its own entity,
// so each pronoun's left context holds its antecedent when gaps are short.
inline std::vector<Document> generate_synthetic_corpus(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.entities_per_document == 0) throw UsageError("synthetic corpus needs at least one entity per document");
  if (cfg.mentions_per_entity == 0) throw UsageError("synthetic corpus needs at least one mention per entity");
  if (cfg.entities_per_document > cfg.name_pool) throw UsageError("name pool smaller than entity count");
  if (cfg.min_gap > cfg.max_gap || cfg.max_run == 0 || cfg.vocabulary_size == 0)
    throw UsageError("invalid synthetic gap/run/vocabulary settings");

  static const char* const filler_pos[] = {"NN", "VBD", "DT", "IN"};
  std::vector<Document> docs;
  Rng rng(seed);
  for (std::size_t d = 0; d < cfg.documents; ++d) {
    Document doc;
    char key[32];
    std::snprintf(key, sizeof key, "synth/doc_%04zu", d);
    doc.doc_key = key;

    std::vector<std::size_t> pool(cfg.name_pool);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    rng.shuffle(pool);
    std::vector<std::string> names(cfg.entities_per_document), pronouns(cfg.entities_per_document);
    for (std::size_t e = 0; e < cfg.entities_per_document; ++e) {
      names[e] = synthetic_name(pool[e]);
      pronouns[e] = synthetic_pronouns()[rng.index(synthetic_pronouns().size())];
    }

    // entity sequence built from runs
    std::vector<std::size_t> remaining(cfg.entities_per_document, cfg.mentions_per_entity);
    std::vector<std::size_t> order;
    std::size_t left = cfg.entities_per_document * cfg.mentions_per_entity;
    while (left > 0) {
      std::vector<std::size_t> live;
      for (std::size_t e = 0; e < remaining.size(); ++e)
        if (remaining[e] > 0) live.push_back(e);
      const std::size_t e = live[rng.index(live.size())];
      const std::size_t run = std::min(remaining[e], 1 + rng.index(cfg.max_run));
      for (std::size_t r = 0; r < run; ++r) order.push_back(e);
      remaining[e] -= run;
      left -= run;
    }

    std::size_t sentence = 0, sentence_len = 0, sentence_target = 6 + rng.index(8);
    std::string speaker = cfg.speakers ? "Speaker_" + std::to_string(rng.index(cfg.speakers)) : std::string();
    auto push = [&](std::string surface, std::string pos) {
      Token t;
      t.surface = std::move(surface);
      t.pos = std::move(pos);
      t.speaker = speaker;
      t.sentence_index = sentence;
      t.doc_token_index = doc.tokens.size();
      doc.tokens.push_back(std::move(t));
      if (++sentence_len >= sentence_target) {
        ++sentence;
        sentence_len = 0;
        sentence_target = 6 + rng.index(8);
        if (cfg.speakers) speaker = "Speaker_" + std::to_string(rng.index(cfg.speakers));
      }
    };
    auto filler = [&](std::size_t count) {
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t w = rng.index(cfg.vocabulary_size);
        push("w" + std::to_string(w), filler_pos[w % 4]);
      }
    };

    std::vector<bool> seen(cfg.entities_per_document, false);
    std::size_t prev_entity = SIZE_MAX;
    filler(cfg.min_gap + rng.index(cfg.max_gap - cfg.min_gap + 1));
    for (std::size_t e : order) {
      const bool pronoun = seen[e] && prev_entity == e && rng.bernoulli(cfg.pronoun_rate);
      Mention m;
      m.start = m.end = doc.tokens.size();
      m.entity_id = static_cast<int>(e);
      doc.mentions.push_back(m);
      if (pronoun)
        push(pronouns[e], "PRP");
      else
        push(names[e], "NNP");
      seen[e] = true;
      prev_entity = e;
      filler(cfg.min_gap + rng.index(cfg.max_gap - cfg.min_gap + 1));
    }
    renumber_mentions(doc);
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace triad
