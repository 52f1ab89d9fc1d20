#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "triad/autodiff.hpp"
#include "triad/config.hpp"
#include "triad/corpus.hpp"
#include "triad/error.hpp"
#include "triad/features.hpp"
#include "triad/nn.hpp"
#include "triad/rng.hpp"

namespace triad {

enum class ModelKind { triad, dyad };

inline std::string to_string(ModelKind k) { return k == ModelKind::triad ? "triad" : "dyad"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "triad") return ModelKind::triad;
  if (s == "dyad") return ModelKind::dyad;
  throw UsageError("unknown model kind '" + s + "' (expected triad or dyad)");
}

struct TriadModelConfig {
  std::size_t word_emb_dim = 300;
  std::size_t pos_emb_dim = 16;
  std::size_t word_lstm_hidden = 128;  // per direction
  std::size_t pos_lstm_hidden = 32;    // per direction
  std::vector<std::size_t> pair_hidden = {256, 128};
  std::size_t shared_context_dim = 128;
  std::size_t decoder_dim = 64;
  double input_dropout = 0.5;
  double pair_dropout = 0.3;
  bool train_word_embeddings = true;
  FeatureConfig features;

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw UsageError(std::string("model config: ") + name + " must be positive");
    };
    positive(word_emb_dim, "word_emb_dim");
    positive(pos_emb_dim, "pos_emb_dim");
    positive(word_lstm_hidden, "word_lstm_hidden");
    positive(pos_lstm_hidden, "pos_lstm_hidden");
    positive(shared_context_dim, "shared_context_dim");
    positive(decoder_dim, "decoder_dim");
    positive(features.max_mention, "max_mention_tokens");
    if (pair_hidden.empty()) throw UsageError("model config: pair_hidden needs at least one layer");
    for (auto h : pair_hidden) positive(h, "pair_hidden");
    for (double r : {input_dropout, pair_dropout})
      if (!(r >= 0.0 && r < 1.0)) throw UsageError("model config: dropout rates must lie in [0, 1)");
    if (!(features.max_token_distance > 0)) throw UsageError("model config: max_token_distance must be positive");
  }

  void read(KeyValues& kv) {
    kv.read("word_emb_dim", word_emb_dim);
    kv.read("pos_emb_dim", pos_emb_dim);
    kv.read("word_lstm_hidden", word_lstm_hidden);
    kv.read("pos_lstm_hidden", pos_lstm_hidden);
    kv.read_list("pair_hidden", pair_hidden);
    kv.read("shared_context_dim", shared_context_dim);
    kv.read("decoder_dim", decoder_dim);
    kv.read("input_dropout", input_dropout);
    kv.read("pair_dropout", pair_dropout);
    kv.read("train_word_embeddings", train_word_embeddings);
    kv.read("context_tokens", features.context);
    kv.read("max_mention_tokens", features.max_mention);
    kv.read("max_token_distance", features.max_token_distance);
  }

  std::string serialize() const {
    std::ostringstream out;
    out << "word_emb_dim = " << word_emb_dim << "\n"
        << "pos_emb_dim = " << pos_emb_dim << "\n"
        << "word_lstm_hidden = " << word_lstm_hidden << "\n"
        << "pos_lstm_hidden = " << pos_lstm_hidden << "\n"
        << "pair_hidden = ";
    for (std::size_t i = 0; i < pair_hidden.size(); ++i) out << (i ? "," : "") << pair_hidden[i];
    out << "\n"
        << "shared_context_dim = " << shared_context_dim << "\n"
        << "decoder_dim = " << decoder_dim << "\n"
        << "input_dropout = " << format_double(input_dropout) << "\n"
        << "pair_dropout = " << format_double(pair_dropout) << "\n"
        << "train_word_embeddings = " << (train_word_embeddings ? "true" : "false") << "\n"
        << "context_tokens = " << features.context << "\n"
        << "max_mention_tokens = " << features.max_mention << "\n"
        << "max_token_distance = " << format_double(features.max_token_distance) << "\n";
    return out.str();
  }

  friend bool operator==(const TriadModelConfig& a, const TriadModelConfig& b) {
    return a.serialize() == b.serialize();
  }
};

// Joint features of one pair, already scaled for the network.
struct PairInput {
  double same_speaker = 0.0;
  double distance = 0.0;  // normalize_distance(token distance)
};

inline PairInput make_pair_input(const Document& doc, const Mention& a, const Mention& b, const FeatureConfig& cfg) {
  const PairFeatures f = pair_features(doc, a, b);
  return {f.same_speaker ? 1.0 : 0.0, normalize_distance(static_cast<double>(f.token_distance), cfg.max_token_distance)};
}

// One network input. `slot` indexes the batch's mention list; a dyad uses
// slots 0 and 1 and pair 0. Pairs are (0,1), (1,2), (2,0).
struct PolyadInput {
  std::array<std::size_t, 3> slot{};
  std::array<PairInput, 3> pair{};
};

struct ModelBatch {
  std::vector<MentionEncoding> mentions;
  std::vector<std::size_t> mention_ids;  // document mention ids; fix the fusion context order
  std::vector<PolyadInput> items;
  ad::Tensor labels;  // items x 3 for triads, items x 1 for dyads
};

// Per-mention encoder states on one tape, trimmed to a common length.
struct EncodedMentions {
  std::size_t length = 0;
  std::vector<ad::Var> word;  // length x 2*word_lstm_hidden
  std::vector<ad::Var> pos;   // length x 2*pos_lstm_hidden
  std::vector<std::vector<std::uint8_t>> masks;
};

struct Attention {
  ad::Var weights;  // T_i x T_j
  ad::Var context;  // T_i x d
};

struct ModelOutput {
  ad::Var y;       // items x 3 (triad) or items x 1 (dyad)
  ad::Var pairs;   // pair representations, row 3*b + p (triad) or b (dyad)
  ad::Var shared;  // triad only: items x shared_context_dim
};

enum class Stream { word, pos };

class CorefModel {
 public:
  CorefModel(ModelKind kind, TriadModelConfig cfg, std::size_t word_rows, std::size_t pos_rows, std::uint64_t seed)
      : kind_(kind), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (word_rows == 0 || pos_rows == 0) throw ModelError("model needs non-empty word and POS vocabularies");
    Rng rng(seed);
    const std::size_t hw = cfg_.word_lstm_hidden, hp = cfg_.pos_lstm_hidden;

    ad::Tensor wemb(word_rows, cfg_.word_emb_dim);
    for (std::size_t i = 0; i < wemb.size(); ++i) wemb[i] = rng.uniform(-kOovInitRange, kOovInitRange);
    word_emb_ = &store_.add("word_emb", std::move(wemb));

    // One-hot rows while the dimension allows, small random rows after that.
    ad::Tensor pemb(pos_rows, cfg_.pos_emb_dim);
    for (std::size_t r = 0; r < pos_rows; ++r)
      for (std::size_t c = 0; c < cfg_.pos_emb_dim; ++c)
        pemb(r, c) = r < cfg_.pos_emb_dim ? (r == c ? 1.0 : 0.0) : rng.uniform(-kOovInitRange, kOovInitRange);
    pos_emb_ = &store_.add("pos_emb", std::move(pemb));

    word_lstm_ = ad::BiLstm::create(store_, "word_lstm", cfg_.word_emb_dim, hw, rng);
    pos_lstm_ = ad::BiLstm::create(store_, "pos_lstm", cfg_.pos_emb_dim, hp, rng);
    word_fuse_ = ad::Dense::create(store_, "word_fuse", 6 * hw, 2 * hw, rng);
    pos_fuse_ = ad::Dense::create(store_, "pos_fuse", 6 * hp, 2 * hp, rng);

    std::size_t in = pair_input_dim();
    for (std::size_t l = 0; l < cfg_.pair_hidden.size(); ++l) {
      pair_layers_.push_back(ad::Dense::create(store_, "pair." + std::to_string(l), in, cfg_.pair_hidden[l], rng));
      in = cfg_.pair_hidden[l];
    }
    if (kind_ == ModelKind::triad) {
      shared_ = ad::Dense::create(store_, "shared", in, cfg_.shared_context_dim, rng);
      decoder_ = ad::Dense::create(store_, "decoder", in + cfg_.shared_context_dim, cfg_.decoder_dim, rng);
      output_ = ad::Dense::create(store_, "output", 3 * cfg_.decoder_dim, 3, rng);
    } else {
      output_ = ad::Dense::create(store_, "output", in, 1, rng);
    }
  }

  CorefModel(const CorefModel&) = delete;
  CorefModel& operator=(const CorefModel&) = delete;
  CorefModel(CorefModel&&) = default;
  CorefModel& operator=(CorefModel&&) = default;

  ModelKind kind() const noexcept { return kind_; }
  const TriadModelConfig& config() const noexcept { return cfg_; }
  ad::ParameterStore& params() noexcept { return store_; }
  const ad::ParameterStore& params() const noexcept { return store_; }
  std::size_t outputs() const noexcept { return kind_ == ModelKind::triad ? 3 : 1; }
  std::size_t word_rows() const { return word_emb_->value.rows(); }
  std::size_t pos_rows() const { return pos_emb_->value.rows(); }
  std::size_t pair_input_dim() const { return 2 + 4 * cfg_.word_lstm_hidden + 4 * cfg_.pos_lstm_hidden; }

  void set_word_vectors(const EmbeddingTable& table) {
    if (table.rows() != word_rows() || table.dim() != cfg_.word_emb_dim)
      throw ModelError("embedding table does not match the model's word embedding shape");
    std::copy(table.vectors().begin(), table.vectors().end(), word_emb_->value.values().begin());
  }

  // Runs both shared encoders over every mention at once. Trailing columns
  // masked for every mention are dropped; they cannot influence any output.
  EncodedMentions encode(ad::Tape& tape, std::span<const MentionEncoding> mentions, bool training, Rng& rng) const {
    if (mentions.empty()) throw ModelError("encode: no mentions");
    std::size_t T = 0;
    for (const auto& m : mentions) {
      if (m.word_ids.size() != m.length() || m.pos_ids.size() != m.length())
        throw ModelError("encode: inconsistent mention encoding");
      T = std::max(T, m.extent());
    }
    if (T == 0) throw ModelError("encode: every mention window is fully masked");
    const std::size_t M = mentions.size();
    EncodedMentions enc;
    enc.length = T;
    for (const auto& m : mentions) enc.masks.emplace_back(m.mask.begin(), m.mask.begin() + T);

    std::vector<ad::Tensor> masks(T, ad::Tensor(M, 1));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t m = 0; m < M; ++m) masks[t](m, 0) = enc.masks[m][t];

    auto run = [&](ad::Parameter& table, const ad::BiLstm& lstm, bool words) {
      ad::Var emb = words && !cfg_.train_word_embeddings ? tape.constant(table.value) : tape.parameter(table);
      std::vector<ad::Var> steps(T);
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<std::size_t> ids(M);
        for (std::size_t m = 0; m < M; ++m) ids[m] = words ? mentions[m].word_ids[t] : mentions[m].pos_ids[t];
        steps[t] = ad::dropout(ad::gather_rows(emb, std::move(ids)), cfg_.input_dropout, training, rng);
      }
      auto out = ad::bilstm_forward(tape, lstm, steps, masks);
      ad::Var stacked = ad::concat(std::span<const ad::Var>(out), 0);  // row t*M + m
      std::vector<ad::Var> per(M);
      for (std::size_t m = 0; m < M; ++m) {
        std::vector<std::size_t> rows(T);
        for (std::size_t t = 0; t < T; ++t) rows[t] = t * M + m;
        per[m] = ad::gather_rows(stacked, std::move(rows));
      }
      return per;
    };
    enc.word = run(*word_emb_, word_lstm_, true);
    enc.pos = run(*pos_emb_, pos_lstm_, false);
    return enc;
  }

  // A = softmax(h_i h_j^T) over j's unmasked positions; C = A h_j.
  static Attention mutual_attention(ad::Var hi, ad::Var hj, std::span<const std::uint8_t> mask_j) {
    if (mask_j.size() != hj.rows())
      throw ModelError("mutual_attention: mask length " + std::to_string(mask_j.size()) + " does not match " +
                       hj.value().shape_str());
    ad::Tensor mask(1, mask_j.size());
    for (std::size_t t = 0; t < mask_j.size(); ++t) mask[t] = mask_j[t];
    ad::Var scores = ad::matmul(hi, ad::transpose(hj));
    ad::Var weights = ad::softmax(scores, &mask);
    return {weights, ad::matmul(weights, hj)};
  }

  // tanh(W_c [h_i; C_ij; C_ik] + b_c) per position, then the masked mean.
  ad::Var fuse(ad::Tape& tape, Stream s, ad::Var hi, ad::Var cij, ad::Var cik,
               std::span<const std::uint8_t> mask_i) const {
    const ad::Dense& layer = s == Stream::word ? word_fuse_ : pos_fuse_;
    return ad::masked_mean(ad::tanh(layer(tape, ad::concat({hi, cij, cik}, 1))), mask_i);
  }

  // Shared pair stack: dense+tanh layers with dropout between them.
  ad::Var pair_stack(ad::Tape& tape, ad::Var joint, bool training, Rng& rng) const {
    ad::Var x = joint;
    for (std::size_t l = 0; l < pair_layers_.size(); ++l) {
      if (l > 0) x = ad::dropout(x, cfg_.pair_dropout, training, rng);
      x = ad::tanh(pair_layers_[l](tape, x));
    }
    return x;
  }

  ModelOutput forward(ad::Tape& tape, const ModelBatch& batch, bool training, Rng& rng) const {
    EncodedMentions enc = encode(tape, batch.mentions, training, rng);
    return forward(tape, enc, batch.mention_ids, batch.items, training, rng);
  }

  // `mention_ids[s]` is the document id of encoded mention s.
  ModelOutput forward(ad::Tape& tape, const EncodedMentions& enc, std::span<const std::size_t> mention_ids,
                      std::span<const PolyadInput> items, bool training, Rng& rng) const {
    if (items.empty()) throw ModelError("forward: empty batch");
    const std::size_t arity = kind_ == ModelKind::triad ? 3 : 2;
    for (const auto& it : items)
      for (std::size_t q = 0; q < arity; ++q)
        if (it.slot[q] >= enc.word.size() || it.slot[q] >= mention_ids.size() || enc.word[it.slot[q]].tape != &tape)
          throw ModelError("forward: item refers to a mention that was not encoded");

    const std::size_t B = items.size();
    ad::Var fw = fuse_all(tape, Stream::word, enc, mention_ids, items, arity);
    ad::Var fp = fuse_all(tape, Stream::pos, enc, mention_ids, items, arity);

    // Pair rows: row b*npairs + p holds pair p of item b.
    const std::size_t npairs = kind_ == ModelKind::triad ? 3 : 1;
    std::vector<std::size_t> left, right;
    ad::Tensor joint(B * npairs, 2);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < npairs; ++p) {
        left.push_back(b * arity + p);
        right.push_back(b * arity + (p + 1) % arity);
        joint(b * npairs + p, 0) = items[b].pair[p].same_speaker;
        joint(b * npairs + p, 1) = items[b].pair[p].distance;
      }
    ad::Var x = ad::concat({tape.constant(std::move(joint)), ad::gather_rows(fw, left), ad::gather_rows(fw, right),
                            ad::gather_rows(fp, left), ad::gather_rows(fp, right)},
                           1);
    ModelOutput out;
    out.pairs = pair_stack(tape, x, training, rng);

    if (kind_ == ModelKind::dyad) {
      out.y = ad::sigmoid(output_(tape, out.pairs));
      return out;
    }

    auto rows_of = [B](std::size_t p) {
      std::vector<std::size_t> r(B);
      for (std::size_t b = 0; b < B; ++b) r[b] = b * 3 + p;
      return r;
    };
    ad::Var pij = ad::gather_rows(out.pairs, rows_of(0));
    ad::Var pjk = ad::gather_rows(out.pairs, rows_of(1));
    ad::Var pki = ad::gather_rows(out.pairs, rows_of(2));
    out.shared = ad::tanh(shared_(tape, ad::sum_n({pij, pjk, pki})));

    std::vector<std::size_t> rep(3 * B);
    for (std::size_t r = 0; r < 3 * B; ++r) rep[r] = r / 3;
    ad::Var d = ad::tanh(decoder_(tape, ad::concat({out.pairs, ad::gather_rows(out.shared, std::move(rep))}, 1)));
    ad::Var joined =
        ad::concat({ad::gather_rows(d, rows_of(0)), ad::gather_rows(d, rows_of(1)), ad::gather_rows(d, rows_of(2))}, 1);
    out.y = ad::sigmoid(output_(tape, joined));
    return out;
  }

  ad::Var loss(ad::Tape& tape, const ModelBatch& batch, bool training, Rng& rng) const {
    ModelOutput out = forward(tape, batch, training, rng);
    return ad::bce_loss(out.y, batch.labels);
  }

 private:
  // Fused, pooled representation of every (item, slot); row b*arity + q.
  ad::Var fuse_all(ad::Tape& tape, Stream s, const EncodedMentions& enc, std::span<const std::size_t> mention_ids,
                   std::span<const PolyadInput> items, std::size_t arity) const {
    const auto& H = s == Stream::word ? enc.word : enc.pos;
    std::map<std::pair<std::size_t, std::size_t>, ad::Var> contexts;
    auto context = [&](std::size_t a, std::size_t b) {
      auto key = std::make_pair(a, b);
      auto it = contexts.find(key);
      if (it != contexts.end()) return it->second;
      ad::Var c = mutual_attention(H[a], H[b], enc.masks[b]).context;
      contexts.emplace(key, c);
      return c;
    };

    std::vector<ad::Var> blocks;
    std::vector<std::uint8_t> mask;
    blocks.reserve(items.size() * arity);
    for (const auto& it : items) {
      for (std::size_t q = 0; q < arity; ++q) {
        const std::size_t self = it.slot[q];
        std::size_t o1, o2;
        if (arity == 2) {
          o1 = o2 = it.slot[1 - q];
        } else {
          o1 = it.slot[(q + 1) % 3];
          o2 = it.slot[(q + 2) % 3];
          if (std::make_pair(mention_ids[o2], (q + 2) % 3) < std::make_pair(mention_ids[o1], (q + 1) % 3))
            std::swap(o1, o2);
        }
        blocks.push_back(ad::concat({H[self], context(self, o1), context(self, o2)}, 1));
        mask.insert(mask.end(), enc.masks[self].begin(), enc.masks[self].end());
      }
    }
    const ad::Dense& layer = s == Stream::word ? word_fuse_ : pos_fuse_;
    ad::Var stacked = ad::concat(std::span<const ad::Var>(blocks), 0);
    return ad::block_masked_mean(ad::tanh(layer(tape, stacked)), enc.length, mask);
  }

  ModelKind kind_;
  TriadModelConfig cfg_;
  ad::ParameterStore store_;
  ad::Parameter* word_emb_ = nullptr;
  ad::Parameter* pos_emb_ = nullptr;
  ad::BiLstm word_lstm_, pos_lstm_;
  ad::Dense word_fuse_, pos_fuse_;
  std::vector<ad::Dense> pair_layers_;
  ad::Dense shared_, decoder_, output_;
};

// ---------------------------------------------------------------------------
// Inference over one document: encoders run once, polyads are scored in
// chunks on short-lived tapes. Read-only on the model.

class DocumentScorer {
 public:
  DocumentScorer(const CorefModel& model, std::vector<MentionEncoding> mentions, std::size_t chunk = 256)
      : model_(model), chunk_(std::max<std::size_t>(1, chunk)) {
    if (mentions.empty()) return;
    ad::Tape tape;
    Rng unused(0);
    EncodedMentions enc = model.encode(tape, mentions, false, unused);
    length_ = enc.length;
    masks_ = std::move(enc.masks);
    for (std::size_t m = 0; m < mentions.size(); ++m) {
      word_.push_back(enc.word[m].value());
      pos_.push_back(enc.pos[m].value());
    }
  }

  std::size_t mention_count() const noexcept { return word_.size(); }

  // Slots of `items` are document mention ids. Returns one row of
  // model.outputs() values per item.
  std::vector<std::array<double, 3>> score(std::span<const PolyadInput> items) const {
    std::vector<std::array<double, 3>> out;
    out.reserve(items.size());
    std::vector<std::size_t> ids(word_.size());
    for (std::size_t m = 0; m < ids.size(); ++m) ids[m] = m;
    Rng unused(0);
    for (std::size_t begin = 0; begin < items.size(); begin += chunk_) {
      const std::size_t end = std::min(items.size(), begin + chunk_);
      ad::Tape tape;
      EncodedMentions enc;
      enc.length = length_;
      enc.masks = masks_;
      enc.word.resize(word_.size());
      enc.pos.resize(word_.size());
      for (std::size_t i = begin; i < end; ++i)
        for (std::size_t q = 0; q < 3; ++q) {
          const std::size_t m = items[i].slot[q];
          if (m >= word_.size()) throw ModelError("score: mention id out of range");
          if (enc.word[m].tape == nullptr) {
            enc.word[m] = tape.constant(word_[m]);
            enc.pos[m] = tape.constant(pos_[m]);
          }
        }
      ModelOutput o = model_.forward(tape, enc, ids, items.subspan(begin, end - begin), false, unused);
      const ad::Tensor& y = o.y.value();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        std::array<double, 3> row{0.0, 0.0, 0.0};
        for (std::size_t c = 0; c < y.cols(); ++c) row[c] = y(r, c);
        out.push_back(row);
      }
    }
    return out;
  }

 private:
  const CorefModel& model_;
  std::size_t chunk_;
  std::size_t length_ = 0;
  std::vector<std::vector<std::uint8_t>> masks_;
  std::vector<ad::Tensor> word_, pos_;
};

// ---------------------------------------------------------------------------
// Model bundle: one directory holding the checkpoint, the configuration, the
// POS vocabulary and the word list.

inline constexpr int kBundleVersion = 1;

struct ModelBundle {
  CorefModel model;
  EmbeddingTable embeddings;
  PosVocabulary pos_vocab;

  // Encoding against this bundle's vocabularies.
  MentionEncoding encode(const Document& doc, const Mention& m) const {
    return encode_mention(doc, m, embeddings, pos_vocab, model.config().features);
  }

  std::vector<MentionEncoding> encode_all(const Document& doc) const {
    std::vector<MentionEncoding> out;
    out.reserve(doc.mentions.size());
    for (const auto& m : doc.mentions) out.push_back(encode(doc, m));
    return out;
  }

  // Word table with the model's current (possibly trained) vectors.
  EmbeddingTable current_embeddings() const {
    const auto& v = model.params().find("word_emb")->value.values();
    return EmbeddingTable::assemble(embeddings.dim(), embeddings.words(), std::vector<double>(v.begin(), v.end()));
  }
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << content;
  if (!out.flush()) throw DataError("write failed for " + p.string());
}

inline void write_checkpoint(const std::filesystem::path& p, const std::vector<ad::NamedTensor>& entries) {
  std::ostringstream buf(std::ios::binary);
  ad::write_tensors(buf, entries);
  write_file(p, buf.str());
}

inline std::vector<ad::NamedTensor> read_checkpoint(const std::filesystem::path& p) {
  std::istringstream in(read_file(p), std::ios::binary);
  return ad::read_tensors(in);
}

inline void save_bundle(const std::filesystem::path& dir, const CorefModel& model, const EmbeddingTable& emb,
                        const PosVocabulary& pos) {
  std::filesystem::create_directories(dir);
  write_checkpoint(dir / "model.ckpt", ad::snapshot_values(model.params()));
  write_file(dir / "config.txt", "bundle_version = " + std::to_string(kBundleVersion) +
                                     "\nmodel_kind = " + to_string(model.kind()) + "\n" + model.config().serialize());
  write_file(dir / "pos_vocab.txt", pos.serialize());
  std::string words;
  for (const auto& w : emb.words()) words += w + "\n";
  write_file(dir / "words.txt", words);
}

inline ModelBundle load_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ModelError("model directory " + dir.string() + " does not exist");
  KeyValues kv;
  try {
    kv = KeyValues::parse(read_file(dir / "config.txt"));
  } catch (const UsageError& e) {
    throw ModelError(std::string("model config: ") + e.what());
  }
  int version = 0;
  std::string kind = "triad";
  TriadModelConfig cfg;
  try {
    kv.read("bundle_version", version);
    kv.read("model_kind", kind);
    cfg.read(kv);
    kv.finish();
  } catch (const UsageError& e) {
    throw ModelError(std::string("model config: ") + e.what());
  }
  if (version != kBundleVersion) throw ModelError("unsupported model bundle version " + std::to_string(version));

  PosVocabulary pos = PosVocabulary::parse(read_file(dir / "pos_vocab.txt"));
  std::vector<std::string> words;
  {
    std::istringstream in(read_file(dir / "words.txt"));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) words.push_back(line);
  }
  CorefModel model(parse_model_kind(kind), cfg, words.size() + 4, pos.size(), 0);
  ad::restore_values(model.params(), read_checkpoint(dir / "model.ckpt"));
  const auto& v = model.params().at("word_emb").value.values();
  EmbeddingTable emb = EmbeddingTable::assemble(cfg.word_emb_dim, std::move(words), std::vector<double>(v.begin(), v.end()));
  return ModelBundle{std::move(model), std::move(emb), std::move(pos)};
}

}  // namespace triad
