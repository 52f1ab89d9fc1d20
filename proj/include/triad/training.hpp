#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "triad/affinity.hpp"
#include "triad/clustering.hpp"
#include "triad/config.hpp"
#include "triad/corpus.hpp"
#include "triad/features.hpp"
#include "triad/model.hpp"
#include "triad/nn.hpp"
#include "triad/pipeline.hpp"
#include "triad/polyads.hpp"
#include "triad/postprocess.hpp"

namespace triad {

struct LrStep {
  std::size_t subepoch = 0;
  double lr = 0.0;
  friend bool operator==(const LrStep&, const LrStep&) = default;
};

struct TrainConfig {
  ModelKind kind = ModelKind::triad;
  TriadModelConfig model;
  PolyadSpec polyads;
  std::size_t files_per_subepoch = 50;
  std::size_t total_subepochs = 300;
  std::vector<LrStep> lr_schedule = {{0, 1e-3}, {100, 5e-4}, {200, 1e-4}};
  std::size_t batch_size = 256;  // polyads per step, all from one document
  std::uint64_t seed = 1;
  bool robust = false;  // enables gradient clipping
  double clip_norm = 5.0;
  std::size_t producers = 1;
  std::size_t queue_capacity = 8;
  std::string embeddings;  // optional word-vector text file
  bool speaker_substitution = true;

  void validate() const {
    model.validate();
    polyads.validate();
    if ((kind == ModelKind::triad) != (polyads.order == 3))
      throw UsageError("polyad_order must be 3 for triad models and 2 for dyad models");
    if (files_per_subepoch == 0 || batch_size == 0 || producers == 0 || queue_capacity == 0)
      throw UsageError("files_per_subepoch, batch_size, producers and queue_capacity must be positive");
    if (lr_schedule.empty() || lr_schedule.front().subepoch != 0)
      throw UsageError("lr_schedule must start at sub-epoch 0");
    for (std::size_t i = 1; i < lr_schedule.size(); ++i)
      if (lr_schedule[i].subepoch < lr_schedule[i - 1].subepoch)
        throw UsageError("lr_schedule boundaries must be nondecreasing");
    for (const auto& s : lr_schedule)
      if (!(s.lr > 0)) throw UsageError("learning rates must be positive");
    if (robust && !(clip_norm > 0)) throw UsageError("clip_norm must be positive");
  }

  double lr_at(std::size_t subepoch) const {
    double lr = lr_schedule.front().lr;
    for (const auto& s : lr_schedule)
      if (subepoch >= s.subepoch) lr = s.lr;
    return lr;
  }
};

inline std::vector<LrStep> parse_lr_schedule(const std::string& text) {
  std::vector<LrStep> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("lr_schedule entries look like subepoch:lr, got '" + item + "'");
    KeyValues kv;
    kv.set("s", item.substr(0, colon));
    kv.set("l", item.substr(colon + 1));
    LrStep s;
    kv.read("s", s.subepoch);
    kv.read("l", s.lr);
    out.push_back(s);
  }
  return out;
}

inline std::string format_lr_schedule(const std::vector<LrStep>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i].subepoch) + ":" + format_double(s[i].lr);
  return out;
}

// Everything a config file can set: training, windows, affinity, clustering.
struct ExperimentConfig {
  TrainConfig train;
  AffinityConfig affinity;
  ClusterConfig clustering;

  PipelineConfig pipeline(PostprocessFlags flags = {}, std::size_t workers = 1) const {
    PipelineConfig p;
    p.polyads = train.polyads;
    p.affinity = affinity;
    p.clustering = clustering;
    p.flags = flags;
    p.workers = workers;
    return p;
  }

  std::string serialize() const {
    std::ostringstream out;
    out << "model_kind = " << to_string(train.kind) << "\n"
        << train.model.serialize() << "polyad_order = " << train.polyads.order << "\n"
        << "train_window = " << train.polyads.train_window << "\n"
        << "eval_window = " << train.polyads.eval_window << "\n"
        << "max_third_members = " << train.polyads.max_third_members.value_or(0) << "\n"
        << "files_per_subepoch = " << train.files_per_subepoch << "\n"
        << "total_subepochs = " << train.total_subepochs << "\n"
        << "lr_schedule = " << format_lr_schedule(train.lr_schedule) << "\n"
        << "batch_size = " << train.batch_size << "\n"
        << "seed = " << train.seed << "\n"
        << "robust = " << (train.robust ? "true" : "false") << "\n"
        << "clip_norm = " << format_double(train.clip_norm) << "\n"
        << "producers = " << train.producers << "\n"
        << "queue_capacity = " << train.queue_capacity << "\n"
        << "embeddings = " << train.embeddings << "\n"
        << "speaker_substitution = " << (train.speaker_substitution ? "true" : "false") << "\n"
        << "aggregation = "
        << (affinity.aggregation == Aggregation::mean ? "mean" : affinity.aggregation == Aggregation::max ? "max" : "top_k")
        << "\n"
        << "top_k = " << affinity.top_k << "\n"
        << "max_distance = " << format_double(affinity.max_distance) << "\n"
        << "out_of_window_distance = " << format_double(affinity.out_of_window) << "\n"
        << "scoring_chunk = " << affinity.scoring_chunk << "\n"
        << "threshold = " << format_double(clustering.threshold) << "\n"
        << "linkage = "
        << (clustering.linkage == Linkage::average ? "average" : clustering.linkage == Linkage::single ? "single" : "complete")
        << "\n";
    return out.str();
  }
};

// Unknown keys are errors. A dyad model kind implies polyad order 2 unless
// the file says otherwise.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
  KeyValues kv = KeyValues::parse(text);
  ExperimentConfig c;
  std::string kind;
  kv.read("model_kind", kind);
  if (!kind.empty()) c.train.kind = parse_model_kind(kind);
  if (c.train.kind == ModelKind::dyad) c.train.polyads.order = 2;
  c.train.model.read(kv);
  c.train.polyads.read(kv);
  kv.read("files_per_subepoch", c.train.files_per_subepoch);
  kv.read("total_subepochs", c.train.total_subepochs);
  if (kv.has("lr_schedule")) {
    std::string s;
    kv.read("lr_schedule", s);
    c.train.lr_schedule = parse_lr_schedule(s);
  }
  kv.read("batch_size", c.train.batch_size);
  kv.read("seed", c.train.seed);
  kv.read("robust", c.train.robust);
  kv.read("clip_norm", c.train.clip_norm);
  kv.read("producers", c.train.producers);
  kv.read("queue_capacity", c.train.queue_capacity);
  kv.read("embeddings", c.train.embeddings);
  kv.read("speaker_substitution", c.train.speaker_substitution);
  c.affinity.read(kv);
  c.clustering.read(kv);
  kv.finish();
  c.train.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Bounded queue between batch producers and the trainer.

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  // False once the queue was cancelled.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || cancelled_; });
    if (cancelled_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  // Empty once every producer finished and the queue drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || open_producers_ == 0 || cancelled_; });
    if (cancelled_ || items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void add_producer() {
    std::lock_guard lock(mu_);
    ++open_producers_;
  }
  void producer_done() {
    std::lock_guard lock(mu_);
    --open_producers_;
    not_empty_.notify_all();
  }
  void cancel() {
    std::lock_guard lock(mu_);
    cancelled_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  std::size_t open_producers_ = 0;
  bool cancelled_ = false;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

// ---------------------------------------------------------------------------
// Training data prepared once per run.

struct TrainingCorpus {
  std::vector<Document> docs;  // speaker-substituted when configured
  EmbeddingTable embeddings;
  PosVocabulary pos;
  std::vector<std::vector<MentionEncoding>> encodings;
  std::vector<std::vector<LabeledTriad>> polyads;
  std::vector<std::size_t> usable;  // documents with at least one polyad
};

inline TrainingCorpus prepare_training_corpus(const std::vector<Document>& raw, const TrainConfig& cfg) {
  TrainingCorpus tc;
  for (const auto& d : raw) {
    validate_document(d);
    tc.docs.push_back(cfg.speaker_substitution ? substitute_speakers(d) : d);
  }
  // vocabulary covers both surface forms so evaluation with or without the
  // speaker rule finds its words
  std::set<std::string> vocab = corpus_vocabulary(raw);
  for (const auto& w : corpus_vocabulary(tc.docs)) vocab.insert(w);
  const std::uint64_t emb_seed = mix_seed(cfg.seed, 0xE);
  if (!cfg.embeddings.empty())
    tc.embeddings = load_embeddings(read_file(cfg.embeddings), vocab, emb_seed, cfg.model.word_emb_dim).table;
  else
    tc.embeddings = random_embeddings(vocab, cfg.model.word_emb_dim, emb_seed);
  tc.pos = PosVocabulary::from_corpus(tc.docs);
  for (std::size_t i = 0; i < tc.docs.size(); ++i) {
    const Document& d = tc.docs[i];
    std::vector<MentionEncoding> enc;
    for (const auto& m : d.mentions) enc.push_back(encode_mention(d, m, tc.embeddings, tc.pos, cfg.model.features));
    tc.encodings.push_back(std::move(enc));
    tc.polyads.push_back(d.mentions.size() >= 2 ? enumerate_training_polyads(d, cfg.polyads)
                                                : std::vector<LabeledTriad>{});
    if (!tc.polyads.back().empty()) tc.usable.push_back(i);
  }
  if (tc.usable.empty())
    throw DataError("no training " + std::string(cfg.kind == ModelKind::triad ? "triads" : "pairs") +
                    " within train_window " + std::to_string(cfg.polyads.train_window) + " (eval_window " +
                    std::to_string(cfg.polyads.eval_window) + ")");
  return tc;
}

// ---------------------------------------------------------------------------
// Training loop

struct SubepochRecord {
  std::size_t subepoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wallclock = 0.0;  // seconds since the run (or resume) started
};

struct TrainResult {
  std::vector<SubepochRecord> log;  // sub-epochs run in this call
  std::size_t completed = 0;        // sub-epochs done in total
};

inline std::string format_log_line(const SubepochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %.3f\n", r.subepoch, r.loss, r.lr, r.wallclock);
  return buf;
}

struct TrainOptions {
  std::optional<std::size_t> stop_after;  // sub-epochs to run in this call
  bool resume = false;
  std::function<void(const SubepochRecord&)> on_subepoch;
};

namespace training_detail {

struct Job {
  std::size_t doc = 0;
  std::vector<LabeledTriad> polyads;
};

inline std::vector<ad::NamedTensor> state_entries(const ad::ParameterStore& store, std::uint64_t steps,
                                              std::size_t subepoch) {
  auto entries = ad::snapshot_moments(store);
  entries.push_back({"adam.steps", ad::Tensor(1, 1, static_cast<double>(steps))});
  entries.push_back({"subepoch", ad::Tensor(1, 1, static_cast<double>(subepoch))});
  return entries;
}

inline double scalar_entry(const std::vector<ad::NamedTensor>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name && e.tensor.size() == 1) return e.tensor[0];
  throw ModelError("training state lacks " + name);
}

}  // namespace training_detail

// Output directory: model/ (bundle), state.ckpt (optimizer and position),
// loss.log, config.txt. Both checkpoint files are rewritten after every
// sub-epoch.
inline TrainResult run_training(const std::vector<Document>& corpus, const ExperimentConfig& exp,
                                const std::filesystem::path& out_dir, const TrainOptions& opts = {}) {
  const TrainConfig& cfg = exp.train;
  cfg.validate();
  TrainingCorpus tc = prepare_training_corpus(corpus, cfg);
  std::filesystem::create_directories(out_dir);
  const auto model_dir = out_dir / "model";
  const auto state_path = out_dir / "state.ckpt";
  const auto log_path = out_dir / "loss.log";
  const auto config_path = out_dir / "config.txt";
  const std::string config_text = exp.serialize();

  CorefModel model(cfg.kind, cfg.model, tc.embeddings.rows(), tc.pos.size(), mix_seed(cfg.seed, 0xA));
  model.set_word_vectors(tc.embeddings);
  ad::Adam adam;
  std::size_t start = 0;
  std::string log_text;

  if (opts.resume) {
    if (!std::filesystem::exists(state_path)) throw ModelError("nothing to resume in " + out_dir.string());
    if (read_file(config_path) != config_text) throw UsageError("resume with a different configuration");
    ModelBundle saved = load_bundle(model_dir);
    if (saved.embeddings.words() != tc.embeddings.words() || !(saved.pos_vocab == tc.pos))
      throw ModelError("resume with a different corpus vocabulary");
    ad::restore_values(model.params(), ad::snapshot_values(saved.model.params()));
    const auto state = read_checkpoint(state_path);
    ad::restore_moments(model.params(), state);
    adam.set_steps(static_cast<std::uint64_t>(training_detail::scalar_entry(state, "adam.steps")));
    start = static_cast<std::size_t>(training_detail::scalar_entry(state, "subepoch"));
    if (std::filesystem::exists(log_path)) {
      std::istringstream in(read_file(log_path));
      std::string line;
      for (std::size_t i = 0; i < start && std::getline(in, line); ++i) log_text += line + "\n";
    }
  } else {
    write_file(config_path, config_text);
  }

  TrainResult result;
  result.completed = start;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t end = cfg.total_subepochs;
  if (opts.stop_after) end = std::min(end, start + *opts.stop_after);

  for (std::size_t s = start; s < end; ++s) {
    const double lr = cfg.lr_at(s);
    Rng data_rng(mix_seed(cfg.seed, s, 1));
    Rng dropout_rng(mix_seed(cfg.seed, s, 2));
    std::vector<std::size_t> files(cfg.files_per_subepoch);
    for (auto& f : files) f = tc.usable[data_rng.index(tc.usable.size())];
    std::vector<std::uint64_t> shuffle_seeds(files.size());
    for (auto& x : shuffle_seeds) x = data_rng.next();

    // producers split the sampled files round-robin; one producer keeps
    // arrival order fixed
    BoundedQueue<ModelBatch> queue(cfg.queue_capacity);
    std::vector<std::thread> producers;
    std::exception_ptr producer_error;
    std::mutex error_mu;
    const std::size_t nprod = std::min(cfg.producers, files.size());
    for (std::size_t p = 0; p < nprod; ++p) queue.add_producer();
    for (std::size_t p = 0; p < nprod; ++p)
      producers.emplace_back([&, p] {
        try {
          for (std::size_t f = p; f < files.size(); f += nprod) {
            const std::size_t d = files[f];
            for (auto& chunk : make_batches(tc.polyads[d], cfg.batch_size, shuffle_seeds[f]))
              if (!queue.push(build_batch(tc.docs[d], tc.encodings[d], chunk, cfg.kind, cfg.model.features))) return;
          }
        } catch (...) {
          std::lock_guard lock(error_mu);
          producer_error = std::current_exception();
          queue.cancel();
        }
        queue.producer_done();
      });

    double loss_sum = 0.0, weight = 0.0;
    try {
      while (auto batch = queue.pop()) {
        model.params().zero_grad();
        ad::Tape tape;
        ad::Var loss = model.loss(tape, *batch, true, dropout_rng);
        const double l = loss.value()[0];
        if (!std::isfinite(l)) throw ModelError("non-finite loss at sub-epoch " + std::to_string(s));
        tape.backward(loss);
        if (cfg.robust) {
          const double norm = model.params().grad_norm();
          if (norm > cfg.clip_norm) model.params().scale_grad(cfg.clip_norm / norm);
        }
        adam.step(model.params(), lr);
        const double n = static_cast<double>(batch->items.size());
        loss_sum += l * n;
        weight += n;
      }
    } catch (...) {
      queue.cancel();
      for (auto& t : producers) t.join();
      throw;
    }
    for (auto& t : producers) t.join();
    if (producer_error) std::rethrow_exception(producer_error);

    SubepochRecord rec;
    rec.subepoch = s;
    rec.loss = weight > 0 ? loss_sum / weight : 0.0;
    rec.lr = lr;
    rec.wallclock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_bundle(model_dir, model, tc.embeddings, tc.pos);
    write_checkpoint(state_path, training_detail::state_entries(model.params(), adam.steps(), s + 1));
    log_text += format_log_line(rec);
    write_file(log_path, log_text);
    result.log.push_back(rec);
    result.completed = s + 1;
    if (opts.on_subepoch) opts.on_subepoch(rec);
  }
  return result;
}

// Full pipeline on a trained bundle, scored against the documents' gold
// entities.
inline CorpusResult evaluate_checkpoint(const std::vector<Document>& docs, const std::filesystem::path& model_dir,
                                        const PipelineConfig& cfg) {
  ModelBundle bundle = load_bundle(model_dir);
  return evaluate_corpus(docs, model_affinity(bundle, cfg.polyads, cfg.affinity), cfg);
}

// Mean BCE of a bundle over the training polyads of `docs`, dropout off.
inline double corpus_loss(const std::vector<Document>& docs, const ModelBundle& bundle, const PolyadSpec& spec,
                          bool speaker_substitution = true, std::size_t batch_size = 512) {
  double sum = 0.0, weight = 0.0;
  Rng unused(0);
  for (const auto& raw : docs) {
    const Document d = speaker_substitution ? substitute_speakers(raw) : raw;
    if (d.mentions.size() < 2) continue;
    auto polyads = enumerate_training_polyads(d, spec);
    if (polyads.empty()) continue;
    const auto enc = bundle.encode_all(d);
    for (std::size_t i = 0; i < polyads.size(); i += batch_size) {
      std::span<const LabeledTriad> chunk(polyads.data() + i, std::min(batch_size, polyads.size() - i));
      ModelBatch b = build_batch(d, enc, chunk, bundle.model.kind(), bundle.model.config().features);
      ad::Tape tape;
      const double l = bundle.model.loss(tape, b, false, unused).value()[0];
      sum += l * static_cast<double>(chunk.size());
      weight += static_cast<double>(chunk.size());
    }
  }
  return weight > 0 ? sum / weight : 0.0;
}

}  // namespace triad
