#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "triad/affinity.hpp"
#include "triad/clustering.hpp"
#include "triad/corpus.hpp"
#include "triad/metrics.hpp"
#include "triad/model.hpp"
#include "triad/polyads.hpp"
#include "triad/postprocess.hpp"

namespace triad {

struct PipelineConfig {
  PolyadSpec polyads;
  AffinityConfig affinity;
  ClusterConfig clustering;
  PostprocessFlags flags;
  std::size_t workers = 1;  // documents processed in parallel
};

// Affinities for a document whose speakers were already substituted (when
// that rule is on).
using AffinityFn = std::function<AffinityMatrix(const Document&)>;

inline AffinityFn model_affinity(const ModelBundle& bundle, const PolyadSpec& spec, const AffinityConfig& cfg) {
  return [&bundle, spec, cfg](const Document& doc) { return aggregate(doc, bundle, spec, cfg); };
}

struct DocumentResult {
  AffinityMatrix affinity;  // after any pronoun-fix overrides
  DistanceMatrix distance;  // the matrix behind the final clustering
  EntityPartition partition;
  std::size_t pronoun_only_before = 0;
  std::size_t pronoun_only_after = 0;
};

inline DistanceMatrix postprocessed_distances(const Document& doc, const AffinityMatrix& aff,
                                              const PipelineConfig& cfg) {
  DistanceMatrix d = to_distances(aff, cfg.affinity);
  if (cfg.flags.proper_names) d = link_same_proper_names(doc, std::move(d));
  return d;
}

// score -> aggregate -> distances -> proper names -> cluster -> pronoun fix.
// Singletons are kept.
inline DocumentResult resolve_document(const Document& original, const AffinityFn& affinity,
                                       const PipelineConfig& cfg) {
  const Document doc = cfg.flags.speaker_substitution ? substitute_speakers(original) : original;
  DocumentResult out;
  out.affinity = affinity(doc);
  if (out.affinity.size() != doc.mentions.size()) throw ModelError(doc.doc_key + ": affinity matrix has wrong size");
  out.distance = postprocessed_distances(doc, out.affinity, cfg);
  out.partition = cluster_mentions(out.distance, cfg.clustering);
  out.pronoun_only_before = count_pronoun_only_clusters(doc, out.partition);
  if (cfg.flags.pronoun_fix) {
    DistanceMatrix last = out.distance;
    auto recluster = [&](const AffinityMatrix& a) {
      last = postprocessed_distances(doc, a, cfg);
      return cluster_mentions(last, cfg.clustering);
    };
    PronounFixResult fix = resolve_pronoun_only_clusters(out.partition, doc, out.affinity, recluster);
    out.partition = std::move(fix.partition);
    out.affinity = std::move(fix.affinity);
    out.distance = std::move(last);
  }
  out.pronoun_only_after = count_pronoun_only_clusters(doc, out.partition);
  return out;
}

struct CorpusResult {
  MetricReport total;
  std::vector<DocumentResult> documents;
};

// Corpus scores sum per-document counts. Documents are spread over workers
// by index; results land in document order, so the outcome does not depend
// on the worker count.
inline CorpusResult evaluate_corpus(const std::vector<Document>& docs, const AffinityFn& affinity,
                                    const PipelineConfig& cfg) {
  CorpusResult out;
  out.documents.resize(docs.size());
  std::vector<std::exception_ptr> errors(docs.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, docs.size()));
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < docs.size(); i += workers) {
      try {
        out.documents[i] = resolve_document(docs[i], affinity, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t i = 0; i < docs.size(); ++i) out.total += report(gold_partition(docs[i]), out.documents[i].partition);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus files

inline bool is_corpus_file(const std::filesystem::path& p) {
  const std::string name = p.filename().string();
  auto ends = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends(".conll") || ends("_conll") || ends(".conll12");
}

// A single file, or every CoNLL file directly inside a directory (by name).
inline std::vector<Document> read_corpus(const std::filesystem::path& path) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path))
      if (e.is_regular_file() && is_corpus_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no CoNLL files in " + path.string());
  } else if (std::filesystem::is_regular_file(path)) {
    files.push_back(path);
  } else {
    throw DataError("corpus path " + path.string() + " does not exist");
  }
  std::vector<Document> docs;
  for (const auto& f : files) {
    try {
      for (auto& d : parse_conll(read_file(f))) docs.push_back(std::move(d));
    } catch (const DataError& e) {
      throw DataError(f.filename().string() + ": " + e.what());
    }
  }
  return docs;
}

}  // namespace triad
