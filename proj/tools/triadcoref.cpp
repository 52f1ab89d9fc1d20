// triadcoref: synthetic data, training, scoring, clustering and evaluation
// for the triad coreference pipeline.
//
// Exit codes: 0 ok, 1 usage, 2 data or format, 3 model.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "triad/training.hpp"

namespace fs = std::filesystem;
using namespace triad;

namespace {

struct Flags {
  bool no_propername = false;
  bool no_speaker_sub = false;
  bool no_pronoun_fix = false;

  PostprocessFlags get() const { return {!no_propername, !no_speaker_sub, !no_pronoun_fix}; }
};

void add_postprocess_flags(CLI::App* cmd, Flags& f) {
  cmd->add_flag("--no-propername", f.no_propername, "Do not force identical proper names together");
  cmd->add_flag("--no-speaker-sub", f.no_speaker_sub, "Do not replace first/second person pronouns by speakers");
  cmd->add_flag("--no-pronoun-fix", f.no_pronoun_fix, "Do not reattach pronoun-only clusters");
}

// --config wins; otherwise the training run's config.txt next to the model
// directory, if there is one; otherwise defaults.
ExperimentConfig experiment_for(const std::string& config, const fs::path& model_dir) {
  if (!config.empty()) return parse_experiment_config(read_file(config));
  const fs::path beside = model_dir.parent_path() / "config.txt";
  if (!model_dir.empty() && fs::is_regular_file(beside)) return parse_experiment_config(read_file(beside));
  return {};
}

// Pipeline settings for one bundle; the polyad order follows the model kind.
PipelineConfig pipeline_for(const ExperimentConfig& exp, const ModelBundle& bundle, PostprocessFlags flags,
                            std::size_t workers) {
  PipelineConfig p = exp.pipeline(flags, workers);
  p.polyads.order = bundle.model.kind() == ModelKind::triad ? 3 : 2;
  return p;
}

std::string row_label(const ModelBundle& b, PostprocessFlags f) {
  std::string label = to_string(b.model.kind());
  if (f == PostprocessFlags{}) return label + " + post";
  std::vector<std::string> on;
  if (f.proper_names) on.push_back("names");
  if (f.speaker_substitution) on.push_back("speakers");
  if (f.pronoun_fix) on.push_back("pronouns");
  for (std::size_t i = 0; i < on.size(); ++i) label += (i ? "," : " + ") + on[i];
  return label;
}

const Document& pick_document(const std::vector<Document>& docs, std::size_t index) {
  if (index >= docs.size())
    throw UsageError("document index " + std::to_string(index) + " out of range (" + std::to_string(docs.size()) +
                     " documents)");
  return docs[index];
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    write_file(out, text);
}

// ---------------------------------------------------------------------------

int run_synth(const SynthConfig& cfg, std::uint64_t seed, const std::string& out) {
  const std::string text = write_conll(generate_synthetic_corpus(cfg, seed));
  if (out.empty() || out == "-") {
    std::cout << text;
    return 0;
  }
  fs::path target(out);
  if (fs::is_directory(target) || !target.has_extension()) {
    fs::create_directories(target);
    target /= "synthetic.conll";
  }
  write_file(target, text);
  std::cerr << "wrote " << cfg.documents << " documents to " << target.string() << "\n";
  return 0;
}

int run_train(const std::string& config, const std::string& corpus, const std::string& out, bool resume,
              std::optional<std::size_t> subepochs, bool quiet) {
  ExperimentConfig exp = config.empty() ? ExperimentConfig{} : parse_experiment_config(read_file(config));
  auto docs = read_corpus(corpus);
  TrainOptions opts;
  opts.resume = resume;
  opts.stop_after = subepochs;
  if (!quiet) opts.on_subepoch = [](const SubepochRecord& r) { std::cout << format_log_line(r) << std::flush; };
  TrainResult r = run_training(docs, exp, out, opts);
  std::cerr << "completed " << r.completed << "/" << exp.train.total_subepochs << " sub-epochs\n";
  return 0;
}

int run_score(const std::string& model, const std::string& config, const std::string& corpus,
              std::optional<std::size_t> doc_index, bool no_speaker_sub, const std::string& out) {
  ModelBundle bundle = load_bundle(model);
  const ExperimentConfig exp = experiment_for(config, model);
  PostprocessFlags flags;
  flags.speaker_substitution = !no_speaker_sub;
  const PipelineConfig p = pipeline_for(exp, bundle, flags, 1);
  auto docs = read_corpus(corpus);
  auto one = [&](const Document& raw) {
    const Document d = flags.speaker_substitution ? substitute_speakers(raw) : raw;
    AffinityMatrix aff = aggregate(d, bundle, p.polyads, p.affinity);
    return write_affinity_text(aff, to_distances(aff, p.affinity));
  };
  if (doc_index) {
    emit(out, one(pick_document(docs, *doc_index)));
    return 0;
  }
  if (out.empty() || out == "-") throw UsageError("score over a whole corpus needs --out <dir>");
  fs::create_directories(out);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.aff", i);
    write_file(fs::path(out) / name, one(docs[i]));
  }
  std::cerr << "scored " << docs.size() << " documents into " << out << "\n";
  return 0;
}

int run_cluster(const std::string& input, double t, const std::string& linkage, const std::string& out) {
  const std::string text = input.empty() || input == "-" ? std::string(std::istreambuf_iterator<char>(std::cin), {})
                                                         : read_file(input);
  AffinityText parsed = parse_affinity_text(text);
  ClusterConfig c{t, parse_linkage(linkage)};
  emit(out, format_clusters(cluster_mentions(parsed.distance, c)));
  return 0;
}

int run_evaluate(const std::vector<std::string>& models, const std::string& config, const std::string& corpus,
                 const Flags& f, std::size_t workers, const std::string& format, bool histogram) {
  if (format != "table" && format != "kv") throw UsageError("--format must be table or kv");
  auto docs = read_corpus(corpus);
  std::vector<ModelBundle> bundles;
  for (const auto& m : models) bundles.push_back(load_bundle(m));
  // dyad rows first, matching the usual comparison layout
  std::vector<std::size_t> order(bundles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bundles[a].model.kind() == ModelKind::dyad && bundles[b].model.kind() == ModelKind::triad;
  });

  std::vector<std::pair<std::string, MetricReport>> rows;
  std::string extra;
  for (std::size_t i : order) {
    const ExperimentConfig exp = experiment_for(config, models[i]);
    const PipelineConfig p = pipeline_for(exp, bundles[i], f.get(), workers);
    CorpusResult r = evaluate_corpus(docs, model_affinity(bundles[i], p.polyads, p.affinity), p);
    const std::string label = row_label(bundles[i], f.get());
    rows.emplace_back(label, r.total);
    if (format == "kv") extra += format_report_kv(r.total, to_string(bundles[i].model.kind()) + ".");
    if (histogram) {
      std::map<std::size_t, std::size_t> h;
      for (const auto& d : r.documents)
        for (const auto& [size, count] : entity_size_histogram(d.partition)) h[size] += count;
      extra += "\nentity sizes (" + label + ")\n" + format_histogram(h);
      for (const auto& [size, count] : h) extra += "size " + std::to_string(size) + " = " + std::to_string(count) + "\n";
    }
  }
  if (format == "table")
    std::cout << format_report_table(rows) << extra;
  else
    std::cout << extra;
  return 0;
}

int run_compare(const std::string& dyad_dir, const std::string& triad_dir, const std::string& config,
                const std::string& corpus, std::size_t doc_index, const std::vector<std::size_t>& pair,
                bool no_speaker_sub) {
  ModelBundle dyad = load_bundle(dyad_dir), triad = load_bundle(triad_dir);
  if (dyad.model.kind() != ModelKind::dyad) throw UsageError("--dyad must name a dyad model");
  if (triad.model.kind() != ModelKind::triad) throw UsageError("--triad must name a triad model");
  auto docs = read_corpus(corpus);
  const Document& raw = pick_document(docs, doc_index);
  const Document doc = no_speaker_sub ? raw : substitute_speakers(raw);
  const std::size_t n = doc.mentions.size();
  const MentionId a = std::min(pair[0], pair[1]), b = std::max(pair[0], pair[1]);
  if (a == b || b >= n) throw UsageError("need two distinct mentions below " + std::to_string(n));

  const ExperimentConfig exp = experiment_for(config, triad_dir);
  const PolyadSpec spec = pipeline_for(exp, triad, {}, 1).polyads;
  auto text = [&](MentionId m) {
    const Mention& x = doc.mentions[m];
    std::string s;
    for (std::size_t t = x.start; t <= x.end; ++t) s += (t > x.start ? " " : "") + doc.tokens[t].surface;
    return s;
  };

  const double dyad_phi = model_scorer(dyad, doc)({degenerate_triad(a, b)}).front()[0];
  std::printf("pair %zu \"%s\" - %zu \"%s\"\n", a, text(a).c_str(), b, text(b).c_str());
  std::printf("dyad affinity  %.3f\n", dyad_phi);
  if (!in_eval_window(a, b, spec)) {
    std::printf("triad affinity -  (outside the evaluation window, distance %.1f)\n",
                exp.affinity.out_of_window);
    return 0;
  }
  AffinityMatrix aff = aggregate(doc, triad, spec, exp.affinity);
  std::printf("triad affinity %.3f  (%zu triads)\n", aff.score(a, b), aff.count(a, b));

  std::vector<std::array<MentionId, 3>> triples;
  for (const auto& t : enumerate_eval_triads(doc, a, b, spec)) {
    std::array<MentionId, 3> s = t;
    std::sort(s.begin(), s.end());
    triples.push_back(s);
  }
  if (triples.empty()) triples.push_back(degenerate_triad(a, b));
  const auto values = model_scorer(triad, doc)(triples);
  std::vector<std::pair<double, MentionId>> per_third;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    const MentionId c = t[0] != a && t[0] != b ? t[0] : t[1] != a && t[1] != b ? t[1] : t[2];
    per_third.emplace_back(values[i][affinity_detail::slot_of(t, a, b)], c);
  }
  std::stable_sort(per_third.begin(), per_third.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  std::printf("third members\n");
  for (const auto& [v, c] : per_third) std::printf("  %5zu %.3f  %s\n", c, v, text(c).c_str());
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::model: return 3;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triad-based coreference resolution"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // synth
  SynthConfig synth;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  auto* s = app.add_subcommand("synth", "Write a seeded synthetic corpus in CoNLL column format");
  s->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  s->add_option("--docs", synth.documents, "Number of documents")->capture_default_str();
  s->add_option("--entities", synth.entities_per_document, "Entities per document")->capture_default_str();
  s->add_option("--mentions", synth.mentions_per_entity, "Mentions per entity")->capture_default_str();
  s->add_option("--pronoun-rate", synth.pronoun_rate, "Chance a follow-up mention is a pronoun")->capture_default_str();
  s->add_option("--speakers", synth.speakers, "Speakers per document")->capture_default_str();
  s->add_option("--min-gap", synth.min_gap, "Fewest filler tokens between mentions")->capture_default_str();
  s->add_option("--max-gap", synth.max_gap, "Most filler tokens between mentions")->capture_default_str();
  s->add_option("--vocab", synth.vocabulary_size, "Filler word types")->capture_default_str();
  s->add_option("--out", synth_out, "Output file or directory (default stdout)");

  // train
  std::string train_config, train_corpus, train_out;
  bool train_resume = false, train_quiet = false;
  std::optional<std::size_t> train_subepochs;
  auto* t = app.add_subcommand("train", "Train a triad or dyad model");
  t->add_option("--config", train_config, "Experiment config file (key = value)");
  t->add_option("--corpus", train_corpus, "CoNLL file or directory")->required();
  t->add_option("--out", train_out, "Run directory: model/, state.ckpt, loss.log, config.txt")->required();
  t->add_flag("--resume", train_resume, "Continue from the run directory's last sub-epoch");
  t->add_option("--subepochs", train_subepochs, "Stop after this many sub-epochs in this call");
  t->add_flag("--quiet", train_quiet, "Do not print the per-sub-epoch log");

  // score
  std::string score_model, score_config, score_corpus, score_out;
  std::optional<std::size_t> score_doc;
  bool score_no_speaker = false;
  auto* sc = app.add_subcommand("score", "Write affinity/distance matrices (n, then 'i j phi d' rows)");
  sc->add_option("--model", score_model, "Model directory")->required();
  sc->add_option("--config", score_config, "Experiment config (windows, distances)");
  sc->add_option("--corpus", score_corpus, "CoNLL file or directory")->required();
  sc->add_option("--doc", score_doc, "Score only this document index");
  sc->add_flag("--no-speaker-sub", score_no_speaker, "Score the text without speaker substitution");
  sc->add_option("--out", score_out, "Output file (with --doc) or directory");

  // cluster
  std::string cluster_in, cluster_out, cluster_linkage = "average";
  double cluster_t = ClusterConfig{}.threshold;
  auto* cl = app.add_subcommand("cluster", "Cluster a distance matrix written by score");
  cl->add_option("--input", cluster_in, "Affinity file (default stdin)");
  cl->add_option("--t", cluster_t, "Cutoff threshold")->capture_default_str();
  cl->add_option("--linkage", cluster_linkage, "average, single or complete")->capture_default_str();
  cl->add_option("--out", cluster_out, "Output file (default stdout)");

  // evaluate
  std::vector<std::string> eval_models;
  std::string eval_config, eval_corpus, eval_format = "table";
  Flags eval_flags;
  std::size_t eval_workers = 1;
  bool eval_histogram = false;
  auto* ev = app.add_subcommand("evaluate", "Run the full pipeline and score MUC, B3 and CEAF-phi4");
  ev->add_option("--model", eval_models, "Model directory; give a dyad and a triad model for side-by-side rows")
      ->required()
      ->expected(1, 2);
  ev->add_option("--config", eval_config, "Experiment config (windows, distances, threshold)");
  ev->add_option("--corpus", eval_corpus, "CoNLL file or directory with gold entities")->required();
  add_postprocess_flags(ev, eval_flags);
  ev->add_option("--workers", eval_workers, "Documents processed in parallel")->capture_default_str();
  ev->add_option("--format", eval_format, "table or kv")->capture_default_str();
  ev->add_flag("--histogram", eval_histogram, "Print the response entity-size histogram");

  // compare
  std::string cmp_dyad, cmp_triad, cmp_config, cmp_corpus;
  std::size_t cmp_doc = 0;
  std::vector<std::size_t> cmp_pair;
  bool cmp_no_speaker = false;
  auto* cmp = app.add_subcommand("compare", "Dyad vs triad affinity for one mention pair");
  cmp->add_option("--dyad", cmp_dyad, "Dyad model directory")->required();
  cmp->add_option("--triad", cmp_triad, "Triad model directory")->required();
  cmp->add_option("--config", cmp_config, "Experiment config (windows)");
  cmp->add_option("--corpus", cmp_corpus, "CoNLL file or directory")->required();
  cmp->add_option("--doc", cmp_doc, "Document index")->capture_default_str();
  cmp->add_option("--pair", cmp_pair, "Two mention ids")->required()->expected(2);
  cmp->add_flag("--no-speaker-sub", cmp_no_speaker, "Skip speaker substitution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) return run_synth(synth, synth_seed, synth_out);
    if (*t) return run_train(train_config, train_corpus, train_out, train_resume, train_subepochs, train_quiet);
    if (*sc) return run_score(score_model, score_config, score_corpus, score_doc, score_no_speaker, score_out);
    if (*cl) return run_cluster(cluster_in, cluster_t, cluster_linkage, cluster_out);
    if (*ev)
      return run_evaluate(eval_models, eval_config, eval_corpus, eval_flags, eval_workers, eval_format,
                          eval_histogram);
    if (*cmp) return run_compare(cmp_dyad, cmp_triad, cmp_config, cmp_corpus, cmp_doc, cmp_pair, cmp_no_speaker);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
