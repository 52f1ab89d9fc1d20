// Acceptance run: one PASS/FAIL line per primary criterion, then a summary.
// Exits 0 unless --strict is given and a criterion failed, so that a known
// shortfall is reported rather than hidden behind a broken build.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/affinity_reference.hpp"
#include "oracles/metrics_reference.hpp"
#include "oracles/upgma.hpp"
#include "support/fixtures.hpp"
#include "support/gradient_suite.hpp"
#include "triad/training.hpp"

namespace fs = std::filesystem;
using namespace triad;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Report {
  int passed = 0, failed = 0;

  void line(const char* name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    (v.pass ? passed : failed)++;
    std::printf("%s  %-22s %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  double worst_op = 0.0, worst_model = 0.0;
  std::size_t checks = 0;
  std::string bad;
  for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u})
    for (const auto& c : fixture::op_gradient_cases(seed)) {
      worst_op = std::max(worst_op, c.result.relative_error);
      ++checks;
      if (!c.ok()) bad += " " + c.name;
    }
  for (const auto& c : fixture::model_gradient_cases()) {
    worst_model = std::max(worst_model, c.result.relative_error);
    ++checks;
    if (!c.ok() || !(c.result.analytic_norm > 0)) bad += " " + c.name;
  }
  const double secs = seconds_since(t0);
  return {bad.empty() && secs < 120.0,
          fmt("%zu checks, worst op rel.err %.1e (<1e-4), worst model %.1e (<1e-3), %.1f s (<120)%s", checks,
              worst_op, worst_model, secs, bad.empty() ? "" : (" failing:" + bad).c_str())};
}

Verdict metric_oracle() {
  std::mt19937_64 gen(500);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 8);
    auto key = oracle::random_partition(gen, n), response = oracle::random_partition(gen, n);
    const std::pair<MetricCounts, oracle::Scores> cases[] = {{muc(key, response), oracle::muc(key, response)},
                                                             {b_cubed(key, response), oracle::b_cubed(key, response)},
                                                             {ceaf_phi4(key, response), oracle::ceaf_phi4(key, response)}};
    for (const auto& [fast, ref] : cases)
      worst = std::max({worst, std::abs(fast.recall() - ref.recall), std::abs(fast.precision() - ref.precision),
                        std::abs(fast.f1() - ref.f1())});
  }
  auto p = [](std::vector<Cluster> c) { return EntityPartition(std::move(c)); };
  auto exact = [](double x, double y) { return std::abs(x - y) <= 1e-15; };
  const auto m = muc(p({{0, 1, 2, 3}}), p({{0, 1}, {2, 3}}));
  const auto b = b_cubed(p({{0, 1, 2}}), p({{0, 1}, {2}}));
  const auto c = ceaf_phi4(p({{0, 1, 2, 3}}), p({{0, 1}, {2, 3}}));
  const bool hand = exact(m.recall(), 2.0 / 3) && exact(m.precision(), 1.0) && exact(b.recall(), 5.0 / 9) &&
                    exact(b.precision(), 1.0) && exact(c.recall(), 2.0 / 3) && exact(c.precision(), 1.0 / 3);
  return {worst <= 1e-9 && hand,
          fmt("500 partitions, max |diff| %.1e; hand: MUC R %.4f, B3 R %.4f, CEAF R %.4f P %.4f "
              "(B3 of key {a,b,c} vs {a,b},{c} is 5/9: c keeps 1 of its 3 key mentions, not 7/9)",
              worst, m.recall(), b.recall(), c.recall(), c.precision())};
}

Verdict clustering_oracle() {
  std::mt19937_64 gen(200);
  std::size_t cuts = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto d = oracle::random_distances(10, gen);
    auto fast = agglomerate(d);
    if (!oracle::merges_match(fast, oracle::brute_force_agglomerate(d)))
      return {false, fmt("merge sequence differs on matrix %d", trial)};
    for (double t = 0.5; t <= 10.5; t += 0.5) {
      if (!(cut(fast, t) == oracle::brute_force_cut(d, t))) return {false, fmt("cut at %.1f differs on %d", t, trial)};
      ++cuts;
    }
    if (!(cluster_mentions(d) == oracle::brute_force_cut(d, 3.5))) return {false, fmt("t=3.5 differs on %d", trial)};
  }
  return {true, fmt("200 matrices of 10 points: merge sequences and %zu cut partitions equal brute force", cuts)};
}

Verdict affinity_algebra() {
  double worst = 0.0;
  std::size_t pairs = 0;
  for (std::size_t n : {2u, 5u, 17u, 60u})
    for (std::size_t window : {4u, 15u, 40u}) {
      PolyadSpec spec;
      spec.eval_window = window;
      auto doc = fixture::labeled_document(std::vector<int>(n, 0));
      const std::uint64_t salt = 7 * n + window;
      auto aff = aggregate_triads(n, spec, [&](const auto& t) { return oracle::stub_scores(t, salt); });
      for (MentionId a = 0; a < n; ++a)
        for (MentionId b = a + 1; b < n; ++b) {
          auto ref = oracle::reference_mean(doc, a, b, spec, salt);
          if (aff.in_window(a, b) != ref.in_window) return {false, fmt("window mismatch n=%zu (%zu,%zu)", n, a, b)};
          if (!ref.in_window) continue;
          worst = std::max(worst, std::abs(aff.score(a, b) - ref.phi));
          ++pairs;
        }
    }
  std::mt19937_64 gen(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 100000; ++i) {
    const double phi = i == 0 ? 0.0 : i == 1 ? 1.0 : u(gen);
    const double d = affinity_to_distance(phi);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  PolyadSpec narrow;
  narrow.eval_window = 3;
  auto aff = aggregate_triads(12, narrow, [](const auto& t) { return oracle::stub_scores(t, 1); });
  auto dist = to_distances(aff);
  std::size_t outside = 0;
  bool constant = true;
  for (MentionId a = 0; a < 12; ++a)
    for (MentionId b = a + 1; b < 12; ++b)
      if (!aff.in_window(a, b)) {
        ++outside;
        constant = constant && dist(a, b) == 3.7;
      }
  return {worst <= 1e-9 && lo >= 1.0 && hi <= 10.0 && constant && outside > 0,
          fmt("%zu pairs, max |phi - mean| %.1e; 1e5 phi give d in [%.3f, %.3f]; %zu out-of-window pairs at 3.7", pairs,
              worst, lo, hi, outside)};
}

Verdict transitivity() {
  std::size_t triads = 0, violations = 0;
  auto scan = [&](const Document& doc, const PolyadSpec& spec) {
    for (const auto& t : enumerate_training_triads(doc, spec)) {
      ++triads;
      if (!labels_transitive(t.labels)) ++violations;
    }
  };
  PolyadSpec spec;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig cfg;
    cfg.entities_per_document = 2 + seed;
    for (const auto& d : generate_synthetic_corpus(cfg, seed)) scan(d, spec);
  }
  std::mt19937_64 gen(3);
  for (int i = 0; i < 50; ++i) {
    std::vector<int> ids(2 + gen() % 40);
    for (int& e : ids) e = static_cast<int>(gen() % 6);
    scan(fixture::labeled_document(ids), spec);
  }
  return {violations == 0 && triads > 0, fmt("%zu training triads, %zu violations", triads, violations)};
}

// ---------------------------------------------------------------------------

Verdict overfit(const fs::path& work) {
  const auto t0 = Clock::now();
  auto docs = generate_synthetic_corpus(SynthConfig{}, 7);  // 20 documents, 6 entities x 4 mentions
  ExperimentConfig cfg;
  cfg.train.model = fixture::small_config();
  cfg.train.model.features.context = 4;
  cfg.train.model.features.max_mention = 2;
  cfg.train.model.input_dropout = 0.0;
  cfg.train.model.pair_dropout = 0.0;
  cfg.train.files_per_subepoch = 20;
  cfg.train.batch_size = 64;
  cfg.train.total_subepochs = 30;
  cfg.train.lr_schedule = {{0, 3e-3}};
  cfg.train.seed = 11;
  run_training(docs, cfg, work / "overfit");
  auto bundle = load_bundle(work / "overfit" / "model");
  const double bce = corpus_loss(docs, bundle, cfg.train.polyads);
  const double f1 = 100.0 * evaluate_corpus(docs, model_affinity(bundle, cfg.train.polyads, cfg.affinity),
                                             cfg.pipeline())
                                .total.average_f1();
  const double secs = seconds_since(t0);
  return {bce < 0.05 && f1 >= 95.0 && secs < 600.0,
          fmt("%zu docs, %zu mentions: BCE %.4f (<0.05), avg F1 %.2f (>=95), %.0f s (<600)", docs.size(),
              docs.size() * 24, bce, f1, secs)};
}

// Chain corpus: wide filler gaps put a pronoun's earlier antecedents outside
// its context window, so a far name reaches the pronoun only through the
// nearer mention of the same entity.
SynthConfig chain_corpus() {
  SynthConfig s;
  s.documents = 60;
  s.entities_per_document = 4;
  s.mentions_per_entity = 5;
  s.min_gap = 6;
  s.max_gap = 10;
  s.pronoun_rate = 0.8;
  s.name_pool = 8;
  return s;
}

ExperimentConfig chain_experiment(ModelKind kind, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.train.kind = kind;
  cfg.train.polyads.order = kind == ModelKind::triad ? 3 : 2;
  cfg.train.model = fixture::small_config();
  cfg.train.model.features.context = 2;
  cfg.train.model.features.max_mention = 2;
  cfg.train.files_per_subepoch = 12;
  cfg.train.batch_size = 64;
  cfg.train.total_subepochs = 30;
  cfg.train.lr_schedule = {{0, 3e-3}};
  cfg.train.seed = seed;
  return cfg;
}

struct DirectionRun {
  std::vector<Document> test;
  fs::path dyad_dir, triad_dir;
};

Verdict dyad_vs_triad(const fs::path& work, DirectionRun& keep) {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto train = generate_synthetic_corpus(chain_corpus(), seed);
    auto test = generate_synthetic_corpus(chain_corpus(), seed + 1000);
    double f1[2];
    for (ModelKind kind : {ModelKind::dyad, ModelKind::triad}) {
      auto cfg = chain_experiment(kind, seed);
      const fs::path dir = work / fmt("chain_%s_%lu", to_string(kind).c_str(), static_cast<unsigned long>(seed));
      run_training(train, cfg, dir);
      auto res = evaluate_checkpoint(test, dir / "model", cfg.pipeline());
      f1[kind == ModelKind::triad] = 100.0 * res.total.average_f1();
      if (seed == 1) (kind == ModelKind::triad ? keep.triad_dir : keep.dyad_dir) = dir / "model";
    }
    if (seed == 1) keep.test = test;
    wins += f1[1] >= f1[0];
    detail += fmt("%sseed %lu dyad %.2f triad %.2f", seed == 1 ? "" : "; ", static_cast<unsigned long>(seed), f1[0],
                  f1[1]);
  }
  return {wins == 3, fmt("held-out avg F1 with postprocessing, triad >= dyad on %d/3: ", wins) + detail};
}

std::set<MentionId> pronoun_only_targets(const Document& doc, const EntityPartition& p) {
  std::set<MentionId> out;
  for (const auto& c : p.clusters())
    if (c.size() > 1 &&
        std::all_of(c.begin(), c.end(), [&](MentionId m) { return is_pronoun_mention(doc, doc.mentions[m]); }))
      out.insert(c.front());
  return out;
}

Verdict postprocessing(const DirectionRun& run) {
  // pronoun-only clusters never increase, on random and on trained affinities
  std::size_t increases = 0, reduced = 0, fix_checked = 0, fix_repeat_bad = 0;
  auto recluster = [](const AffinityMatrix& a) { return cluster_mentions(to_distances(a)); };
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SynthConfig cfg;
  cfg.pronoun_rate = 0.7;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const auto& doc : generate_synthetic_corpus(cfg, seed)) {
      const std::size_t n = doc.mentions.size();
      AffinityMatrix aff(n);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n && b - a < 10; ++b) {
          const bool both = is_pronoun_mention(doc, doc.mentions[a]) && is_pronoun_mention(doc, doc.mentions[b]);
          aff.set(a, b, both ? 0.5 + 0.5 * u(gen) : 0.3 * u(gen), 1);
        }
      auto part = recluster(aff);
      auto fix = resolve_pronoun_only_clusters(part, doc, aff, recluster);
      const std::size_t before = count_pronoun_only_clusters(doc, part);
      const std::size_t after = count_pronoun_only_clusters(doc, fix.partition);
      increases += after > before;
      reduced += before - std::min(before, after);
      std::set<MentionId> linked;
      for (const auto& l : fix.links) linked.insert(l.first);
      const auto targets = pronoun_only_targets(doc, fix.partition);
      if (std::includes(linked.begin(), linked.end(), targets.begin(), targets.end())) {
        ++fix_checked;
        auto again = resolve_pronoun_only_clusters(fix.partition, doc, fix.affinity, recluster);
        fix_repeat_bad += !(again.partition == fix.partition) || !(again.affinity == fix.affinity);
      }
    }

  // the other two rules are idempotent outright
  std::size_t rule_bad = 0;
  for (const auto& doc : run.test) {
    auto sub = substitute_speakers(doc);
    rule_bad += !(substitute_speakers(sub) == sub);
    auto names = link_same_proper_names(sub, DistanceMatrix(sub.mentions.size(), 6.0));
    rule_bad += !(link_same_proper_names(sub, names) == names);
  }

  // trained models: dyad and triad rows, with and without postprocessing
  auto triad = load_bundle(run.triad_dir), dyad = load_bundle(run.dyad_dir);
  std::vector<std::string> reports;
  std::size_t trained_increases = 0;
  for (const ModelBundle* b : {&dyad, &triad})
    for (PostprocessFlags flags : {PostprocessFlags{false, false, false}, PostprocessFlags{}}) {
      const auto cfg = chain_experiment(b->model.kind(), 1).pipeline(flags);
      auto res = evaluate_corpus(run.test, model_affinity(*b, cfg.polyads, cfg.affinity), cfg);
      for (const auto& d : res.documents) trained_increases += d.pronoun_only_after > d.pronoun_only_before;
      reports.push_back(format_report_kv(res.total));
    }
  std::set<std::string> distinct(reports.begin(), reports.end());
  const bool ok = increases == 0 && trained_increases == 0 && reduced > 0 && fix_checked > 0 && fix_repeat_bad == 0 &&
                  rule_bad == 0 && distinct.size() == 4;
  return {ok, fmt("pronoun-only increases %zu (random) %zu (trained), %zu removed; pronoun fix repeat changes %zu/%zu; "
                  "name/speaker rule repeats changed %zu; %zu distinct ablation reports",
                  increases, trained_increases, reduced, fix_repeat_bad, fix_checked, rule_bad, distinct.size())};
}

Verdict reproducibility(const fs::path& work) {
  auto docs = generate_synthetic_corpus(fixture::small_synth(4), 9);
  ExperimentConfig cfg;
  cfg.train.model = fixture::tiny_config(0.2);
  cfg.train.files_per_subepoch = 3;
  cfg.train.total_subepochs = 4;
  cfg.train.batch_size = 16;
  cfg.train.seed = 99;
  cfg.train.lr_schedule = {{0, 1e-2}};
  auto produce = [&](const std::string& tag) {
    const fs::path dir = work / tag;
    run_training(docs, cfg, dir);
    std::string bytes = read_file(dir / "model" / "model.ckpt") + read_file(dir / "state.ckpt");
    std::istringstream log(read_file(dir / "loss.log"));
    for (std::string line; std::getline(log, line);) bytes += line.substr(0, line.rfind(' ')) + "\n";  // drop wall-clock
    auto bundle = load_bundle(dir / "model");
    const auto p = cfg.pipeline();
    for (const auto& d : docs) {
      auto aff = aggregate(substitute_speakers(d), bundle, p.polyads, p.affinity);
      bytes += write_affinity_text(aff, to_distances(aff, p.affinity));
    }
    auto res = evaluate_corpus(docs, model_affinity(bundle, p.polyads, p.affinity), p);
    bytes += format_report_kv(res.total) + format_report_table({{"triad", res.total}});
    return bytes;
  };
  const std::string a = produce("repro_a"), b = produce("repro_b");
  return {a == b, fmt("two seeded runs, %zu bytes of checkpoints, scores and reports %s", a.size(),
                      a == b ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  fixture::TempDir work("acceptance");
  Report r;
  DirectionRun direction;
  const auto t0 = Clock::now();
  r.line("gradient suite", gradient_suite);
  r.line("metric oracle", metric_oracle);
  r.line("clustering oracle", clustering_oracle);
  r.line("affinity algebra", affinity_algebra);
  r.line("triad transitivity", transitivity);
  r.line("end-to-end overfit", [&] { return overfit(work.path); });
  r.line("dyad vs triad", [&] { return dyad_vs_triad(work.path, direction); });
  r.line("postprocessing", [&] {
    if (direction.test.empty()) return Verdict{false, "needs the dyad vs triad models"};
    return postprocessing(direction);
  });
  r.line("reproducibility", [&] { return reproducibility(work.path); });
  std::printf("%d passed, %d failed, %.0f s\n", r.passed, r.failed, seconds_since(t0));
  return strict && r.failed > 0 ? 1 : 0;
}
