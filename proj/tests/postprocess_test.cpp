#include <gtest/gtest.h>

#include <random>

#include "oracles/affinity_reference.hpp"
#include "triad/pipeline.hpp"
#include "triad/postprocess.hpp"

namespace triad {
namespace {

struct Word {
  std::string surface;
  std::string pos;
  std::string speaker = "";
};

// Each mention is (start, end, entity).
Document build(const std::vector<Word>& words, const std::vector<std::array<std::size_t, 3>>& spans) {
  Document d;
  d.doc_key = "pp";
  for (std::size_t i = 0; i < words.size(); ++i) {
    Token t;
    t.surface = words[i].surface;
    t.pos = words[i].pos;
    t.speaker = words[i].speaker;
    t.doc_token_index = i;
    d.tokens.push_back(t);
  }
  for (const auto& s : spans) d.mentions.push_back(Mention{0, s[0], s[1], static_cast<int>(s[2])});
  renumber_mentions(d);
  return d;
}

Recluster standard_recluster(const ClusterConfig& c = {}) {
  return [c](const AffinityMatrix& a) { return cluster_mentions(to_distances(a), c); };
}

EntityPartition parts(std::vector<Cluster> c) { return EntityPartition(std::move(c)); }

TEST(ProperNames, SameNameFarApartGetsMinimumDistance) {
  std::vector<Word> w = {{"Saddam", "NNP"}, {"Hussein", "NNP"}};
  std::vector<std::array<std::size_t, 3>> spans = {{0, 1, 0}};
  for (std::size_t i = 0; i < 200; ++i) {
    w.push_back({"x", "NN"});
    spans.push_back({w.size() - 1, w.size() - 1, i + 1});
  }
  w.push_back({"saddam", "NNP"});
  w.push_back({"HUSSEIN", "NNP"});
  spans.push_back({w.size() - 2, w.size() - 1, 0});
  auto doc = build(w, spans);
  const std::size_t last = doc.mentions.size() - 1;
  DistanceMatrix d(doc.mentions.size(), 3.7);
  auto out = link_same_proper_names(doc, d);
  EXPECT_EQ(out(0, last), 1.0);
  EXPECT_EQ(out(last, 0), 1.0);
  EXPECT_EQ(out(1, 2), 3.7);  // "x" tokens are not names
}

TEST(ProperNames, PartialAndNonProperMatchesAreUntouched) {
  auto doc = build({{"Saddam", "NNP"}, {"Hussein", "NNP"}, {"Saddam", "NNP"}, {"the", "DT"}, {"company", "NN"},
                    {"the", "DT"}, {"company", "NN"}},
                   {{0, 1, 0}, {2, 2, 0}, {3, 4, 1}, {5, 6, 1}});
  DistanceMatrix d(4, 5.0);
  auto out = link_same_proper_names(doc, d);
  EXPECT_TRUE(out == d);
}

TEST(ProperNames, Idempotent) {
  auto doc = build({{"Ann", "NNP"}, {"met", "VBD"}, {"ann", "NNP"}, {"Bo", "NNP"}, {"Ann", "NNP"}},
                   {{0, 0, 0}, {2, 2, 0}, {3, 3, 1}, {4, 4, 0}});
  auto once = link_same_proper_names(doc, DistanceMatrix(4, 6.0));
  EXPECT_TRUE(link_same_proper_names(doc, once) == once);
  EXPECT_EQ(once(0, 3), 1.0);
  EXPECT_EQ(once(1, 3), 1.0);
  EXPECT_EQ(once(2, 3), 6.0);
}

TEST(Speakers, FirstPersonBecomesSpeaker) {
  auto doc = build({{"I", "PRP", "Jim_Lehrer"}, {"said", "VBD", "Jim_Lehrer"}, {"i", "PRP", "Jim_Lehrer"}},
                   {{0, 0, 0}, {2, 2, 0}});
  auto out = substitute_speakers(doc);
  EXPECT_EQ(out.tokens[0].surface, "Jim_Lehrer");
  EXPECT_EQ(out.tokens[2].surface, "Jim_Lehrer");
  EXPECT_TRUE(out.tokens[0].speaker_substituted);
  EXPECT_EQ(out.tokens[0].pos, "PRP");
  EXPECT_EQ(out.tokens[1], doc.tokens[1]);
}

TEST(Speakers, NoSpeakerNoChange) {
  auto doc = build({{"I", "PRP"}, {"ran", "VBD"}}, {{0, 0, 0}});
  EXPECT_EQ(substitute_speakers(doc), doc);
}

TEST(Speakers, SecondPersonNeedsExactlyTwoSpeakers) {
  auto two = build({{"you", "PRP", "A"}, {"ok", "UH", "B"}, {"You", "PRP", "B"}}, {{0, 0, 0}, {2, 2, 1}});
  auto out = substitute_speakers(two);
  EXPECT_EQ(out.tokens[0].surface, "B");
  EXPECT_EQ(out.tokens[2].surface, "A");
  auto three = build({{"you", "PRP", "A"}, {"ok", "UH", "B"}, {"hm", "UH", "C"}}, {{0, 0, 0}});
  EXPECT_EQ(substitute_speakers(three), three);
}

TEST(Speakers, OnlySingleTokenMentionsChange) {
  // "I" outside a mention and inside a longer mention both stay
  auto doc = build({{"I", "PRP", "A"}, {"I", "PRP", "A"}, {"myself", "PRP", "A"}}, {{1, 2, 0}});
  EXPECT_EQ(substitute_speakers(doc), doc);
}

TEST(Speakers, KeepsCountsAndSpansAndIsIdempotent) {
  SynthConfig cfg;
  cfg.documents = 5;
  for (const auto& doc : generate_synthetic_corpus(cfg, 4)) {
    Document marked = doc;
    for (const auto& m : marked.mentions)
      if (m.length() == 1 && marked.tokens[m.start].pos == "PRP") marked.tokens[m.start].surface = "I";
    auto once = substitute_speakers(marked);
    EXPECT_EQ(once.tokens.size(), doc.tokens.size());
    EXPECT_EQ(once.mentions, doc.mentions);
    EXPECT_EQ(substitute_speakers(once), once);
  }
}

TEST(Speakers, SubstitutedMentionsCountAsNames) {
  auto doc = build({{"Jim", "NNP", "Jim"}, {"said", "VBD", "Jim"}, {"I", "PRP", "Jim"}}, {{0, 0, 0}, {2, 2, 0}});
  auto sub = substitute_speakers(doc);
  EXPECT_TRUE(is_proper_name(sub, sub.mentions[1]));
  EXPECT_EQ(link_same_proper_names(sub, DistanceMatrix(2, 8.0))(0, 1), 1.0);
  EXPECT_EQ(link_same_proper_names(doc, DistanceMatrix(2, 8.0))(0, 1), 8.0);
}

// John he he
Document john_he_he() {
  return build({{"John", "NNP"}, {"left", "VBD"}, {"he", "PRP"}, {"said", "VBD"}, {"he", "PRP"}},
               {{0, 0, 0}, {2, 2, 0}, {4, 4, 0}});
}

TEST(PronounFix, LinksTargetToBestCandidate) {
  auto doc = john_he_he();
  AffinityMatrix aff(3);
  aff.set(0, 1, 0.15, 1);
  aff.set(0, 2, 0.15, 1);
  aff.set(1, 2, 0.9, 1);
  auto before = standard_recluster()(aff);
  ASSERT_EQ(before, parts({{0}, {1, 2}}));
  ASSERT_EQ(count_pronoun_only_clusters(doc, before), 1u);
  int calls = 0;
  auto rc = [&](const AffinityMatrix& a) {
    ++calls;
    return standard_recluster()(a);
  };
  auto fix = resolve_pronoun_only_clusters(before, doc, aff, rc);
  EXPECT_EQ(calls, 1);
  ASSERT_EQ(fix.links.size(), 1u);
  EXPECT_EQ(fix.links[0], (std::pair<MentionId, MentionId>{1, 0}));
  EXPECT_EQ(fix.affinity.score(0, 1), 1.0);
  EXPECT_EQ(fix.partition.membership().at(0), fix.partition.membership().at(1));
  EXPECT_LE(count_pronoun_only_clusters(doc, fix.partition), 1u);
}

TEST(PronounFix, TwoPronounsJoinTheirAntecedent) {
  // with the pronoun pair tight and the name near both, the override pulls
  // the name into the cluster under average linkage
  auto doc = john_he_he();
  AffinityMatrix aff(3);
  aff.set(0, 1, 0.2, 1);
  aff.set(0, 2, 0.45, 1);
  aff.set(1, 2, 0.95, 1);
  auto before = standard_recluster()(aff);
  ASSERT_EQ(before, parts({{0}, {1, 2}}));
  auto fix = resolve_pronoun_only_clusters(before, doc, aff, standard_recluster());
  EXPECT_EQ(fix.partition, parts({{0, 1, 2}}));
  EXPECT_EQ(count_pronoun_only_clusters(doc, fix.partition), 0u);
}

TEST(PronounFix, NoCandidatesLeavesClusterAlone) {
  auto doc = build({{"he", "PRP"}, {"and", "CC"}, {"him", "PRP"}}, {{0, 0, 0}, {2, 2, 0}});
  AffinityMatrix aff(2);
  aff.set(0, 1, 0.9, 1);
  int calls = 0;
  auto rc = [&](const AffinityMatrix& a) {
    ++calls;
    return standard_recluster()(a);
  };
  auto p = parts({{0, 1}});
  auto fix = resolve_pronoun_only_clusters(p, doc, aff, rc);
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(fix.partition, p);
  EXPECT_TRUE(fix.affinity == aff);
}

TEST(PronounFix, CandidateWindowAndTies) {
  // names at 0..4, pronouns 5 and 6, names at 7..10
  std::vector<Word> w;
  std::vector<std::array<std::size_t, 3>> spans;
  for (std::size_t i = 0; i < 11; ++i) {
    const bool pron = i == 5 || i == 6;
    w.push_back({pron ? "it" : "N" + std::to_string(i), pron ? "PRP" : "NNP"});
    spans.push_back({i, i, pron ? 99 : i});
  }
  auto doc = build(w, spans);
  auto p = EntityPartition([] {
    std::vector<Cluster> c = {{5, 6}};
    for (MentionId i : {0, 1, 2, 3, 4, 7, 8, 9, 10}) c.push_back({i});
    return c;
  }());
  auto link_for = [&](const AffinityMatrix& aff) {
    auto fix = resolve_pronoun_only_clusters(p, doc, aff, standard_recluster());
    return fix.links.at(0).second;
  };
  AffinityMatrix aff(11);
  for (MentionId m : {0, 1, 2, 3, 4, 7, 8, 9, 10}) aff.set(5, m, 0.3, 1);
  aff.set(5, 6, 0.9, 1);
  EXPECT_EQ(link_for(aff), 4u);  // all equal: nearest, and 4 precedes 7
  aff.set(5, 0, 0.99, 1);        // outside the three before (2, 3, 4)
  aff.set(5, 10, 0.99, 1);       // outside the three after (7, 8, 9)
  EXPECT_EQ(link_for(aff), 4u);
  aff.set(5, 9, 0.5, 1);
  aff.set(5, 2, 0.5, 1);
  EXPECT_EQ(link_for(aff), 2u);  // tie at 0.5, distance 3 each side: earlier
  aff.set(5, 7, 0.5, 1);
  EXPECT_EQ(link_for(aff), 7u);  // nearer wins
}

// Targets of the pronoun-only clusters in `p` (first members).
std::set<MentionId> pronoun_only_targets(const Document& doc, const EntityPartition& p) {
  std::set<MentionId> out;
  for (const auto& c : p.clusters())
    if (c.size() > 1 && std::all_of(c.begin(), c.end(), [&](MentionId m) { return is_pronoun_mention(doc, doc.mentions[m]); }))
      out.insert(c.front());
  return out;
}

TEST(PronounFix, NeverIncreasesPronounOnlyClustersAndIsIdempotent) {
  SynthConfig cfg;
  cfg.documents = 8;
  cfg.pronoun_rate = 0.7;
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t reduced = 0, settled = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    for (const auto& doc : generate_synthetic_corpus(cfg, seed)) {
      const std::size_t n = doc.mentions.size();
      AffinityMatrix aff(n);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n && b - a < 10; ++b) {
          const bool both_pron = is_pronoun_mention(doc, doc.mentions[a]) && is_pronoun_mention(doc, doc.mentions[b]);
          aff.set(a, b, both_pron ? 0.5 + 0.5 * u(gen) : 0.3 * u(gen), 1);
        }
      auto part = standard_recluster()(aff);
      auto fix = resolve_pronoun_only_clusters(part, doc, aff, standard_recluster());
      const std::size_t before = count_pronoun_only_clusters(doc, part);
      const std::size_t after = count_pronoun_only_clusters(doc, fix.partition);
      EXPECT_LE(after, before);
      reduced += before - after;
      // A second pass is a no-op unless the first one produced a pronoun-only
      // cluster headed by a mention it never linked.
      std::set<MentionId> linked;
      for (const auto& l : fix.links) linked.insert(l.first);
      auto again = resolve_pronoun_only_clusters(fix.partition, doc, fix.affinity, standard_recluster());
      const auto targets = pronoun_only_targets(doc, fix.partition);
      if (std::includes(linked.begin(), linked.end(), targets.begin(), targets.end())) {
        ++settled;
        EXPECT_EQ(again.partition, fix.partition);
        EXPECT_TRUE(again.affinity == fix.affinity);
      }
      EXPECT_LE(count_pronoun_only_clusters(doc, again.partition), after);
    }
  EXPECT_GT(reduced, 0u);
  EXPECT_GT(settled, 0u);
}

TEST(Pipeline, FlagsSwitchEachRule) {
  // "I" (speaker Ann) and the name Ann, far apart and never scored together
  std::vector<Word> w = {{"Ann", "NNP", "Ann"}};
  std::vector<std::array<std::size_t, 3>> spans = {{0, 0, 0}};
  for (std::size_t i = 1; i < 6; ++i) {
    w.push_back({"T" + std::to_string(i), "NNP", "Ann"});
    spans.push_back({i, i, i});
  }
  w.push_back({"I", "PRP", "Ann"});
  spans.push_back({6, 6, 0});
  auto doc = build(w, spans);
  AffinityFn flat = [](const Document& d) {
    AffinityMatrix a(d.mentions.size());
    for (std::size_t i = 0; i + 1 < d.mentions.size(); ++i) a.set(i, i + 1, 0.1, 1);
    return a;
  };
  PipelineConfig cfg;
  auto on = resolve_document(doc, flat, cfg);
  EXPECT_EQ(on.partition.membership().at(0), on.partition.membership().at(6));
  cfg.flags.speaker_substitution = false;
  auto no_sub = resolve_document(doc, flat, cfg);
  EXPECT_NE(no_sub.partition.membership().at(0), no_sub.partition.membership().at(6));
  cfg.flags = {true, true, false};
  cfg.flags.proper_names = false;
  auto no_names = resolve_document(doc, flat, cfg);
  EXPECT_NE(no_names.partition.membership().at(0), no_names.partition.membership().at(6));
}

}  // namespace
}  // namespace triad
