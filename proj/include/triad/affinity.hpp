#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "triad/config.hpp"
#include "triad/error.hpp"
#include "triad/model.hpp"
#include "triad/polyads.hpp"

namespace triad {

enum class Aggregation { mean, max, top_k };

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "max") return Aggregation::max;
  if (s == "top_k") return Aggregation::top_k;
  throw UsageError("unknown aggregation '" + s + "' (expected mean, max or top_k)");
}

struct AffinityConfig {
  Aggregation aggregation = Aggregation::mean;
  std::size_t top_k = 3;            // only for Aggregation::top_k
  double max_distance = 10.0;       // cap on 1/phi
  double out_of_window = 3.7;       // distance for pairs never scored
  std::size_t scoring_chunk = 256;  // triads per inference tape

  void read(KeyValues& kv) {
    std::string agg;
    kv.read("aggregation", agg);
    if (!agg.empty()) aggregation = parse_aggregation(agg);
    kv.read("top_k", top_k);
    kv.read("max_distance", max_distance);
    kv.read("out_of_window_distance", out_of_window);
    kv.read("scoring_chunk", scoring_chunk);
  }
};

// Symmetric n x n matrix with a zero diagonal.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n, double fill = 0.0) : n_(n), d_(n * n, fill) {
    for (std::size_t i = 0; i < n; ++i) d_[i * n + i] = 0.0;
  }

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t a, std::size_t b) const { return d_[a * n_ + b]; }
  void set(std::size_t a, std::size_t b, double v) {
    if (a == b) return;
    d_[a * n_ + b] = v;
    d_[b * n_ + a] = v;
  }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

// Pairwise affinity Phi(a,b) and the number of polyads behind it. Pairs that
// were never scored stay out of window.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;
  explicit AffinityMatrix(std::size_t n) : n_(n), phi_(n * n, 0.0), count_(n * n, 0), window_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  double score(std::size_t a, std::size_t b) const { return phi_[a * n_ + b]; }
  std::size_t count(std::size_t a, std::size_t b) const { return count_[a * n_ + b]; }
  bool in_window(std::size_t a, std::size_t b) const { return window_[a * n_ + b] != 0; }

  void set(std::size_t a, std::size_t b, double phi, std::size_t count) {
    if (a == b || a >= n_ || b >= n_) throw ModelError("affinity index out of range");
    if (!(phi >= 0.0 && phi <= 1.0))
      throw ModelError("affinity " + format_double(phi) + " for pair " + std::to_string(a) + "," + std::to_string(b) +
                       " lies outside [0, 1]");
    for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
      phi_[x * n_ + y] = phi;
      count_[x * n_ + y] = count;
      window_[x * n_ + y] = 1;
    }
  }

  friend bool operator==(const AffinityMatrix&, const AffinityMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> phi_;
  std::vector<std::size_t> count_;
  std::vector<std::uint8_t> window_;
};

// Symmetric write; the pair counts as scored afterwards.
inline AffinityMatrix override_affinity(AffinityMatrix aff, std::size_t a, std::size_t b, double value) {
  aff.set(a, b, value, std::max<std::size_t>(aff.count(a, b), 1));
  return aff;
}

// d = min(1/phi, cap); phi at or below 1/cap maps straight to the cap so that
// phi = 0 never divides.
inline double affinity_to_distance(double phi, double cap = 10.0) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ModelError("affinity " + format_double(phi) + " lies outside [0, 1]");
  if (phi <= 1.0 / cap) return cap;
  return std::min(1.0 / phi, cap);
}

inline DistanceMatrix to_distances(const AffinityMatrix& aff, const AffinityConfig& cfg = {}) {
  const std::size_t n = aff.size();
  DistanceMatrix d(n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      d.set(a, b, aff.in_window(a, b) ? affinity_to_distance(aff.score(a, b), cfg.max_distance) : cfg.out_of_window);
  return d;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace affinity_detail {

inline double combine(std::vector<double>& values, const AffinityConfig& cfg) {
  switch (cfg.aggregation) {
    case Aggregation::max:
      return *std::max_element(values.begin(), values.end());
    case Aggregation::top_k: {
      const std::size_t k = std::min(std::max<std::size_t>(cfg.top_k, 1), values.size());
      std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end(),
                        std::greater<>());
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += values[i];
      return s / static_cast<double>(k);
    }
    case Aggregation::mean:
    default: {
      double s = 0.0;
      for (double v : values) s += v;
      return s / static_cast<double>(values.size());
    }
  }
}

// Output slot of the pair (x, y) inside a triad in slot order; pairs are
// (0,1), (1,2), (2,0), and the model is not symmetric within a slot, so the
// orientation inside the triad decides which slot is read.
inline std::size_t slot_of(const std::array<MentionId, 3>& t, MentionId x, MentionId y) {
  for (std::size_t p = 0; p < 3; ++p) {
    const MentionId u = t[p], v = t[(p + 1) % 3];
    if ((u == x && v == y) || (u == y && v == x)) return p;
  }
  throw ModelError("pair not contained in triad");
}

}  // namespace affinity_detail

// Triad scorer: takes triads (document mention ids, slot order) and returns
// their three output values each.
using TriadScoreFn = std::function<std::vector<std::array<double, 3>>(const std::vector<std::array<MentionId, 3>>&)>;

// Evaluates each unordered triple once, members ascending, and feeds every
// output slot to the pair it belongs to whenever that triple is one of the
// pair's evaluation triads. Pairs without a third member use the degenerate
// triad (a, b, a) and read slot 0.
inline AffinityMatrix aggregate_triads(std::size_t n, const PolyadSpec& spec, const TriadScoreFn& score,
                                       const AffinityConfig& cfg = {}) {
  spec.validate();
  AffinityMatrix aff(n);
  if (n < 2) return aff;

  std::map<std::array<MentionId, 3>, std::size_t> index;
  std::vector<std::array<MentionId, 3>> triads;
  struct Use {
    std::size_t triad;
    std::size_t slot;
  };
  std::vector<std::vector<Use>> uses(n * n);  // keyed a*n+b with a<b

  for (MentionId a = 0; a < n; ++a)
    for (MentionId b = a + 1; b < n && in_eval_window(a, b, spec); ++b) {
      auto thirds = eval_third_members(n, a, b, spec);
      if (thirds.empty()) {
        const auto t = degenerate_triad(a, b);
        auto [it, fresh] = index.emplace(t, triads.size());
        if (fresh) triads.push_back(t);
        uses[a * n + b].push_back({it->second, 0});
        continue;
      }
      for (MentionId c : thirds) {
        std::array<MentionId, 3> t = {a, b, c};
        std::sort(t.begin(), t.end());
        auto [it, fresh] = index.emplace(t, triads.size());
        if (fresh) triads.push_back(t);
        uses[a * n + b].push_back({it->second, affinity_detail::slot_of(t, a, b)});
      }
    }

  const auto values = score(triads);
  if (values.size() != triads.size()) throw ModelError("triad scorer returned the wrong number of rows");
  std::vector<double> bucket;
  for (MentionId a = 0; a < n; ++a)
    for (MentionId b = a + 1; b < n; ++b) {
      const auto& u = uses[a * n + b];
      if (u.empty()) continue;
      bucket.clear();
      for (const auto& x : u) bucket.push_back(values[x.triad][x.slot]);
      aff.set(a, b, affinity_detail::combine(bucket, cfg), u.size());
    }
  return aff;
}

// Dyad path: every in-window pair is scored directly as (a, b, a), slot 0.
inline AffinityMatrix aggregate_pairs(std::size_t n, const PolyadSpec& spec, const TriadScoreFn& score) {
  spec.validate();
  AffinityMatrix aff(n);
  std::vector<std::array<MentionId, 3>> pairs;
  for (MentionId a = 0; a < n; ++a)
    for (MentionId b = a + 1; b < n && in_eval_window(a, b, spec); ++b) pairs.push_back(degenerate_triad(a, b));
  if (pairs.empty()) return aff;
  const auto values = score(pairs);
  if (values.size() != pairs.size()) throw ModelError("pair scorer returned the wrong number of rows");
  for (std::size_t i = 0; i < pairs.size(); ++i) aff.set(pairs[i][0], pairs[i][1], values[i][0], 1);
  return aff;
}

// Scores triads of `doc` with a trained model bundle.
inline TriadScoreFn model_scorer(const ModelBundle& bundle, const Document& doc, std::size_t chunk = 256) {
  auto scorer = std::make_shared<DocumentScorer>(bundle.model, bundle.encode_all(doc), chunk);
  const FeatureConfig features = bundle.model.config().features;
  return [scorer, &doc, features](const std::vector<std::array<MentionId, 3>>& triads) {
    std::vector<PolyadInput> items;
    items.reserve(triads.size());
    for (const auto& t : triads) items.push_back(polyad_input(doc, t, t, features));
    return scorer->score(items);
  };
}

inline AffinityMatrix aggregate(const Document& doc, const ModelBundle& bundle, const PolyadSpec& spec,
                                const AffinityConfig& cfg = {}) {
  const std::size_t n = doc.mentions.size();
  if (n < 2) return AffinityMatrix(n);
  TriadScoreFn fn = model_scorer(bundle, doc, cfg.scoring_chunk);
  return bundle.model.kind() == ModelKind::triad ? aggregate_triads(n, spec, fn, cfg) : aggregate_pairs(n, spec, fn);
}

// ---------------------------------------------------------------------------
// Text form: a header line with n, then "i j phi d" for every i < j. Pairs
// never scored carry "-" as phi.

inline std::string write_affinity_text(const AffinityMatrix& aff, const DistanceMatrix& dist) {
  if (aff.size() != dist.size()) throw ModelError("affinity and distance matrices differ in size");
  std::ostringstream out;
  out << aff.size() << "\n";
  for (std::size_t a = 0; a < aff.size(); ++a)
    for (std::size_t b = a + 1; b < aff.size(); ++b) {
      out << a << ' ' << b << ' ';
      if (aff.in_window(a, b))
        out << format_double(aff.score(a, b));
      else
        out << '-';
      out << ' ' << format_double(dist(a, b)) << "\n";
    }
  return out.str();
}

struct AffinityText {
  AffinityMatrix affinity;
  DistanceMatrix distance;
};

inline AffinityText parse_affinity_text(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  if (!(in >> n)) throw DataError("affinity file: missing size header");
  AffinityText out{AffinityMatrix(n), DistanceMatrix(n)};
  std::vector<std::uint8_t> seen(n * n, 0);
  std::string phi;
  std::size_t a, b;
  double d;
  std::size_t rows = 0;
  while (in >> a) {
    if (!(in >> b >> phi >> d)) throw DataError("affinity file: truncated row " + std::to_string(rows + 1));
    if (a >= b || b >= n) throw DataError("affinity file: bad pair " + std::to_string(a) + " " + std::to_string(b));
    if (seen[a * n + b]++) throw DataError("affinity file: duplicate pair " + std::to_string(a) + " " + std::to_string(b));
    if (phi != "-") {
      double v;
      try {
        v = std::stod(phi);
      } catch (const std::exception&) {
        throw DataError("affinity file: bad score '" + phi + "'");
      }
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("affinity file: score outside [0, 1]");
      out.affinity.set(a, b, v, 1);
    }
    out.distance.set(a, b, d);
    ++rows;
  }
  if (!in.eof()) throw DataError("affinity file: unreadable content after row " + std::to_string(rows));
  if (rows != n * (n - (n > 0 ? 1 : 0)) / 2) throw DataError("affinity file: expected every pair exactly once");
  return out;
}

}  // namespace triad
