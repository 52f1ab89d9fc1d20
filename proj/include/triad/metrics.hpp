#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "triad/partition.hpp"

namespace triad {

// Numerators and denominators, so corpus scores can sum counts.
struct MetricCounts {
  double recall_num = 0.0;
  double recall_den = 0.0;
  double precision_num = 0.0;
  double precision_den = 0.0;

  double recall() const { return recall_den > 0 ? recall_num / recall_den : 0.0; }
  double precision() const { return precision_den > 0 ? precision_num / precision_den : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  // Both sides empty: scores are defined as zero.
  bool undefined() const { return recall_den == 0 && precision_den == 0; }

  MetricCounts& operator+=(const MetricCounts& o) {
    recall_num += o.recall_num;
    recall_den += o.recall_den;
    precision_num += o.precision_num;
    precision_den += o.precision_den;
    return *this;
  }
};

namespace metric_detail {

// Number of pieces `cluster` is cut into by `other`; mentions missing from
// `other` count as pieces of their own.
inline std::size_t pieces(const Cluster& cluster, const std::map<MentionId, std::size_t>& other) {
  std::set<std::size_t> seen;
  std::size_t loose = 0;
  for (MentionId m : cluster) {
    auto it = other.find(m);
    if (it == other.end())
      ++loose;
    else
      seen.insert(it->second);
  }
  return seen.size() + loose;
}

inline std::pair<double, double> muc_side(const EntityPartition& a, const EntityPartition& b) {
  const auto member = b.membership();
  double num = 0.0, den = 0.0;
  for (const auto& c : a.clusters()) {
    num += static_cast<double>(c.size() - pieces(c, member));
    den += static_cast<double>(c.size() - 1);
  }
  return {num, den};
}

inline std::pair<double, double> b_cubed_side(const EntityPartition& a, const EntityPartition& b) {
  const auto member = b.membership();
  double num = 0.0, den = 0.0;
  for (const auto& c : a.clusters()) {
    std::map<std::size_t, std::size_t> overlap;
    std::size_t loose = 0;
    for (MentionId m : c) {
      auto it = member.find(m);
      if (it == member.end())
        ++loose;
      else
        ++overlap[it->second];
    }
    // mention m contributes |A_m ∩ B_m| / |A_m|; a mention missing from b
    // overlaps only with itself
    for (const auto& [_, k] : overlap) num += static_cast<double>(k * k) / static_cast<double>(c.size());
    num += static_cast<double>(loose) / static_cast<double>(c.size());
    den += static_cast<double>(c.size());
  }
  return {num, den};
}

}  // namespace metric_detail

inline MetricCounts muc(const EntityPartition& key, const EntityPartition& response) {
  auto [rn, rd] = metric_detail::muc_side(key, response);
  auto [pn, pd] = metric_detail::muc_side(response, key);
  return {rn, rd, pn, pd};
}

inline MetricCounts b_cubed(const EntityPartition& key, const EntityPartition& response) {
  auto [rn, rd] = metric_detail::b_cubed_side(key, response);
  auto [pn, pd] = metric_detail::b_cubed_side(response, key);
  return {rn, rd, pn, pd};
}

// Maximum-weight assignment on a rows x cols matrix (Kuhn-Munkres with
// potentials on the padded square cost matrix). Returns the column for each
// row, or -1 when a row stays unmatched.
inline std::vector<int> hungarian_max(const std::vector<std::vector<double>>& weight, std::size_t cols) {
  const std::size_t rows = weight.size();
  const std::size_t n = std::max(rows, cols);
  std::vector<int> match(rows, -1);
  if (n == 0) return match;
  double top = 0.0;
  for (const auto& r : weight)
    for (double w : r) top = std::max(top, w);
  auto cost = [&](std::size_t i, std::size_t j) {  // 1-based
    const double w = (i <= rows && j <= cols) ? weight[i - 1][j - 1] : 0.0;
    return top - w;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] >= 1 && p[j] <= rows && j <= cols) match[p[j] - 1] = static_cast<int>(j - 1);
  return match;
}

inline double phi4(const Cluster& k, const Cluster& r) {
  std::size_t common = 0;
  for (MentionId m : k)
    if (std::binary_search(r.begin(), r.end(), m)) ++common;
  return 2.0 * static_cast<double>(common) / static_cast<double>(k.size() + r.size());
}

inline MetricCounts ceaf_phi4(const EntityPartition& key, const EntityPartition& response) {
  const auto& ks = key.clusters();
  const auto& rs = response.clusters();
  std::vector<std::vector<double>> sim(ks.size(), std::vector<double>(rs.size(), 0.0));
  for (std::size_t i = 0; i < ks.size(); ++i)
    for (std::size_t j = 0; j < rs.size(); ++j) sim[i][j] = phi4(ks[i], rs[j]);
  double total = 0.0;
  const auto match = hungarian_max(sim, rs.size());
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (match[i] >= 0) total += sim[i][static_cast<std::size_t>(match[i])];
  return {total, static_cast<double>(ks.size()), total, static_cast<double>(rs.size())};
}

struct MetricReport {
  MetricCounts muc;
  MetricCounts b_cubed;
  MetricCounts ceaf;
  double key_mentions = 0.0;
  double found_mentions = 0.0;  // key mentions present in the stripped response

  double average_f1() const { return (muc.f1() + b_cubed.f1() + ceaf.f1()) / 3.0; }
  double mention_recall() const { return key_mentions > 0 ? found_mentions / key_mentions : 0.0; }

  MetricReport& operator+=(const MetricReport& o) {
    muc += o.muc;
    b_cubed += o.b_cubed;
    ceaf += o.ceaf;
    key_mentions += o.key_mentions;
    found_mentions += o.found_mentions;
    return *this;
  }
};

// The response loses its singletons first; the key is taken as given.
inline MetricReport report(const EntityPartition& key, const EntityPartition& response) {
  const EntityPartition r = strip_singletons(response);
  MetricReport out;
  out.muc = muc(key, r);
  out.b_cubed = b_cubed(key, r);
  out.ceaf = ceaf_phi4(key, r);
  const auto found = r.mentions();
  for (const auto& c : key.clusters())
    for (MentionId m : c) {
      out.key_mentions += 1.0;
      if (found.count(m)) out.found_mentions += 1.0;
    }
  return out;
}

inline std::map<std::size_t, std::size_t> entity_size_histogram(const EntityPartition& p) {
  std::map<std::size_t, std::size_t> h;
  for (const auto& c : p.clusters()) ++h[c.size()];
  return h;
}

// ---------------------------------------------------------------------------
// Output

namespace metric_detail {

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace metric_detail

// Rows of recall / precision / F1 per metric, then average F1 and mention
// recall, all in percent with two decimals.
inline std::string format_report_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  using metric_detail::pct;
  std::size_t name_w = 6;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream out;
  auto cell = [&](const std::string& s, std::size_t w) { out << std::string(w > s.size() ? w - s.size() : 0, ' ') << s; };
  cell("System", name_w);
  out << " |";
  for (const char* m : {"MUC", "B3", "CEAF_phi4"}) {
    out << ' ';
    cell(m, 23);
    out << " |";
  }
  out << "        |        \n";
  cell("", name_w);
  out << " |";
  for (int i = 0; i < 3; ++i) out << "    Rec.   Prec.      F1 |";
  out << " Avg.F1 | M.Rec.\n";
  for (const auto& [name, r] : rows) {
    cell(name, name_w);
    out << " |";
    for (const MetricCounts* c : {&r.muc, &r.b_cubed, &r.ceaf}) {
      out << ' ';
      cell(pct(c->recall()), 7);
      out << ' ';
      cell(pct(c->precision()), 7);
      out << ' ';
      cell(pct(c->f1()), 7);
      out << " |";
    }
    out << ' ';
    cell(pct(r.average_f1()), 6);
    out << " | ";
    cell(pct(r.mention_recall()), 6);
    out << "\n";
  }
  return out.str();
}

inline std::string format_report_kv(const MetricReport& r, const std::string& prefix = "") {
  using metric_detail::pct;
  std::ostringstream out;
  const std::pair<const char*, const MetricCounts*> parts[] = {{"muc", &r.muc}, {"b3", &r.b_cubed}, {"ceaf_phi4", &r.ceaf}};
  for (const auto& [name, c] : parts) {
    out << prefix << name << ".recall = " << pct(c->recall()) << "\n";
    out << prefix << name << ".precision = " << pct(c->precision()) << "\n";
    out << prefix << name << ".f1 = " << pct(c->f1()) << "\n";
  }
  out << prefix << "average_f1 = " << pct(r.average_f1()) << "\n";
  out << prefix << "mention_recall = " << pct(r.mention_recall()) << "\n";
  return out.str();
}

// Text bars on a log10 scale, followed by the raw counts.
inline std::string format_histogram(const std::map<std::size_t, std::size_t>& h, std::size_t width = 40) {
  std::ostringstream out;
  std::size_t most = 0;
  for (const auto& [_, c] : h) most = std::max(most, c);
  const double scale = most > 1 ? std::log10(static_cast<double>(most)) : 1.0;
  for (const auto& [size, count] : h) {
    const double frac = std::log10(static_cast<double>(count)) / scale;
    const std::size_t bar = count > 0 ? 1 + static_cast<std::size_t>(frac * static_cast<double>(width - 1)) : 0;
    char label[48];
    std::snprintf(label, sizeof label, "%6zu | ", size);
    out << label << std::string(bar, '#') << ' ' << count << "\n";
  }
  return out.str();
}

}  // namespace triad
