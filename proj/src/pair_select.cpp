#include "umd/pair_select.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <tuple>

namespace umd {

namespace {

std::vector<ClassPair> sorted_pairs(const TRMatrix& tr, const std::vector<std::size_t>& members) {
  std::vector<ClassPair> out;
  out.reserve(members.size());
  for (auto i : members) out.push_back(tr.pairs.at(i));
  std::sort(out.begin(), out.end());
  return out;
}

// True if `a` should be preferred over `b`.
bool better(double ha, const std::vector<ClassPair>& a, double hb, const std::vector<ClassPair>& b) {
  if (ha != hb) return ha > hb;
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

std::vector<std::size_t> members_of(const TRMatrix& tr, const CandidateSet& set) {
  std::vector<std::size_t> idx;
  for (const auto& p : set.pairs) {
    const auto i = tr.index_of(p);
    if (!i) throw InputError("candidate pair " + to_string(p) + " is not in the TR map");
    idx.push_back(*i);
  }
  return idx;
}

}  // namespace

double objective_H(const TRMatrix& tr, const std::vector<std::size_t>& members) {
  const std::size_t n = members.size();
  if (n < 2) throw InputError("H needs at least two candidate pairs");
  if (n >= tr.size()) throw InputError("H needs at least one pair outside the candidate set");
  std::vector<bool> inside(tr.size(), false);
  for (auto i : members) {
    if (i >= tr.size()) throw InputError("candidate index out of range");
    if (inside[i]) throw InputError("duplicate candidate pair");
    inside[i] = true;
  }

  double cohesion = std::numeric_limits<double>::infinity();
  for (auto a : members) {
    double sum = 0.0;
    for (auto b : members)
      if (b != a) sum += tr.at(a, b) + tr.at(b, a);
    cohesion = std::min(cohesion, sum / (2.0 * static_cast<double>(n - 1)));
  }

  double leakage = -std::numeric_limits<double>::infinity();
  for (std::size_t o = 0; o < tr.size(); ++o) {
    if (inside[o]) continue;
    double sum = 0.0;
    for (auto a : members) sum += tr.at(a, o);
    leakage = std::max(leakage, sum / static_cast<double>(n));
  }
  return cohesion - leakage;
}

double objective_H(const TRMatrix& tr, const CandidateSet& set) {
  return objective_H(tr, members_of(tr, set));
}

CandidateSet agglomerative_select(const TRMatrix& tr, std::size_t restarts) {
  if (tr.num_classes < 3) throw InputError("agglomerative selection needs K >= 3");
  if (restarts == 0) throw InputError("restarts must be at least 1");
  const std::size_t n = tr.size();

  // Seeds: strongest ordered entries between source-disjoint pairs, one per
  // unordered set.
  std::vector<std::tuple<double, ClassPair, ClassPair, std::size_t, std::size_t>> entries;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && tr.pairs[i].source != tr.pairs[j].source)
        entries.emplace_back(tr.at(i, j), tr.pairs[i], tr.pairs[j], i, j);
  if (entries.empty() || n < 3)
    throw InputError("no two source-disjoint class pairs available for selection");
  std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    return std::tie(std::get<1>(x), std::get<2>(x)) < std::tie(std::get<1>(y), std::get<2>(y));
  });
  std::vector<std::pair<std::size_t, std::size_t>> seeds;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& e : entries) {
    const auto i = std::get<3>(e);
    const auto j = std::get<4>(e);
    if (!seen.insert({std::min(i, j), std::max(i, j)}).second) continue;
    seeds.emplace_back(i, j);
    if (seeds.size() == restarts) break;
  }

  CandidateSet best;
  best.objective = -std::numeric_limits<double>::infinity();
  for (const auto& [i, j] : seeds) {
    std::vector<std::size_t> members{i, j};
    std::set<int> sources{tr.pairs[i].source, tr.pairs[j].source};
    auto consider = [&](const std::vector<std::size_t>& m) {
      const double h = objective_H(tr, m);
      auto pairs = sorted_pairs(tr, m);
      if (best.pairs.empty() || better(h, pairs, best.objective, best.pairs)) {
        best.pairs = std::move(pairs);
        best.objective = h;
      }
    };
    consider(members);
    while (members.size() < tr.num_classes && members.size() + 1 < n) {
      std::size_t pick = n;
      double pick_h = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n; ++c) {
        if (sources.contains(tr.pairs[c].source)) continue;
        auto trial = members;
        trial.push_back(c);
        const double h = objective_H(tr, trial);
        // Candidates are scanned in lexicographic pair order, so strict >
        // keeps the smallest pair on ties.
        if (pick == n || h > pick_h) {
          pick = c;
          pick_h = h;
        }
      }
      if (pick == n) break;
      members.push_back(pick);
      sources.insert(tr.pairs[pick].source);
      consider(members);
    }
  }
  return best;
}

CandidateSet exhaustive_select(const TRMatrix& tr) {
  if (tr.num_classes > 5)
    throw InputError("exhaustive selection is limited to K <= 5, got K=" +
                     std::to_string(tr.num_classes));
  std::map<int, std::vector<std::size_t>> by_source;
  for (std::size_t i = 0; i < tr.size(); ++i) by_source[tr.pairs[i].source].push_back(i);
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [s, g] : by_source) groups.push_back(g);

  CandidateSet best;
  best.objective = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> members;
  auto recurse = [&](auto&& self, std::size_t g) -> void {
    if (g == groups.size()) {
      if (members.size() < 2 || members.size() >= tr.size()) return;
      const double h = objective_H(tr, members);
      auto pairs = sorted_pairs(tr, members);
      if (best.pairs.empty() || better(h, pairs, best.objective, best.pairs)) {
        best.pairs = std::move(pairs);
        best.objective = h;
      }
      return;
    }
    self(self, g + 1);
    for (auto idx : groups[g]) {
      members.push_back(idx);
      self(self, g + 1);
      members.pop_back();
    }
  };
  recurse(recurse, 0);
  if (best.pairs.empty()) throw InputError("no valid candidate set exists");
  return best;
}

void validate_candidate(const CandidateSet& set, std::size_t num_classes) {
  if (set.pairs.size() < 2) throw InputError("candidate set needs at least two pairs");
  if (set.pairs.size() > num_classes) throw InputError("candidate set larger than K");
  validate_pair_set(set.pairs);
  std::set<ClassPair> unique(set.pairs.begin(), set.pairs.end());
  if (unique.size() != set.pairs.size()) throw InputError("candidate set repeats a pair");
}

}  // namespace umd
