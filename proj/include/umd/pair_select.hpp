#pragma once

#include <cstddef>
#include <vector>

#include "umd/tr_stats.hpp"

namespace umd {

/// Putative backdoor pairs with pairwise-distinct sources, kept sorted.
struct CandidateSet {
  std::vector<ClassPair> pairs;
  double objective = 0.0;
};

/// H(A): the smallest average mutual TR of a member with the rest of A, minus
/// the largest average TR flowing from A into a single outside pair.
/// Members are indices into tr.pairs.
double objective_H(const TRMatrix& tr, const std::vector<std::size_t>& members);
double objective_H(const TRMatrix& tr, const CandidateSet& set);

/// Greedy agglomerative maximization of H from the `restarts` strongest
/// source-disjoint seeds. Ties prefer smaller sets, then lexicographic order.
CandidateSet agglomerative_select(const TRMatrix& tr, std::size_t restarts = 5);

/// Brute-force maximizer of H over every valid subset. Limited to K <= 5.
CandidateSet exhaustive_select(const TRMatrix& tr);

/// Throws InputError if the set is too small, too large or shares a source.
void validate_candidate(const CandidateSet& set, std::size_t num_classes);

}  // namespace umd
