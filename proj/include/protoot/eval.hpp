#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "protoot/matrix.hpp"

namespace protoot {

// Per query: gallery indices sorted by descending cosine similarity, ties by
// ascending index.
std::vector<std::vector<std::size_t>> rank_retrieval(const UnitRowMatrix& queries,
                                                     const UnitRowMatrix& gallery);

// Fraction of the top-k ranked gallery items whose label equals query_label.
double precision_at_k(std::span<const std::size_t> ranking, int query_label,
                      std::span<const int> gallery_labels, std::size_t k);

// Mean over queries of precision_at_k. When exclude_self is set, ranking
// entry equal to the query's own index is dropped before taking the top k
// (for query sets that are a subset of the gallery).
double mean_precision_at_k(const std::vector<std::vector<std::size_t>>& rankings,
                           std::span<const int> query_labels,
                           std::span<const int> gallery_labels, std::size_t k,
                           bool exclude_self = false);

}  // namespace protoot
