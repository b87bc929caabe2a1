#include "protoot/eval.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "protoot/errors.hpp"

namespace protoot {

std::vector<std::vector<std::size_t>> rank_retrieval(const UnitRowMatrix& queries,
                                                     const UnitRowMatrix& gallery) {
    if (queries.cols() != gallery.cols()) {
        throw DimMismatchError("rank_retrieval: feature dims differ");
    }
    const std::size_t g = gallery.rows();
    std::vector<std::vector<std::size_t>> rankings(queries.rows());
    std::vector<double> sims(g);
    for (std::size_t qi = 0; qi < queries.rows(); ++qi) {
        for (std::size_t j = 0; j < g; ++j) sims[j] = dot(queries.row(qi), gallery.row(j));
        auto& order = rankings[qi];
        order.resize(g);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return a < b;
        });
    }
    return rankings;
}

double precision_at_k(std::span<const std::size_t> ranking, int query_label,
                      std::span<const int> gallery_labels, std::size_t k) {
    if (k == 0 || k > ranking.size() || k > gallery_labels.size()) {
        throw KTooLargeError("precision_at_k: k = " + std::to_string(k) +
                             " exceeds the gallery size " + std::to_string(ranking.size()));
    }
    std::size_t hits = 0;
    for (std::size_t r = 0; r < k; ++r) {
        if (ranking[r] >= gallery_labels.size()) {
            throw IndexOutOfRangeError("precision_at_k: ranking index out of range");
        }
        if (gallery_labels[ranking[r]] == query_label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double mean_precision_at_k(const std::vector<std::vector<std::size_t>>& rankings,
                           std::span<const int> query_labels,
                           std::span<const int> gallery_labels, std::size_t k,
                           bool exclude_self) {
    if (rankings.size() != query_labels.size()) {
        throw DimMismatchError("mean_precision_at_k: one label per query required");
    }
    if (rankings.empty()) throw EmptyInputError("mean_precision_at_k: no queries");
    double acc = 0.0;
    std::vector<std::size_t> filtered;
    for (std::size_t qi = 0; qi < rankings.size(); ++qi) {
        if (exclude_self) {
            filtered.clear();
            filtered.reserve(rankings[qi].size());
            for (std::size_t idx : rankings[qi]) {
                if (idx != qi) filtered.push_back(idx);
            }
            acc += precision_at_k(filtered, query_labels[qi], gallery_labels, k);
        } else {
            acc += precision_at_k(rankings[qi], query_labels[qi], gallery_labels, k);
        }
    }
    return acc / static_cast<double>(rankings.size());
}

}  // namespace protoot
