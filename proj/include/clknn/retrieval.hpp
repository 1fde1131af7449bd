#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "clknn/common.hpp"
#include "clknn/datastore.hpp"

namespace clknn {

enum class Metric { l2, inner_product };

struct RetrievalConfig {
    std::uint32_t k = 8;
    double T = 0.1;                    // inference temperature
    double lambda = 0.7;               // interpolation coefficient
    Metric metric = Metric::inner_product;
    bool use_adaptive_lambda = false;
};

/// Neighbors ordered best-first: ascending L2 distance or descending inner
/// product, ties broken by ascending entry index. Scores carry the metric
/// value (distance for L2, inner product for IP).
struct NeighborList {
    std::vector<std::uint32_t> indices;
    Vec scores;
    std::vector<std::uint32_t> tokens;

    std::size_t size() const noexcept { return indices.size(); }
};

using TokenDistribution = Vec;

// Exact top-k by linear scan; returns all entries when k exceeds the store.
NeighborList knn_search(std::span<const double> query, const Datastore& ds,
                        std::uint32_t k, Metric metric);

// p_r(v) proportional to sum over neighbors with token v of exp(-distance/T),
// normalized over the retrieved set.
TokenDistribution retrieval_distribution_l2(const NeighborList& neighbors, double T,
                                            std::uint32_t vocab_size);

// Inner-product variant over normalized vectors; scores must lie in [-1, 1]
// up to 1e-9 slack.
TokenDistribution retrieval_distribution_ip(const NeighborList& neighbors, double T,
                                            std::uint32_t vocab_size);

// lambda* = lambda * clamp(mean neighbor score, 0, 1).
double adaptive_lambda(const NeighborList& neighbors, double lambda);

// p_knn = (1 - lambda_eff) * p_c + lambda_eff * p_r.
TokenDistribution interpolate(const TokenDistribution& p_c, const TokenDistribution& p_r,
                              double lambda_eff);

} // namespace clknn
