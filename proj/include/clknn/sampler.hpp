#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "clknn/datastore.hpp"
#include "clknn/rng.hpp"

namespace clknn {

struct SamplerConfig {
    std::uint32_t M = 2;  // positives per anchor
    std::uint32_t N = 8;  // negatives per anchor
    std::uint32_t K = 16; // nearest-cluster pool size, K >= N
    std::uint64_t seed = 42;
};

struct SampleSet {
    std::uint32_t anchor_index = 0;
    std::vector<std::uint32_t> positives;
    std::vector<std::uint32_t> negatives;
};

struct MiningStats {
    std::size_t centers_examined = 0;
};

// M indices from the anchor's cluster, anchor excluded; without replacement
// when the cluster is large enough, with replacement otherwise. nullopt for
// singleton clusters (the anchor is unsampleable and the caller skips it).
std::optional<std::vector<std::uint32_t>> sample_positives(std::uint32_t anchor,
                                                           const ClusterIndex& ci,
                                                           std::uint32_t M, Rng& rng);

// Rank nonempty non-anchor clusters by cosine distance from anchor_z to their
// centers, keep the K nearest, pick N distinct clusters uniformly from that
// pool, then one member uniformly per cluster. Touches center vectors only.
std::vector<std::uint32_t> mine_hard_negatives(std::span<const double> anchor_z,
                                               std::uint32_t anchor_token,
                                               const ClusterIndex& ci,
                                               const SamplerConfig& cfg, Rng& rng,
                                               MiningStats* stats = nullptr);

} // namespace clknn
