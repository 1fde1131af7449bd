#include "clknn/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace clknn {

namespace {

// 1 - cosine similarity; zero-norm vectors are treated as similarity 0
double cosine_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na < 1e-24 || nb < 1e-24) return 1.0;
    return 1.0 - d / std::sqrt(na * nb);
}

} // namespace

std::optional<std::vector<std::uint32_t>> sample_positives(std::uint32_t anchor,
                                                           const ClusterIndex& ci,
                                                           std::uint32_t M, Rng& rng) {
    if (M < 1) throw Error(ErrorKind::config, "M must be >= 1");
    if (anchor >= ci.entry_tokens.size())
        throw Error(ErrorKind::contract, "anchor index out of range");
    const auto& cluster = ci.members[ci.entry_tokens[anchor]];
    if (cluster.size() <= 1) return std::nullopt; // unsampleable anchor

    std::vector<std::uint32_t> pool;
    pool.reserve(cluster.size() - 1);
    for (std::uint32_t idx : cluster)
        if (idx != anchor) pool.push_back(idx);

    std::vector<std::uint32_t> out(M);
    if (pool.size() >= M) {
        // without replacement: partial Fisher-Yates
        for (std::uint32_t i = 0; i < M; ++i) {
            const std::size_t j = i + rng.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
            out[i] = pool[i];
        }
    } else {
        for (std::uint32_t i = 0; i < M; ++i) out[i] = pool[rng.uniform_index(pool.size())];
    }
    return out;
}

std::vector<std::uint32_t> mine_hard_negatives(std::span<const double> anchor_z,
                                               std::uint32_t anchor_token,
                                               const ClusterIndex& ci,
                                               const SamplerConfig& cfg, Rng& rng,
                                               MiningStats* stats) {
    if (cfg.N < 1) throw Error(ErrorKind::config, "N must be >= 1");
    if (cfg.K < cfg.N) throw Error(ErrorKind::config, "K must be >= N");
    if (anchor_z.size() != ci.dim)
        throw Error(ErrorKind::dimension, "anchor width does not match cluster index dim");

    struct Cand {
        double dist;
        std::uint32_t token;
    };
    std::vector<Cand> cands;
    cands.reserve(ci.nonempty_tokens.size());
    for (std::uint32_t v : ci.nonempty_tokens) {
        if (v == anchor_token) continue;
        cands.push_back({cosine_distance(anchor_z, ci.centers[v]), v});
        if (stats) ++stats->centers_examined;
    }
    if (cands.size() < cfg.N)
        throw Error(ErrorKind::contract, "fewer than N nonempty candidate clusters");

    const std::size_t pool_size = std::min<std::size_t>(cfg.K, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + pool_size, cands.end(),
                      [](const Cand& a, const Cand& b) {
                          return a.dist != b.dist ? a.dist < b.dist : a.token < b.token;
                      });

    // N distinct clusters uniformly from the pool
    if (pool_size > cfg.N) {
        for (std::uint32_t i = 0; i < cfg.N; ++i) {
            const std::size_t j = i + rng.uniform_index(pool_size - i);
            std::swap(cands[i], cands[j]);
        }
    }

    std::vector<std::uint32_t> out(cfg.N);
    for (std::uint32_t i = 0; i < cfg.N; ++i) {
        const auto& cluster = ci.members[cands[i].token];
        out[i] = cluster[rng.uniform_index(cluster.size())];
    }
    return out;
}

} // namespace clknn
