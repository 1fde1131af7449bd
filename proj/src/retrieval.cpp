#include "clknn/retrieval.hpp"

#include <algorithm>
#include <cmath>

namespace clknn {

namespace {

struct Cand {
    double rank; // squared L2 distance, or negated inner product
    std::uint32_t idx;

    bool operator<(const Cand& o) const {
        return rank != o.rank ? rank < o.rank : idx < o.idx;
    }
};

void check_neighbors(const NeighborList& nb, std::uint32_t vocab_size) {
    if (nb.size() == 0) throw Error(ErrorKind::contract, "empty neighbor list");
    if (nb.scores.size() != nb.size() || nb.tokens.size() != nb.size())
        throw Error(ErrorKind::contract, "inconsistent neighbor list");
    for (std::uint32_t t : nb.tokens)
        if (t >= vocab_size)
            throw Error(ErrorKind::contract, "neighbor token id out of vocab range");
}

} // namespace

NeighborList knn_search(std::span<const double> query, const Datastore& ds, std::uint32_t k,
                        Metric metric) {
    if (query.size() != ds.dim())
        throw Error(ErrorKind::dimension, "query width does not match datastore dim");
    if (ds.empty()) throw Error(ErrorKind::contract, "knn_search over an empty datastore");
    if (k < 1) throw Error(ErrorKind::config, "k must be >= 1");

    const std::size_t k_eff = std::min<std::size_t>(k, ds.size());
    const std::uint32_t dim = ds.dim();
    const float* keys = ds.raw_keys().data();
    const double* q = query.data();

    // bounded worst-on-top heap; ties resolved toward lower entry index
    std::vector<Cand> heap;
    heap.reserve(k_eff + 1);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const float* key = keys + i * dim;
        double rank;
        if (metric == Metric::l2) {
            double d2 = 0.0;
            for (std::uint32_t j = 0; j < dim; ++j) {
                const double diff = q[j] - double(key[j]);
                d2 += diff * diff;
            }
            rank = d2;
        } else {
            double ip = 0.0;
            for (std::uint32_t j = 0; j < dim; ++j) ip += q[j] * double(key[j]);
            rank = -ip;
        }
        const Cand c{rank, static_cast<std::uint32_t>(i)};
        if (heap.size() < k_eff) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end());
        }
    }
    std::sort_heap(heap.begin(), heap.end());

    NeighborList out;
    out.indices.reserve(k_eff);
    out.scores.reserve(k_eff);
    out.tokens.reserve(k_eff);
    for (const Cand& c : heap) {
        out.indices.push_back(c.idx);
        out.scores.push_back(metric == Metric::l2 ? std::sqrt(c.rank) : -c.rank);
        out.tokens.push_back(ds.token(c.idx));
    }
    return out;
}

TokenDistribution retrieval_distribution_l2(const NeighborList& neighbors, double T,
                                            std::uint32_t vocab_size) {
    check_neighbors(neighbors, vocab_size);
    if (T <= 0.0) throw Error(ErrorKind::contract, "temperature must be positive");
    const double dmin = *std::min_element(neighbors.scores.begin(), neighbors.scores.end());
    TokenDistribution probs(vocab_size, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const double w = std::exp(-(neighbors.scores[i] - dmin) / T);
        probs[neighbors.tokens[i]] += w;
        total += w;
    }
    for (double& p : probs) p /= total;
    return probs;
}

TokenDistribution retrieval_distribution_ip(const NeighborList& neighbors, double T,
                                            std::uint32_t vocab_size) {
    check_neighbors(neighbors, vocab_size);
    if (T <= 0.0) throw Error(ErrorKind::contract, "temperature must be positive");
    for (double s : neighbors.scores)
        if (s < -1.0 - 1e-9 || s > 1.0 + 1e-9)
            throw Error(ErrorKind::contract,
                        "neighbor score outside the normalized inner-product range");
    const double smax = *std::max_element(neighbors.scores.begin(), neighbors.scores.end());
    TokenDistribution probs(vocab_size, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const double w = std::exp((neighbors.scores[i] - smax) / T);
        probs[neighbors.tokens[i]] += w;
        total += w;
    }
    for (double& p : probs) p /= total;
    return probs;
}

double adaptive_lambda(const NeighborList& neighbors, double lambda) {
    if (neighbors.size() == 0) throw Error(ErrorKind::contract, "empty neighbor list");
    double mean = 0.0;
    for (double s : neighbors.scores) mean += s;
    mean /= double(neighbors.size());
    // negative mean similarity signals no retrieval confidence
    return lambda * std::clamp(mean, 0.0, 1.0);
}

TokenDistribution interpolate(const TokenDistribution& p_c, const TokenDistribution& p_r,
                              double lambda_eff) {
    if (p_c.size() != p_r.size())
        throw Error(ErrorKind::dimension, "interpolate: distribution sizes differ");
    if (lambda_eff < 0.0 || lambda_eff > 1.0)
        throw Error(ErrorKind::contract, "lambda_eff must be in [0, 1]");
    TokenDistribution out(p_c.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - lambda_eff) * p_c[i] + lambda_eff * p_r[i];
    return out;
}

} // namespace clknn
