// Independent reference implementations the test suites check against.
// Everything here is deliberately written as plain loops over the naive
// definition, separate from the library's computation paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "clknn/adapter.hpp"
#include "clknn/datastore.hpp"
#include "clknn/retrieval.hpp"

namespace oracle {

using clknn::Vec;

// two-loop matrix-vector FFN
inline Vec naive_ffn(const Vec& h, const clknn::AdapterParams& p) {
    Vec hidden(p.d_f);
    for (std::uint32_t f = 0; f < p.d_f; ++f) {
        double acc = p.b1[f];
        for (std::uint32_t i = 0; i < p.d; ++i) acc += h[i] * p.w1[i * p.d_f + f];
        hidden[f] = acc > 0.0 ? acc : 0.0;
    }
    Vec z(p.d_o);
    for (std::uint32_t o = 0; o < p.d_o; ++o) {
        double acc = p.b2[o];
        for (std::uint32_t f = 0; f < p.d_f; ++f) acc += hidden[f] * p.w2[f * p.d_o + o];
        z[o] = acc;
    }
    return z;
}

// per-token mean by a separate accumulation pass
inline std::vector<Vec> per_token_means(const clknn::Datastore& ds) {
    std::vector<Vec> sums(ds.vocab_size(), Vec(ds.dim(), 0.0));
    std::vector<std::size_t> counts(ds.vocab_size(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto key = ds.key(i);
        Vec& s = sums[ds.token(i)];
        for (std::uint32_t j = 0; j < ds.dim(); ++j) s[j] += double(key[j]);
        ++counts[ds.token(i)];
    }
    for (std::uint32_t v = 0; v < ds.vocab_size(); ++v) {
        if (counts[v] == 0) {
            sums[v].clear();
            continue;
        }
        for (double& x : sums[v]) x /= double(counts[v]);
    }
    return sums;
}

// quadratic scan with a full stable sort under the (score, index) tie rule
inline std::vector<std::uint32_t> brute_force_knn(const Vec& query, const clknn::Datastore& ds,
                                                  std::uint32_t k, clknn::Metric metric) {
    struct Scored {
        double rank;
        std::uint32_t idx;
    };
    std::vector<Scored> all;
    all.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto key = ds.key(i);
        double rank = 0.0;
        if (metric == clknn::Metric::l2) {
            for (std::uint32_t j = 0; j < ds.dim(); ++j) {
                const double diff = query[j] - double(key[j]);
                rank += diff * diff;
            }
        } else {
            for (std::uint32_t j = 0; j < ds.dim(); ++j) rank -= query[j] * double(key[j]);
        }
        all.push_back({rank, static_cast<std::uint32_t>(i)});
    }
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        return a.rank != b.rank ? a.rank < b.rank : a.idx < b.idx;
    });
    std::vector<std::uint32_t> out;
    const std::size_t n = std::min<std::size_t>(k, all.size());
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(all[i].idx);
    return out;
}

// exhaustive center ranking for the negative-miner pool check
inline std::vector<std::uint32_t> nearest_center_tokens(const Vec& anchor,
                                                        const clknn::ClusterIndex& ci,
                                                        std::uint32_t anchor_token,
                                                        std::size_t k) {
    struct Scored {
        double dist;
        std::uint32_t token;
    };
    std::vector<Scored> all;
    for (std::uint32_t v : ci.nonempty_tokens) {
        if (v == anchor_token) continue;
        const Vec& c = ci.centers[v];
        double d = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < anchor.size(); ++j) {
            d += anchor[j] * c[j];
            na += anchor[j] * anchor[j];
            nb += c[j] * c[j];
        }
        const double cosine = (na < 1e-24 || nb < 1e-24) ? 0.0 : d / std::sqrt(na * nb);
        all.push_back({1.0 - cosine, v});
    }
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        return a.dist != b.dist ? a.dist < b.dist : a.token < b.token;
    });
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].token);
    return out;
}

// central finite differences of the contrastive loss through the adapter,
// using only the library's forward path
struct FdCheck {
    double max_err = 0.0; // |analytic - fd| / max(1, |analytic|, |fd|)
};

inline double loss_at(const Vec& h_anchor, const std::vector<Vec>& h_pos,
                      const std::vector<Vec>& h_neg, const clknn::AdapterParams& p,
                      double t_prime) {
    std::vector<Vec> zp, zn;
    for (const Vec& h : h_pos) zp.push_back(clknn::ffn_forward(h, p));
    for (const Vec& h : h_neg) zn.push_back(clknn::ffn_forward(h, p));
    return clknn::contrastive_loss(clknn::ffn_forward(h_anchor, p), zp, zn, t_prime);
}

inline FdCheck finite_difference_check(const Vec& h_anchor, const std::vector<Vec>& h_pos,
                                       const std::vector<Vec>& h_neg, clknn::AdapterParams p,
                                       double t_prime, double eps = 1e-6) {
    clknn::AdapterGrads grads;
    clknn::loss_gradients(h_anchor, h_pos, h_neg, p, t_prime, grads);

    FdCheck result;
    auto probe = [&](std::vector<double>& theta, const std::vector<double>& analytic) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta[i];
            theta[i] = saved + eps;
            const double up = loss_at(h_anchor, h_pos, h_neg, p, t_prime);
            theta[i] = saved - eps;
            const double down = loss_at(h_anchor, h_pos, h_neg, p, t_prime);
            theta[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double denom = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
            result.max_err = std::max(result.max_err, std::abs(fd - analytic[i]) / denom);
        }
    };
    probe(p.w1, grads.w1);
    probe(p.b1, grads.b1);
    probe(p.w2, grads.w2);
    probe(p.b2, grads.b2);
    return result;
}

} // namespace oracle
