#include "clknn/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "clknn/rng.hpp"

namespace clknn {

namespace {

// static partition over [0, n); results must be written to per-index slots
template <typename F>
void parallel_for(std::size_t n, int threads, F&& body) {
    const int t = std::max(1, threads);
    if (t == 1 || n < 2 * std::size_t(t)) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (int w = 0; w < t; ++w) {
        const std::size_t lo = n * w / t, hi = n * (w + 1) / t;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

std::uint32_t argmax_token(const Vec& probs) {
    std::uint32_t best = 0;
    for (std::uint32_t v = 1; v < probs.size(); ++v)
        if (probs[v] > probs[best]) best = v;
    return best;
}

void validate_synth(const SynthConfig& cfg) {
    if (cfg.vocab_size < 1 || cfg.dim < 1)
        throw Error(ErrorKind::config, "vocab_size and dim must be >= 1");
    if (cfg.train_count < 1 || cfg.heldout_count < 1)
        throw Error(ErrorKind::config, "train_count and heldout_count must be >= 1");
    if (cfg.cluster_spread <= 0.0 || cfg.center_scale <= 0.0)
        throw Error(ErrorKind::config, "cluster_spread and center_scale must be positive");
    if (cfg.zipf_exponent < 0.0)
        throw Error(ErrorKind::config, "zipf_exponent must be nonnegative");
    if (cfg.heldout_shift < 0.0)
        throw Error(ErrorKind::config, "heldout_shift must be nonnegative");
}

// token id == frequency rank, weight 1/(id+1)^s
std::vector<double> zipf_cumulative(std::uint32_t vocab, double exponent) {
    std::vector<double> cum(vocab);
    double total = 0.0;
    for (std::uint32_t v = 0; v < vocab; ++v) {
        total += std::pow(double(v + 1), -exponent);
        cum[v] = total;
    }
    for (double& c : cum) c /= total;
    return cum;
}

std::uint32_t zipf_draw(const std::vector<double>& cum, Rng& rng) {
    const double u = rng.next_double();
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    return static_cast<std::uint32_t>(std::min<std::size_t>(it - cum.begin(), cum.size() - 1));
}

Datastore draw_store(const std::vector<double>& centers, const SynthConfig& cfg,
                     std::uint32_t count, const std::vector<double>& cum, Rng& rng) {
    Datastore ds(cfg.dim, cfg.vocab_size);
    ds.reserve(count);
    std::vector<float> key(cfg.dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t v = zipf_draw(cum, rng);
        const double* c = centers.data() + std::size_t(v) * cfg.dim;
        for (std::uint32_t j = 0; j < cfg.dim; ++j)
            key[j] = static_cast<float>(c[j] + cfg.cluster_spread * rng.next_gaussian());
        ds.push_back(key, v);
    }
    return ds;
}

} // namespace

SynthData generate_synth(const SynthConfig& cfg) {
    validate_synth(cfg);
    const std::size_t n_center = std::size_t(cfg.vocab_size) * cfg.dim;

    Rng center_rng(mix_seed(cfg.seed, 1));
    std::vector<double> centers(n_center);
    for (double& c : centers) c = cfg.center_scale * center_rng.next_gaussian();

    const auto cum = zipf_cumulative(cfg.vocab_size, cfg.zipf_exponent);

    Rng train_rng(mix_seed(cfg.seed, 2));
    SynthData data;
    data.train = draw_store(centers, cfg, cfg.train_count, cum, train_rng);

    std::vector<double> heldout_centers = centers;
    if (cfg.heldout_shift > 0.0) {
        Rng shift_rng(mix_seed(cfg.seed, 3));
        const double s = cfg.heldout_shift * cfg.cluster_spread;
        for (double& c : heldout_centers) c += s * shift_rng.next_gaussian();
    }
    Rng heldout_rng(mix_seed(cfg.seed, 4));
    data.heldout = draw_store(heldout_centers, cfg, cfg.heldout_count, cum, heldout_rng);
    return data;
}

Vec ToyPredictor::probs(std::span<const double> h) const {
    if (h.size() != dim)
        throw Error(ErrorKind::dimension, "predictor input width mismatch");
    Vec logits(vocab_size);
    for (std::uint32_t v = 0; v < vocab_size; ++v) {
        const double* row = weight.data() + std::size_t(v) * dim;
        double acc = bias[v];
        for (std::uint32_t j = 0; j < dim; ++j) acc += row[j] * h[j];
        logits[v] = acc;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& l : logits) {
        l = std::exp(l - m);
        total += l;
    }
    for (double& l : logits) l /= total;
    return logits;
}

PredictorTrainResult train_toy_predictor(const Datastore& store, std::uint32_t epochs,
                                         double lr, std::uint64_t seed) {
    (void)seed; // full-batch descent from a zero init has no random choices
    if (store.empty()) throw Error(ErrorKind::contract, "cannot fit predictor on empty store");
    const std::uint32_t dim = store.dim(), vocab = store.vocab_size();
    PredictorTrainResult result;
    result.predictor.dim = dim;
    result.predictor.vocab_size = vocab;
    result.predictor.weight.assign(std::size_t(vocab) * dim, 0.0);
    result.predictor.bias.assign(vocab, 0.0);

    std::vector<double> gw(std::size_t(vocab) * dim);
    Vec gb(vocab);
    const double inv_n = 1.0 / double(store.size());
    for (std::uint32_t epoch = 0; epoch < epochs; ++epoch) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        double loss = 0.0;
        for (std::size_t i = 0; i < store.size(); ++i) {
            const Vec h = store.key_f64(i);
            const std::uint32_t y = store.token(i);
            const Vec p = result.predictor.probs(h);
            loss -= std::log(std::max(p[y], 1e-300));
            for (std::uint32_t v = 0; v < vocab; ++v) {
                const double coef = p[v] - (v == y ? 1.0 : 0.0);
                if (coef == 0.0) continue;
                gb[v] += coef;
                double* row = gw.data() + std::size_t(v) * dim;
                for (std::uint32_t j = 0; j < dim; ++j) row[j] += coef * h[j];
            }
        }
        result.epoch_loss.push_back(loss * inv_n);
        for (std::size_t i = 0; i < gw.size(); ++i)
            result.predictor.weight[i] -= lr * gw[i] * inv_n;
        for (std::uint32_t v = 0; v < vocab; ++v)
            result.predictor.bias[v] -= lr * gb[v] * inv_n;
    }
    return result;
}

double predictor_accuracy(const ToyPredictor& predictor, const Datastore& ds) {
    if (ds.dim() != predictor.dim)
        throw Error(ErrorKind::dimension, "datastore dim does not match predictor");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (argmax_token(predictor.probs(ds.key_f64(i))) == ds.token(i)) ++hits;
    return double(hits) / double(ds.size());
}

AccuracyCurve retrieval_accuracy_curve(const Datastore& queries, const Datastore& store,
                                       std::span<const std::uint32_t> ks, Metric metric,
                                       int threads) {
    if (queries.dim() != store.dim())
        throw Error(ErrorKind::dimension, "query dim does not match store dim");
    if (queries.empty() || store.empty())
        throw Error(ErrorKind::contract, "queries and store must be nonempty");
    if (ks.empty()) throw Error(ErrorKind::config, "need at least one k");
    const std::uint32_t kmax = *std::max_element(ks.begin(), ks.end());

    std::vector<Vec> fracs(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        const NeighborList nb = knn_search(queries.key_f64(i), store, kmax, metric);
        const std::uint32_t gold = queries.token(i);
        Vec row(ks.size());
        for (std::size_t kix = 0; kix < ks.size(); ++kix) {
            const std::size_t upto = std::min<std::size_t>(ks[kix], nb.size());
            std::size_t hits = 0;
            for (std::size_t r = 0; r < upto; ++r)
                if (nb.tokens[r] == gold) ++hits;
            row[kix] = double(hits) / double(ks[kix]);
        }
        fracs[i] = std::move(row);
    });

    AccuracyCurve curve;
    curve.ks.assign(ks.begin(), ks.end());
    curve.accuracies.assign(ks.size(), 0.0);
    for (const Vec& row : fracs)
        for (std::size_t kix = 0; kix < ks.size(); ++kix) curve.accuracies[kix] += row[kix];
    for (double& a : curve.accuracies) a /= double(queries.size());
    return curve;
}

double retrieval_accuracy(const Datastore& queries, const Datastore& store, std::uint32_t k,
                          Metric metric, int threads) {
    const std::uint32_t ks[1] = {k};
    return retrieval_accuracy_curve(queries, store, ks, metric, threads).accuracies[0];
}

EvalReport evaluate_pipeline(const Datastore& heldout, const Datastore& store,
                             const ToyPredictor& predictor, const AdapterParams* adapter,
                             const PcaModel* pca, const RetrievalConfig& rcfg,
                             std::span<const std::uint32_t> curve_ks, int threads) {
    if (heldout.dim() != store.dim())
        throw Error(ErrorKind::dimension, "heldout dim does not match store dim");
    if (heldout.vocab_size() != store.vocab_size())
        throw Error(ErrorKind::dimension, "heldout vocab does not match store vocab");
    if (predictor.dim != store.dim() || predictor.vocab_size != store.vocab_size())
        throw Error(ErrorKind::dimension, "predictor shape does not match store");
    if (rcfg.k < 1) throw Error(ErrorKind::config, "k must be >= 1");
    if (rcfg.T <= 0.0) throw Error(ErrorKind::config, "T must be positive");
    if (rcfg.lambda < 0.0 || rcfg.lambda > 1.0)
        throw Error(ErrorKind::config, "lambda must be in [0, 1]");
    if (adapter && adapter->d != store.dim())
        throw Error(ErrorKind::dimension, "adapter input width does not match store dim");
    if (pca && pca->input_dim != (adapter ? adapter->d_o : store.dim()))
        throw Error(ErrorKind::dimension, "PCA input dim does not match retrieval vectors");
    if (rcfg.metric == Metric::inner_product && !pca)
        throw Error(ErrorKind::config,
                    "inner-product retrieval needs normalized vectors; supply a PCA model");
    if (rcfg.use_adaptive_lambda && rcfg.metric != Metric::inner_product)
        throw Error(ErrorKind::config, "adaptive lambda requires the inner-product metric");
    if (curve_ks.empty()) throw Error(ErrorKind::config, "need at least one curve k");

    // retrieval-space store
    Datastore transformed;
    if (adapter) {
        transformed = transform_datastore(store, *adapter);
        if (pca) transformed = project_datastore(transformed, *pca);
    } else if (pca) {
        transformed = project_datastore(store, *pca);
    }
    const Datastore& rstore = (adapter || pca) ? transformed : store;

    const std::uint32_t vocab = store.vocab_size();
    std::uint32_t kmax = rcfg.k;
    for (std::uint32_t k : curve_ks) kmax = std::max(kmax, k);

    struct PerQuery {
        Vec curve_fracs;
        bool hit_c = false, hit_r = false, hit_knn = false;
    };
    std::vector<PerQuery> rows(heldout.size());

    parallel_for(heldout.size(), threads, [&](std::size_t i) {
        PerQuery& row = rows[i];
        const Vec h = heldout.key_f64(i);
        const std::uint32_t gold = heldout.token(i);

        const Vec p_c = predictor.probs(h);
        row.hit_c = argmax_token(p_c) == gold;

        // query in retrieval space; degenerate projections fall back to pure p_c
        Vec q = h;
        bool degenerate = false;
        if (adapter) q = ffn_forward(q, *adapter);
        if (pca) {
            try {
                q = project_normalize(q, *pca);
            } catch (const Error&) {
                degenerate = true;
            }
        }

        if (degenerate) {
            row.curve_fracs.assign(curve_ks.size(), 0.0);
            row.hit_r = false;
            row.hit_knn = row.hit_c;
            return;
        }

        NeighborList nb = knn_search(q, rstore, kmax, rcfg.metric);
        if (rcfg.metric == Metric::inner_product) {
            // float32 key storage can nudge unit-vector products past 1
            for (double& s : nb.scores) s = std::clamp(s, -1.0, 1.0);
        }

        row.curve_fracs.resize(curve_ks.size());
        for (std::size_t kix = 0; kix < curve_ks.size(); ++kix) {
            const std::size_t upto = std::min<std::size_t>(curve_ks[kix], nb.size());
            std::size_t hits = 0;
            for (std::size_t r = 0; r < upto; ++r)
                if (nb.tokens[r] == gold) ++hits;
            row.curve_fracs[kix] = double(hits) / double(curve_ks[kix]);
        }

        NeighborList top;
        const std::size_t kk = std::min<std::size_t>(rcfg.k, nb.size());
        top.indices.assign(nb.indices.begin(), nb.indices.begin() + kk);
        top.scores.assign(nb.scores.begin(), nb.scores.begin() + kk);
        top.tokens.assign(nb.tokens.begin(), nb.tokens.begin() + kk);

        const TokenDistribution p_r = rcfg.metric == Metric::l2
                                          ? retrieval_distribution_l2(top, rcfg.T, vocab)
                                          : retrieval_distribution_ip(top, rcfg.T, vocab);
        row.hit_r = argmax_token(p_r) == gold;

        const double lambda_eff =
            rcfg.use_adaptive_lambda ? adaptive_lambda(top, rcfg.lambda) : rcfg.lambda;
        const TokenDistribution p_knn = interpolate(p_c, p_r, lambda_eff);
        row.hit_knn = argmax_token(p_knn) == gold;
    });

    EvalReport report;
    report.method = adapter ? "clknn" : (pca ? "raw+g" : "raw");
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s:%g", rcfg.use_adaptive_lambda ? "adaptive" : "fixed",
                  rcfg.lambda);
    report.lambda_mode = buf;
    report.curve.ks.assign(curve_ks.begin(), curve_ks.end());
    report.curve.accuracies.assign(curve_ks.size(), 0.0);
    for (const PerQuery& row : rows) {
        report.acc_pc += row.hit_c ? 1.0 : 0.0;
        report.acc_pr += row.hit_r ? 1.0 : 0.0;
        report.acc_pknn += row.hit_knn ? 1.0 : 0.0;
        for (std::size_t kix = 0; kix < curve_ks.size(); ++kix)
            report.curve.accuracies[kix] += row.curve_fracs[kix];
    }
    const double inv = 1.0 / double(heldout.size());
    report.acc_pc *= inv;
    report.acc_pr *= inv;
    report.acc_pknn *= inv;
    for (double& a : report.curve.accuracies) a *= inv;
    return report;
}

void write_curve_csv(const std::filesystem::path& path, const AccuracyCurve& curve) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out << "k,accuracy\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.ks.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%u,%.6f\n", curve.ks[i], curve.accuracies[i]);
        out << buf;
    }
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

void write_summary_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out << "method,acc_pc,acc_pr,acc_pknn,lambda_mode\n";
    char buf[192];
    for (const EvalReport& r : reports) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%s\n", r.method.c_str(), r.acc_pc,
                      r.acc_pr, r.acc_pknn, r.lambda_mode.c_str());
        out << buf;
    }
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

} // namespace clknn
