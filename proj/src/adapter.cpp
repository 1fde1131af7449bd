#include "clknn/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "clknn/sampler.hpp"

namespace clknn {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'K', 'A'};
constexpr std::uint32_t kVersion = 1;
constexpr double kNormEps = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_params(const AdapterParams& p) {
    if (p.d == 0 || p.d_f == 0 || p.d_o == 0)
        throw Error(ErrorKind::dimension, "adapter widths must be positive");
    if (p.w1.size() != std::size_t(p.d) * p.d_f || p.b1.size() != p.d_f ||
        p.w2.size() != std::size_t(p.d_f) * p.d_o || p.b2.size() != p.d_o)
        throw Error(ErrorKind::dimension, "adapter parameter shapes are inconsistent");
}

struct FfnCache {
    Vec u; // pre-activation, d_f
    Vec a; // ReLU(u), d_f
    Vec z; // output, d_o
};

FfnCache forward_cached(std::span<const double> h, const AdapterParams& p) {
    FfnCache c;
    c.u = p.b1;
    for (std::uint32_t i = 0; i < p.d; ++i) {
        const double hi = h[i];
        if (hi == 0.0) continue;
        const double* row = p.w1.data() + std::size_t(i) * p.d_f;
        for (std::uint32_t f = 0; f < p.d_f; ++f) c.u[f] += hi * row[f];
    }
    c.a.resize(p.d_f);
    for (std::uint32_t f = 0; f < p.d_f; ++f) c.a[f] = c.u[f] > 0.0 ? c.u[f] : 0.0;
    c.z = p.b2;
    for (std::uint32_t f = 0; f < p.d_f; ++f) {
        const double af = c.a[f];
        if (af == 0.0) continue;
        const double* row = p.w2.data() + std::size_t(f) * p.d_o;
        for (std::uint32_t o = 0; o < p.d_o; ++o) c.z[o] += af * row[o];
    }
    return c;
}

// Accumulates parameter gradients for one vector given dL/dz. The ReLU
// subgradient at exactly 0 is 0 (tested convention).
void backward_into(std::span<const double> h, const FfnCache& c, std::span<const double> gz,
                   const AdapterParams& p, AdapterGrads& g) {
    for (std::uint32_t o = 0; o < p.d_o; ++o) g.b2[o] += gz[o];
    Vec ga(p.d_f, 0.0);
    for (std::uint32_t f = 0; f < p.d_f; ++f) {
        const double af = c.a[f];
        const double* row = p.w2.data() + std::size_t(f) * p.d_o;
        double* grow = g.w2.data() + std::size_t(f) * p.d_o;
        double acc = 0.0;
        for (std::uint32_t o = 0; o < p.d_o; ++o) {
            grow[o] += af * gz[o];
            acc += row[o] * gz[o];
        }
        ga[f] = c.u[f] > 0.0 ? acc : 0.0;
    }
    for (std::uint32_t f = 0; f < p.d_f; ++f) g.b1[f] += ga[f];
    for (std::uint32_t i = 0; i < p.d; ++i) {
        const double hi = h[i];
        if (hi == 0.0) continue;
        double* grow = g.w1.data() + std::size_t(i) * p.d_f;
        for (std::uint32_t f = 0; f < p.d_f; ++f) grow[f] += hi * ga[f];
    }
}

void zero_like(const AdapterParams& p, AdapterGrads& g) {
    g.d = p.d;
    g.d_f = p.d_f;
    g.d_o = p.d_o;
    g.w1.assign(p.w1.size(), 0.0);
    g.b1.assign(p.b1.size(), 0.0);
    g.w2.assign(p.w2.size(), 0.0);
    g.b2.assign(p.b2.size(), 0.0);
}

void check_score_inputs(std::size_t m, std::size_t n) {
    if (m == 0 || n == 0)
        throw Error(ErrorKind::contract, "need at least one positive and one negative sample");
}

} // namespace

Vec ffn_forward(std::span<const double> h, const AdapterParams& p) {
    check_params(p);
    if (h.size() != p.d)
        throw Error(ErrorKind::dimension, "input width does not match adapter d");
    return forward_cached(h, p).z;
}

double cosine_score(std::span<const double> a, std::span<const double> b, double t_prime) {
    if (a.size() != b.size())
        throw Error(ErrorKind::dimension, "cosine_score: width mismatch");
    if (t_prime <= 0.0)
        throw Error(ErrorKind::contract, "temperature must be positive");
    const double na = norm(a), nb = norm(b);
    if (na < kNormEps || nb < kNormEps)
        throw Error(ErrorKind::contract, "degenerate vector in cosine score");
    return dot(a, b) / (na * nb * t_prime);
}

double contrastive_loss_from_scores(std::span<const double> pos_scores,
                                    std::span<const double> neg_scores) {
    check_score_inputs(pos_scores.size(), neg_scores.size());
    double m = pos_scores[0];
    for (double s : pos_scores) m = std::max(m, s);
    for (double s : neg_scores) m = std::max(m, s);
    double p = 0.0, q = 0.0;
    for (double s : pos_scores) p += std::exp(s - m);
    for (double s : neg_scores) q += std::exp(s - m);
    return std::log1p(q / p);
}

double contrastive_loss(std::span<const double> anchor_z, const std::vector<Vec>& positives_z,
                        const std::vector<Vec>& negatives_z, double t_prime) {
    check_score_inputs(positives_z.size(), negatives_z.size());
    Vec ps, ns;
    ps.reserve(positives_z.size());
    ns.reserve(negatives_z.size());
    for (const Vec& z : positives_z) ps.push_back(cosine_score(anchor_z, z, t_prime));
    for (const Vec& z : negatives_z) ns.push_back(cosine_score(anchor_z, z, t_prime));
    return contrastive_loss_from_scores(ps, ns);
}

double loss_gradients(std::span<const double> h_anchor, const std::vector<Vec>& h_positives,
                      const std::vector<Vec>& h_negatives, const AdapterParams& p,
                      double t_prime, AdapterGrads& grads, bool stop_gradient_samples) {
    check_params(p);
    check_score_inputs(h_positives.size(), h_negatives.size());
    if (h_anchor.size() != p.d)
        throw Error(ErrorKind::dimension, "anchor width does not match adapter d");
    zero_like(p, grads);

    const std::size_t m_count = h_positives.size(), n_count = h_negatives.size();
    const FfnCache anchor = forward_cached(h_anchor, p);
    std::vector<FfnCache> samples;
    samples.reserve(m_count + n_count);
    for (const Vec& h : h_positives) samples.push_back(forward_cached(h, p));
    for (const Vec& h : h_negatives) samples.push_back(forward_cached(h, p));

    const double na = norm(anchor.z);
    if (na < kNormEps) throw Error(ErrorKind::contract, "degenerate anchor vector");
    Vec norms(samples.size());
    Vec scores(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        norms[i] = norm(samples[i].z);
        if (norms[i] < kNormEps) throw Error(ErrorKind::contract, "degenerate sample vector");
        scores[i] = dot(anchor.z, samples[i].z) / (na * norms[i] * t_prime);
    }

    const double shift = *std::max_element(scores.begin(), scores.end());
    double psum = 0.0, qsum = 0.0;
    for (std::size_t i = 0; i < m_count; ++i) psum += std::exp(scores[i] - shift);
    for (std::size_t j = m_count; j < samples.size(); ++j) qsum += std::exp(scores[j] - shift);
    const double loss = std::log1p(qsum / psum);
    const double inv_total = 1.0 / (psum + qsum), inv_pos = 1.0 / psum;

    Vec gz_anchor(p.d_o, 0.0), gz(p.d_o);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double w = std::exp(scores[i] - shift);
        const double gscore = i < m_count ? w * (inv_total - inv_pos) : w * inv_total;
        const Vec& zb = samples[i].z;
        const double nb = norms[i];
        const double d = dot(anchor.z, zb);
        const double c1 = gscore / (t_prime * na * nb);
        const double proj_a = d / (na * na), proj_b = d / (nb * nb);
        for (std::uint32_t o = 0; o < p.d_o; ++o)
            gz_anchor[o] += c1 * (zb[o] - proj_a * anchor.z[o]);
        if (stop_gradient_samples) continue;
        for (std::uint32_t o = 0; o < p.d_o; ++o)
            gz[o] = c1 * (anchor.z[o] - proj_b * zb[o]);
        const Vec& hb = i < m_count ? h_positives[i] : h_negatives[i - m_count];
        if (hb.size() != p.d)
            throw Error(ErrorKind::dimension, "sample width does not match adapter d");
        backward_into(hb, samples[i], gz, p, grads);
    }
    backward_into(h_anchor, anchor, gz_anchor, p, grads);
    return loss;
}

AdapterParams init_adapter(std::uint32_t d, std::uint32_t d_f, std::uint32_t d_o, Rng& rng) {
    if (d == 0 || d_f == 0 || d_o == 0)
        throw Error(ErrorKind::dimension, "adapter widths must be positive");
    AdapterParams p;
    p.d = d;
    p.d_f = d_f;
    p.d_o = d_o;
    p.w1.resize(std::size_t(d) * d_f);
    p.b1.assign(d_f, 0.0);
    p.w2.resize(std::size_t(d_f) * d_o);
    p.b2.assign(d_o, 0.0);
    const double lim1 = std::sqrt(6.0 / (double(d) + double(d_f)));
    for (double& w : p.w1) w = (2.0 * rng.next_double() - 1.0) * lim1;
    const double lim2 = std::sqrt(6.0 / (double(d_f) + double(d_o)));
    for (double& w : p.w2) w = (2.0 * rng.next_double() - 1.0) * lim2;
    return p;
}

namespace {

// Adam with fixed beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
    AdapterGrads m, v;
    std::uint64_t t = 0;

    explicit AdamState(const AdapterParams& p) {
        zero_like(p, m);
        zero_like(p, v);
    }

    void update_tensor(std::span<double> theta, std::span<const double> g, std::span<double> ms,
                       std::span<double> vs, double lr, double bc1, double bc2) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            ms[i] = 0.9 * ms[i] + 0.1 * g[i];
            vs[i] = 0.999 * vs[i] + 0.001 * g[i] * g[i];
            theta[i] -= lr * (ms[i] / bc1) / (std::sqrt(vs[i] / bc2) + 1e-8);
        }
    }

    void step(AdapterParams& p, const AdapterGrads& g, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(0.9, double(t));
        const double bc2 = 1.0 - std::pow(0.999, double(t));
        update_tensor(p.w1, g.w1, m.w1, v.w1, lr, bc1, bc2);
        update_tensor(p.b1, g.b1, m.b1, v.b1, lr, bc1, bc2);
        update_tensor(p.w2, g.w2, m.w2, v.w2, lr, bc1, bc2);
        update_tensor(p.b2, g.b2, m.b2, v.b2, lr, bc1, bc2);
    }
};

void sgd_step(AdapterParams& p, const AdapterGrads& g, double lr) {
    auto upd = [lr](std::span<double> theta, std::span<const double> grad) {
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
    };
    upd(p.w1, g.w1);
    upd(p.b1, g.b1);
    upd(p.w2, g.w2);
    upd(p.b2, g.b2);
}

void accumulate(AdapterGrads& acc, const AdapterGrads& g) {
    auto add = [](std::span<double> a, std::span<const double> b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add(acc.w1, g.w1);
    add(acc.b1, g.b1);
    add(acc.w2, g.w2);
    add(acc.b2, g.b2);
}

void scale(AdapterGrads& g, double c) {
    for (double& x : g.w1) x *= c;
    for (double& x : g.b1) x *= c;
    for (double& x : g.w2) x *= c;
    for (double& x : g.b2) x *= c;
}

double grad_norm_of(const AdapterGrads& g) {
    double s = 0.0;
    for (double x : g.w1) s += x * x;
    for (double x : g.b1) s += x * x;
    for (double x : g.w2) s += x * x;
    for (double x : g.b2) s += x * x;
    return std::sqrt(s);
}

// z_i for every entry under the current parameters, row-major.
std::vector<double> forward_all(const Datastore& ds, const AdapterParams& p) {
    std::vector<double> out(ds.size() * std::size_t(p.d_o));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Vec z = ffn_forward(ds.key_f64(i), p);
        std::copy(z.begin(), z.end(), out.begin() + i * p.d_o);
    }
    return out;
}

} // namespace

TrainResult train_adapter(const Datastore& ds, const TrainConfig& cfg) {
    if (ds.empty()) throw Error(ErrorKind::contract, "cannot train on an empty datastore");
    if (cfg.M < 1 || cfg.N < 1) throw Error(ErrorKind::config, "M and N must be >= 1");
    if (cfg.K < cfg.N) throw Error(ErrorKind::config, "K must be >= N");
    if (cfg.T_prime <= 0.0) throw Error(ErrorKind::config, "T_prime must be positive");
    if (cfg.batch_size < 1) throw Error(ErrorKind::config, "batch_size must be >= 1");

    ClusterIndex ci = partition_clusters(ds);
    if (ci.nonempty_tokens.size() < std::size_t(cfg.N) + 1)
        throw Error(ErrorKind::contract,
                    "not enough nonempty clusters to mine " + std::to_string(cfg.N) + " negatives");

    // anchors with singleton clusters cannot produce a distinct positive
    std::vector<std::uint32_t> eligible;
    for (std::uint32_t i = 0; i < ds.size(); ++i)
        if (ci.cluster_size(ds.token(i)) >= 2) eligible.push_back(i);
    if (eligible.empty())
        throw Error(ErrorKind::contract, "every cluster is a singleton; nothing to train on");

    Rng init_rng(mix_seed(cfg.seed, 1));
    TrainResult result;
    result.params = init_adapter(ds.dim(), cfg.d_f, cfg.d_o, init_rng);
    if (cfg.steps == 0) return result;

    const bool mine_in_input_space = cfg.refresh_interval == 0;
    ClusterIndex mine_ci = ci;
    if (!mine_in_input_space)
        refresh_centers(mine_ci, forward_all(ds, result.params), cfg.d_o);

    Rng rng(mix_seed(cfg.seed, 2));
    const SamplerConfig scfg{cfg.M, cfg.N, cfg.K, cfg.seed};
    AdamState adam(result.params);
    AdapterGrads batch_grads, anchor_grads;
    std::vector<Vec> h_pos(cfg.M), h_neg(cfg.N);
    result.log.reserve(cfg.steps);

    for (std::uint32_t step = 1; step <= cfg.steps; ++step) {
        if (!mine_in_input_space && step > 1 && (step - 1) % cfg.refresh_interval == 0)
            refresh_centers(mine_ci, forward_all(ds, result.params), cfg.d_o);

        zero_like(result.params, batch_grads);
        double batch_loss = 0.0;
        for (std::uint32_t b = 0; b < cfg.batch_size; ++b) {
            const std::uint32_t anchor = eligible[rng.uniform_index(eligible.size())];
            const Vec h_anchor = ds.key_f64(anchor);
            const auto positives = sample_positives(anchor, ci, cfg.M, rng);
            const Vec anchor_key = mine_in_input_space
                                       ? h_anchor
                                       : ffn_forward(h_anchor, result.params);
            const auto negatives =
                mine_hard_negatives(anchor_key, ds.token(anchor), mine_ci, scfg, rng);
            for (std::uint32_t i = 0; i < cfg.M; ++i) h_pos[i] = ds.key_f64((*positives)[i]);
            for (std::uint32_t j = 0; j < cfg.N; ++j) h_neg[j] = ds.key_f64(negatives[j]);
            batch_loss += loss_gradients(h_anchor, h_pos, h_neg, result.params, cfg.T_prime,
                                         anchor_grads, cfg.stop_gradient_samples);
            accumulate(batch_grads, anchor_grads);
        }
        scale(batch_grads, 1.0 / double(cfg.batch_size));
        batch_loss /= double(cfg.batch_size);
        if (cfg.optimizer == Optimizer::adam)
            adam.step(result.params, batch_grads, cfg.learning_rate);
        else
            sgd_step(result.params, batch_grads, cfg.learning_rate);
        result.log.push_back({step, batch_loss, grad_norm_of(batch_grads)});
    }
    return result;
}

void save_adapter(const AdapterParams& p, const std::filesystem::path& path) {
    check_params(p);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), 4);
    out.write(reinterpret_cast<const char*>(&p.d), 4);
    out.write(reinterpret_cast<const char*>(&p.d_f), 4);
    out.write(reinterpret_cast<const char*>(&p.d_o), 4);
    auto dump = [&out](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    dump(p.w1);
    dump(p.b1);
    dump(p.w2);
    dump(p.b2);
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

AdapterParams load_adapter(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open adapter file " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw Error(ErrorKind::io, "bad magic in " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || version != kVersion)
        throw Error(ErrorKind::io, "unsupported adapter version in " + path.string());
    AdapterParams p;
    in.read(reinterpret_cast<char*>(&p.d), 4);
    in.read(reinterpret_cast<char*>(&p.d_f), 4);
    in.read(reinterpret_cast<char*>(&p.d_o), 4);
    if (!in || p.d == 0 || p.d_f == 0 || p.d_o == 0)
        throw Error(ErrorKind::io, "corrupt adapter header in " + path.string());
    auto slurp = [&in, &path](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
            throw Error(ErrorKind::io, "truncated adapter file " + path.string());
    };
    slurp(p.w1, std::size_t(p.d) * p.d_f);
    slurp(p.b1, p.d_f);
    slurp(p.w2, std::size_t(p.d_f) * p.d_o);
    slurp(p.b2, p.d_o);
    return p;
}

void write_training_log_csv(const std::filesystem::path& path, std::span<const LossReport> log) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out << "step,loss,grad_norm\n";
    char buf[96];
    for (const LossReport& r : log) {
        std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g\n", r.step, r.loss, r.grad_norm);
        out << buf;
    }
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

} // namespace clknn
