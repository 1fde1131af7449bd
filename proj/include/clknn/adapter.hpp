#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "clknn/common.hpp"
#include "clknn/datastore.hpp"
#include "clknn/rng.hpp"

namespace clknn {

/// FFN retrieval adapter: z = ReLU(h W1 + b1) W2 + b2.
struct AdapterParams {
    std::uint32_t d = 0;
    std::uint32_t d_f = 0;
    std::uint32_t d_o = 0;
    std::vector<double> w1; // d x d_f, row-major
    Vec b1;                 // d_f
    std::vector<double> w2; // d_f x d_o, row-major
    Vec b2;                 // d_o
};

// Gradients share the parameter layout.
using AdapterGrads = AdapterParams;

enum class Optimizer { adam, sgd };

struct TrainConfig {
    std::uint32_t M = 2;                 // positives per anchor
    std::uint32_t N = 8;                 // negatives per anchor
    std::uint32_t K = 16;                // nearest-cluster pool, K >= N
    double T_prime = 0.01;               // training temperature
    std::uint32_t d_f = 64;
    std::uint32_t d_o = 32;
    std::uint32_t batch_size = 32;
    std::uint32_t steps = 2000;
    double learning_rate = 1e-3;
    std::uint32_t refresh_interval = 1000; // 0 = mine in the raw input space, never refreshed
    std::uint64_t seed = 42;
    bool stop_gradient_samples = false;  // treat positive/negative encodings as constants
    Optimizer optimizer = Optimizer::adam;
};

struct LossReport {
    std::uint32_t step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
};

struct TrainResult {
    AdapterParams params;
    std::vector<LossReport> log;
};

Vec ffn_forward(std::span<const double> h, const AdapterParams& p);

// (1/T') * cos(a, b); errors on zero-norm inputs.
double cosine_score(std::span<const double> a, std::span<const double> b, double t_prime);

// Loss given already-scaled scores; log-sum-exp with max shift.
double contrastive_loss_from_scores(std::span<const double> pos_scores,
                                    std::span<const double> neg_scores);

double contrastive_loss(std::span<const double> anchor_z,
                        const std::vector<Vec>& positives_z,
                        const std::vector<Vec>& negatives_z, double t_prime);

// Analytic gradients of contrastive_loss(ffn(h_anchor), {ffn(h_pos)}, {ffn(h_neg)})
// w.r.t. all adapter parameters, accumulated into `grads` (zeroed first).
// Returns the loss.
double loss_gradients(std::span<const double> h_anchor,
                      const std::vector<Vec>& h_positives,
                      const std::vector<Vec>& h_negatives,
                      const AdapterParams& p, double t_prime, AdapterGrads& grads,
                      bool stop_gradient_samples = false);

// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
AdapterParams init_adapter(std::uint32_t d, std::uint32_t d_f, std::uint32_t d_o, Rng& rng);

TrainResult train_adapter(const Datastore& ds, const TrainConfig& cfg);

void save_adapter(const AdapterParams& p, const std::filesystem::path& path);
AdapterParams load_adapter(const std::filesystem::path& path);

void write_training_log_csv(const std::filesystem::path& path,
                            std::span<const LossReport> log);

} // namespace clknn
