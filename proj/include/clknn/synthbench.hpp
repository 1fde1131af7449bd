#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clknn/adapter.hpp"
#include "clknn/datastore.hpp"
#include "clknn/projection.hpp"
#include "clknn/retrieval.hpp"

namespace clknn {

/// Gaussian cluster per token, cluster centers themselves Gaussian, token
/// frequencies Zipf-skewed. Stand-in for a forced-decoding datastore.
struct SynthConfig {
    std::uint32_t vocab_size = 50;
    std::uint32_t dim = 32;
    double zipf_exponent = 1.0;
    double cluster_spread = 0.8;
    double center_scale = 1.0;
    std::uint32_t train_count = 20000;
    std::uint32_t heldout_count = 2000;
    // Heldout cluster centers perturbed by N(0, (shift*spread)^2 I); 0 keeps
    // train and heldout on identical centers.
    double heldout_shift = 0.0;
    std::uint64_t seed = 42;
};

struct SynthData {
    Datastore train;
    Datastore heldout;
};

SynthData generate_synth(const SynthConfig& cfg);

/// Multinomial logistic model standing in for the base predictor p_c.
struct ToyPredictor {
    std::uint32_t dim = 0;
    std::uint32_t vocab_size = 0;
    std::vector<double> weight; // vocab_size x dim, row-major
    Vec bias;

    Vec probs(std::span<const double> h) const;
};

struct PredictorTrainResult {
    ToyPredictor predictor;
    Vec epoch_loss; // mean cross-entropy after each epoch
};

// Full-batch gradient descent on cross-entropy from a zero init.
PredictorTrainResult train_toy_predictor(const Datastore& store, std::uint32_t epochs,
                                         double lr, std::uint64_t seed);

double predictor_accuracy(const ToyPredictor& predictor, const Datastore& ds);

struct AccuracyCurve {
    std::vector<std::uint32_t> ks;
    Vec accuracies;
};

// Mean over queries of (top-k neighbors carrying the query's token) / k.
double retrieval_accuracy(const Datastore& queries, const Datastore& store,
                          std::uint32_t k, Metric metric, int threads = 1);

AccuracyCurve retrieval_accuracy_curve(const Datastore& queries, const Datastore& store,
                                       std::span<const std::uint32_t> ks, Metric metric,
                                       int threads = 1);

struct EvalReport {
    std::string method;      // "raw" or "clknn"
    double acc_pc = 0.0;
    double acc_pr = 0.0;
    double acc_pknn = 0.0;
    std::string lambda_mode; // "fixed:<v>" or "adaptive:<v>"
    AccuracyCurve curve;
};

// Next-token accuracy of p_c, p_r and the interpolated p_knn over heldout
// queries, plus the retrieval-accuracy curve of the chosen representation.
// adapter/pca may be null: raw keys with L2 when both are absent, the full
// adapter -> PCA -> normalize -> inner-product path when both are present.
EvalReport evaluate_pipeline(const Datastore& heldout, const Datastore& store,
                             const ToyPredictor& predictor, const AdapterParams* adapter,
                             const PcaModel* pca, const RetrievalConfig& rcfg,
                             std::span<const std::uint32_t> curve_ks, int threads = 1);

void write_curve_csv(const std::filesystem::path& path, const AccuracyCurve& curve);
void write_summary_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);

} // namespace clknn
