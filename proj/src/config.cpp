#include "clknn/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace clknn {

namespace {

using nlohmann::json;

double as_double(const json& v, const std::string& key) {
    if (!v.is_number()) throw Error(ErrorKind::config, "config key '" + key + "' must be a number");
    return v.get<double>();
}

std::uint64_t as_u64(const json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw Error(ErrorKind::config, "config key '" + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

std::uint32_t as_u32(const json& v, const std::string& key) {
    const std::uint64_t x = as_u64(v, key);
    if (x > 0xffffffffULL)
        throw Error(ErrorKind::config, "config key '" + key + "' is too large");
    return static_cast<std::uint32_t>(x);
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw Error(ErrorKind::config, "config key '" + key + "' must be a boolean");
    return v.get<bool>();
}

std::vector<std::uint32_t> as_u32_list(const json& v, const std::string& key) {
    if (!v.is_array() || v.empty())
        throw Error(ErrorKind::config, "config key '" + key + "' must be a nonempty array");
    std::vector<std::uint32_t> out;
    out.reserve(v.size());
    for (const auto& e : v) out.push_back(as_u32(e, key));
    return out;
}

void apply_paper_preset(PipelineConfig& cfg) {
    cfg.train.M = 2;
    cfg.train.N = 32;
    cfg.train.K = 128;
    cfg.train.T_prime = 0.01;
    cfg.train.batch_size = 32;
    cfg.train.d_f = 4096;
    cfg.train.d_o = 512;
    cfg.pca_dim = 128;
}

void validate(const PipelineConfig& cfg) {
    const auto& t = cfg.train;
    if (t.M < 1 || t.N < 1) throw Error(ErrorKind::config, "M and N must be >= 1");
    if (t.K < t.N) throw Error(ErrorKind::config, "K must be >= N");
    if (t.T_prime <= 0.0) throw Error(ErrorKind::config, "T_prime must be positive");
    if (t.batch_size < 1) throw Error(ErrorKind::config, "batch_size must be >= 1");
    if (t.d_f < 1 || t.d_o < 1) throw Error(ErrorKind::config, "d_f and d_o must be >= 1");
    const auto& r = cfg.retrieval;
    if (r.k < 1) throw Error(ErrorKind::config, "k must be >= 1");
    if (r.T <= 0.0) throw Error(ErrorKind::config, "T must be positive");
    if (r.lambda < 0.0 || r.lambda > 1.0) throw Error(ErrorKind::config, "lambda must be in [0, 1]");
    const auto& s = cfg.synth;
    if (s.vocab_size < 1 || s.dim < 1)
        throw Error(ErrorKind::config, "vocab_size and dim must be >= 1");
    if (s.train_count < 1 || s.heldout_count < 1)
        throw Error(ErrorKind::config, "train_count and heldout_count must be >= 1");
    if (s.cluster_spread <= 0.0 || s.center_scale <= 0.0)
        throw Error(ErrorKind::config, "cluster_spread and center_scale must be positive");
    if (s.zipf_exponent < 0.0) throw Error(ErrorKind::config, "zipf_exponent must be nonnegative");
    if (s.heldout_shift < 0.0) throw Error(ErrorKind::config, "heldout_shift must be nonnegative");
    if (cfg.pca_dim < 1) throw Error(ErrorKind::config, "pca_dim must be >= 1");
}

} // namespace

PipelineConfig parse_pipeline_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::config, "config must be a JSON object");

    PipelineConfig cfg;
    if (auto it = j.find("preset"); it != j.end()) {
        if (!it->is_string())
            throw Error(ErrorKind::config, "config key 'preset' must be \"desk\" or \"paper\"");
        const std::string preset = it->get<std::string>();
        if (preset == "paper")
            apply_paper_preset(cfg);
        else if (preset != "desk")
            throw Error(ErrorKind::config, "unknown preset '" + preset + "'");
    }

    for (const auto& [key, value] : j.items()) {
        if (key == "preset") continue;
        // synth
        else if (key == "vocab_size") cfg.synth.vocab_size = as_u32(value, key);
        else if (key == "dim") cfg.synth.dim = as_u32(value, key);
        else if (key == "zipf_exponent") cfg.synth.zipf_exponent = as_double(value, key);
        else if (key == "cluster_spread") cfg.synth.cluster_spread = as_double(value, key);
        else if (key == "center_scale") cfg.synth.center_scale = as_double(value, key);
        else if (key == "train_count") cfg.synth.train_count = as_u32(value, key);
        else if (key == "heldout_count") cfg.synth.heldout_count = as_u32(value, key);
        else if (key == "heldout_shift") cfg.synth.heldout_shift = as_double(value, key);
        // training
        else if (key == "M") cfg.train.M = as_u32(value, key);
        else if (key == "N") cfg.train.N = as_u32(value, key);
        else if (key == "K") cfg.train.K = as_u32(value, key);
        else if (key == "T_prime") cfg.train.T_prime = as_double(value, key);
        else if (key == "d_f") cfg.train.d_f = as_u32(value, key);
        else if (key == "d_o") cfg.train.d_o = as_u32(value, key);
        else if (key == "batch_size") cfg.train.batch_size = as_u32(value, key);
        else if (key == "steps") cfg.train.steps = as_u32(value, key);
        else if (key == "learning_rate") cfg.train.learning_rate = as_double(value, key);
        else if (key == "refresh_interval") cfg.train.refresh_interval = as_u32(value, key);
        else if (key == "stop_gradient_samples")
            cfg.train.stop_gradient_samples = as_bool(value, key);
        else if (key == "optimizer") {
            const std::string name = value.is_string() ? value.get<std::string>() : "";
            if (name == "adam") cfg.train.optimizer = Optimizer::adam;
            else if (name == "sgd") cfg.train.optimizer = Optimizer::sgd;
            else throw Error(ErrorKind::config, "optimizer must be \"adam\" or \"sgd\"");
        }
        // retrieval
        else if (key == "k") cfg.retrieval.k = as_u32(value, key);
        else if (key == "T") cfg.retrieval.T = as_double(value, key);
        else if (key == "lambda") cfg.retrieval.lambda = as_double(value, key);
        else if (key == "metric") {
            const std::string name = value.is_string() ? value.get<std::string>() : "";
            if (name == "l2") cfg.retrieval.metric = Metric::l2;
            else if (name == "ip") cfg.retrieval.metric = Metric::inner_product;
            else throw Error(ErrorKind::config, "metric must be \"l2\" or \"ip\"");
        }
        else if (key == "use_adaptive_lambda")
            cfg.retrieval.use_adaptive_lambda = as_bool(value, key);
        // projection / predictor / reports
        else if (key == "pca_dim") cfg.pca_dim = as_u32(value, key);
        else if (key == "predictor_epochs") cfg.predictor_epochs = as_u32(value, key);
        else if (key == "predictor_lr") cfg.predictor_lr = as_double(value, key);
        else if (key == "curve_ks") cfg.curve_ks = as_u32_list(value, key);
        else if (key == "grid_M") cfg.grid_M = as_u32_list(value, key);
        else if (key == "grid_N") cfg.grid_N = as_u32_list(value, key);
        else if (key == "seed") cfg.seed = as_u64(value, key);
        else
            throw Error(ErrorKind::config, "unknown config key '" + key + "'");
    }

    validate(cfg);
    reseed_pipeline(cfg, cfg.seed);
    return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_pipeline_config_json(ss.str());
}

void reseed_pipeline(PipelineConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.synth.seed = mix_seed(seed, 11);
    cfg.train.seed = mix_seed(seed, 12);
    cfg.predictor_seed = mix_seed(seed, 13);
}

} // namespace clknn
