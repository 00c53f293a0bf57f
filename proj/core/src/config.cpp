#include "fedtt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fedtt {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("key \"") + key + "\": " + e.what());
    }
}

void parse_synthesis(const json& j, SynthesisSpec& spec) {
    reject_unknown(j, {"cities", "series_length", "noise_level", "missing_rate",
                       "interval_minutes", "amplitude", "spatial_strength"},
                   "data.synthesis");
    if (!j.contains("cities") || !j.at("cities").is_array() || j.at("cities").empty())
        throw ConfigError("data.synthesis.cities: a non-empty array is required");
    spec.cities.clear();
    std::size_t idx = 0;
    for (const json& cj : j.at("cities")) {
        reject_unknown(cj, {"sensors", "scale", "offset"},
                       "data.synthesis.cities[" + std::to_string(idx) + "]");
        CitySpec c;
        c.sensors = get_or<std::size_t>(cj, "sensors", 8);
        if (cj.contains("scale")) {
            const auto v = cj.at("scale").get<std::vector<double>>();
            if (v.size() != kDefaultFeatures)
                throw ConfigError("city scale must list one value per feature");
            for (std::size_t f = 0; f < kDefaultFeatures; ++f) c.feature_scale[f] = v[f];
        }
        if (cj.contains("offset")) {
            const auto v = cj.at("offset").get<std::vector<double>>();
            if (v.size() != kDefaultFeatures)
                throw ConfigError("city offset must list one value per feature");
            for (std::size_t f = 0; f < kDefaultFeatures; ++f) c.feature_offset[f] = v[f];
        }
        spec.cities.push_back(c);
        ++idx;
    }
    spec.series_length = get_or<std::size_t>(j, "series_length", spec.series_length);
    spec.noise_level = get_or<double>(j, "noise_level", spec.noise_level);
    spec.missing_rate = get_or<double>(j, "missing_rate", spec.missing_rate);
    spec.interval_minutes = get_or<double>(j, "interval_minutes", spec.interval_minutes);
    spec.amplitude = get_or<double>(j, "amplitude", spec.amplitude);
    spec.spatial_strength = get_or<double>(j, "spatial_strength", spec.spatial_strength);
    if (spec.cities.size() < 2)
        throw ConfigError("data.synthesis.cities: need at least one source and the target");
}

void parse_tvi(const json& j, ExperimentConfig& cfg) {
    reject_unknown(j, {"heads", "head_dim", "feature_hidden", "subview_budget",
                       "temporal_window", "spatial_epochs", "temporal_epochs", "step",
                       "holdout_fraction"},
                   "tvi");
    cfg.tvi.heads = get_or<std::size_t>(j, "heads", cfg.tvi.heads);
    cfg.tvi.head_dim = get_or<std::size_t>(j, "head_dim", cfg.tvi.head_dim);
    cfg.tvi.feature_hidden = get_or<std::size_t>(j, "feature_hidden", cfg.tvi.feature_hidden);
    cfg.tvi.subview_budget = get_or<std::size_t>(j, "subview_budget", cfg.tvi.subview_budget);
    cfg.tvi.temporal_window = get_or<std::size_t>(j, "temporal_window", cfg.tvi.temporal_window);
    cfg.tvi_spatial_epochs = get_or<std::size_t>(j, "spatial_epochs", cfg.tvi_spatial_epochs);
    cfg.tvi_temporal_epochs = get_or<std::size_t>(j, "temporal_epochs", cfg.tvi_temporal_epochs);
    cfg.tvi_step = get_or<double>(j, "step", cfg.tvi_step);
    cfg.impute_holdout_fraction =
        get_or<double>(j, "holdout_fraction", cfg.impute_holdout_fraction);
}

void parse_federation(const json& j, FederationConfig& f) {
    reject_unknown(j,
                   {"rounds", "batches_per_round", "lambda1", "lambda2", "generator_step",
                    "discriminator_step", "freeze_period_server", "freeze_period_client",
                    "window_in", "window_out", "train_fraction", "val_fraction",
                    "test_fraction", "tda_hidden", "transform_fit_steps", "predictor",
                    "predictor_epochs_per_round", "predictor_final_epochs", "predictor_step",
                    "transport", "tcp_port", "serialized", "transport_timeout_s"},
                   "federation");
    f.rounds = get_or<std::size_t>(j, "rounds", f.rounds);
    f.batches_per_round = get_or<std::size_t>(j, "batches_per_round", f.batches_per_round);
    f.lambda1 = get_or<double>(j, "lambda1", f.lambda1);
    f.lambda2 = get_or<double>(j, "lambda2", f.lambda2);
    f.generator_step = get_or<double>(j, "generator_step", f.generator_step);
    f.discriminator_step = get_or<double>(j, "discriminator_step", f.discriminator_step);
    f.freeze_period_server =
        get_or<std::size_t>(j, "freeze_period_server", f.freeze_period_server);
    f.freeze_period_client =
        get_or<std::size_t>(j, "freeze_period_client", f.freeze_period_client);
    f.window_in = get_or<std::size_t>(j, "window_in", f.window_in);
    f.window_out = get_or<std::size_t>(j, "window_out", f.window_out);
    f.train_fraction = get_or<double>(j, "train_fraction", f.train_fraction);
    f.val_fraction = get_or<double>(j, "val_fraction", f.val_fraction);
    f.test_fraction = get_or<double>(j, "test_fraction", f.test_fraction);
    f.tda_hidden = get_or<std::size_t>(j, "tda_hidden", f.tda_hidden);
    f.transform_fit_steps = get_or<std::size_t>(j, "transform_fit_steps", f.transform_fit_steps);
    f.predictor_kind = get_or<std::string>(j, "predictor", f.predictor_kind);
    f.predictor_epochs_per_round =
        get_or<std::size_t>(j, "predictor_epochs_per_round", f.predictor_epochs_per_round);
    f.predictor_final_epochs =
        get_or<std::size_t>(j, "predictor_final_epochs", f.predictor_final_epochs);
    f.predictor_step = get_or<double>(j, "predictor_step", f.predictor_step);
    if (j.contains("transport")) {
        const std::string t = j.at("transport").get<std::string>();
        if (t == "inproc")
            f.transport = FederationConfig::Transport::inproc;
        else if (t == "tcp")
            f.transport = FederationConfig::Transport::tcp;
        else
            throw ConfigError("federation.transport must be \"inproc\" or \"tcp\"");
    }
    f.tcp_port = get_or<std::uint16_t>(j, "tcp_port", f.tcp_port);
    f.serialized = get_or<bool>(j, "serialized", f.serialized);
    f.transport_timeout_s = get_or<double>(j, "transport_timeout_s", f.transport_timeout_s);
    if (f.rounds > 0 && f.batches_per_round == 0)
        throw ConfigError("federation.batches_per_round must be >= 1");
    if (f.lambda1 < 0 || f.lambda2 < 0) throw ConfigError("lambda weights must be >= 0");
    if (f.freeze_period_server == 0 || f.freeze_period_client == 0)
        throw ConfigError("freeze periods must be >= 1");
    if (f.predictor_kind != "linear_ar" && f.predictor_kind != "historical_mean")
        throw ConfigError("federation.predictor must be \"linear_ar\" or \"historical_mean\"");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"seed", "deterministic", "out_dir", "data", "tvi", "federation",
                       "run_baseline"},
                   "config");
    ExperimentConfig cfg;
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.deterministic = get_or<bool>(j, "deterministic", cfg.deterministic);
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);
    cfg.run_baseline = get_or<bool>(j, "run_baseline", cfg.run_baseline);

    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown(d, {"synthesis", "source_dirs", "target_dir"}, "data");
        if (d.contains("synthesis")) {
            cfg.has_synthesis = true;
            parse_synthesis(d.at("synthesis"), cfg.synthesis);
        }
        if (d.contains("source_dirs"))
            cfg.source_dirs = d.at("source_dirs").get<std::vector<std::string>>();
        if (d.contains("target_dir")) cfg.target_dir = d.at("target_dir").get<std::string>();
        if (!cfg.has_synthesis && (cfg.source_dirs.empty() || cfg.target_dir.empty()))
            throw ConfigError("data: either synthesis or source_dirs+target_dir is required");
    } else {
        throw ConfigError("config: missing \"data\" section");
    }

    if (j.contains("tvi")) parse_tvi(j.at("tvi"), cfg);
    if (j.contains("federation")) parse_federation(j.at("federation"), cfg.federation);

    cfg.federation.seed = cfg.seed;
    cfg.federation.deterministic = cfg.deterministic;
    cfg.tvi.seed = cfg.seed;
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str());
}

void apply_overrides(ExperimentConfig& cfg, const CliOverrides& overrides) {
    if (overrides.seed) {
        cfg.seed = *overrides.seed;
        cfg.federation.seed = *overrides.seed;
        cfg.tvi.seed = *overrides.seed;
    }
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
    if (overrides.deterministic) {
        cfg.deterministic = *overrides.deterministic;
        cfg.federation.deterministic = *overrides.deterministic;
    }
}

}  // namespace fedtt
