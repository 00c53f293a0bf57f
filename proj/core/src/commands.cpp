#include "fedtt/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "fedtt/checkpoint.hpp"
#include "fedtt/report.hpp"
#include "fedtt/rng.hpp"
#include "fedtt/tvi.hpp"

namespace fs = std::filesystem;

namespace fedtt {

namespace {

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("FEDTT_LOG");
        if (env == nullptr) return 1;
        const std::string v(env);
        if (v == "quiet" || v == "error" || v == "0") return 0;
        if (v == "debug" || v == "2") return 2;
        return 1;
    }();
    return level;
}

std::string city_name(std::size_t index, std::size_t total) {
    return index + 1 == total ? std::string("target") : "source_" + std::to_string(index);
}

struct Manifest {
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::size_t>> cities;  // name -> sensor count
};

void write_manifest(const Manifest& m, const fs::path& path) {
    nlohmann::json j;
    j["seed"] = m.seed;
    nlohmann::json cities = nlohmann::json::array();
    for (const auto& [name, sensors] : m.cities)
        cities.push_back({{"name", name}, {"sensors", sensors}});
    j["cities"] = cities;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.at("cities"))
        m.cities.push_back({c.at("name").get<std::string>(), c.at("sensors").get<std::size_t>()});
    return m;
}

std::size_t infer_sensor_count(const fs::path& dir) {
    // Fallback when no manifest is present: largest index seen in either CSV.
    std::size_t max_idx = 0;
    bool any = false;
    for (const char* file : {"adjacency.csv", "readings.csv"}) {
        std::ifstream in(dir / file);
        if (!in) continue;
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string a, b;
            std::getline(ls, a, ',');
            std::getline(ls, b, ',');
            try {
                if (std::string(file) == "adjacency.csv") {
                    max_idx = std::max({max_idx, std::stoul(a), std::stoul(b)});
                } else {
                    max_idx = std::max(max_idx, std::stoul(b));
                }
                any = true;
            } catch (const std::exception&) {
                throw DataError((dir / file).string() + ": malformed index column");
            }
        }
    }
    if (!any) throw DataError(dir.string() + ": no readable dataset rows");
    return max_idx + 1;
}

CityData load_city_dir(const fs::path& dir, std::size_t sensors) {
    CityData cd;
    cd.network = load_adjacency_csv((dir / "adjacency.csv").string(), sensors);
    validate_network(cd.network);
    cd.series = load_readings_csv((dir / "readings.csv").string(), sensors);
    return cd;
}

std::vector<CityData> load_dataset_root(const fs::path& root) {
    const fs::path manifest_path = root / "manifest.json";
    std::vector<CityData> cities;
    if (fs::exists(manifest_path)) {
        const Manifest m = read_manifest(manifest_path);
        for (const auto& [name, sensors] : m.cities)
            cities.push_back(load_city_dir(root / name, sensors));
    } else {
        throw DataError(root.string() + ": missing manifest.json");
    }
    return cities;
}

// Holds out a fraction of the observed sensor-rows so imputation quality is
// measurable against known truth.
TrafficSeries mask_holdout(const TrafficSeries& series, double fraction, std::uint64_t seed,
                           std::vector<std::pair<std::size_t, std::size_t>>& held_out) {
    Rng rng(seed);
    TrafficSeries reduced = series;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const TrafficFrame& f = series.frames[t];
        for (std::size_t s = 0; s < f.sensors(); ++s) {
            if (!f.available(s)) continue;
            if (rng.uniform01() < fraction && f.available_count() > 1 &&
                reduced.frames[t].available_count() > 1) {
                reduced.frames[t].availability[s] = 0;
                held_out.push_back({t, s});
            }
        }
    }
    return reduced;
}

double holdout_mae(const TrafficSeries& truth, const TrafficSeries& filled,
                   const std::vector<std::pair<std::size_t, std::size_t>>& cells) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& [t, s] : cells) {
        for (std::size_t f = 0; f < truth.features(); ++f) {
            total += std::abs(filled.frames[t].values(s, f) - truth.frames[t].values(s, f));
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

// Per-sensor mean over the frames where the sensor is observed.
TrafficSeries mean_fill(const TrafficSeries& series) {
    const std::size_t sensors = series.sensors();
    const std::size_t features = series.features();
    Mat sums(sensors, features);
    std::vector<std::size_t> counts(sensors, 0);
    for (const TrafficFrame& f : series.frames)
        for (std::size_t s = 0; s < sensors; ++s) {
            if (!f.available(s)) continue;
            ++counts[s];
            for (std::size_t c = 0; c < features; ++c) sums(s, c) += f.values(s, c);
        }
    TrafficSeries out = series;
    for (auto& frame : out.frames) {
        for (std::size_t s = 0; s < sensors; ++s) {
            if (frame.available(s)) continue;
            for (std::size_t c = 0; c < features; ++c)
                frame.values(s, c) = counts[s] ? sums(s, c) / static_cast<double>(counts[s]) : 0.0;
            frame.availability[s] = 1;
        }
    }
    return out;
}

struct TrainedTvi {
    SpatialModelParams spatial;
    TemporalModelParams temporal;
};

TrainedTvi train_tvi_models(const TrafficSeries& series, const DistanceMatrix& dist,
                            const ExperimentConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    TrainedTvi models{SpatialModelParams::make(series.sensors(), series.features(), cfg.tvi, rng),
                      TemporalModelParams::make(cfg.tvi.temporal_window)};
    OptConfig sopt;
    sopt.step = cfg.tvi_step;
    sopt.epochs = cfg.tvi_spatial_epochs;
    train_spatial(models.spatial, series, dist, sopt, cfg.tvi.subview_budget, seed);

    const auto features = sensor_features(dist, models.spatial);
    TrafficSeries extended = series;
    for (std::size_t t = 0; t < series.size(); ++t) {
        if (series.frames[t].fully_observed()) continue;
        const TrafficView view =
            build_subviews(series.frames[t], cfg.tvi.subview_budget, Rng::mix(seed, t));
        extended.frames[t] = spatial_extend(series.frames[t], view, features, models.spatial);
    }
    OptConfig topt;
    topt.step = cfg.tvi_step;
    topt.epochs = cfg.tvi_temporal_epochs;
    train_temporal(models.temporal, extended, topt);
    return models;
}

}  // namespace

void log_info(const std::string& line) {
    if (log_level() >= 1) std::cerr << "[fedtt] " << line << '\n';
}

void log_debug(const std::string& line) {
    if (log_level() >= 2) std::cerr << "[fedtt:debug] " << line << '\n';
}

void cmd_gen_data(const ExperimentConfig& cfg) {
    if (!cfg.has_synthesis)
        throw ConfigError("gen-data requires a data.synthesis section");
    const auto cities = synthesize_multi_city(cfg.synthesis, cfg.seed);
    const fs::path root = fs::path(cfg.out_dir) / "data";
    fs::create_directories(root);
    Manifest manifest;
    manifest.seed = cfg.seed;
    for (std::size_t k = 0; k < cities.size(); ++k) {
        const std::string name = city_name(k, cities.size());
        const fs::path dir = root / name;
        fs::create_directories(dir);
        save_adjacency_csv(cities[k].network, (dir / "adjacency.csv").string());
        save_readings_csv(cities[k].series, (dir / "readings.csv").string());
        manifest.cities.push_back({name, cities[k].network.sensor_count});
        log_info("wrote " + dir.string());
    }
    write_manifest(manifest, root / "manifest.json");
}

ImputeOutcome cmd_impute(const ExperimentConfig& cfg) {
    const fs::path data_root = fs::path(cfg.out_dir) / "data";
    std::vector<CityData> cities;
    std::vector<std::string> names;
    Manifest manifest;
    if (fs::exists(data_root / "manifest.json")) {
        manifest = read_manifest(data_root / "manifest.json");
        for (const auto& [name, sensors] : manifest.cities) {
            cities.push_back(load_city_dir(data_root / name, sensors));
            names.push_back(name);
        }
    } else if (cfg.has_synthesis) {
        cities = synthesize_multi_city(cfg.synthesis, cfg.seed);
        manifest.seed = cfg.seed;
        for (std::size_t k = 0; k < cities.size(); ++k) {
            names.push_back(city_name(k, cities.size()));
            manifest.cities.push_back({names.back(), cities[k].network.sensor_count});
        }
    } else {
        throw DataError("impute: no dataset found under " + data_root.string() +
                        " (run gen-data first)");
    }

    const fs::path imputed_root = fs::path(cfg.out_dir) / "imputed";
    const fs::path ckpt_root = fs::path(cfg.out_dir) / "checkpoints";
    fs::create_directories(imputed_root);
    fs::create_directories(ckpt_root);

    // Each city's models are independent, so the training runs concurrently;
    // results are collected and written in city order afterwards.
    struct CityOutcome {
        TrafficSeries completed;
        bool trained = false;
        TrainedTvi models;
        std::size_t held_out_rows = 0;
        double holdout = 0.0;
        double meanfill = 0.0;
        std::exception_ptr error;
    };
    std::vector<CityOutcome> outcomes(cities.size());

    auto impute_city = [&](std::size_t k) {
        CityOutcome& out = outcomes[k];
        try {
            const CityData& city = cities[k];
            if (city.series.fully_observed()) {
                out.completed = city.series;
                for (auto& f : out.completed.frames) f.imputed.assign(f.sensors(), 0);
                return;
            }
            const DistanceMatrix dist = shortest_distance_matrix(city.network);
            const std::uint64_t seed = Rng::mix(cfg.seed, 0x494d5055ull + k);

            std::vector<std::pair<std::size_t, std::size_t>> held_out;
            const TrafficSeries reduced =
                mask_holdout(city.series, cfg.impute_holdout_fraction, seed, held_out);
            out.models = train_tvi_models(reduced, dist, cfg, seed);
            out.trained = true;
            out.held_out_rows = held_out.size();

            if (!held_out.empty()) {
                const TrafficSeries eval_fill =
                    impute(reduced, out.models.spatial, out.models.temporal, dist,
                           cfg.tvi.subview_budget, seed);
                out.holdout = holdout_mae(city.series, eval_fill, held_out);
                out.meanfill = holdout_mae(city.series, mean_fill(reduced), held_out);
            }
            out.completed = impute(city.series, out.models.spatial, out.models.temporal,
                                   dist, cfg.tvi.subview_budget, seed);
        } catch (...) {
            out.error = std::current_exception();
        }
    };

    {
        std::vector<std::thread> workers;
        workers.reserve(cities.size());
        for (std::size_t k = 0; k < cities.size(); ++k) workers.emplace_back(impute_city, k);
        for (auto& w : workers) w.join();
    }

    double holdout_sum = 0.0, meanfill_sum = 0.0;
    std::size_t measured = 0;
    for (std::size_t k = 0; k < cities.size(); ++k) {
        CityOutcome& out = outcomes[k];
        if (out.error) std::rethrow_exception(out.error);
        const fs::path dir = imputed_root / names[k];
        fs::create_directories(dir);
        save_adjacency_csv(cities[k].network, (dir / "adjacency.csv").string());
        save_readings_csv(out.completed, (dir / "readings.csv").string(), true);
        if (!out.trained) {
            log_info(names[k] + ": fully observed, passed through");
            continue;
        }
        save_tvi_checkpoint((ckpt_root / ("tvi_" + names[k] + ".bin")).string(),
                            out.models.spatial, out.models.temporal);
        if (out.held_out_rows) {
            holdout_sum += out.holdout;
            meanfill_sum += out.meanfill;
            ++measured;
        }
        log_info(names[k] + ": imputed " + std::to_string(out.held_out_rows) +
                 " held-out rows for validation");
    }
    write_manifest(manifest, imputed_root / "manifest.json");

    ImputeOutcome outcome;
    if (measured) {
        outcome.holdout_mae = holdout_sum / static_cast<double>(measured);
        outcome.meanfill_mae = meanfill_sum / static_cast<double>(measured);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "holdout MAE %.6f vs mean-fill %.6f",
                      outcome.holdout_mae, outcome.meanfill_mae);
        std::cout << buf << '\n';
    }
    return outcome;
}

FederationData resolve_federation_data(const ExperimentConfig& cfg) {
    std::vector<CityData> cities;
    if (!cfg.source_dirs.empty() && !cfg.target_dir.empty()) {
        for (const std::string& dir : cfg.source_dirs) {
            const fs::path p(dir);
            cities.push_back(load_city_dir(p, infer_sensor_count(p)));
        }
        const fs::path tp(cfg.target_dir);
        cities.push_back(load_city_dir(tp, infer_sensor_count(tp)));
    } else {
        const fs::path imputed = fs::path(cfg.out_dir) / "imputed";
        const fs::path data = fs::path(cfg.out_dir) / "data";
        if (fs::exists(imputed / "manifest.json")) {
            cities = load_dataset_root(imputed);
        } else if (fs::exists(data / "manifest.json")) {
            cities = load_dataset_root(data);
        } else if (cfg.has_synthesis) {
            cities = synthesize_multi_city(cfg.synthesis, cfg.seed);
        } else {
            throw DataError("transfer: no dataset available; run gen-data/impute or configure synthesis");
        }
    }
    if (cities.size() < 2) throw DataError("transfer: need at least one source and the target");
    FederationData fd;
    fd.target = std::move(cities.back());
    cities.pop_back();
    fd.sources = std::move(cities);
    return fd;
}

RunReport cmd_transfer(const ExperimentConfig& cfg) {
    const FederationData data = resolve_federation_data(cfg);
    FederationResult result = run_federation(cfg.federation, data);

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    const fs::path ckpt_root = out / "checkpoints";
    fs::create_directories(ckpt_root);

    {
        std::ofstream f(out / "report.txt");
        if (!f) throw DataError("cannot write report.txt");
        f << report_to_text(result.report);
    }
    {
        std::ofstream f(out / "report.json");
        if (!f) throw DataError("cannot write report.json");
        f << report_to_json(result.report) << '\n';
    }
    write_transcript(result.transcript, (out / "transcript.txt").string());
    save_predictor_checkpoint((ckpt_root / "predictor.bin").string(), *result.predictor);
    for (std::size_t i = 0; i < result.client_generators.size(); ++i)
        save_tda_checkpoint((ckpt_root / ("tda_source_" + std::to_string(i) + ".bin")).string(),
                            result.client_bundles[i], result.client_generators[i]);

    char buf[200];
    std::snprintf(buf, sizeof(buf), "transfer complete: test MAE %.6f RMSE %.6f over %zu rounds",
                  result.report.mae_overall, result.report.rmse_overall, result.report.rounds);
    std::cout << buf << '\n';
    if (result.report.degenerate_single_client)
        std::cout << "note: single-client federation degenerates to local training\n";
    if (cfg.run_baseline) {
        const EvalMetrics base = run_no_transfer_baseline(cfg.federation, data);
        std::snprintf(buf, sizeof(buf), "no-transfer baseline: test MAE %.6f RMSE %.6f",
                      base.mae_overall, base.rmse_overall);
        std::cout << buf << '\n';
    }
    return result.report;
}

EvalMetrics cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    const FederationData data = resolve_federation_data(cfg);
    auto model = make_predictor(cfg.federation.predictor_kind, cfg.federation.window_in,
                                cfg.federation.window_out);
    load_predictor_checkpoint(checkpoint_path, *model);
    const SeriesSplit split =
        split_series(data.target.series, cfg.federation.train_fraction,
                     cfg.federation.val_fraction, cfg.federation.test_fraction);
    const auto windows =
        make_windows(split.test, cfg.federation.window_in, cfg.federation.window_out);
    const EvalMetrics m = evaluate(*model, windows);

    const std::size_t nf = m.mae_per_feature.size();
    auto row = [&](const char* label, const std::vector<double>& vals) {
        std::printf("%-22s", label);
        for (std::size_t f = 0; f < vals.size(); ++f) std::printf(" %12.6f", vals[f]);
        std::printf("\n");
    };
    std::printf("%-22s", "task");
    for (std::size_t f = 0; f < nf; ++f)
        std::printf(" %12s", nf == kDefaultFeatures ? kFeatureNames[f]
                                                    : ("f" + std::to_string(f)).c_str());
    std::printf("\n");
    row("mae (horizon avg)", m.mae_per_feature);
    row("rmse (horizon avg)", m.rmse_per_feature);
    row("mae (last step)", m.mae_final_step);
    row("rmse (last step)", m.rmse_final_step);
    std::printf("%-22s %12.6f\n", "mae (overall)", m.mae_overall);
    std::printf("%-22s %12.6f\n", "rmse (overall)", m.rmse_overall);
    return m;
}

}  // namespace fedtt
