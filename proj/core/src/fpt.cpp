#include "fedtt/fpt.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

namespace fedtt {

namespace {

constexpr const char* kSlotServerDiscLoss = "server_disc_loss";
constexpr const char* kSlotAggExemplars = "agg_exemplars";
constexpr const char* kSlotClientDiscLoss = "client_disc_loss";
constexpr const char* kSlotAggDataset = "agg_dataset";

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

void FreezeCache::configure(const std::string& slot, std::size_t period) {
    if (period == 0) throw ProtocolError("freeze period must be >= 1");
    slots_[slot].period = period;
}

void FreezeCache::put(const std::string& slot, std::size_t round, FreezeValue value) {
    auto it = slots_.find(slot);
    if (it == slots_.end()) throw ProtocolError("freeze slot not configured: " + slot);
    Entry& e = it->second;
    if (!e.stored || round >= e.refresh_round + e.period) {
        e.value = std::move(value);
        e.refresh_round = round;
        e.stored = true;
    }
    // Puts inside the staleness window are dropped by design.
}

const FreezeValue& FreezeCache::get(const std::string& slot, std::size_t round) const {
    auto it = slots_.find(slot);
    if (it == slots_.end() || !it->second.stored)
        throw ProtocolError("freeze slot read before first store: " + slot);
    (void)round;
    return it->second.value;
}

bool FreezeCache::has(const std::string& slot) const {
    auto it = slots_.find(slot);
    return it != slots_.end() && it->second.stored;
}

std::size_t FreezeCache::last_refresh(const std::string& slot) const {
    auto it = slots_.find(slot);
    if (it == slots_.end() || !it->second.stored)
        throw ProtocolError("freeze slot read before first store: " + slot);
    return it->second.refresh_round;
}

namespace {

std::size_t raw_index(std::size_t round, std::size_t lane, std::size_t lanes, std::size_t len) {
    return (round * lanes + lane) % len;
}

}  // namespace

ClientRoundResult client_round(ClientState& state, std::size_t round,
                               const FederationConfig& cfg) {
    const std::size_t lanes = cfg.batches_per_round;
    if (state.data == nullptr || state.data->empty())
        throw ProtocolError("client round: no data bound");
    ClientRoundResult result;
    result.stats.round = round;
    result.stats.disc_client = std::numeric_limits<double>::quiet_NaN();

    double align_sum = 0.0;
    double total_sum = 0.0;
    double disc_sum = 0.0;

    for (std::size_t lane = 0; lane < lanes; ++lane) {
        const std::size_t idx = raw_index(round, lane, lanes, state.data->size());
        const Mat& raw = state.data->frames[idx].values;
        const Mat transformed = generate(raw, state.gen, state.bundle);

        if (round == 0) {
            // Bootstrap: encrypt and send; no aggregate exists yet, so no
            // discriminator or adversarial updates this round.
            const Ciphertext ct = encrypt_frame(transformed, state.box, state.id, 0,
                                                static_cast<std::uint32_t>(lane));
            result.outgoing.push_back(
                WireMessage::from_cipher(ct, 0, static_cast<std::uint32_t>(state.id)));
            align_sum += alignment_loss({transformed}, state.target_proto);
            if (state.prev_transformed.size() != lanes) state.prev_transformed.resize(lanes);
            // x_prev is the value as transmitted (grid-snapped); the round-1
            // masks then reconstruct the fresh mean exactly.
            state.prev_transformed[lane] = fixed_point_roundtrip(transformed);
            continue;
        }

        if (state.prev_agg.size() != lanes || state.prev_agg[lane].values.empty()) {
            std::ostringstream os;
            os << "client " << state.id << ": missing previous aggregate at round " << round;
            throw ProtocolError(os.str());
        }

        // Algorithm order per batch: classify the fresh transform and the
        // previous aggregate, compute the frozen-quantity generator loss,
        // update generator then client discriminator, emit the mask.
        (void)state.disc.classify(transformed);
        (void)state.disc.classify(state.prev_agg[lane].values);

        const auto& exemplars =
            std::get<std::vector<Mat>>(state.cache.get(kSlotAggExemplars, round));
        std::vector<LabeledFrame> disc_batch;
        disc_batch.push_back({transformed, 0});
        for (const Mat& ex : exemplars) disc_batch.push_back({ex, 1});

        const double disc_loss_now = discriminator_loss(state.disc, disc_batch);
        state.cache.put(kSlotClientDiscLoss, round, disc_loss_now);
        const double frozen_client_loss =
            std::get<double>(state.cache.get(kSlotClientDiscLoss, round));
        const double frozen_server_loss =
            state.cache.has(kSlotServerDiscLoss)
                ? std::get<double>(state.cache.get(kSlotServerDiscLoss, round))
                : 0.0;

        GeneratorBatch batch;
        batch.raw.push_back(raw);
        batch.align_target = &state.target_proto;
        batch.disc_server = nullptr;  // split learning: the server model never leaves the server
        batch.disc_client = &state.disc;
        batch.client_counterpart = exemplars;
        batch.lambda1 = cfg.lambda1;
        batch.lambda2 = cfg.lambda2;

        std::vector<double> grad;
        const GeneratorLossParts parts = generator_loss(state.gen, state.bundle, batch, &grad);
        for (double g : grad)
            if (!std::isfinite(g)) throw TrainingError("client generator: non-finite gradient");
        std::vector<double> packed = state.gen.pack();
        for (std::size_t i = 0; i < packed.size(); ++i) packed[i] -= cfg.generator_step * grad[i];
        state.gen.unpack(packed);

        // Reported value follows the frozen composition: the lambda1 term is
        // a stored scalar (no server-side gradient reaches the client).
        const double frozen_total = parts.alignment - cfg.lambda1 * frozen_server_loss -
                                    cfg.lambda2 * frozen_client_loss;

        train_step_discriminator(state.disc, disc_batch, cfg.discriminator_step);

        MaskFrame mask = mask_frame(state.prev_agg[lane], transformed,
                                    state.prev_transformed[lane], state.n,
                                    static_cast<std::uint32_t>(round),
                                    static_cast<std::uint32_t>(state.id));
        result.outgoing.push_back(WireMessage::from_mask(mask));
        state.prev_transformed[lane] = transformed;

        align_sum += parts.alignment;
        total_sum += frozen_total;
        disc_sum += disc_loss_now;
    }

    const double inv = 1.0 / static_cast<double>(lanes);
    result.stats.gen_alignment = align_sum * inv;
    if (round == 0) {
        result.stats.gen_total = align_sum * inv;  // no frozen terms exist yet
    } else {
        result.stats.gen_total = total_sum * inv;
        result.stats.disc_client = disc_sum * inv;
    }
    return result;
}

void client_receive_round(ClientState& state, std::size_t round,
                          const std::vector<WireMessage>& broadcasts,
                          const std::optional<ControlRecord>& control) {
    if (!state.prev_transformed.empty() && broadcasts.size() != state.prev_transformed.size()) {
        std::ostringstream os;
        os << "client " << state.id << ": round " << round << " broadcast carries "
           << broadcasts.size() << " lanes, expected " << state.prev_transformed.size();
        throw ProtocolError(os.str());
    }
    if (state.prev_agg.size() != broadcasts.size()) state.prev_agg.resize(broadcasts.size());
    std::vector<Mat> exemplars;
    exemplars.reserve(broadcasts.size());
    for (std::size_t lane = 0; lane < broadcasts.size(); ++lane) {
        const WireMessage& wm = broadcasts[lane];
        Mat agg;
        if (wm.kind == WireMessage::Kind::cipher0) {
            const Ciphertext ct = Ciphertext::from_bytes(wm.cipher);
            agg = decrypt_frame(ct, state.box);  // sum over clients
            agg *= 1.0 / static_cast<double>(state.n);
        } else if (wm.kind == WireMessage::Kind::agg) {
            agg = wm.to_mat();
        } else {
            throw ProtocolError("client received an unexpected message kind in a broadcast");
        }
        state.prev_agg[lane] = AggregateFrame{static_cast<std::uint32_t>(round), agg};
        exemplars.push_back(std::move(agg));
    }
    state.cache.put(kSlotAggExemplars, round, std::move(exemplars));
    if (control && std::isfinite(control->server_disc_loss))
        state.cache.put(kSlotServerDiscLoss, control->round, control->server_disc_loss);
}

ServerRoundResult server_round(ServerState& state, std::size_t round,
                               const std::vector<std::vector<WireMessage>>& inbox,
                               const FederationConfig& cfg) {
    const std::size_t lanes = cfg.batches_per_round;
    if (inbox.size() != state.n) {
        std::ostringstream os;
        os << "server round " << round << ": expected messages from " << state.n
           << " clients, got " << inbox.size();
        throw ProtocolError(os.str());
    }
    for (std::size_t i = 0; i < state.n; ++i) {
        if (inbox[i].size() != lanes) {
            std::ostringstream os;
            os << "server round " << round << ": client " << i << " sent " << inbox[i].size()
               << " messages, expected " << lanes;
            throw ProtocolError(os.str());
        }
    }
    if (state.prev_agg.size() != lanes) state.prev_agg.resize(lanes);

    ServerRoundResult result;
    for (std::size_t lane = 0; lane < lanes; ++lane) {
        if (round == 0) {
            std::vector<Ciphertext> cts;
            cts.reserve(state.n);
            for (std::size_t i = 0; i < state.n; ++i) {
                const WireMessage& wm = inbox[i][lane];
                if (wm.kind != WireMessage::Kind::cipher0) {
                    std::ostringstream os;
                    os << "server round 0: client " << i << " sent a non-ciphertext message";
                    throw ProtocolError(os.str());
                }
                state.transcript.append({WireMessage::Kind::cipher0, false, wm.round, wm.client,
                                         wm.encode().size(), Mat{}});
                cts.push_back(Ciphertext::from_bytes(wm.cipher));
            }
            const Ciphertext combined = combine_ciphertexts(cts);
            const WireMessage out = WireMessage::from_cipher(combined, 0, 0);
            state.transcript.append(
                {WireMessage::Kind::cipher0, true, 0, 0, out.encode().size(), Mat{}});
            Mat sum = open_aggregate_sum(combined, state.n);
            sum *= 1.0 / static_cast<double>(state.n);
            state.prev_agg[lane] = AggregateFrame{0, sum};
            state.aggregated_series.push_back(std::move(sum));
            result.broadcasts.push_back(out);
            continue;
        }

        std::vector<MaskFrame> masks;
        masks.reserve(state.n);
        for (std::size_t i = 0; i < state.n; ++i) {
            const WireMessage& wm = inbox[i][lane];
            if (wm.kind != WireMessage::Kind::mask) {
                std::ostringstream os;
                os << "server round " << round << ": client " << i
                   << " sent a non-mask message";
                throw ProtocolError(os.str());
            }
            MaskFrame m;
            m.round = wm.round;
            m.client = wm.client;
            m.values = wm.to_mat();
            state.transcript.append({WireMessage::Kind::mask, false, m.round, m.client,
                                     wm.encode().size(), m.values});
            masks.push_back(std::move(m));
        }
        AggregateFrame agg = unmask_aggregate(std::move(masks), state.prev_agg[lane], state.n);
        const WireMessage out = WireMessage::from_aggregate(agg);
        state.transcript.append(
            {WireMessage::Kind::agg, true, agg.round, 0, out.encode().size(), agg.values});
        state.prev_agg[lane] = agg;
        state.aggregated_series.push_back(agg.values);
        result.broadcasts.push_back(out);
    }

    state.cache.put(kSlotAggDataset, round, state.aggregated_series.size());
    const std::size_t frozen_count =
        std::get<std::size_t>(state.cache.get(kSlotAggDataset, round));

    if (round >= 1) {
        // Mixed batch: frozen aggregated frames vs local frames.
        std::vector<LabeledFrame> batch;
        for (std::size_t lane = 0; lane < lanes && lane < frozen_count; ++lane)
            batch.push_back({state.aggregated_series[frozen_count - 1 - lane], 0});
        for (std::size_t lane = 0; lane < lanes && !state.local_frames.empty(); ++lane) {
            const std::size_t idx =
                raw_index(round, lane, lanes, state.local_frames.size());
            batch.push_back({state.local_frames[idx].values, 1});
        }
        if (!batch.empty()) {
            result.disc_loss =
                train_step_discriminator(state.disc, batch, cfg.discriminator_step);
            state.last_disc_loss = result.disc_loss;
        }
    }
    result.control = ControlRecord{static_cast<std::uint32_t>(round), state.last_disc_loss};

    // End of round: continue training the predictor on the frozen aggregated
    // dataset plus the local windows.
    if (state.predictor && cfg.predictor_epochs_per_round > 0) {
        std::vector<PredictionWindow> windows = state.local_windows;
        const std::size_t need = cfg.window_in + cfg.window_out;
        if (frozen_count >= need) {
            TrafficSeries agg_series;
            for (std::size_t i = 0; i < frozen_count; ++i) {
                TrafficFrame f(state.aggregated_series[i].rows(),
                               state.aggregated_series[i].cols());
                f.values = state.aggregated_series[i];
                agg_series.frames.push_back(std::move(f));
            }
            auto agg_windows = make_windows(agg_series, cfg.window_in, cfg.window_out);
            windows.insert(windows.end(), std::make_move_iterator(agg_windows.begin()),
                           std::make_move_iterator(agg_windows.end()));
        }
        if (!windows.empty()) {
            OptConfig opt;
            opt.step = cfg.predictor_step;
            opt.epochs = cfg.predictor_epochs_per_round;
            const TrainTrace trace = state.predictor->fit(windows, opt);
            result.predictor_loss = trace.final_loss();
        }
    }
    return result;
}

namespace {

struct ClientRuntime {
    ClientState state;
    std::vector<ClientRoundStats> stats;
};

void validate_federation_inputs(const FederationConfig& cfg, const FederationData& data) {
    if (data.sources.empty()) throw DataError("run_federation: at least one source city required");
    if (cfg.batches_per_round == 0) throw DataError("run_federation: batches_per_round must be >= 1");
    if (cfg.window_in == 0 || cfg.window_out == 0)
        throw DataError("run_federation: window sizes must be positive");
    if (cfg.lambda1 < 0 || cfg.lambda2 < 0)
        throw DataError("run_federation: lambda weights must be non-negative");
    if (data.sources.size() > 64)
        throw DataError("run_federation: at most 64 clients supported");
    for (std::size_t i = 0; i < data.sources.size(); ++i) {
        if (data.sources[i].series.empty()) {
            std::ostringstream os;
            os << "run_federation: source city " << i << " has an empty series";
            throw DataError(os.str());
        }
        if (!data.sources[i].series.fully_observed()) {
            std::ostringstream os;
            os << "run_federation: source city " << i
               << " has missing readings; run imputation first";
            throw DataError(os.str());
        }
    }
    if (data.target.series.empty()) throw DataError("run_federation: target series is empty");
    if (!data.target.series.fully_observed())
        throw DataError("run_federation: target city has missing readings; run imputation first");
}

struct SetupResult {
    std::vector<ClientRuntime> clients;
    ServerState server;
    SeriesSplit target_split;
    Prototype target_proto;
};

SetupResult federation_setup(const FederationConfig& cfg, const FederationData& data) {
    SetupResult setup;
    const std::size_t n = data.sources.size();
    const std::size_t f1 = data.target.series.features();

    setup.target_split = split_series(data.target.series, cfg.train_fraction, cfg.val_fraction,
                                      cfg.test_fraction);
    const std::size_t need = cfg.window_in + cfg.window_out;
    if (setup.target_split.train.size() < need) {
        std::ostringstream os;
        os << "run_federation: target train split has " << setup.target_split.train.size()
           << " frames, needs at least " << need;
        throw DataError(os.str());
    }
    if (setup.target_split.test.size() < need) {
        std::ostringstream os;
        os << "run_federation: target test split has " << setup.target_split.test.size()
           << " frames, needs at least " << need;
        throw DataError(os.str());
    }
    setup.target_proto = compute_prototype(setup.target_split.train);

    const std::uint64_t shared_key = Rng::mix(cfg.seed, 0x544b4559ull);
    setup.clients.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ClientRuntime& cr = setup.clients[i];
        ClientState& cs = cr.state;
        cs.id = i;
        cs.n = n;
        cs.data = &data.sources[i].series;
        cs.target_proto = setup.target_proto;
        cs.box = CipherBox{shared_key, n};

        Rng rng(Rng::mix(cfg.seed, 0x434c49ull + i));
        const Prototype own_proto = compute_prototype(data.sources[i].series);

        TransformFitConfig tf;
        tf.opt.epochs = cfg.transform_fit_steps;
        tf.seed = Rng::mix(cfg.seed, 0x414e4554ull + i);
        const TransformFit net_fit =
            fit_network_transform(data.sources[i].network.adjacency,
                                  data.target.network.adjacency, tf);
        tf.seed = Rng::mix(cfg.seed, 0x4150524full + i);
        const TransformFit proto_fit =
            fit_prototype_transform(own_proto, setup.target_proto, tf);
        cs.bundle.a_net = net_fit.transform;
        cs.bundle.a_proto = proto_fit.transform;
        cs.bundle.residual_net = net_fit.residual;
        cs.bundle.residual_proto = proto_fit.residual;

        cs.gen = GeneratorParams::make(data.sources[i].series.sensors(),
                                       data.target.series.sensors(), f1, cfg.tda_hidden, rng);
        cs.disc = DiscriminatorParams::make(data.target.series.sensors(), f1, cfg.tda_hidden, rng);
        cs.cache.configure(kSlotServerDiscLoss, cfg.freeze_period_server);
        cs.cache.configure(kSlotAggExemplars, cfg.freeze_period_server);
        cs.cache.configure(kSlotClientDiscLoss, cfg.freeze_period_client);
        cr.stats.resize(cfg.rounds);
    }

    ServerState& sv = setup.server;
    sv.n = n;
    sv.lanes = cfg.batches_per_round;
    Rng server_rng(Rng::mix(cfg.seed, 0x53525652ull));
    sv.disc = DiscriminatorParams::make(data.target.series.sensors(), f1, cfg.tda_hidden,
                                        server_rng);
    sv.predictor = make_predictor(cfg.predictor_kind, cfg.window_in, cfg.window_out);
    sv.local_windows = make_windows(setup.target_split.train, cfg.window_in, cfg.window_out);
    sv.local_frames = setup.target_split.train.frames;
    sv.cache.configure(kSlotAggDataset, cfg.freeze_period_server);
    return setup;
}

std::string transport_name(FederationConfig::Transport t) {
    return t == FederationConfig::Transport::tcp ? "tcp" : "inproc";
}

void drive_serialized(const FederationConfig& cfg, SetupResult& setup,
                      std::vector<ServerRoundResult>& server_stats) {
    const std::size_t n = setup.clients.size();
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        std::vector<std::vector<WireMessage>> inbox(n);
        for (std::size_t i = 0; i < n; ++i) {
            ClientRoundResult res = client_round(setup.clients[i].state, r, cfg);
            setup.clients[i].stats[r] = res.stats;
            inbox[i] = std::move(res.outgoing);
        }
        ServerRoundResult sres = server_round(setup.server, r, inbox, cfg);
        for (std::size_t i = 0; i < n; ++i)
            client_receive_round(setup.clients[i].state, r, sres.broadcasts, sres.control);
        server_stats.push_back(std::move(sres));
    }
}

void drive_threaded(const FederationConfig& cfg, SetupResult& setup,
                    std::vector<ServerRoundResult>& server_stats) {
    const std::size_t n = setup.clients.size();
    const std::size_t lanes = cfg.batches_per_round;

    std::unique_ptr<TransportHub> hub;
    if (cfg.transport == FederationConfig::Transport::tcp)
        hub = make_tcp_hub(n, cfg.tcp_port, cfg.transport_timeout_s);
    else
        hub = make_inproc_hub(n, cfg.transport_timeout_s);

    std::vector<std::exception_ptr> errors(n + 1);

    // Surfaces worker failures with who/round/phase context.
    auto capture = [&errors](std::size_t slot, const std::string& who, std::size_t round,
                             const char* phase) {
        try {
            std::ostringstream os;
            os << who << " (round " << round << ", " << phase << "): ";
            try {
                throw;
            } catch (const std::exception& ex) {
                os << ex.what();
                errors[slot] = std::make_exception_ptr(ProtocolError(os.str()));
            }
        } catch (...) {
            errors[slot] = std::current_exception();
        }
    };

    auto client_body = [&](std::size_t i) {
        std::size_t round = 0;
        const char* phase = "setup";
        try {
            for (std::size_t r = 0; r < cfg.rounds; ++r) {
                round = r;
                phase = "client round";
                ClientRoundResult res = client_round(setup.clients[i].state, r, cfg);
                setup.clients[i].stats[r] = res.stats;
                phase = "send";
                for (const WireMessage& wm : res.outgoing) {
                    Envelope e;
                    e.type = Envelope::Type::frame;
                    e.frame = wm;
                    hub->client_send(i, e);
                }
                phase = "receive broadcast";
                std::vector<WireMessage> broadcasts;
                broadcasts.reserve(lanes);
                for (std::size_t b = 0; b < lanes; ++b) {
                    Envelope e = hub->client_recv(i);
                    if (e.type != Envelope::Type::frame)
                        throw ProtocolError("expected a broadcast frame");
                    broadcasts.push_back(std::move(e.frame));
                }
                Envelope ctrl = hub->client_recv(i);
                if (ctrl.type != Envelope::Type::control)
                    throw ProtocolError("expected the round control record");
                client_receive_round(setup.clients[i].state, r, broadcasts, ctrl.control);
            }
            phase = "shutdown";
            const Envelope fin = hub->client_recv(i);
            if (fin.type != Envelope::Type::shutdown) throw ProtocolError("expected shutdown");
        } catch (...) {
            capture(i, "client " + std::to_string(i), round, phase);
        }
    };

    auto server_body = [&] {
        std::size_t round = 0;
        const char* phase = "setup";
        try {
            for (std::size_t r = 0; r < cfg.rounds; ++r) {
                round = r;
                phase = "collect";
                std::vector<std::vector<WireMessage>> inbox(n);
                for (std::size_t i = 0; i < n; ++i) {
                    inbox[i].reserve(lanes);
                    for (std::size_t b = 0; b < lanes; ++b) {
                        Envelope e = hub->recv_from(i);
                        if (e.type != Envelope::Type::frame)
                            throw ProtocolError("expected a data frame");
                        inbox[i].push_back(std::move(e.frame));
                    }
                }
                phase = "server round";
                ServerRoundResult sres = server_round(setup.server, r, inbox, cfg);
                phase = "broadcast";
                for (std::size_t i = 0; i < n; ++i) {
                    for (const WireMessage& wm : sres.broadcasts) {
                        Envelope e;
                        e.type = Envelope::Type::frame;
                        e.frame = wm;
                        hub->send_to(i, e);
                    }
                    Envelope ctrl;
                    ctrl.type = Envelope::Type::control;
                    ctrl.control = sres.control.value_or(
                        ControlRecord{static_cast<std::uint32_t>(r),
                                      std::numeric_limits<double>::quiet_NaN()});
                    hub->send_to(i, ctrl);
                }
                server_stats.push_back(std::move(sres));
            }
            phase = "shutdown";
            for (std::size_t i = 0; i < n; ++i) {
                Envelope fin;
                fin.type = Envelope::Type::shutdown;
                hub->send_to(i, fin);
            }
        } catch (...) {
            capture(n, "server", round, phase);
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(n + 1);
    threads.emplace_back(server_body);
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(client_body, i);
    for (auto& t : threads) t.join();

    if (errors[n]) std::rethrow_exception(errors[n]);
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);
}

std::vector<PredictionWindow> aggregated_plus_local_windows(const ServerState& sv,
                                                            const FederationConfig& cfg) {
    std::vector<PredictionWindow> windows = sv.local_windows;
    const std::size_t need = cfg.window_in + cfg.window_out;
    if (sv.aggregated_series.size() >= need) {
        TrafficSeries agg_series;
        for (const Mat& m : sv.aggregated_series) {
            TrafficFrame f(m.rows(), m.cols());
            f.values = m;
            agg_series.frames.push_back(std::move(f));
        }
        auto agg_windows = make_windows(agg_series, cfg.window_in, cfg.window_out);
        windows.insert(windows.end(), std::make_move_iterator(agg_windows.begin()),
                       std::make_move_iterator(agg_windows.end()));
    }
    return windows;
}

}  // namespace

FederationResult run_federation(const FederationConfig& cfg, const FederationData& data) {
    validate_federation_inputs(cfg, data);
    const std::size_t n = data.sources.size();

    const double t_setup0 = now_ms();
    SetupResult setup = federation_setup(cfg, data);
    const double t_setup1 = now_ms();

    std::vector<ServerRoundResult> server_stats;
    server_stats.reserve(cfg.rounds);
    if (cfg.rounds > 0) {
        if (cfg.serialized)
            drive_serialized(cfg, setup, server_stats);
        else
            drive_threaded(cfg, setup, server_stats);
    }
    const double t_rounds = now_ms();

    // Final predictor fit over the full aggregated dataset plus local data.
    if (cfg.predictor_final_epochs > 0) {
        const auto windows = aggregated_plus_local_windows(setup.server, cfg);
        if (!windows.empty()) {
            OptConfig opt;
            opt.step = cfg.predictor_step;
            opt.epochs = cfg.predictor_final_epochs;
            setup.server.predictor->fit(windows, opt);
        }
    }
    const double t_predictor = now_ms();

    const auto test_windows =
        make_windows(setup.target_split.test, cfg.window_in, cfg.window_out);
    const EvalMetrics metrics = evaluate(*setup.server.predictor, test_windows);

    FederationResult out;
    out.metrics = metrics;
    out.transcript = setup.server.transcript.snapshot();
    out.predictor = std::move(setup.server.predictor);
    out.server_discriminator = setup.server.disc;
    for (auto& cr : setup.clients) {
        out.client_generators.push_back(cr.state.gen);
        out.client_bundles.push_back(cr.state.bundle);
    }

    RunReport& rep = out.report;
    rep.rounds = cfg.rounds;
    rep.clients = n;
    rep.batches_per_round = cfg.batches_per_round;
    rep.degenerate_single_client = (n == 1);
    rep.predictor_kind = cfg.predictor_kind;
    rep.seed = cfg.seed;
    rep.deterministic = cfg.deterministic;
    rep.transport = cfg.serialized ? "serialized" : transport_name(cfg.transport);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        RoundLosses rl;
        rl.round = r;
        double gt = 0.0, ga = 0.0, dc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            gt += setup.clients[i].stats[r].gen_total;
            ga += setup.clients[i].stats[r].gen_alignment;
            dc += setup.clients[i].stats[r].disc_client;
        }
        rl.generator_total = gt / static_cast<double>(n);
        rl.generator_alignment = ga / static_cast<double>(n);
        rl.disc_client = dc / static_cast<double>(n);
        rl.disc_server = server_stats[r].disc_loss;
        rl.predictor = server_stats[r].predictor_loss;
        rep.per_round.push_back(rl);
    }
    rep.mae_per_feature = metrics.mae_per_feature;
    rep.rmse_per_feature = metrics.rmse_per_feature;
    rep.mae_final_step = metrics.mae_final_step;
    rep.rmse_final_step = metrics.rmse_final_step;
    rep.mae_overall = metrics.mae_overall;
    rep.rmse_overall = metrics.rmse_overall;
    rep.message_count = out.transcript.size();
    std::size_t bytes = 0;
    double checksum = 0.0;
    for (const TranscriptEntry& e : out.transcript) {
        bytes += e.byte_size;
        if (e.kind == WireMessage::Kind::agg)
            for (std::size_t i = 0; i < e.plaintext.size(); ++i) checksum += e.plaintext[i];
    }
    rep.byte_total = bytes;
    rep.aggregate_checksum = checksum;
    if (!cfg.deterministic) {
        rep.wall_setup_ms = t_setup1 - t_setup0;
        rep.wall_rounds_ms = t_rounds - t_setup1;
        rep.wall_predictor_ms = t_predictor - t_rounds;
    }
    return out;
}

EvalMetrics run_no_transfer_baseline(const FederationConfig& cfg, const FederationData& data) {
    const SeriesSplit split = split_series(data.target.series, cfg.train_fraction,
                                           cfg.val_fraction, cfg.test_fraction);
    const auto train_windows = make_windows(split.train, cfg.window_in, cfg.window_out);
    const auto test_windows = make_windows(split.test, cfg.window_in, cfg.window_out);
    auto model = make_predictor(cfg.predictor_kind, cfg.window_in, cfg.window_out);
    OptConfig opt;
    opt.step = cfg.predictor_step;
    // Mirror the federated schedule: one short fit per round, then the final fit.
    opt.epochs = cfg.predictor_epochs_per_round;
    for (std::size_t r = 0; r < cfg.rounds && opt.epochs > 0; ++r) model->fit(train_windows, opt);
    if (cfg.predictor_final_epochs > 0) {
        opt.epochs = cfg.predictor_final_epochs;
        model->fit(train_windows, opt);
    }
    return evaluate(*model, test_windows);
}

}  // namespace fedtt
