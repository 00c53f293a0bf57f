#pragma once

#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fedtt/predictor.hpp"
#include "fedtt/synth.hpp"
#include "fedtt/tda.hpp"
#include "fedtt/transport.hpp"
#include "fedtt/tst.hpp"

namespace fedtt {

// Staleness cache: a put is accepted as the new served value only when the
// slot's refresh period has elapsed since the last accepted put; reads in
// between return the stale value. First put always refreshes.
using FreezeValue = std::variant<double, std::size_t, Mat, std::vector<Mat>>;

class FreezeCache {
public:
    void configure(const std::string& slot, std::size_t period);
    void put(const std::string& slot, std::size_t round, FreezeValue value);
    const FreezeValue& get(const std::string& slot, std::size_t round) const;
    bool has(const std::string& slot) const;
    std::size_t last_refresh(const std::string& slot) const;

private:
    struct Entry {
        std::size_t period = 1;
        bool stored = false;
        std::size_t refresh_round = 0;
        FreezeValue value;
    };
    std::map<std::string, Entry> slots_;
};

struct FederationConfig {
    std::size_t rounds = 10;  // total protocol rounds; round 0 is the encrypted bootstrap
    std::size_t batches_per_round = 1;
    double lambda1 = 0.7;
    double lambda2 = 0.4;
    double generator_step = 0.01;
    double discriminator_step = 0.05;
    std::size_t freeze_period_server = 5;  // Fr
    std::size_t freeze_period_client = 1;  // Fr'
    std::size_t window_in = 12;            // T
    std::size_t window_out = 3;            // T'
    double train_fraction = 0.05;
    double val_fraction = 0.10;
    double test_fraction = 0.10;
    std::size_t tda_hidden = 32;
    std::size_t transform_fit_steps = 800;
    std::string predictor_kind = "linear_ar";
    std::size_t predictor_epochs_per_round = 2;
    std::size_t predictor_final_epochs = 80;
    double predictor_step = 0.2;
    enum class Transport { inproc, tcp };
    Transport transport = Transport::inproc;
    std::uint16_t tcp_port = 0;  // 0 = ephemeral
    bool deterministic = true;   // sorted reductions, timing fields zeroed
    bool serialized = false;     // run all parties inline, no threads
    double transport_timeout_s = 120.0;
    std::uint64_t seed = 1;
};

struct FederationData {
    std::vector<CityData> sources;  // one client per source city
    CityData target;
};

struct RoundLosses {
    std::size_t round = 0;
    double generator_total = 0.0;    // mean over clients, frozen-term composition
    double generator_alignment = 0.0;
    double disc_client = 0.0;        // mean over clients
    double disc_server = 0.0;
    double predictor = 0.0;
};

struct RunReport {
    std::size_t rounds = 0;
    std::size_t clients = 0;
    std::size_t batches_per_round = 1;
    bool degenerate_single_client = false;
    std::string predictor_kind;
    std::uint64_t seed = 0;
    bool deterministic = true;
    std::string transport;
    std::vector<RoundLosses> per_round;
    std::vector<double> mae_per_feature;   // horizon-averaged flow/speed/occ
    std::vector<double> rmse_per_feature;
    std::vector<double> mae_final_step;
    std::vector<double> rmse_final_step;
    double mae_overall = 0.0;
    double rmse_overall = 0.0;
    std::size_t message_count = 0;
    std::size_t byte_total = 0;
    double aggregate_checksum = 0.0;  // recomputable from the transcript
    double wall_setup_ms = 0.0;       // zeroed in deterministic mode
    double wall_rounds_ms = 0.0;
    double wall_predictor_ms = 0.0;
};

// Client-side state of the split training loop.
struct ClientState {
    std::size_t id = 0;
    std::size_t n = 1;
    const TrafficSeries* data = nullptr;  // fully observed source series
    TransformBundle bundle;
    GeneratorParams gen;
    DiscriminatorParams disc;
    Prototype target_proto;
    CipherBox box;
    FreezeCache cache;  // server_disc_loss (Fr), agg_exemplars (Fr), client_disc_loss (Fr')
    std::vector<Mat> prev_transformed;       // per batch lane
    std::vector<AggregateFrame> prev_agg;    // per batch lane
};

struct ClientRoundStats {
    std::size_t round = 0;
    double gen_total = 0.0;
    double gen_alignment = 0.0;
    double disc_client = 0.0;
};

struct ClientRoundResult {
    std::vector<WireMessage> outgoing;  // one message per batch lane
    ClientRoundStats stats;
};

// One client round: transform, classify, frozen-quantity generator loss,
// generator + client-discriminator updates, emit CIPHER0 (round 0) or MASK.
ClientRoundResult client_round(ClientState& state, std::size_t round,
                               const FederationConfig& cfg);

// Applies the server broadcast of `round` (per-lane aggregates or the
// combined round-0 ciphertext, plus the control record) to the client state
// and freeze cache.
void client_receive_round(ClientState& state, std::size_t round,
                          const std::vector<WireMessage>& broadcasts,
                          const std::optional<ControlRecord>& control);

struct ServerState {
    std::size_t n = 1;
    std::size_t lanes = 1;
    DiscriminatorParams disc;
    std::unique_ptr<PredictorModel> predictor;
    FreezeCache cache;  // agg_dataset (Fr)
    std::vector<AggregateFrame> prev_agg;         // per lane
    std::vector<Mat> aggregated_series;           // aggregates in arrival order
    std::vector<PredictionWindow> local_windows;  // target-city train windows
    std::vector<TrafficFrame> local_frames;       // target-city train frames
    Transcript transcript;
    double last_disc_loss = std::numeric_limits<double>::quiet_NaN();
};

struct ServerRoundResult {
    std::vector<WireMessage> broadcasts;  // one per lane
    std::optional<ControlRecord> control;
    double disc_loss = std::numeric_limits<double>::quiet_NaN();
    double predictor_loss = std::numeric_limits<double>::quiet_NaN();
};

// One server round over the inbox (one message per client per lane):
// combine ciphertexts (round 0) or unmask aggregates, train the server
// discriminator on frozen aggregated vs local frames, then train the
// predictor on frozen aggregated plus local windows.
ServerRoundResult server_round(ServerState& state, std::size_t round,
                               const std::vector<std::vector<WireMessage>>& inbox,
                               const FederationConfig& cfg);

struct FederationResult {
    RunReport report;
    std::vector<TranscriptEntry> transcript;
    std::unique_ptr<PredictorModel> predictor;
    std::vector<GeneratorParams> client_generators;
    std::vector<TransformBundle> client_bundles;
    DiscriminatorParams server_discriminator;
    EvalMetrics metrics;
};

FederationResult run_federation(const FederationConfig& cfg, const FederationData& data);

// Control arm: the same predictor trained with the same epoch budget on the
// target city's local training windows only.
EvalMetrics run_no_transfer_baseline(const FederationConfig& cfg, const FederationData& data);

}  // namespace fedtt
