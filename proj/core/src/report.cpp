#include "fedtt/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fedtt {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* feature_name(std::size_t f, std::size_t total) {
    if (total == kDefaultFeatures) return kFeatureNames[f];
    static thread_local std::string scratch;
    scratch = "f" + std::to_string(f);
    return scratch.c_str();
}

}  // namespace

std::string report_to_text(const RunReport& r) {
    std::ostringstream os;
    os << "fedtt.report.version: 1\n";
    os << "rounds: " << r.rounds << '\n';
    os << "clients: " << r.clients << '\n';
    os << "batches_per_round: " << r.batches_per_round << '\n';
    os << "predictor: " << r.predictor_kind << '\n';
    os << "transport: " << r.transport << '\n';
    os << "seed: " << r.seed << '\n';
    os << "deterministic: " << (r.deterministic ? 1 : 0) << '\n';
    os << "degenerate_single_client: " << (r.degenerate_single_client ? 1 : 0) << '\n';
    for (const RoundLosses& rl : r.per_round) {
        const std::string p = "round." + std::to_string(rl.round) + ".";
        os << p << "gen_total: " << fmt(rl.generator_total) << '\n';
        os << p << "gen_alignment: " << fmt(rl.generator_alignment) << '\n';
        os << p << "disc_client: " << fmt(rl.disc_client) << '\n';
        os << p << "disc_server: " << fmt(rl.disc_server) << '\n';
        os << p << "predictor: " << fmt(rl.predictor) << '\n';
    }
    const std::size_t nf = r.mae_per_feature.size();
    for (std::size_t f = 0; f < nf; ++f)
        os << "final.mae." << feature_name(f, nf) << ": " << fmt(r.mae_per_feature[f]) << '\n';
    for (std::size_t f = 0; f < nf; ++f)
        os << "final.rmse." << feature_name(f, nf) << ": " << fmt(r.rmse_per_feature[f]) << '\n';
    for (std::size_t f = 0; f < r.mae_final_step.size(); ++f)
        os << "final.mae_last_step." << feature_name(f, nf) << ": " << fmt(r.mae_final_step[f])
           << '\n';
    for (std::size_t f = 0; f < r.rmse_final_step.size(); ++f)
        os << "final.rmse_last_step." << feature_name(f, nf) << ": "
           << fmt(r.rmse_final_step[f]) << '\n';
    os << "final.mae_overall: " << fmt(r.mae_overall) << '\n';
    os << "final.rmse_overall: " << fmt(r.rmse_overall) << '\n';
    os << "messages.count: " << r.message_count << '\n';
    os << "messages.bytes: " << r.byte_total << '\n';
    os << "aggregate.checksum: " << fmt(r.aggregate_checksum) << '\n';
    os << "wall_ms.setup: " << fmt(r.wall_setup_ms) << '\n';
    os << "wall_ms.rounds: " << fmt(r.wall_rounds_ms) << '\n';
    os << "wall_ms.predictor: " << fmt(r.wall_predictor_ms) << '\n';
    return os.str();
}

std::string report_to_json(const RunReport& r) {
    nlohmann::json j;
    j["rounds"] = r.rounds;
    j["clients"] = r.clients;
    j["batches_per_round"] = r.batches_per_round;
    j["predictor"] = r.predictor_kind;
    j["transport"] = r.transport;
    j["seed"] = r.seed;
    j["deterministic"] = r.deterministic;
    j["degenerate_single_client"] = r.degenerate_single_client;
    auto num = [](double v) -> nlohmann::json {
        if (std::isnan(v)) return nullptr;
        return v;
    };
    nlohmann::json rounds = nlohmann::json::array();
    for (const RoundLosses& rl : r.per_round) {
        rounds.push_back({{"round", rl.round},
                          {"gen_total", num(rl.generator_total)},
                          {"gen_alignment", num(rl.generator_alignment)},
                          {"disc_client", num(rl.disc_client)},
                          {"disc_server", num(rl.disc_server)},
                          {"predictor", num(rl.predictor)}});
    }
    j["per_round"] = rounds;
    j["final"] = {{"mae_per_feature", r.mae_per_feature},
                  {"rmse_per_feature", r.rmse_per_feature},
                  {"mae_final_step", r.mae_final_step},
                  {"rmse_final_step", r.rmse_final_step},
                  {"mae_overall", r.mae_overall},
                  {"rmse_overall", r.rmse_overall}};
    j["messages"] = {{"count", r.message_count}, {"bytes", r.byte_total}};
    j["aggregate_checksum"] = r.aggregate_checksum;
    j["wall_ms"] = {{"setup", r.wall_setup_ms},
                    {"rounds", r.wall_rounds_ms},
                    {"predictor", r.wall_predictor_ms}};
    return j.dump(2);
}

void write_transcript(const std::vector<TranscriptEntry>& entries, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "# kind emitted round client bytes rows cols values...\n";
    for (const TranscriptEntry& e : entries) {
        out << static_cast<int>(e.kind) << ' ' << (e.emitted ? 1 : 0) << ' ' << e.round << ' '
            << e.client << ' ' << e.byte_size << ' ' << e.plaintext.rows() << ' '
            << e.plaintext.cols();
        char buf[64];
        for (std::size_t i = 0; i < e.plaintext.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", e.plaintext[i]);
            out << ' ' << buf;
        }
        out << '\n';
    }
}

std::vector<TranscriptEntry> read_transcript(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<TranscriptEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int kind = 0, emitted = 0;
        std::size_t round = 0, client = 0, bytes = 0, rows = 0, cols = 0;
        if (!(ls >> kind >> emitted >> round >> client >> bytes >> rows >> cols))
            throw DataError(path + ": malformed transcript line");
        TranscriptEntry e;
        e.kind = static_cast<WireMessage::Kind>(kind);
        e.emitted = emitted != 0;
        e.round = static_cast<std::uint32_t>(round);
        e.client = static_cast<std::uint32_t>(client);
        e.byte_size = bytes;
        e.plaintext = Mat(rows, cols);
        for (std::size_t i = 0; i < e.plaintext.size(); ++i) {
            double v;
            if (!(ls >> v)) throw DataError(path + ": truncated transcript values");
            e.plaintext[i] = v;
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

double replay_transcript_checksum(const std::vector<TranscriptEntry>& entries,
                                  std::size_t clients, double tolerance) {
    // Group per lane: within one round the server logs, lane by lane,
    // `clients` received masks followed by the emitted aggregate.
    struct Group {
        std::uint32_t round;
        std::vector<Mat> masks;
        Mat agg;
    };
    std::vector<std::vector<Group>> lanes;  // [lane][mask round index]
    std::size_t lane_cursor = 0;
    std::uint32_t current_round = 0;
    Group pending{0, {}, Mat{}};
    bool in_group = false;
    double checksum = 0.0;

    for (const TranscriptEntry& e : entries) {
        if (e.kind == WireMessage::Kind::cipher0) continue;  // opaque bootstrap
        if (e.kind == WireMessage::Kind::mask && !e.emitted) {
            if (!in_group) {
                pending = Group{e.round, {}, Mat{}};
                in_group = true;
                if (e.round != current_round) {
                    current_round = e.round;
                    lane_cursor = 0;
                }
            }
            if (e.round != pending.round)
                throw ProtocolError("transcript replay: mask round mismatch inside a group");
            pending.masks.push_back(e.plaintext);
            continue;
        }
        if (e.kind == WireMessage::Kind::agg && e.emitted) {
            for (std::size_t i = 0; i < e.plaintext.size(); ++i) checksum += e.plaintext[i];
            if (!in_group || pending.masks.size() != clients)
                throw ProtocolError("transcript replay: aggregate without a full mask group");
            pending.agg = e.plaintext;
            if (lanes.size() <= lane_cursor) lanes.resize(lane_cursor + 1);
            lanes[lane_cursor].push_back(std::move(pending));
            ++lane_cursor;
            in_group = false;
            continue;
        }
        throw ProtocolError("transcript replay: unexpected entry ordering");
    }
    if (in_group) throw ProtocolError("transcript replay: dangling mask group");

    for (const auto& lane : lanes) {
        if (lane.empty()) continue;
        Mat prev;  // aggregate at the previous mask round
        for (std::size_t k = 0; k < lane.size(); ++k) {
            const Group& g = lane[k];
            Mat sum(g.agg.rows(), g.agg.cols());
            for (const Mat& m : g.masks) sum += m;
            if (clients == 1) {
                Mat diff = sum - g.agg;
                if (diff.max_abs() > tolerance)
                    throw ProtocolError("transcript replay: aggregate disagrees with its mask");
                prev = g.agg;
                continue;
            }
            if (k == 0) {
                // The bootstrap aggregate never appears in plaintext, so the
                // first mask round only seeds the chain.
                prev = g.agg;
                continue;
            }
            Mat expect = sum;
            const double coef = static_cast<double>(clients) - 1.0;
            for (std::size_t i = 0; i < expect.size(); ++i) expect[i] -= coef * prev[i];
            Mat diff = expect - g.agg;
            if (diff.max_abs() > tolerance)
                throw ProtocolError("transcript replay: aggregate disagrees with the masks");
            prev = g.agg;
        }
    }
    return checksum;
}

}  // namespace fedtt
