#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedtt/mat.hpp"

namespace fedtt {

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CryptoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mock additively homomorphic scheme: element-wise fixed-point encoding
// (scale 2^-20) plus per-element additive pads from a keyed PRF. The pads of
// the n clients sum to zero, so combining all n ciphertexts cancels them;
// that is exactly what lets the keyless server read the round-0 aggregate
// while individual ciphertexts stay opaque. Keyed decryption removes any
// subset of pads and authenticates the header and payload.
inline constexpr int kFixedPointBits = 20;
inline constexpr double kFixedPointScale = 1048576.0;  // 2^20

// Key material shared among clients and withheld from the server. The
// balancing pad of the last client depends on the client count.
struct CipherBox {
    std::uint64_t key = 0;
    std::size_t client_count = 1;
};

struct Ciphertext {
    enum class Kind : std::uint8_t { single = 0, combined = 1 };
    Kind kind = Kind::single;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::uint32_t round = 0;
    std::uint32_t nonce = 0;       // batch lane; pads are unique per (round, nonce, client)
    std::uint64_t pad_mask = 0;    // bit per contributing client id
    std::uint64_t tag = 0;
    std::vector<std::uint64_t> words;

    std::vector<std::uint8_t> to_bytes() const;
    static Ciphertext from_bytes(std::span<const std::uint8_t> bytes);
};

Ciphertext encrypt_frame(const Mat& frame, const CipherBox& box, std::size_t client,
                         std::uint32_t round, std::uint32_t nonce = 0);

// The frame exactly as it travels: snapped to the fixed-point grid. Clients
// use this as x_prev after the encrypted bootstrap so that the masking chain
// reconstructs later means exactly rather than inheriting the round-0
// quantization error.
Mat fixed_point_roundtrip(const Mat& frame);

// Entrywise sum; requires equal dims/round/nonce and disjoint pad masks.
Ciphertext combine_ciphertexts(const std::vector<Ciphertext>& list);

// Keyed decryption of any single or combined ciphertext. Throws CryptoError
// on a wrong key or corrupted bytes.
Mat decrypt_frame(const Ciphertext& ct, const CipherBox& box);

// Keyless read of a fully combined ciphertext (pad mask must cover all n
// clients); returns the entrywise plaintext sum. This is the server's path
// to the bootstrap aggregate.
Mat open_aggregate_sum(const Ciphertext& ct, std::size_t client_count);

// Delta-masking messages. Rounds are 1-based for masks; round 0 travels
// encrypted.
struct MaskFrame {
    std::uint32_t round = 0;
    std::uint32_t client = 0;
    Mat values;
};

struct AggregateFrame {
    std::uint32_t round = 0;
    Mat values;
};

// mask = prev_agg + (x_now - x_prev) / n. The 1/n keeps mean semantics
// consistent with the reconstruction below.
MaskFrame mask_frame(const AggregateFrame& prev_agg, const Mat& x_now, const Mat& x_prev,
                     std::size_t n, std::uint32_t round, std::uint32_t client);

// aggregate(r) = sum of masks - (n-1) * prev_agg; equals the true mean of
// the n clients' round-r frames. Requires exactly one mask per client;
// summation runs in client-id order so the reduction is deterministic.
AggregateFrame unmask_aggregate(std::vector<MaskFrame> masks, const AggregateFrame& prev_agg,
                                std::size_t n);

// FTT1 wire format: magic "FTT1", u8 kind, u32 round, u32 client id,
// u32 rows, u32 cols, u32 features, payload. Plain frames carry
// rows*cols*features little-endian f64 row-major; ciphertexts carry a
// u32-length-prefixed opaque block. A single traffic frame travels as
// rows=sensors, cols=1, features=F1.
struct WireMessage {
    enum class Kind : std::uint8_t { cipher0 = 0, mask = 1, agg = 2 };
    Kind kind = Kind::mask;
    std::uint32_t round = 0;
    std::uint32_t client = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 1;
    std::uint32_t features = 0;
    std::vector<double> values;         // mask/agg payload
    std::vector<std::uint8_t> cipher;   // cipher0 payload

    std::vector<std::uint8_t> encode() const;
    static WireMessage decode(std::span<const std::uint8_t> bytes);

    static WireMessage from_mask(const MaskFrame& m);
    static WireMessage from_aggregate(const AggregateFrame& a);
    static WireMessage from_cipher(const Ciphertext& ct, std::uint32_t round,
                                   std::uint32_t client);
    Mat to_mat() const;
};

// Append-only, totally ordered log of what the server receives and the
// aggregates it emits. Appends are serialized; reads take a snapshot.
struct TranscriptEntry {
    WireMessage::Kind kind = WireMessage::Kind::mask;
    bool emitted = false;  // true for server broadcasts
    std::uint32_t round = 0;
    std::uint32_t client = 0;
    std::size_t byte_size = 0;  // encoded FTT1 size
    Mat plaintext;              // empty for ciphertext entries
};

class Transcript {
public:
    Transcript() : mu_(std::make_unique<std::mutex>()) {}
    Transcript(Transcript&&) = default;
    Transcript& operator=(Transcript&&) = default;

    void append(TranscriptEntry entry);
    std::vector<TranscriptEntry> snapshot() const;
    std::size_t message_count() const;
    std::size_t total_bytes() const;

private:
    std::unique_ptr<std::mutex> mu_;
    std::vector<TranscriptEntry> entries_;
};

// The plaintext values the server observes, in arrival order: received
// masks and emitted aggregates. Ciphertexts are opaque and excluded. (The
// bootstrap aggregate the server derives from the full combine is the
// round-0 mean, itself invariant under zero-sum offsets.)
struct ServerObservation {
    WireMessage::Kind kind;
    std::uint32_t round;
    std::uint32_t client;  // 0 for aggregates
    Mat values;
};
std::vector<ServerObservation> server_view(const Transcript& transcript);

// Reference protocol driver: runs the bootstrap plus R mask rounds over
// per-client frame sequences (frames[client][0..R]). Exercised heavily by
// the property suite; the federated runtime reimplements the same exchange
// over transports.
struct ProtocolRun {
    AggregateFrame bootstrap;               // round 0 mean
    std::vector<AggregateFrame> aggregates; // rounds 1..R
    Transcript transcript;
};
ProtocolRun run_masking_protocol(const std::vector<std::vector<Mat>>& client_frames,
                                 std::uint64_t key);

}  // namespace fedtt
