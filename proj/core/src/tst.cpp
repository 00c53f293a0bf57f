#include "fedtt/tst.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fedtt/rng.hpp"

namespace fedtt {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct ByteReader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > bytes.size()) {
            std::ostringstream os;
            os << "truncated message while reading " << what;
            throw ProtocolError(os.str());
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
};

std::uint64_t prf(std::uint64_t key, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                  std::uint64_t d) {
    std::uint64_t x = Rng::mix(key, a);
    x = Rng::mix(x, b);
    x = Rng::mix(x, c);
    x = Rng::mix(x, d);
    return x;
}

// Pads of all n clients sum to zero: the last client balances the rest.
std::uint64_t pad_word(const CipherBox& box, std::uint32_t round, std::uint32_t nonce,
                       std::size_t client, std::size_t index) {
    const std::size_t n = box.client_count;
    if (client + 1 < n) return prf(box.key, round, nonce, client, index);
    std::uint64_t s = 0;
    for (std::size_t j = 0; j + 1 < n; ++j) s += prf(box.key, round, nonce, j, index);
    return ~s + 1;  // two's complement negation
}

std::uint64_t header_checksum(const Ciphertext& ct) {
    std::uint64_t h = Rng::mix(0x46545431u, ct.rows);
    h = Rng::mix(h, ct.cols);
    h = Rng::mix(h, ct.round);
    h = Rng::mix(h, ct.nonce);
    h = Rng::mix(h, ct.pad_mask);
    h = Rng::mix(h, static_cast<std::uint64_t>(ct.kind));
    for (std::uint64_t w : ct.words) h = Rng::mix(h, w);
    return h;
}

std::uint64_t make_tag(const Ciphertext& ct, const CipherBox* box) {
    const std::uint64_t sum = header_checksum(ct);
    if (ct.kind == Ciphertext::Kind::single) {
        if (box == nullptr) throw CryptoError("single ciphertext needs key material for its tag");
        return Rng::mix(box->key, sum);
    }
    return Rng::mix(0x434f4d42ull, sum);  // combined: unkeyed corruption check
}

std::int64_t quantize(double x) {
    return static_cast<std::int64_t>(std::llround(x * kFixedPointScale));
}

}  // namespace

Mat fixed_point_roundtrip(const Mat& frame) {
    Mat out(frame.rows(), frame.cols());
    for (std::size_t i = 0; i < frame.size(); ++i)
        out[i] = static_cast<double>(quantize(frame[i])) / kFixedPointScale;
    return out;
}

Ciphertext encrypt_frame(const Mat& frame, const CipherBox& box, std::size_t client,
                         std::uint32_t round, std::uint32_t nonce) {
    if (client >= box.client_count) throw CryptoError("encrypt_frame: client id out of range");
    if (box.client_count > 64) throw CryptoError("encrypt_frame: at most 64 clients supported");
    if (!frame.all_finite()) throw CryptoError("encrypt_frame: non-finite plaintext");
    Ciphertext ct;
    ct.kind = Ciphertext::Kind::single;
    ct.rows = static_cast<std::uint32_t>(frame.rows());
    ct.cols = static_cast<std::uint32_t>(frame.cols());
    ct.round = round;
    ct.nonce = nonce;
    ct.pad_mask = 1ull << client;
    ct.words.resize(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const auto q = static_cast<std::uint64_t>(quantize(frame[i]));
        ct.words[i] = q + pad_word(box, round, nonce, client, i);
    }
    ct.tag = make_tag(ct, &box);
    return ct;
}

Ciphertext combine_ciphertexts(const std::vector<Ciphertext>& list) {
    if (list.empty()) throw CryptoError("combine_ciphertexts: empty list");
    Ciphertext out = list.front();
    out.kind = Ciphertext::Kind::combined;
    for (std::size_t i = 1; i < list.size(); ++i) {
        const Ciphertext& ct = list[i];
        if (ct.rows != out.rows || ct.cols != out.cols)
            throw CryptoError("combine_ciphertexts: dimension mismatch");
        if (ct.round != out.round || ct.nonce != out.nonce)
            throw CryptoError("combine_ciphertexts: round/nonce mismatch");
        if (ct.pad_mask & out.pad_mask)
            throw CryptoError("combine_ciphertexts: overlapping client pads");
        out.pad_mask |= ct.pad_mask;
        for (std::size_t w = 0; w < out.words.size(); ++w) out.words[w] += ct.words[w];
    }
    out.tag = make_tag(out, nullptr);
    return out;
}

namespace {

Mat dequantize_words(const std::vector<std::uint64_t>& words, std::uint32_t rows,
                     std::uint32_t cols) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto q = static_cast<std::int64_t>(words[i]);
        m[i] = static_cast<double>(q) / kFixedPointScale;
    }
    return m;
}

}  // namespace

Mat decrypt_frame(const Ciphertext& ct, const CipherBox& box) {
    if (ct.words.size() != static_cast<std::size_t>(ct.rows) * ct.cols)
        throw CryptoError("decrypt_frame: payload length disagrees with dimensions");
    const std::uint64_t expect =
        ct.kind == Ciphertext::Kind::single ? make_tag(ct, &box) : make_tag(ct, nullptr);
    if (expect != ct.tag)
        throw CryptoError("decrypt_frame: authentication failed (wrong key or corrupted data)");
    std::vector<std::uint64_t> cleared = ct.words;
    for (std::size_t client = 0; client < box.client_count; ++client) {
        if (!(ct.pad_mask & (1ull << client))) continue;
        for (std::size_t i = 0; i < cleared.size(); ++i)
            cleared[i] -= pad_word(box, ct.round, ct.nonce, client, i);
    }
    return dequantize_words(cleared, ct.rows, ct.cols);
}

Mat open_aggregate_sum(const Ciphertext& ct, std::size_t client_count) {
    if (ct.kind != Ciphertext::Kind::combined)
        throw CryptoError("open_aggregate_sum: only combined ciphertexts can be opened");
    const std::uint64_t full =
        client_count >= 64 ? ~0ull : ((1ull << client_count) - 1);
    if (ct.pad_mask != full)
        throw CryptoError("open_aggregate_sum: combination does not cover all clients");
    if (make_tag(ct, nullptr) != ct.tag)
        throw CryptoError("open_aggregate_sum: corrupted ciphertext");
    return dequantize_words(ct.words, ct.rows, ct.cols);
}

std::vector<std::uint8_t> Ciphertext::to_bytes() const {
    std::vector<std::uint8_t> out;
    out.reserve(26 + words.size() * 8);
    out.push_back('T');
    out.push_back('S');
    out.push_back('E');
    out.push_back('1');
    out.push_back(static_cast<std::uint8_t>(kind));
    put_u32(out, rows);
    put_u32(out, cols);
    put_u32(out, round);
    put_u32(out, nonce);
    put_u64(out, pad_mask);
    put_u64(out, tag);
    for (std::uint64_t w : words) put_u64(out, w);
    return out;
}

Ciphertext Ciphertext::from_bytes(std::span<const std::uint8_t> bytes) {
    ByteReader r{bytes};
    if (r.u8("magic") != 'T' || r.u8("magic") != 'S' || r.u8("magic") != 'E' ||
        r.u8("magic") != '1')
        throw CryptoError("ciphertext magic mismatch");
    Ciphertext ct;
    ct.kind = static_cast<Kind>(r.u8("kind"));
    ct.rows = r.u32("rows");
    ct.cols = r.u32("cols");
    ct.round = r.u32("round");
    ct.nonce = r.u32("nonce");
    ct.pad_mask = r.u64("pad_mask");
    ct.tag = r.u64("tag");
    const std::size_t count = static_cast<std::size_t>(ct.rows) * ct.cols;
    ct.words.resize(count);
    for (std::size_t i = 0; i < count; ++i) ct.words[i] = r.u64("word");
    return ct;
}

MaskFrame mask_frame(const AggregateFrame& prev_agg, const Mat& x_now, const Mat& x_prev,
                     std::size_t n, std::uint32_t round, std::uint32_t client) {
    if (round == 0) throw ProtocolError("mask_frame: masks start at round 1");
    if (n == 0) throw ProtocolError("mask_frame: client count must be positive");
    if (!prev_agg.values.same_shape(x_now) || !x_now.same_shape(x_prev))
        throw ProtocolError("mask_frame: shape mismatch");
    MaskFrame m;
    m.round = round;
    m.client = client;
    m.values = prev_agg.values;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < m.values.size(); ++i)
        m.values[i] += (x_now[i] - x_prev[i]) * inv_n;
    return m;
}

AggregateFrame unmask_aggregate(std::vector<MaskFrame> masks, const AggregateFrame& prev_agg,
                                std::size_t n) {
    if (n == 0) throw ProtocolError("unmask_aggregate: client count must be positive");
    if (masks.size() != n) {
        std::ostringstream os;
        os << "unmask_aggregate: got " << masks.size() << " masks for " << n << " clients";
        throw ProtocolError(os.str());
    }
    std::sort(masks.begin(), masks.end(),
              [](const MaskFrame& a, const MaskFrame& b) { return a.client < b.client; });
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (i > 0 && masks[i].client == masks[i - 1].client) {
            std::ostringstream os;
            os << "unmask_aggregate: duplicate mask from client " << masks[i].client;
            throw ProtocolError(os.str());
        }
        if (masks[i].round != masks.front().round)
            throw ProtocolError("unmask_aggregate: masks from different rounds");
        if (!masks[i].values.same_shape(prev_agg.values))
            throw ProtocolError("unmask_aggregate: shape mismatch");
    }
    AggregateFrame agg;
    agg.round = masks.front().round;
    agg.values = Mat(prev_agg.values.rows(), prev_agg.values.cols());
    for (const MaskFrame& m : masks) agg.values += m.values;
    const double coef = static_cast<double>(n) - 1.0;
    for (std::size_t i = 0; i < agg.values.size(); ++i) agg.values[i] -= coef * prev_agg.values[i];
    return agg;
}

std::vector<std::uint8_t> WireMessage::encode() const {
    std::vector<std::uint8_t> out;
    out.push_back('F');
    out.push_back('T');
    out.push_back('T');
    out.push_back('1');
    out.push_back(static_cast<std::uint8_t>(kind));
    put_u32(out, round);
    put_u32(out, client);
    put_u32(out, rows);
    put_u32(out, cols);
    put_u32(out, features);
    if (kind == Kind::cipher0) {
        put_u32(out, static_cast<std::uint32_t>(cipher.size()));
        out.insert(out.end(), cipher.begin(), cipher.end());
    } else {
        if (values.size() != static_cast<std::size_t>(rows) * cols * features)
            throw ProtocolError("WireMessage::encode: payload length disagrees with dims");
        for (double v : values) put_f64(out, v);
    }
    return out;
}

WireMessage WireMessage::decode(std::span<const std::uint8_t> bytes) {
    ByteReader r{bytes};
    if (r.u8("magic") != 'F' || r.u8("magic") != 'T' || r.u8("magic") != 'T' ||
        r.u8("magic") != '1')
        throw ProtocolError("wire magic mismatch: expected FTT1");
    WireMessage m;
    const std::uint8_t k = r.u8("kind");
    if (k > 2) throw ProtocolError("wire message kind out of range");
    m.kind = static_cast<Kind>(k);
    m.round = r.u32("round");
    m.client = r.u32("client");
    m.rows = r.u32("rows");
    m.cols = r.u32("cols");
    m.features = r.u32("features");
    if (m.kind == Kind::cipher0) {
        const std::uint32_t len = r.u32("cipher length");
        r.need(len, "cipher payload");
        m.cipher.assign(bytes.begin() + r.pos, bytes.begin() + r.pos + len);
        r.pos += len;
    } else {
        const std::size_t count = static_cast<std::size_t>(m.rows) * m.cols * m.features;
        m.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) m.values[i] = r.f64("value");
    }
    if (r.pos != bytes.size()) throw ProtocolError("trailing bytes after wire message");
    return m;
}

WireMessage WireMessage::from_mask(const MaskFrame& mf) {
    WireMessage m;
    m.kind = Kind::mask;
    m.round = mf.round;
    m.client = mf.client;
    m.rows = static_cast<std::uint32_t>(mf.values.rows());
    m.cols = 1;
    m.features = static_cast<std::uint32_t>(mf.values.cols());
    m.values = mf.values.storage();
    return m;
}

WireMessage WireMessage::from_aggregate(const AggregateFrame& a) {
    WireMessage m;
    m.kind = Kind::agg;
    m.round = a.round;
    m.client = 0;
    m.rows = static_cast<std::uint32_t>(a.values.rows());
    m.cols = 1;
    m.features = static_cast<std::uint32_t>(a.values.cols());
    m.values = a.values.storage();
    return m;
}

WireMessage WireMessage::from_cipher(const Ciphertext& ct, std::uint32_t round,
                                     std::uint32_t client) {
    WireMessage m;
    m.kind = Kind::cipher0;
    m.round = round;
    m.client = client;
    m.rows = ct.rows;
    m.cols = 1;
    m.features = ct.cols;
    m.cipher = ct.to_bytes();
    return m;
}

Mat WireMessage::to_mat() const {
    if (kind == Kind::cipher0) throw ProtocolError("to_mat: ciphertext payload is opaque");
    Mat m(static_cast<std::size_t>(rows) * cols, features);
    for (std::size_t i = 0; i < values.size(); ++i) m[i] = values[i];
    return m;
}

void Transcript::append(TranscriptEntry entry) {
    std::lock_guard<std::mutex> lock(*mu_);
    entries_.push_back(std::move(entry));
}

std::vector<TranscriptEntry> Transcript::snapshot() const {
    std::lock_guard<std::mutex> lock(*mu_);
    return entries_;
}

std::size_t Transcript::message_count() const {
    std::lock_guard<std::mutex> lock(*mu_);
    return entries_.size();
}

std::size_t Transcript::total_bytes() const {
    std::lock_guard<std::mutex> lock(*mu_);
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.byte_size;
    return total;
}

std::vector<ServerObservation> server_view(const Transcript& transcript) {
    std::vector<ServerObservation> view;
    for (const TranscriptEntry& e : transcript.snapshot()) {
        if (e.kind == WireMessage::Kind::cipher0) continue;  // opaque
        view.push_back({e.kind, e.round, e.client, e.plaintext});
    }
    return view;
}

ProtocolRun run_masking_protocol(const std::vector<std::vector<Mat>>& client_frames,
                                 std::uint64_t key) {
    const std::size_t n = client_frames.size();
    if (n == 0) throw ProtocolError("run_masking_protocol: no clients");
    const std::size_t rounds_plus_one = client_frames.front().size();
    for (const auto& seq : client_frames)
        if (seq.size() != rounds_plus_one)
            throw ProtocolError("run_masking_protocol: unequal frame sequences");
    if (rounds_plus_one == 0) return {};

    const CipherBox box{key, n};
    ProtocolRun run;

    // Round 0: encrypted bootstrap.
    std::vector<Ciphertext> cts;
    cts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Ciphertext ct = encrypt_frame(client_frames[i][0], box, i, 0, 0);
        const WireMessage wm = WireMessage::from_cipher(ct, 0, static_cast<std::uint32_t>(i));
        run.transcript.append({WireMessage::Kind::cipher0, false, 0,
                               static_cast<std::uint32_t>(i), wm.encode().size(), Mat{}});
        cts.push_back(std::move(ct));
    }
    const Ciphertext combined = combine_ciphertexts(cts);
    {
        const WireMessage wm = WireMessage::from_cipher(combined, 0, 0);
        run.transcript.append(
            {WireMessage::Kind::cipher0, true, 0, 0, wm.encode().size(), Mat{}});
    }
    Mat sum = open_aggregate_sum(combined, n);
    sum *= 1.0 / static_cast<double>(n);
    run.bootstrap = AggregateFrame{0, std::move(sum)};

    // Rounds 1..R: delta masking. At round 1 the previous frame is the one
    // that travelled encrypted, so the grid-snapped value is the reference;
    // this keeps the reconstruction exact from round 1 on.
    AggregateFrame prev = run.bootstrap;
    for (std::size_t r = 1; r < rounds_plus_one; ++r) {
        std::vector<MaskFrame> masks;
        masks.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Mat x_prev = r == 1 ? fixed_point_roundtrip(client_frames[i][0])
                                      : client_frames[i][r - 1];
            MaskFrame m = mask_frame(prev, client_frames[i][r], x_prev, n,
                                     static_cast<std::uint32_t>(r),
                                     static_cast<std::uint32_t>(i));
            const WireMessage wm = WireMessage::from_mask(m);
            run.transcript.append({WireMessage::Kind::mask, false, m.round, m.client,
                                   wm.encode().size(), m.values});
            masks.push_back(std::move(m));
        }
        AggregateFrame agg = unmask_aggregate(std::move(masks), prev, n);
        const WireMessage wm = WireMessage::from_aggregate(agg);
        run.transcript.append(
            {WireMessage::Kind::agg, true, agg.round, 0, wm.encode().size(), agg.values});
        prev = agg;
        run.aggregates.push_back(std::move(agg));
    }
    return run;
}

}  // namespace fedtt
