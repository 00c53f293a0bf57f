#pragma once

#include <cstdint>
#include <memory>

#include "fedtt/tst.hpp"

namespace fedtt {

// Per-round scalar the server piggybacks on its broadcast: the current
// server-discriminator loss, consumed by the clients' freeze caches. Not a
// data frame, so it travels as a small control packet beside the FTT1
// stream (magic FTC1 on the TCP transport).
struct ControlRecord {
    std::uint32_t round = 0;
    double server_disc_loss = 0.0;
};

struct Envelope {
    enum class Type : std::uint8_t { frame = 0, control = 1, shutdown = 2 };
    Type type = Type::frame;
    WireMessage frame;
    ControlRecord control{};
};

// Bidirectional star topology between n clients and one server. Both
// implementations expose identical message semantics; channels preserve
// per-link ordering.
class TransportHub {
public:
    virtual ~TransportHub() = default;
    virtual std::size_t client_count() const = 0;

    // Server endpoints.
    virtual Envelope recv_from(std::size_t client) = 0;
    virtual void send_to(std::size_t client, const Envelope& e) = 0;

    // Client endpoints.
    virtual void client_send(std::size_t client, const Envelope& e) = 0;
    virtual Envelope client_recv(std::size_t client) = 0;
};

std::unique_ptr<TransportHub> make_inproc_hub(std::size_t clients, double timeout_seconds = 120.0);

// Loopback TCP. Frames travel as u32-length-prefixed FTT1 messages;
// control/shutdown packets use distinct magics inside the same length
// framing. Port 0 binds an ephemeral port (see bound_port()).
class TcpHub : public TransportHub {
public:
    virtual std::uint16_t bound_port() const = 0;
};

std::unique_ptr<TcpHub> make_tcp_hub(std::size_t clients, std::uint16_t port = 0,
                                     double timeout_seconds = 120.0);

// Envelope <-> framed bytes (without the u32 length prefix); shared by the
// TCP hub and the framing tests.
std::vector<std::uint8_t> encode_envelope(const Envelope& e);
Envelope decode_envelope(std::span<const std::uint8_t> bytes);

}  // namespace fedtt
