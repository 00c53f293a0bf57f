#include "fedtt/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

namespace fedtt {

std::vector<std::uint8_t> encode_envelope(const Envelope& e) {
    switch (e.type) {
        case Envelope::Type::frame:
            return e.frame.encode();
        case Envelope::Type::control: {
            std::vector<std::uint8_t> out{'F', 'T', 'C', '1'};
            for (int i = 0; i < 4; ++i)
                out.push_back(static_cast<std::uint8_t>(e.control.round >> (8 * i)));
            std::uint64_t bits;
            std::memcpy(&bits, &e.control.server_disc_loss, 8);
            for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
            return out;
        }
        case Envelope::Type::shutdown:
            return {'F', 'T', 'S', 'D'};
    }
    throw ProtocolError("encode_envelope: unknown envelope type");
}

Envelope decode_envelope(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw ProtocolError("decode_envelope: short packet");
    if (bytes[0] == 'F' && bytes[1] == 'T' && bytes[2] == 'T' && bytes[3] == '1') {
        Envelope e;
        e.type = Envelope::Type::frame;
        e.frame = WireMessage::decode(bytes);
        return e;
    }
    if (bytes[0] == 'F' && bytes[1] == 'T' && bytes[2] == 'C' && bytes[3] == '1') {
        if (bytes.size() != 16) throw ProtocolError("decode_envelope: bad control packet size");
        Envelope e;
        e.type = Envelope::Type::control;
        std::uint32_t round = 0;
        for (int i = 0; i < 4; ++i) round |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
        e.control.round = round;
        std::memcpy(&e.control.server_disc_loss, &bits, 8);
        return e;
    }
    if (bytes[0] == 'F' && bytes[1] == 'T' && bytes[2] == 'S' && bytes[3] == 'D') {
        Envelope e;
        e.type = Envelope::Type::shutdown;
        return e;
    }
    throw ProtocolError("decode_envelope: unknown packet magic");
}

namespace {

class EnvelopeQueue {
public:
    explicit EnvelopeQueue(double timeout_seconds) : timeout_(timeout_seconds) {}

    void push(Envelope e) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            q_.push_back(std::move(e));
        }
        cv_.notify_one();
    }

    Envelope pop(const char* who) {
        std::unique_lock<std::mutex> lock(mu_);
        if (!cv_.wait_for(lock, std::chrono::duration<double>(timeout_),
                          [&] { return !q_.empty(); })) {
            std::ostringstream os;
            os << "transport timeout waiting for message (" << who << ")";
            throw ProtocolError(os.str());
        }
        Envelope e = std::move(q_.front());
        q_.pop_front();
        return e;
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Envelope> q_;
    double timeout_;
};

class InprocHub final : public TransportHub {
public:
    InprocHub(std::size_t clients, double timeout) {
        for (std::size_t i = 0; i < clients; ++i) {
            to_server_.push_back(std::make_unique<EnvelopeQueue>(timeout));
            to_client_.push_back(std::make_unique<EnvelopeQueue>(timeout));
        }
    }

    std::size_t client_count() const override { return to_server_.size(); }

    Envelope recv_from(std::size_t client) override { return to_server_.at(client)->pop("server<-client"); }
    void send_to(std::size_t client, const Envelope& e) override { to_client_.at(client)->push(e); }
    void client_send(std::size_t client, const Envelope& e) override { to_server_.at(client)->push(e); }
    Envelope client_recv(std::size_t client) override { return to_client_.at(client)->pop("client<-server"); }

private:
    std::vector<std::unique_ptr<EnvelopeQueue>> to_server_;
    std::vector<std::unique_ptr<EnvelopeQueue>> to_client_;
};

struct Fd {
    int fd = -1;
    Fd() = default;
    explicit Fd(int f) : fd(f) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    Fd(Fd&& o) noexcept : fd(o.fd) { o.fd = -1; }
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            close_fd();
            fd = o.fd;
            o.fd = -1;
        }
        return *this;
    }
    ~Fd() { close_fd(); }
    void close_fd() {
        if (fd >= 0) ::close(fd);
        fd = -1;
    }
};

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
    std::size_t off = 0;
    while (off < len) {
        const ssize_t n = ::send(fd, data + off, len - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError("tcp send failed");
        }
        off += static_cast<std::size_t>(n);
    }
}

void read_all(int fd, std::uint8_t* data, std::size_t len, double timeout_seconds) {
    std::size_t off = 0;
    while (off < len) {
        pollfd pf{fd, POLLIN, 0};
        const int pr = ::poll(&pf, 1, static_cast<int>(timeout_seconds * 1000.0));
        if (pr == 0) throw ProtocolError("tcp receive timeout");
        if (pr < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError("tcp poll failed");
        }
        const ssize_t n = ::recv(fd, data + off, len - off, 0);
        if (n == 0) throw ProtocolError("tcp peer closed the connection");
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError("tcp recv failed");
        }
        off += static_cast<std::size_t>(n);
    }
}

void send_packet(int fd, const std::vector<std::uint8_t>& body) {
    std::uint8_t len[4];
    const auto n = static_cast<std::uint32_t>(body.size());
    for (int i = 0; i < 4; ++i) len[i] = static_cast<std::uint8_t>(n >> (8 * i));
    write_all(fd, len, 4);
    write_all(fd, body.data(), body.size());
}

std::vector<std::uint8_t> recv_packet(int fd, double timeout) {
    std::uint8_t len[4];
    read_all(fd, len, 4, timeout);
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(len[i]) << (8 * i);
    if (n > (1u << 28)) throw ProtocolError("tcp packet too large");
    std::vector<std::uint8_t> body(n);
    if (n) read_all(fd, body.data(), n, timeout);
    return body;
}

class TcpHubImpl final : public TcpHub {
public:
    TcpHubImpl(std::size_t clients, std::uint16_t port, double timeout)
        : n_(clients), timeout_(timeout), server_fds_(clients), client_fds_(clients),
          client_init_(clients) {
        listen_fd_ = Fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (listen_fd_.fd < 0) throw ProtocolError("tcp: cannot create listening socket");
        int yes = 1;
        ::setsockopt(listen_fd_.fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(listen_fd_.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
            throw ProtocolError("tcp: cannot bind loopback port");
        socklen_t alen = sizeof(addr);
        ::getsockname(listen_fd_.fd, reinterpret_cast<sockaddr*>(&addr), &alen);
        port_ = ntohs(addr.sin_port);
        if (::listen(listen_fd_.fd, static_cast<int>(clients)) != 0)
            throw ProtocolError("tcp: listen failed");
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    ~TcpHubImpl() override {
        listen_fd_.close_fd();
        if (acceptor_.joinable()) acceptor_.join();
    }

    std::uint16_t bound_port() const override { return port_; }
    std::size_t client_count() const override { return n_; }

    Envelope recv_from(std::size_t client) override {
        const int fd = wait_server_fd(client);
        return decode_envelope(recv_packet(fd, timeout_));
    }

    void send_to(std::size_t client, const Envelope& e) override {
        const int fd = wait_server_fd(client);
        send_packet(fd, encode_envelope(e));
    }

    void client_send(std::size_t client, const Envelope& e) override {
        send_packet(client_fd(client), encode_envelope(e));
    }

    Envelope client_recv(std::size_t client) override {
        return decode_envelope(recv_packet(client_fd(client), timeout_));
    }

private:
    void accept_loop() {
        std::size_t registered = 0;
        while (registered < n_) {
            const int fd = ::accept(listen_fd_.fd, nullptr, nullptr);
            if (fd < 0) {
                if (errno == EINTR) continue;
                return;  // listener closed during shutdown
            }
            int yes = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
            std::uint8_t hello[8];
            try {
                read_all(fd, hello, 8, timeout_);
            } catch (const ProtocolError&) {
                ::close(fd);
                continue;
            }
            if (hello[0] != 'F' || hello[1] != 'T' || hello[2] != 'H' || hello[3] != 'I') {
                ::close(fd);
                continue;
            }
            std::uint32_t id = 0;
            for (int i = 0; i < 4; ++i) id |= static_cast<std::uint32_t>(hello[4 + i]) << (8 * i);
            if (id >= n_) {
                ::close(fd);
                continue;
            }
            {
                std::lock_guard<std::mutex> lock(mu_);
                server_fds_[id] = Fd(fd);
                ++registered;
            }
            cv_.notify_all();
        }
    }

    int wait_server_fd(std::size_t client) {
        std::unique_lock<std::mutex> lock(mu_);
        if (!cv_.wait_for(lock, std::chrono::duration<double>(timeout_),
                          [&] { return server_fds_.at(client).fd >= 0; }))
            throw ProtocolError("tcp: client never connected");
        return server_fds_[client].fd;
    }

    int client_fd(std::size_t client) {
        std::lock_guard<std::mutex> lock(client_mu_);
        if (!client_init_.at(client)) {
            Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
            if (fd.fd < 0) throw ProtocolError("tcp: cannot create client socket");
            sockaddr_in addr{};
            addr.sin_family = AF_INET;
            addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
            addr.sin_port = htons(port_);
            if (::connect(fd.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
                throw ProtocolError("tcp: connect failed");
            int yes = 1;
            ::setsockopt(fd.fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
            std::uint8_t hello[8] = {'F', 'T', 'H', 'I', 0, 0, 0, 0};
            const auto id = static_cast<std::uint32_t>(client);
            for (int i = 0; i < 4; ++i) hello[4 + i] = static_cast<std::uint8_t>(id >> (8 * i));
            write_all(fd.fd, hello, 8);
            client_fds_[client] = std::move(fd);
            client_init_[client] = true;
        }
        return client_fds_[client].fd;
    }

    std::size_t n_;
    double timeout_;
    std::uint16_t port_ = 0;
    Fd listen_fd_;
    std::thread acceptor_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::vector<Fd> server_fds_;
    std::mutex client_mu_;
    std::vector<Fd> client_fds_;
    std::vector<bool> client_init_;
};

}  // namespace

std::unique_ptr<TransportHub> make_inproc_hub(std::size_t clients, double timeout_seconds) {
    return std::make_unique<InprocHub>(clients, timeout_seconds);
}

std::unique_ptr<TcpHub> make_tcp_hub(std::size_t clients, std::uint16_t port,
                                     double timeout_seconds) {
    return std::make_unique<TcpHubImpl>(clients, port, timeout_seconds);
}

}  // namespace fedtt
