#include "perchsim/harness/telemetry_server.hpp"

#include <atomic>
#include <deque>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace perchsim::harness::telemetry {
namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct Outgoing {
  std::shared_ptr<const std::string> text;
  bool lossless = false;
};

}  // namespace

struct TelemetryServer::Impl {
  struct Session;

  ServerOptions options;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread io_thread;
  std::set<std::shared_ptr<Session>> sessions;  // I/O thread only
  std::atomic<std::size_t> clients{0};
  std::atomic<std::size_t> dropped{0};
  std::atomic<std::size_t> rejected{0};
  std::atomic<bool> running{false};
  std::uint16_t bound_port = 0;

  std::mutex inbox_mutex;
  std::vector<ClientMessage> inbox;

  void warn(const std::string& what) {
    if (options.warn) {
      options.warn(what);
    } else {
      std::cerr << "telemetry: " << what << '\n';
    }
  }

  void receive(const std::string& text) {
    try {
      auto m = decode_client(text);
      if (m.kind == ClientMessage::Kind::Unknown) {
        ++rejected;
        warn("ignoring unknown message type '" + m.type + "'");
        return;
      }
      std::lock_guard lock(inbox_mutex);
      inbox.push_back(std::move(m));
    } catch (const Error& ex) {
      ++rejected;
      warn(ex.what());
    }
  }

  struct Session : std::enable_shared_from_this<Session> {
    websocket::stream<beast::tcp_stream> ws;
    beast::flat_buffer buffer;
    std::deque<Outgoing> queue;
    bool writing = false;
    Impl* owner;

    Session(tcp::socket socket, Impl* o) : ws(std::move(socket)), owner(o) {}

    void run() {
      ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->ws.text(true);
        self->owner->sessions.insert(self);
        ++self->owner->clients;
        self->read();
      });
    }

    void close() {
      if (owner->sessions.erase(shared_from_this()) > 0) --owner->clients;
    }

    void read() {
      ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->close();
          return;
        }
        self->owner->receive(beast::buffers_to_string(self->buffer.data()));
        self->buffer.consume(self->buffer.size());
        self->read();
      });
    }

    void send(const Outgoing& msg) {
      const std::size_t cap = owner->options.queue_capacity;
      // The front entry may be mid-write and must stay put.
      const std::size_t first_droppable = writing ? 1 : 0;
      while (queue.size() >= cap && queue.size() > first_droppable) {
        auto victim = queue.end();
        for (auto it = queue.begin() + first_droppable; it != queue.end(); ++it) {
          if (!it->lossless) {
            victim = it;
            break;
          }
        }
        if (victim == queue.end()) {
          if (!msg.lossless) {
            ++owner->dropped;
            return;
          }
          victim = queue.begin() + first_droppable;
        }
        queue.erase(victim);
        ++owner->dropped;
      }
      queue.push_back(msg);
      if (!writing) write();
    }

    void write() {
      writing = true;
      ws.async_write(net::buffer(*queue.front().text),
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       self->writing = false;
                       if (ec) {
                         self->close();
                         return;
                       }
                       self->queue.pop_front();
                       if (!self->queue.empty()) self->write();
                     });
    }
  };

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<Session>(std::move(socket), this)->run();
      accept();
    });
  }
};

TelemetryServer::TelemetryServer(ServerOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  if (impl_->options.queue_capacity == 0) throw Error(ErrorCode::ConfigError, "queue_capacity must be positive");
}

TelemetryServer::~TelemetryServer() { stop(); }

void TelemetryServer::start() {
  if (impl_->running) return;
  try {
    const tcp::endpoint endpoint(net::ip::make_address(impl_->options.address), impl_->options.port);
    impl_->acceptor.open(endpoint.protocol());
    impl_->acceptor.set_option(net::socket_base::reuse_address(true));
    impl_->acceptor.bind(endpoint);
    impl_->acceptor.listen(net::socket_base::max_listen_connections);
    impl_->bound_port = impl_->acceptor.local_endpoint().port();
  } catch (const boost::system::system_error& ex) {
    throw Error(ErrorCode::IoError, std::string("telemetry server cannot listen: ") + ex.what());
  }
  impl_->running = true;
  impl_->accept();
  impl_->io_thread = std::thread([impl = impl_.get()] { impl->ioc.run(); });
}

void TelemetryServer::stop() {
  if (!impl_->running.exchange(false)) return;
  impl_->ioc.stop();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
  // The I/O thread is gone, so the sockets can be closed from here.
  beast::error_code ec;
  impl_->acceptor.close(ec);
  for (const auto& s : impl_->sessions) beast::get_lowest_layer(s->ws).socket().close(ec);
  impl_->sessions.clear();
  impl_->clients = 0;
}

std::uint16_t TelemetryServer::port() const { return impl_->bound_port; }

void TelemetryServer::publish(const nlohmann::json& message, bool lossless) {
  if (!impl_->running) return;
  Outgoing msg{std::make_shared<const std::string>(message.dump()), lossless};
  net::post(impl_->ioc, [impl = impl_.get(), msg] {
    for (const auto& s : impl->sessions) s->send(msg);
  });
}

std::vector<ClientMessage> TelemetryServer::drain() {
  std::lock_guard lock(impl_->inbox_mutex);
  std::vector<ClientMessage> out;
  out.swap(impl_->inbox);
  return out;
}

std::size_t TelemetryServer::client_count() const { return impl_->clients; }
std::size_t TelemetryServer::dropped() const { return impl_->dropped; }
std::size_t TelemetryServer::rejected() const { return impl_->rejected; }

}  // namespace perchsim::harness::telemetry
