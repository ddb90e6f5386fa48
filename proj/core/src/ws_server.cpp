#include <sys/socket.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <list>

#include "lodstream/error.hpp"
#include "lodstream/service.hpp"

namespace lodstream {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kSendBatch = 256;
constexpr auto kPollInterval = std::chrono::milliseconds(100);

}  // namespace

struct WsServer::Impl {
  struct Session {
    explicit Session(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  Impl(const EventLog& log, const std::string& host, std::uint16_t port) : log(log), acceptor(io) {
    boost::system::error_code ec;
    const tcp::endpoint endpoint(asio::ip::make_address(host, ec), port);
    if (ec) {
      throw Error(ErrorCode::BindError, "bad address " + host + ": " + ec.message());
    }
    acceptor.open(endpoint.protocol(), ec);
    if (!ec) {
      acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    }
    if (!ec) {
      acceptor.bind(endpoint, ec);
    }
    if (!ec) {
      acceptor.listen(asio::socket_base::max_listen_connections, ec);
    }
    if (ec) {
      throw Error(ErrorCode::BindError, "cannot listen on " + host + ":" + std::to_string(port) + ": " + ec.message());
    }
  }

  void accept_next() {
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) {
        return;
      }
      {
        std::lock_guard lock(mutex);
        reap_locked();
        auto& session = sessions.emplace_back(std::make_unique<Session>(std::move(socket)));
        ++active;
        ++total;
        Session* s = session.get();
        s->thread = std::thread([this, s] { serve(*s); });
      }
      accept_next();
    });
  }

  void serve(Session& session) {
    try {
      websocket::stream<tcp::socket&> ws(session.socket);
      ws.set_option(websocket::stream_base::decorator(
          [](websocket::response_type& res) { res.set(beast::http::field::server, "lodstream"); }));
      ws.accept();
      ws.binary(true);
      std::size_t cursor = 0;
      while (!stopping.load()) {
        const auto batch = log.read_from(cursor, kSendBatch, kPollInterval);
        for (const EncodedMessage& m : batch) {
          ws.write(asio::buffer(*m));
        }
        cursor += batch.size();
        if (batch.empty() && log.closed() && cursor == log.size()) {
          ws.close(websocket::close_code::normal);
          break;
        }
      }
    } catch (const std::exception&) {
      // Client went away or the server is stopping.
    }
    finish(session);
  }

  void finish(Session& session) {
    std::lock_guard lock(mutex);
    session.done = true;
    --active;
    drained.notify_all();
  }

  void reap_locked() {
    for (auto it = sessions.begin(); it != sessions.end();) {
      if ((*it)->done.load() && (*it)->thread.joinable()) {
        (*it)->thread.join();
        it = sessions.erase(it);
      } else {
        ++it;
      }
    }
  }

  void stop() {
    if (stopping.exchange(true)) {
      return;
    }
    asio::post(io, [this] {
      boost::system::error_code ec;
      acceptor.close(ec);
    });
    if (io_thread.joinable()) {
      io_thread.join();
    }
    std::list<std::unique_ptr<Session>> remaining;
    {
      std::lock_guard lock(mutex);
      for (auto& s : sessions) {
        ::shutdown(s->socket.native_handle(), SHUT_RDWR);
      }
      remaining.swap(sessions);
    }
    for (auto& s : remaining) {
      if (s->thread.joinable()) {
        s->thread.join();
      }
    }
  }

  const EventLog& log;
  asio::io_context io;
  tcp::acceptor acceptor;
  std::thread io_thread;
  std::atomic<bool> stopping{false};

  mutable std::mutex mutex;
  std::condition_variable drained;
  std::list<std::unique_ptr<Session>> sessions;
  std::size_t active = 0;
  std::size_t total = 0;
};

WsServer::WsServer(const EventLog& log, const std::string& host, std::uint16_t port)
    : impl_(std::make_unique<Impl>(log, host, port)) {}

WsServer::~WsServer() { stop(); }

std::uint16_t WsServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WsServer::start() {
  impl_->accept_next();
  impl_->io_thread = std::thread([this] { impl_->io.run(); });
}

void WsServer::stop() { impl_->stop(); }

std::size_t WsServer::active_sessions() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->active;
}

std::size_t WsServer::total_sessions() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->total;
}

void WsServer::wait_until_drained(const std::atomic<bool>* cancel) {
  std::unique_lock lock(impl_->mutex);
  while (!(impl_->log.closed() && impl_->total > 0 && impl_->active == 0)) {
    if (cancel != nullptr && cancel->load()) {
      return;
    }
    impl_->drained.wait_for(lock, kPollInterval);
  }
}

std::vector<std::vector<std::uint8_t>> fetch_ws_log(const std::string& host, std::uint16_t port,
                                                    std::chrono::milliseconds timeout) {
  asio::io_context io;
  websocket::stream<beast::tcp_stream> ws(io);
  auto& stream = beast::get_lowest_layer(ws);
  // Runs one asynchronous operation to completion so the stream deadline applies.
  auto run = [&](auto&& start) {
    boost::system::error_code result;
    start([&](boost::system::error_code ec, auto&&...) { result = ec; });
    io.restart();
    io.run();
    return result;
  };

  tcp::resolver resolver(io);
  boost::system::error_code ec;
  const auto endpoints = resolver.resolve(host, std::to_string(port), ec);
  stream.expires_after(timeout);
  if (!ec) {
    ec = run([&](auto handler) { stream.async_connect(endpoints, handler); });
  }
  if (!ec) {
    ec = run([&](auto handler) { ws.async_handshake(host + ":" + std::to_string(port), "/", handler); });
  }
  if (ec) {
    throw Error(ErrorCode::IoError, "cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
  }

  std::vector<std::vector<std::uint8_t>> frames;
  beast::flat_buffer buffer;
  while (true) {
    stream.expires_after(timeout);
    ec = run([&](auto handler) { ws.async_read(buffer, handler); });
    if (ec == websocket::error::closed) {
      break;
    }
    if (ec) {
      throw Error(ErrorCode::IoError, "websocket read failed: " + ec.message());
    }
    const auto data = buffer.data();
    const auto* begin = static_cast<const std::uint8_t*>(data.data());
    frames.emplace_back(begin, begin + data.size());
    buffer.consume(buffer.size());
  }
  return frames;
}

}  // namespace lodstream
