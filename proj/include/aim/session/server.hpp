#pragma once

#include <deque>
#include <future>
#include <memory>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "aim/session/session.hpp"

namespace aim::session {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

/// Serves one TrainingSession: the `/session` websocket (one expert client at a time) and a
/// `/healthz` status endpoint. All socket work runs on a single I/O thread; the session runs
/// on its own thread and talks to I/O only through its inbox and outbox.
class Server {
 public:
  Server(SessionConfig cfg, const std::string& address, unsigned short port)
      : session_(std::move(cfg)), acceptor_(ioc_, tcp::endpoint(net::ip::make_address(address), port)) {}

  ~Server() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  TrainingSession& session() { return session_; }

  void start() {
    started_ = true;
    do_accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    pump_thread_ = std::thread([this] { pump(); });
    session_thread_ = std::thread([this] { result_.set_value(run_session()); });
  }

  /// Blocks until the training run ends (finished, stopped by the client, or stop()).
  /// Safe to call while another thread runs stop(). Call at most once, after start().
  RunResult wait() { return future_.get(); }

  /// Ends the run if it is still going, flushes pending messages and closes the server.
  void stop() {
    if (!started_ || stopped_.exchange(true)) return;
    session_.inbox().push({Inbound::Type::Shutdown, {}});
    if (session_thread_.joinable()) session_thread_.join();
    if (pump_thread_.joinable()) pump_thread_.join();
    auto closed = closed_.get_future();
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      if (client_) {
        client_->close_after_flush();
      } else {
        signal_closed();
      }
    });
    closed.wait_for(std::chrono::seconds(2));
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
  }

 private:
  class WsConnection : public std::enable_shared_from_this<WsConnection> {
   public:
    WsConnection(Server& server, tcp::socket socket) : server_(server), ws_(std::move(socket)) {}

    void accept(http::request<http::string_body> req) {
      ws_.set_option(websocket::stream_base::decorator(
          [](websocket::response_type& res) { res.set(http::field::server, "aim-session"); }));
      ws_.text(true);
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return self->server_.detach(self.get());
        self->server_.session_.inbox().push({Inbound::Type::Connected, {}});
        self->read();
      });
    }

    void send(std::string text) {
      if (closing_) return;
      queue_.push_back(std::move(text));
      if (queue_.size() == 1) write();
    }

    void close_after_flush() {
      closing_ = true;
      if (queue_.empty()) close();
    }

   private:
    void read() {
      ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->server_.detach(self.get());
          return;
        }
        const std::string text = beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        self->server_.on_text(text);
        self->read();
      });
    }

    void write() {
      ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->server_.detach(self.get());
          return;
        }
        self->queue_.pop_front();
        if (!self->queue_.empty()) {
          self->write();
        } else if (self->closing_) {
          self->close();
        }
      });
    }

    void close() {
      ws_.async_close(websocket::close_code::normal,
                      [self = shared_from_this()](beast::error_code) { self->server_.detach(self.get()); });
    }

    Server& server_;
    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    bool closing_ = false;
  };

  class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
   public:
    HttpConnection(Server& server, tcp::socket socket) : server_(server), stream_(std::move(socket)) {}

    void run() {
      stream_.expires_after(std::chrono::seconds(30));
      http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (!ec) self->route();
      });
    }

   private:
    void route() {
      stream_.expires_never();
      if (websocket::is_upgrade(req_)) {
        if (req_.target() != "/session") return respond(http::status::not_found, {{"error", "unknown endpoint"}});
        if (server_.client_) {
          return respond(http::status::conflict, {{"error", "an expert client is already connected"}});
        }
        auto ws = std::make_shared<WsConnection>(server_, stream_.release_socket());
        server_.client_ = ws;
        ws->accept(std::move(req_));
        return;
      }
      if (req_.target() == "/healthz") {
        auto status = server_.session_.status();
        status["status"] = "ok";
        status["client_connected"] = server_.client_ != nullptr;
        return respond(http::status::ok, status);
      }
      respond(http::status::not_found, {{"error", "unknown endpoint"}});
    }

    void respond(http::status code, const nlohmann::json& body) {
      auto res = std::make_shared<http::response<http::string_body>>(code, req_.version());
      res->set(http::field::server, "aim-session");
      res->set(http::field::content_type, "application/json");
      res->keep_alive(false);
      res->body() = body.dump();
      res->prepare_payload();
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
        beast::error_code ec;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      });
    }

    Server& server_;
    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
  };

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<HttpConnection>(*this, std::move(socket))->run();
      do_accept();
    });
  }

  // I/O thread.
  void on_text(const std::string& text) {
    try {
      auto m = decode(text);
      if (m.kind != MessageKind::HumanAction && m.kind != MessageKind::SessionControl) {
        throw ProtocolError(fmt::format("clients may not send {}", to_string(m.kind)));
      }
      session_.inbox().push({Inbound::Type::Message, std::move(m)});
    } catch (const ProtocolError& e) {
      spdlog::warn("session: malformed client message ignored: {}", e.what());
      session_.outbox().send(error_frame(e.what()));
    }
  }

  // I/O thread.
  void detach(WsConnection* c) {
    if (client_.get() != c) return;
    client_.reset();
    session_.inbox().push({Inbound::Type::Disconnected, {}});
    if (stopped_) signal_closed();
  }

  void signal_closed() {
    if (!closed_signalled_) closed_.set_value();
    closed_signalled_ = true;
  }

  /// Forwards outgoing messages to the connected client, dropping them while nobody listens.
  void pump() {
    while (auto m = session_.outbox().channel().pop()) {
      net::post(ioc_, [this, text = encode(*m)]() mutable {
        if (client_) client_->send(std::move(text));
      });
    }
  }

  RunResult run_session() {
    try {
      return session_.run();
    } catch (const std::exception& e) {
      spdlog::error("session: training run failed: {}", e.what());
      session_.outbox().send(error_frame(std::string("training run failed: ") + e.what()));
      session_.outbox().channel().close();
      return {};
    }
  }

  TrainingSession session_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::shared_ptr<WsConnection> client_;
  std::promise<RunResult> result_;
  std::future<RunResult> future_ = result_.get_future();
  std::promise<void> closed_;
  bool closed_signalled_ = false;
  bool started_ = false;
  std::atomic<bool> stopped_{false};
  std::thread io_thread_;
  std::thread pump_thread_;
  std::thread session_thread_;
};

}  // namespace aim::session
