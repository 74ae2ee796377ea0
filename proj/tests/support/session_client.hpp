#pragma once

#include <optional>
#include <string>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "aim/session/protocol.hpp"
#include "aim/worlds/make.hpp"

// Test-side expert console: a blocking websocket client and an oracle that answers frames.
namespace aim_test {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;
using aim::Actor;
using aim::session::decode;
using aim::session::MessageKind;
using aim::session::SessionMessage;

/// Expert client that mirrors the world from the frame stream and answers with the oracle.
struct ScriptedExpert {
  std::unique_ptr<aim::worlds::Environment> shadow;
  long episode = -1;
  long applied = 0;  // steps replayed into the shadow world
  long answered = 0;
  long mismatched_worlds = 0;
  std::vector<SessionMessage> seen;

  explicit ScriptedExpert(aim::worlds::EnvKind kind) : shadow(aim::worlds::make_environment(kind)) {}

  /// Returns the reply to send, if the message asks for one.
  std::optional<SessionMessage> on_message(const SessionMessage& m) {
    seen.push_back(m);
    if (m.kind != MessageKind::StateFrame) return std::nullopt;
    const auto f = aim::session::decode_frame(m);
    if (f.episode != episode) {
      shadow->reset(f.env_seed);
      episode = f.episode;
    }
    if (f.last_action && f.step > applied) {
      shadow->step(*f.last_action, Actor::Agent);
      applied = f.step;
    }
    if (shadow->render_model() != f.world) ++mismatched_worlds;
    if (!f.awaiting_expert) return std::nullopt;
    ++answered;
    return aim::session::make_human_action({f.step, shadow->expert_action(), 0.0});
  }
};

inline nlohmann::json get_json(unsigned short port, const std::string& target, http::status* status = nullptr) {
  boost::asio::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port));
  http::request<http::empty_body> req(http::verb::get, target, 11);
  req.set(http::field::host, "localhost");
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  if (status) *status = res.result();
  return nlohmann::json::parse(res.body());
}

struct WsClient {
  boost::asio::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  void connect(unsigned short port) {
    tcp::resolver resolver(ioc);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/session");
    ws.text(true);
  }
  void send(const std::string& s) { ws.write(boost::asio::buffer(s)); }
  std::optional<SessionMessage> read() {
    beast::flat_buffer buf;
    beast::error_code ec;
    ws.read(buf, ec);
    if (ec) return std::nullopt;
    return decode(beast::buffers_to_string(buf.data()));
  }
};

}  // namespace aim_test
