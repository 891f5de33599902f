#include "magtee/teleop/server.hpp"

#include <chrono>
#include <deque>
#include <map>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "magtee/scenario.hpp"

namespace magtee::teleop {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

// A slow client gets at most this many unsent messages; further states are
// dropped (acks and errors never are).
constexpr std::size_t kMaxQueuedStates = 8;

class WsConnection;

}  // namespace

struct Server::Impl {
  Impl(Session& s, ServerOptions o) : session(s), options(std::move(o)), acceptor(ioc), timer(ioc) {}

  void accept();
  void broadcast();

  Session& session;
  ServerOptions options;
  net::io_context ioc{1};
  tcp::acceptor acceptor;
  net::steady_timer timer;
  std::chrono::steady_clock::time_point next_broadcast;
  long state_seq = 0;
  std::map<WsConnection*, std::weak_ptr<WsConnection>> clients;
};

namespace {

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket&& socket, Server::Impl& server) : ws_(std::move(socket)), server_(server) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->server_.clients[self.get()] = self;
      self->read();
    });
  }

  void send(std::shared_ptr<const std::string> msg, bool droppable) {
    if (closed_) return;
    if (droppable && queue_.size() >= kMaxQueuedStates) return;
    queue_.push_back(std::move(msg));
    if (queue_.size() == 1) write();
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->handle(text);
      self->read();
    });
  }

  void handle(const std::string& text) {
    json id = nullptr;
    try {
      Command cmd = parse_command(text, &id);
      std::weak_ptr<WsConnection> weak = shared_from_this();
      net::io_context& ioc = server_.ioc;
      server_.session.submit(std::move(cmd), [weak, &ioc](const json& ack) {
        auto msg = std::make_shared<const std::string>(ack.dump());
        net::post(ioc, [weak, msg] {
          if (auto self = weak.lock()) self->send(msg, false);
        });
      });
    } catch (const ProtocolError& e) {
      send(std::make_shared<const std::string>(error_message(id, e.what()).dump()), false);
    }
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  void close() {
    closed_ = true;
    queue_.clear();
    server_.clients.erase(this);
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server::Impl& server_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool closed_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

 private:
  void on_request() {
    if (websocket::is_upgrade(req_) && req_.target() == "/session") {
      stream_.expires_never();
      std::make_shared<WsConnection>(stream_.release_socket(), server_)->start(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(respond());
    res->keep_alive(req_.keep_alive());
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->need_eof()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  http::response<http::string_body> respond() {
    http::response<http::string_body> res;
    res.version(req_.version());
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    if (req_.target() != "/health" && req_.target() != "/scenario") {
      res.result(http::status::not_found);
      res.body() = json{{"error", "not found"}}.dump();
      return res;
    }
    if (req_.method() != http::verb::get) {
      res.result(http::status::method_not_allowed);
      res.body() = json{{"error", "only GET is supported"}}.dump();
      return res;
    }
    res.result(http::status::ok);
    if (req_.target() == "/health") {
      const auto s = server_.session.state();
      res.body() = json{{"status", "ok"},
                        {"session", s->session_id},
                        {"running", s->running},
                        {"fault", s->fault ? json(*s->fault) : json(nullptr)},
                        {"time", s->snapshot.time},
                        {"clients", server_.clients.size()}}
                       .dump();
    } else {
      res.body() = scenario_to_json(server_.session.scenario()).dump(2);
    }
    return res;
  }

  beast::tcp_stream stream_;
  Server::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

void Server::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<HttpConnection>(std::move(socket), *this)->read();
    accept();
  });
}

void Server::Impl::broadcast() {
  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / options.state_rate));
  next_broadcast += period;
  const auto now = std::chrono::steady_clock::now();
  if (next_broadcast < now - period) next_broadcast = now;
  timer.expires_at(next_broadcast);
  timer.async_wait([this](beast::error_code ec) {
    if (ec) return;
    if (!clients.empty()) {
      auto msg = std::make_shared<const std::string>(state_message(*session.state(), ++state_seq).dump());
      // send() may drop a client from the map on a synchronous failure.
      auto targets = clients;
      for (auto& [ptr, weak] : targets) {
        if (auto c = weak.lock()) c->send(msg, true);
      }
    }
    broadcast();
  });
}

Server::Server(Session& session, ServerOptions options) : impl_(std::make_unique<Impl>(session, std::move(options))) {
  if (!(impl_->options.state_rate > 0.0 && impl_->options.state_rate <= 1000.0)) {
    throw ConfigError("state rate must be in (0, 1000] Hz");
  }
  beast::error_code ec;
  const auto address = net::ip::make_address(impl_->options.address, ec);
  if (ec) throw ConfigError("invalid address '" + impl_->options.address + "'");
  const tcp::endpoint ep{address, impl_->options.port};
  auto& a = impl_->acceptor;
  a.open(ep.protocol(), ec);
  if (!ec) a.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) a.bind(ep, ec);
  if (!ec) a.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error("cannot listen on " + impl_->options.address + ":" + std::to_string(impl_->options.port) + ": " +
                ec.message());
  }
}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  std::jthread loop([this](std::stop_token st) { impl_->session.run(st); });
  impl_->accept();
  impl_->next_broadcast = std::chrono::steady_clock::now();
  impl_->broadcast();
  impl_->ioc.run();
}

void Server::stop() { impl_->ioc.stop(); }

}  // namespace magtee::teleop
