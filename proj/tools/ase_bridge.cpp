// WebSocket + HTTP front end for BridgeService. One port serves both: an
// upgrade request becomes a protocol socket, GET /health and GET /sessions
// are answered as plain JSON.

#include <algorithm>
#include <csignal>
#include <deque>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <CLI11.hpp>

#include "ase/bridge.hpp"

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

class Router;

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket&& socket, ase::BridgeService& service, Router& router)
      : ws_(std::move(socket)), service_(service), router_(router) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
  }

  // Safe from any thread.
  void send(std::string text) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
      self->queue_.push_back(std::move(text));
      if (self->queue_.size() == 1) self->write_next();
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t);

  void write_next() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) return;
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) self->write_next();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  ase::BridgeService& service_;
  Router& router_;
};

/// Which connection owns which session, so tick output reaches its client.
class Router {
 public:
  void claim(const std::string& session, const std::shared_ptr<WsConnection>& conn) {
    std::lock_guard lock(mutex_);
    owners_[session] = conn;
  }
  void deliver(const json& message) {
    const std::string session = message.value("session", "");
    std::shared_ptr<WsConnection> conn;
    {
      std::lock_guard lock(mutex_);
      const auto it = owners_.find(session);
      if (it == owners_.end()) return;
      conn = it->second.lock();
      const std::string type = message.value("type", "");
      if (!conn || type == "error" || type == "label") owners_.erase(it);
    }
    if (conn) conn->send(message.dump());
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::weak_ptr<WsConnection>> owners_;
};

void WsConnection::on_read(beast::error_code ec, std::size_t) {
  if (ec) return;
  const std::string text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  for (const auto& reply : service_.handle_text(text, ase::BridgeService::Clock::now())) {
    if (reply.value("type", "") == "frame" && reply.contains("session")) {
      router_.claim(reply.at("session").get<std::string>(), shared_from_this());
    }
    queue_.push_back(reply.dump());
    if (queue_.size() == 1) write_next();
  }
  read_next();
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, ase::BridgeService& service, Router& router)
      : stream_(std::move(socket)), service_(service), router_(router) {}

  void start() {
    asio::dispatch(stream_.get_executor(),
                   beast::bind_front_handler(&HttpConnection::read_next, shared_from_this()));
  }

 private:
  void read_next() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      std::make_shared<WsConnection>(stream_.release_socket(), service_, router_)->start(std::move(req_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::content_type, "application/json");
    res->set(http::field::access_control_allow_origin, "*");
    const auto target = req_.target();
    if (req_.method() != http::verb::get) {
      res->result(http::status::method_not_allowed);
      res->body() = json{{"v", ase::kProtocolVersion}, {"error", "method not allowed"}}.dump();
    } else if (target == "/health") {
      res->result(http::status::ok);
      res->body() = service_.health().dump();
    } else if (target == "/sessions") {
      res->result(http::status::ok);
      res->body() = service_.sessions().dump();
    } else {
      res->result(http::status::not_found);
      res->body() = json{{"v", ase::kProtocolVersion}, {"error", "not found"}}.dump();
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->keep_alive()) {
        self->read_next();
      } else {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      }
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  ase::BridgeService& service_;
  Router& router_;
};

class Listener : public std::enable_shared_from_this<Listener> {
 public:
  Listener(asio::io_context& ioc, tcp::endpoint endpoint, ase::BridgeService& service, Router& router)
      : ioc_(ioc), acceptor_(asio::make_strand(ioc)), service_(service), router_(router) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(asio::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void accept_next() {
    acceptor_.async_accept(asio::make_strand(ioc_), [self = shared_from_this()](beast::error_code ec,
                                                                                 tcp::socket socket) {
      if (!ec) std::make_shared<HttpConnection>(std::move(socket), self->service_, self->router_)->start();
      self->accept_next();
    });
  }

 private:
  asio::io_context& ioc_;
  tcp::acceptor acceptor_;
  ase::BridgeService& service_;
  Router& router_;
};

class Ticker {
 public:
  Ticker(asio::io_context& ioc, ase::BridgeService& service, Router& router)
      : timer_(asio::make_strand(ioc)), service_(service), router_(router),
        // Poll well inside one tick so injected no-ops stay on schedule.
        period_(std::max<std::chrono::nanoseconds>(service.tick_interval() / 4, std::chrono::milliseconds(1))) {}

  void arm() {
    timer_.expires_after(period_);
    timer_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      for (const auto& m : service_.tick(ase::BridgeService::Clock::now())) router_.deliver(m);
      arm();
    });
  }

 private:
  asio::steady_timer timer_;
  ase::BridgeService& service_;
  Router& router_;
  std::chrono::nanoseconds period_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Episode server for live play over WebSocket"};
  std::string config_path;
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  unsigned threads = 2;
  std::string log_dir;
  app.add_option("config", config_path, "Bridge config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--address", address, "Listen address");
  app.add_option("--port", port, "Listen port (0 picks a free one)");
  app.add_option("--threads", threads, "I/O threads")->check(CLI::Range(1u, 256u));
  app.add_option("--log-dir", log_dir, "Demonstration log directory (overrides the config)");
  CLI11_PARSE(app, argc, argv);

  try {
    ase::BridgeConfig config = config_path.empty() ? ase::BridgeConfig{} : ase::BridgeConfig::load(config_path);
    if (!log_dir.empty()) config.log_dir = log_dir;
    ase::BridgeService service(config);
    Router router;

    asio::io_context ioc(static_cast<int>(threads));
    auto listener = std::make_shared<Listener>(ioc, tcp::endpoint{asio::ip::make_address(address), port},
                                               service, router);
    listener->accept_next();
    Ticker ticker(ioc, service, router);
    ticker.arm();

    asio::signal_set signals(ioc, SIGINT, SIGTERM);
    signals.async_wait([&](beast::error_code, int) { ioc.stop(); });

    // Scripts wait for this line to learn the port.
    std::cout << "listening on " << address << ":" << listener->port() << std::endl;

    std::vector<std::thread> pool;
    for (unsigned i = 1; i < threads; ++i) pool.emplace_back([&] { ioc.run(); });
    ioc.run();
    for (auto& t : pool) t.join();
    service.flush_log();
  } catch (const ase::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
