#include "internal/http_client.hpp"

#include <httplib.h>

#include "biasgrid/error.hpp"
#include "biasgrid/generation.hpp"

namespace biasgrid {

Endpoint split_endpoint(std::string_view url) {
  if (!url.starts_with("http://")) {
    throw ConfigError("endpoint '" + std::string(url) + "' must start with http://");
  }
  const auto rest = url.substr(7);
  const auto slash = rest.find('/');
  Endpoint ep;
  ep.scheme_host_port = "http://" + std::string(rest.substr(0, slash));
  if (slash != std::string_view::npos) {
    ep.base_path = std::string(rest.substr(slash));
    while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
  }
  return ep;
}

namespace detail {
namespace {

httplib::Client make_client(const Endpoint& ep) {
  httplib::Client cli(ep.scheme_host_port);
  cli.set_connection_timeout(5, 0);
  // Generating 100 x 50 tokens on a CPU host can take minutes.
  cli.set_read_timeout(600, 0);
  cli.set_write_timeout(30, 0);
  return cli;
}

HttpResult convert(const httplib::Result& res) {
  HttpResult out;
  if (!res) {
    out.transport_error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

}  // namespace

HttpResult http_post_json(std::string_view url, std::string_view path, const std::string& body) {
  const auto ep = split_endpoint(url);
  auto cli = make_client(ep);
  return convert(cli.Post(ep.base_path + std::string(path), body, "application/json"));
}

HttpResult http_get(std::string_view url, std::string_view path) {
  const auto ep = split_endpoint(url);
  auto cli = make_client(ep);
  return convert(cli.Get(ep.base_path + std::string(path)));
}

}  // namespace detail
}  // namespace biasgrid
