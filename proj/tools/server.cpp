#include "server.hpp"

#include <httplib.h>

#include <chrono>
#include <iostream>
#include <thread>

namespace lf {

namespace {

Query query_of(const httplib::Request& req) {
  Query q;
  for (const auto& [k, v] : req.params) q[k] = v;
  return q;
}

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

/// Tails events.jsonl until the run reaches a terminal status.
void follow_events(Api& api, const std::string& id, httplib::Response& res) {
  res.set_chunked_content_provider("application/x-ndjson", [&api, id, sent = std::size_t{0}](
                                                                std::size_t, httplib::DataSink& sink) mutable {
    for (;;) {
      const bool finished = is_terminal(api.runs().status(id));
      const std::string text = api.runs().events(id);
      const auto end = text.rfind('\n');
      if (end != std::string::npos && end + 1 > sent) {
        if (!sink.write(text.data() + sent, end + 1 - sent)) return false;
        sent = end + 1;
      }
      if (finished) {
        sink.done();
        return true;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(250));
      if (!sink.is_writable()) return false;
    }
  });
}

}  // namespace

void serve(Api& api, const std::string& host, int port) {
  httplib::Server server;
  auto route = [&api](const char* method) {
    return [&api, method](const httplib::Request& req, httplib::Response& res) {
      reply(res, api.handle(method, req.path, query_of(req), req.body));
    };
  };
  server.Get(R"(/api/runs/([^/]+)/events)", [&api](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (req.get_param_value("follow") != "1") return reply(res, api.handle("GET", req.path, query_of(req)));
    try {
      api.runs().run_dir(id);
    } catch (const std::exception& e) {
      return reply(res, error_response(e));
    }
    follow_events(api, id, res);
  });
  server.Get(R"(/api/.*)", route("GET"));
  server.Post(R"(/api/.*)", route("POST"));
  if (!server.bind_to_port(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  std::cerr << "listening on http://" << host << ":" << port << "\n";
  server.listen_after_bind();
}

}  // namespace lf
