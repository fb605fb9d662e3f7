#include <doctest.h>

#include <cmath>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "smcgen/remote_lm.hpp"

using namespace smcgen;

namespace {

// Serves a fixed bigram-ish table: after token 0 the next token is 1 with
// probability 0.7, otherwise the distribution is uniform. The raw masses
// are scaled by 1.01 so the client has to renormalize and warn.
struct TestServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  TestServer() {
    server.Post("/logprobs", [](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto ctx = body["context"].get<std::vector<int>>();
      std::vector<double> p = {1.0 / 3, 1.0 / 3, 1.0 / 3};
      if (!ctx.empty() && ctx.back() == 0) p = {0.1, 0.7, 0.2};
      nlohmann::json out;
      for (double x : p) out["logprobs"].push_back(std::log(1.01 * x));
      res.set_content(out.dump(), "application/json");
    });
    server.Post("/short", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"logprobs": [0.0]})", "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~TestServer() {
    server.stop();
    thread.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port) + path; }
};

}  // namespace

TEST_SUITE("remote") {
  TEST_CASE("endpoints split into base and path") {
    CHECK(split_endpoint("http://localhost:8080/v1/lp") == std::pair<std::string, std::string>{"http://localhost:8080", "/v1/lp"});
    CHECK(split_endpoint("http://h:1").second == "/");
    CHECK_THROWS_AS(split_endpoint("localhost:8080"), NetworkError);
  }

  TEST_CASE("payloads are validated and renormalized") {
    std::vector<std::string> warnings;
    auto sink = [&](const std::string& w) { warnings.push_back(w); };
    const auto d = parse_logprob_payload(R"({"logprobs": [0.0, 0.0]})", 2, sink);
    CHECK(d.prob(0) == doctest::Approx(0.5));
    CHECK(warnings.size() == 1);
    warnings.clear();
    parse_logprob_payload(R"({"logprobs": [-0.6931471805599453, -0.6931471805599453]})", 2, sink);
    CHECK(warnings.empty());
    CHECK_THROWS_AS(parse_logprob_payload("not json", 2, sink), PayloadError);
    CHECK_THROWS_AS(parse_logprob_payload(R"({"probs": []})", 2, sink), PayloadError);
    CHECK_THROWS_AS(parse_logprob_payload(R"({"logprobs": [0.0]})", 2, sink), VocabularyMismatchError);
    CHECK_THROWS_AS(parse_logprob_payload(R"({"logprobs": ["x", 0.0]})", 2, sink), PayloadError);
    CHECK_THROWS_AS(parse_logprob_payload(R"({"logprobs": [null, null]})", 2, sink), PayloadError);
  }

  TEST_CASE("a live server answers queries") {
    TestServer srv;
    const RemoteModel m(srv.url("/logprobs"), Vocabulary::bytes("ab"), 5.0);
    const auto d0 = m.next_distribution({});
    CHECK(d0.prob(0) == doctest::Approx(1.0 / 3));
    const std::vector<TokenId> ctx = {0};
    const auto d1 = remote_logprobs(m, ctx);
    CHECK(d1.prob(1) == doctest::Approx(0.7));
    CHECK_FALSE(m.warnings().empty());

    const RemoteModel bad(srv.url("/short"), Vocabulary::bytes("ab"), 5.0);
    CHECK_THROWS_AS(bad.next_distribution({}), VocabularyMismatchError);
    const RemoteModel missing(srv.url("/nowhere"), Vocabulary::bytes("ab"), 5.0);
    CHECK_THROWS_AS(missing.next_distribution({}), NetworkError);
  }

  TEST_CASE("a closed port is a network error") {
    int port = 0;
    {
      httplib::Server probe;
      port = probe.bind_to_any_port("127.0.0.1");
    }
    const RemoteModel m("http://127.0.0.1:" + std::to_string(port) + "/lp", Vocabulary::bytes("ab"), 1.0);
    CHECK_THROWS_AS(m.next_distribution({}), NetworkError);
  }
}
