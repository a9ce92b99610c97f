#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "fixtures.hpp"
#include "sysrev/service.hpp"

using namespace sysrev;
using sysrev::testing::TempDir;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    pipeline_ = sysrev::testing::golden_pipeline(dir_.path());
    service_ = std::make_unique<service::Service>(*pipeline_);
    port_ = service_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_->serve(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 100 && !client_->Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  void TearDown() override {
    service_->stop();
    thread_.join();
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body, int expected) {
    auto res = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected) << res->body;
    return nlohmann::json::parse(res->body);
  }
  nlohmann::json get(const std::string& path, int expected) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected) << res->body;
    return nlohmann::json::parse(res->body);
  }
  nlohmann::json create() {
    return post("/sessions",
                {{"question", sysrev::testing::kGoldenQuestion},
                 {"sentinel_pmids", {"35100001", "35100002", "35100003", "35100004", "35100005"}}},
                201);
  }

  TempDir dir_;
  std::unique_ptr<pipeline::Pipeline> pipeline_;
  std::unique_ptr<service::Service> service_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(service::http_status(ErrorCode::kInput), 400);
  EXPECT_EQ(service::http_status(ErrorCode::kNotFound), 404);
  EXPECT_EQ(service::http_status(ErrorCode::kConflict), 409);
  EXPECT_EQ(service::http_status(ErrorCode::kEmptyContext), 422);
  EXPECT_EQ(service::http_status(ErrorCode::kProvider), 502);
  EXPECT_EQ(service::http_status(ErrorCode::kStorage), 500);
}

TEST_F(ServiceTest, CreateFetchAndList) {
  const auto s = create();
  const std::string id = s["session_id"];
  EXPECT_EQ(s["revision"], 1);
  EXPECT_EQ(get("/sessions/" + id, 200), s);
  EXPECT_EQ(get("/sessions/" + id + "?revision=1", 200), s);
  const auto list = get("/sessions", 200);
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0]["session_id"], id);
  EXPECT_EQ(get("/sessions/" + id + "/revisions", 200)["revisions"], nlohmann::json({1}));
}

TEST_F(ServiceTest, ErrorsHaveCodeAndMessage) {
  const auto missing = get("/sessions/nope", 404);
  EXPECT_EQ(missing["code"], "not_found");
  EXPECT_TRUE(missing["message"].is_string());
  EXPECT_EQ(get("/no/such/endpoint", 404)["code"], "not_found");
  auto res = client_->Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(post("/sessions", {{"text", "x"}}, 400)["code"], "input");
  const auto stage = post("/sessions", {{"question", "what is it and why"}}, 422);
  EXPECT_EQ(stage["stage"], "extract");
  EXPECT_EQ(stage["code"], "empty_context");
}

TEST_F(ServiceTest, RefineAndMetrics) {
  const auto s = create();
  const std::string id = s["session_id"];
  const auto r = post("/sessions/" + id + "/refine", {{"edits", {{{"op", "remove_query"}, {"index", 5}}}}, {"revision", 1}},
                      200);
  EXPECT_EQ(r["revision"], 2);
  EXPECT_EQ(r["queries"].size(), 4u);
  post("/sessions/" + id + "/refine", {{"edits", nlohmann::json::array()}, {"revision", 1}}, 409);
  const auto m = get("/sessions/" + id + "/metrics?k=10", 200);
  EXPECT_GE(m["recall_at_k"].get<double>(), 0.8);
  EXPECT_EQ(m["k"], 10);
  get("/sessions/" + id + "/metrics?k=ten", 400);
}

TEST_F(ServiceTest, ConcurrentStaleFeedbackYieldsOneConflict) {
  const auto s = create();
  const std::string id = s["session_id"];
  const std::string pmid = s["hits"][0]["pmid"];
  std::atomic<int> created{0};
  std::atomic<int> conflicts{0};
  std::vector<std::thread> clients;
  for (int i = 0; i < 2; ++i) {
    clients.emplace_back([&] {
      httplib::Client c("127.0.0.1", port_);
      const nlohmann::json body = {{"event", {{"pmid", pmid}, {"verdict", "relevant"}}}, {"revision", 1}};
      auto res = c.Post("/sessions/" + id + "/feedback", body.dump(), "application/json");
      if (res && res->status == 201) ++created;
      if (res && res->status == 409) ++conflicts;
    });
  }
  for (auto& t : clients) t.join();
  EXPECT_EQ(created.load(), 1);
  EXPECT_EQ(conflicts.load(), 1);
  EXPECT_EQ(get("/sessions/" + id, 200)["feedback"].size(), 1u);
}

TEST_F(ServiceTest, FeedbackOutsideHitsNeedsForce) {
  const auto s = create();
  const std::string id = s["session_id"];
  EXPECT_EQ(post("/sessions/" + id + "/feedback", {{"pmid", "99999999"}, {"verdict", "sentinel"}}, 422)["code"],
            "reference");
  const auto r = post("/sessions/" + id + "/feedback", {{"pmid", "99999999"}, {"verdict", "sentinel"}, {"force", true}},
                      201);
  EXPECT_EQ(r["revision"], 2);
}

TEST_F(ServiceTest, ArticlesAndCors) {
  const auto a = get("/articles/35100001", 200);
  EXPECT_EQ(a["pmid"], "35100001");
  get("/articles/1", 404);
  auto res = client_->Options("/sessions");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(client_->Get("/healthz")->get_header_value("Access-Control-Allow-Origin"), "*");
}
