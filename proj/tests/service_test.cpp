#include <httplib.h>

#include <cmath>

#include "gtest/gtest.h"
#include "imn/attribution/export.hpp"
#include "imn/data/dataset.hpp"
#include "imn/data/io.hpp"
#include "imn/data/synthetic.hpp"
#include "imn/model/checkpoint.hpp"
#include "imn/service/api.hpp"
#include "imn/service/http_server.hpp"
#include "support.hpp"

namespace imn {
namespace {

using json = nlohmann::json;

Dataset small_records() {
  SynthSpec spec;
  spec.seed = 3;
  spec.records_per_class = 3;
  spec.signal_length = 64;
  return generate_synthetic(spec);
}

class ServiceTest : public ::testing::Test {
 protected:
  ServiceTest()
      : service_(testing::warmed_model<float>(make_config(Formulation::binary, 64), 4), small_records()) {}

  json ok(std::string_view method, std::string_view path, const json& body = json::object()) const {
    const auto r = service_.handle(method, path, body.dump());
    EXPECT_EQ(r.status, 200) << r.body;
    return json::parse(r.body);
  }

  json error(int status, std::string_view method, std::string_view path, std::string_view body = "{}") const {
    const auto r = service_.handle(method, path, body);
    EXPECT_EQ(r.status, status) << r.body;
    return json::parse(r.body);
  }

  ExplorerService service_;
};

TEST_F(ServiceTest, ListsRecordsWithSchemaVersion) {
  const auto j = ok("GET", "/records");
  EXPECT_EQ(j["schema_version"], kApiSchemaVersion);
  ASSERT_EQ(j["records"].size(), 6u);
  const auto& first = j["records"][0];
  for (auto key : {"id", "labels", "fold", "L", "fs"}) EXPECT_TRUE(first.contains(key)) << key;
  EXPECT_EQ(first["L"], 64);
}

TEST_F(ServiceTest, SignalIsNormalizedPerLead) {
  const std::string id = ok("GET", "/records")["records"][1]["id"];
  const auto j = ok("GET", "/records/" + id + "/signal");
  EXPECT_EQ(j["id"], id);
  EXPECT_EQ(j["C"], 12);
  EXPECT_EQ(j["L"], 64);
  EXPECT_EQ(j["normalized"], true);
  ASSERT_EQ(j["values"].size(), 12u);
  for (const auto& row : j["values"]) {
    ASSERT_EQ(row.size(), 64u);
    double mean = 0.0;
    for (double v : row) mean += v;
    EXPECT_NEAR(mean / 64.0, 0.0, 1e-5);
  }
}

TEST_F(ServiceTest, PredictByIdMatchesModel) {
  const std::string id = ok("GET", "/records")["records"][0]["id"];
  const auto j = ok("POST", "/predict", {{"id", id}});
  const auto out = service_.model().predict(service_.record(id).signal);
  EXPECT_EQ(j["formulation"], "binary");
  EXPECT_EQ(j["probability"].get<float>(), out.positive_probability());
  EXPECT_EQ(j["logits"][0].get<float>(), out.logits[0]);
  EXPECT_EQ(j["schema_version"], kApiSchemaVersion);
}

TEST_F(ServiceTest, PredictInlineSignalIsNormalizedServerSide) {
  const std::string id = ok("GET", "/records")["records"][2]["id"];
  const auto& rec = service_.record(id);
  json rows = json::array();
  for (std::size_t c = 0; c < 12; ++c) {
    json row = json::array();
    for (std::size_t t = 0; t < 64; ++t) row.push_back(3.0 * rec.signal.at(c, t) + 7.0);
    rows.push_back(row);
  }
  const auto inline_result = ok("POST", "/predict", {{"signal", rows}});
  const auto by_id = ok("POST", "/predict", {{"id", id}});
  EXPECT_EQ(inline_result["normalized_server_side"], true);
  EXPECT_NEAR(inline_result["probability"].get<double>(), by_id["probability"].get<double>(), 1e-4);
}

TEST_F(ServiceTest, AttributionPartitionHoldsOverTheWire) {
  const std::string id = ok("GET", "/records")["records"][3]["id"];
  const auto j = ok("POST", "/attribute", {{"id", id}, {"window", 16}, {"stride", 16}, {"top_k", 3}});
  EXPECT_EQ(j["num_segments"], 4);
  EXPECT_EQ(j["k"], "scalar");
  double total = 0.0;
  for (const auto& s : j["segments"]) total += s["value"].get<double>();
  const double logit = j["logit"];
  EXPECT_NEAR(total + j["bias"].get<double>(), logit, 1e-4 * (1.0 + std::abs(logit)));
  EXPECT_EQ(j["top_k"].size(), 3u);
}

TEST_F(ServiceTest, AblateReportsFrozenLinearDelta) {
  const std::string id = ok("GET", "/records")["records"][1]["id"];
  const auto j = ok("POST", "/ablate",
                    {{"id", id}, {"mode", "frozen"}, {"lead_mask", {6, 7}}, {"segments", {{{"start", 0}, {"end", 8}}}}});
  EXPECT_EQ(j["masked_samples"], 2 * 64 + 10 * 8);
  EXPECT_NEAR(j["logit_ablated"].get<double>() - j["logit_original"].get<double>(), j["linear_delta"].get<double>(),
              1e-6 * (1.0 + std::abs(j["linear_delta"].get<double>())));
  const auto empty = ok("POST", "/ablate", {{"id", id}});
  EXPECT_EQ(empty["delta"], 0.0);
  EXPECT_EQ(empty["warnings"].size(), 1u);
}

TEST_F(ServiceTest, ResponsesAreByteIdenticalAcrossCalls) {
  const std::string id = ok("GET", "/records")["records"][0]["id"];
  const std::string body = json{{"id", id}, {"window", 8}, {"stride", 4}}.dump();
  EXPECT_EQ(service_.handle("POST", "/attribute", body).body, service_.handle("POST", "/attribute", body).body);
}

TEST_F(ServiceTest, ErrorsUseTheEnvelope) {
  const std::string id = ok("GET", "/records")["records"][0]["id"];
  auto check = [](const json& j, std::string_view code) {
    ASSERT_TRUE(j.contains("error"));
    EXPECT_EQ(j["error"]["code"], code);
    EXPECT_TRUE(j["error"]["message"].is_string());
    EXPECT_TRUE(j["error"].contains("detail"));
  };
  check(error(404, "GET", "/nowhere"), "not_found");
  check(error(404, "DELETE", "/records"), "not_found");
  check(error(404, "GET", "/records/missing/signal"), "not_found");
  check(error(404, "POST", "/predict", json{{"id", "missing"}}.dump()), "not_found");
  check(error(400, "POST", "/predict", "{not json"), "bad_request");
  check(error(400, "POST", "/predict", json{{"id", id}, {"extra", 1}}.dump()), "bad_request");
  check(error(400, "POST", "/predict", json{{"id", id}, {"schema_version", 2}}.dump()), "bad_request");
  check(error(400, "POST", "/predict", "{}"), "bad_request");
  check(error(400, "POST", "/attribute", json{{"id", id}, {"window", 65}, {"stride", 1}}.dump()), "bad_request");
  check(error(400, "POST", "/attribute", json{{"id", id}, {"window", 8}}.dump()), "bad_request");
  check(error(400, "POST", "/attribute", json{{"id", id}, {"window", 8}, {"stride", 8}, {"k", 1}}.dump()),
        "bad_request");
  check(error(400, "POST", "/ablate", json{{"id", id}, {"lead_mask", {12}}}.dump()), "bad_request");
  check(error(400, "POST", "/ablate", json{{"id", id}, {"segments", {{{"begin", 0}, {"end", 4}}}}}.dump()),
        "bad_request");
  check(error(409, "POST", "/predict", json{{"id", id}, {"formulation", "categorical"}}.dump()), "model_mismatch");
  const auto unknown = error(400, "POST", "/predict", json{{"id", id}, {"extra", 1}}.dump());
  EXPECT_NE(unknown["error"]["message"].get<std::string>().find("extra"), std::string::npos);
}

TEST(ServiceFiles, LoadsCheckpointAndManifest) {
  testing::TempDir dir("service_files");
  const auto manifest = write_dataset(small_records(), dir / "data");
  save_checkpoint(testing::warmed_model<float>(make_config(Formulation::binary, 64), 5), dir / "ckpt");
  const auto service = ExplorerService::from_files(dir / "ckpt", manifest);
  EXPECT_EQ(json::parse(service.handle("GET", "/records", "").body)["records"].size(), 6u);
}

TEST(HttpServer, ServesJsonOverLoopback) {
  const ExplorerService service(testing::warmed_model<float>(make_config(Formulation::binary, 64), 6),
                                small_records());
  HttpServer server(service);
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto records = client.Get("/records");
  ASSERT_TRUE(records);
  EXPECT_EQ(records->status, 200);
  EXPECT_NE(records->get_header_value("Content-Type").find("application/json"), std::string::npos);
  const std::string id = json::parse(records->body)["records"][0]["id"];

  auto predicted = client.Post("/predict", json{{"id", id}}.dump(), "application/json");
  ASSERT_TRUE(predicted);
  EXPECT_EQ(predicted->status, 200);
  EXPECT_EQ(predicted->body, service.handle("POST", "/predict", json{{"id", id}}.dump()).body);

  auto missing = client.Get("/unknown");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"]["code"], "not_found");

  auto bad = client.Post("/attribute", "{\"id\": 1}", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  server.stop();
}

}  // namespace
}  // namespace imn
