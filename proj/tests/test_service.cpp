#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "noshow/io.hpp"
#include "noshow/service.hpp"
#include "support.hpp"

using namespace noshow;
using noshow::test::fixture;
using noshow::test::golden;
using noshow::test::TempDir;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const PublishedSnapshot& snapshot() {
  static const auto s = load_snapshot(fixture("snapshot"));
  return *s;
}

HttpResponse get(std::string path, std::map<std::string, std::string> query = {}) {
  return handle_request(&snapshot(), HttpRequest{std::move(path), std::move(query)});
}

json body(const HttpResponse& r) { return json::parse(r.body); }

// Byte comparison against tests/golden/<name>.json; NOSHOW_UPDATE_GOLDEN=1 rewrites it.
void check_golden(const std::string& name, const HttpResponse& r) {
  const auto path = golden(name + ".json");
  if (std::getenv("NOSHOW_UPDATE_GOLDEN")) write_file_atomic(path, r.body);
  REQUIRE(fs::exists(path));
  CHECK(read_file(path) == r.body);
}

const json* find_cell(const json& b, const std::string& date, int hour, const std::string& provider = "*") {
  for (const auto& c : b["cells"]) {
    if (c["date"] == date && c["hour"] == hour && c["provider_id"] == provider) return &c;
  }
  return nullptr;
}

void copy_snapshot(const fs::path& root, const std::string& id, double bump) {
  const auto dir = root / id;
  fs::create_directories(dir);
  auto meta = json::parse(read_file(fixture("snapshot/meta.json")));
  meta["snapshot_id"] = id;
  write_file_atomic(dir / "meta.json", meta.dump());
  fs::copy_file(fixture("snapshot/providers.json"), dir / "providers.json");
  // Shift one probability so the two snapshots are distinguishable by content.
  auto csv = read_file(fixture("snapshot/scored.csv"));
  const std::string from = "S01,D001,family_medicine,main,2022-05-02T08:00-05:00,0.1";
  csv.replace(csv.find(from), from.size(), from.substr(0, from.size() - 3) + format_double(0.1 + bump));
  write_file_atomic(dir / "scored.csv", csv);
}

}  // namespace

TEST_CASE("golden responses") {
  check_golden("healthz", get("/healthz"));
  check_golden("meta", get("/api/v1/meta"));
  check_golden("providers", get("/api/v1/providers"));
  check_golden("heatmap_week1", get("/api/v1/heatmap", {{"week", "2022-05-04"}, {"group", "combined"}}));
  check_golden("heatmap_by_provider", get("/api/v1/heatmap", {{"week", "2022-05-02"}, {"group", "provider"}}));
  check_golden("heatmap_pediatrics", get("/api/v1/heatmap", {{"week", "2022-05-02"}, {"specialty", "pediatrics"}, {"group", "combined"}}));
  check_golden("block_tue_13", get("/api/v1/blocks/2022-05-03/13"));
  check_golden("error_bad_week", get("/api/v1/heatmap", {{"week", "2022-13-01"}}));
}

TEST_CASE("the worked four-appointment block") {
  auto r = get("/api/v1/heatmap", {{"week", "2022-05-02"}, {"provider", "D001"}});
  REQUIRE(r.status == 200);
  auto b = body(r);
  CHECK(b["snapshot_id"] == "0123456789abcdef");
  CHECK(b["filters"]["provider"] == "D001");
  CHECK(b["cells"].size() == 40);
  const auto* c = find_cell(b, "2022-05-03", 13, "D001");
  REQUIRE(c);
  CHECK((*c)["expected"] == 1.0);
  CHECK((*c)["color"] == "orange");
  CHECK((*c)["overbook"] == 1);
  CHECK((*c)["appointments"].size() == 4);
  CHECK(b["unplaced"] == 1);  // the 16:00 visit sits after closing
}

TEST_CASE("combined view and colors") {
  auto b = body(get("/api/v1/heatmap", {{"week", "2022-05-02"}, {"group", "combined"}}));
  CHECK(b["group"] == "combined");
  CHECK((*find_cell(b, "2022-05-03", 13))["expected"].get<double>() == doctest::Approx(2.3));
  CHECK((*find_cell(b, "2022-05-03", 13))["color"] == "red");
  CHECK((*find_cell(b, "2022-05-04", 9))["expected"].get<double>() == doctest::Approx(2.4));
  CHECK((*find_cell(b, "2022-05-02", 8))["color"] == "yellow");
  // Defaults: the first week in the snapshot, one grid per provider.
  const auto d = body(get("/api/v1/heatmap"));
  CHECK(d["week"] == "2022-05-02");
  CHECK(d["group"] == "provider");
  CHECK(d["providers"] == json::array({"D001", "D002"}));
}

TEST_CASE("filtered views are subsets of the unfiltered view") {
  const auto all = body(get("/api/v1/heatmap", {{"week", "2022-05-02"}, {"group", "combined"}}));
  const std::vector<std::map<std::string, std::string>> filters = {
      {{"provider", "D001"}},          {{"provider", "D002"}},          {{"specialty", "pediatrics"}},
      {{"site", "main"}},              {{"site", "north"}},             {{"provider", "D001"}, {"site", "north"}},
      {{"specialty", "family_medicine"}, {"site", "main"}}};
  for (auto q : filters) {
    q["week"] = "2022-05-02";
    q["group"] = "combined";
    const auto f = body(get("/api/v1/heatmap", q));
    REQUIRE(f["cells"].size() == all["cells"].size());
    for (std::size_t i = 0; i < f["cells"].size(); ++i) {
      const auto& fc = f["cells"][i];
      const auto& ac = all["cells"][i];
      CHECK(fc["date"] == ac["date"]);
      CHECK(fc["hour"] == ac["hour"]);
      CHECK(fc["n_scheduled"].get<int>() <= ac["n_scheduled"].get<int>());
      CHECK(fc["expected"].get<double>() <= ac["expected"].get<double>() + 1e-12);
      std::set<std::string> ids;
      for (const auto& a : ac["appointments"]) ids.insert(a["appointment_id"].get<std::string>());
      for (const auto& a : fc["appointments"]) CHECK(ids.contains(a["appointment_id"].get<std::string>()));
    }
  }
}

TEST_CASE("tooltips sum to the cell expectation") {
  for (const char* group : {"combined", "provider"}) {
    auto b = body(get("/api/v1/heatmap", {{"week", "2022-05-02"}, {"group", group}}));
    for (const auto& c : b["cells"]) {
      double s = 0;
      for (const auto& a : c["appointments"]) s += a["probability"].get<double>();
      CHECK(c["expected"].get<double>() == doctest::Approx(s).epsilon(1e-12));
      CHECK(c["n_scheduled"] == c["appointments"].size());
    }
  }
}

TEST_CASE("per-provider grids add up to the combined grid") {
  auto all = body(get("/api/v1/heatmap", {{"week", "2022-05-02"}, {"group", "combined"}}));
  auto per = body(get("/api/v1/heatmap", {{"week", "2022-05-02"}, {"group", "provider"}}));
  CHECK(per["providers"] == json::array({"D001", "D002"}));
  REQUIRE(per["cells"].size() == 2 * all["cells"].size());
  const std::size_t n = all["cells"].size();
  for (std::size_t i = 0; i < n; ++i) {
    const double sum = per["cells"][i]["expected"].get<double>() + per["cells"][n + i]["expected"].get<double>();
    CHECK(sum == doctest::Approx(all["cells"][i]["expected"].get<double>()).epsilon(1e-12));
  }
}

TEST_CASE("meta and heatmap agree on the snapshot id") {
  const auto id = body(get("/api/v1/meta"))["snapshot_id"];
  CHECK(body(get("/api/v1/heatmap"))["snapshot_id"] == id);
  CHECK(body(get("/api/v1/providers"))["snapshot_id"] == id);
  CHECK(body(get("/api/v1/blocks/2022-05-04/9"))["snapshot_id"] == id);
}

TEST_CASE("request errors name the parameter") {
  auto expect = [](const HttpResponse& r, int status, const std::string& error, const char* param) {
    CHECK(r.status == status);
    auto b = body(r);
    CHECK(b["error"] == error);
    if (param) CHECK(b["parameter"] == param);
    CHECK(b["message"].is_string());
  };
  expect(get("/api/v1/heatmap", {{"week", "May 2"}}), 400, "MalformedDate", "week");
  expect(get("/api/v1/heatmap", {{"provider", "D999"}}), 404, "UnknownProvider", "provider");
  expect(get("/api/v1/heatmap", {{"specialty", "cardiology"}}), 404, "UnknownSpecialty", "specialty");
  expect(get("/api/v1/heatmap", {{"site", "east"}}), 404, "UnknownSite", "site");
  expect(get("/api/v1/heatmap", {{"group", "site"}}), 400, "MalformedGroup", "group");
  expect(get("/api/v1/blocks/2022-05-40/13"), 400, "MalformedDate", "date");
  expect(get("/api/v1/blocks/2022-05-03/24"), 400, "MalformedHour", "hour");
  expect(get("/api/v1/blocks/2022-05-03/x"), 400, "MalformedHour", "hour");
  expect(get("/api/v1/blocks/2022-05-03/7"), 404, "BlockOutOfRange", nullptr);
  expect(get("/api/v1/blocks/2022-05-07/10"), 404, "BlockOutOfRange", nullptr);  // Saturday
  expect(get("/api/v1/blocks/2023-01-03/10"), 404, "BlockOutOfRange", nullptr);  // week not published
  expect(get("/api/v1/nothing"), 404, "NotFound", nullptr);
  expect(get("/elsewhere"), 404, "NotFound", nullptr);
}

TEST_CASE("no snapshot means 503") {
  for (const char* p : {"/healthz", "/api/v1/meta", "/api/v1/heatmap"}) {
    auto r = handle_request(nullptr, HttpRequest{p, {}});
    CHECK(r.status == 503);
    CHECK(body(r)["error"] == "NoSnapshotPublished");
  }
}

TEST_CASE("store keeps the last good snapshot") {
  TempDir root;
  SnapshotStore store(root.path());
  CHECK_FALSE(store.refresh());
  CHECK_FALSE(store.current());
  copy_snapshot(root.path(), "aaaaaaaaaaaaaaaa", 0.0);
  write_file_atomic(root / "CURRENT", "aaaaaaaaaaaaaaaa\n");
  CHECK(store.refresh());
  CHECK_FALSE(store.refresh());
  write_file_atomic(root / "CURRENT", "missingmissing00\n");
  CHECK_FALSE(store.refresh());
  REQUIRE(store.current());
  CHECK(store.current()->id == "aaaaaaaaaaaaaaaa");
}

TEST_CASE("requests during publication see exactly one snapshot") {
  TempDir root;
  copy_snapshot(root.path(), "aaaaaaaaaaaaaaaa", 0.0);
  copy_snapshot(root.path(), "bbbbbbbbbbbbbbbb", 0.5);
  write_file_atomic(root / "CURRENT", "aaaaaaaaaaaaaaaa\n");
  SnapshotStore store(root.path());
  ServerOptions opts;
  opts.port = 0;
  opts.poll_interval = std::chrono::milliseconds(2);
  Server server(store, opts);
  const int port = server.start();
  REQUIRE(port > 0);

  const std::map<std::string, double> expected = {{"aaaaaaaaaaaaaaaa", 0.1}, {"bbbbbbbbbbbbbbbb", 0.6}};
  std::atomic<bool> done{false};
  std::jthread flipper([&] {
    bool a = true;
    while (!done) {
      a = !a;
      write_file_atomic(root / "CURRENT", a ? "aaaaaaaaaaaaaaaa\n" : "bbbbbbbbbbbbbbbb\n");
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  });

  std::atomic<int> ok{0}, consistent{0};
  std::set<std::string> seen;
  std::mutex seen_mu;
  {
    std::vector<std::jthread> clients;
    for (int i = 0; i < 100; ++i) {
      clients.emplace_back([&] {
        httplib::Client cli("127.0.0.1", port);
        auto res = cli.Get("/api/v1/blocks/2022-05-02/8");
        if (!res || res->status != 200) return;
        ++ok;
        auto b = json::parse(res->body);
        const std::string id = b["snapshot_id"];
        auto it = expected.find(id);
        if (it != expected.end() && b["expected"].get<double>() == doctest::Approx(it->second)) ++consistent;
        std::lock_guard g(seen_mu);
        seen.insert(id);
      });
    }
  }
  done = true;
  flipper.join();
  server.stop();
  CHECK(ok == 100);
  CHECK(consistent == 100);
  CHECK(seen.size() >= 1);
}
