#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "noshow/pipeline.hpp"
#include "support.hpp"
#include "two_branch.hpp"

using namespace noshow;
using noshow::test::error_code_of;
using noshow::test::fixture;
using noshow::test::TempDir;
namespace fs = std::filesystem;

namespace {

nlohmann::json fixture_config() {
  std::ifstream in(fixture("pipeline/pipeline.json"));
  return nlohmann::json::parse(in);
}

/// Copies the fixture sources so tests may edit them.
struct Project {
  TempDir dir;
  fs::path src() const { return dir / "src"; }
  fs::path ws() const { return dir / "ws"; }
  nlohmann::json config = fixture_config();

  Project() {
    fs::create_directories(src());
    fs::copy_file(fixture("pipeline/tiny_clinic.conf"), src() / "tiny_clinic.conf");
  }
  Dag dag() const { return build_dag(config, src()); }
  RunLedger run(std::optional<std::uint64_t> seed = std::nullopt) const {
    RunOptions o;
    o.workspace = ws();
    o.threads = 2;
    o.seed = seed;
    return run_pipeline(dag(), o);
  }
};

std::set<std::string> with_status(const RunLedger& l, TaskStatus s) {
  std::set<std::string> out;
  for (const auto& [name, r] : l.tasks) {
    if (r.status == s) out.insert(name);
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::set<std::string> kAll = {"generate", "ingest", "train", "features", "predict", "aggregate", "publish"};

}  // namespace

TEST_CASE("the fixture dag orders both branches after ingest") {
  Project p;
  auto dag = p.dag();
  REQUIRE(dag.tasks.size() == 7);
  std::vector<std::string> order;
  for (const auto& t : dag.tasks) order.push_back(t.name);
  CHECK(order == std::vector<std::string>{"generate", "ingest", "train", "features", "predict", "aggregate", "publish"});
  CHECK(dag.descendants("train") == std::vector<std::string>{"train", "predict", "aggregate", "publish"});
  CHECK(dag.descendants("features") == std::vector<std::string>{"features", "predict", "aggregate", "publish"});
  CHECK(dag.descendants("publish") == std::vector<std::string>{"publish"});
}

TEST_CASE("config errors") {
  Project p;
  SUBCASE("cycle") {
    nlohmann::json c = {{"tasks",
                         {{{"name", "a"}, {"op", "ingest"}, {"inputs", {{"export", "x.csv"}}}, {"outputs", {{"records", "y.csv"}}}},
                          {{"name", "b"}, {"op", "ingest"}, {"inputs", {{"export", "y.csv"}}}, {"outputs", {{"records", "x.csv"}}}}}}};
    try {
      build_dag(c, p.src());
      FAIL("expected a cycle");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CyclicDependency);
      CHECK(std::string(e.what()).find("tasks: a, b") != std::string::npos);
    }
  }
  SUBCASE("missing source") {
    p.config["tasks"][0]["inputs"]["config"] = "nowhere.conf";
    CHECK(error_code_of([&] { p.dag(); }) == ErrorCode::MissingSource);
  }
  SUBCASE("two producers") {
    p.config["tasks"][3]["outputs"]["features"] = "scored.csv";
    CHECK(error_code_of([&] { p.dag(); }) == ErrorCode::InvalidArgument);
  }
  SUBCASE("unknown op and role") {
    p.config["tasks"][1]["op"] = "transmogrify";
    CHECK(error_code_of([&] { p.dag(); }) == ErrorCode::InvalidArgument);
    p.config = fixture_config();
    p.config["tasks"][1]["inputs"]["colour"] = "export.csv";
    CHECK(error_code_of([&] { p.dag(); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("a second run with nothing changed skips every task") {
  Project p;
  auto first = p.run();
  CHECK(with_status(first, TaskStatus::Executed) == kAll);
  CHECK(fs::exists(p.ws() / "manifest.json"));
  CHECK(fs::exists(p.ws() / kLedgerFile));
  CHECK_FALSE(fs::exists(p.ws() / kLockFile));

  const auto manifest = nlohmann::json::parse(slurp(p.ws() / "manifest.json"));
  const std::string id = manifest.at("snapshot_id");
  CHECK(id.size() == 16);
  CHECK(slurp(p.ws() / "published" / "CURRENT").find(id) == 0);
  CHECK(fs::exists(p.ws() / "published" / id / "meta.json"));

  auto second = p.run();
  CHECK(with_status(second, TaskStatus::Skipped) == kAll);

  // Rewriting a source with identical bytes changes nothing.
  fs::remove(p.src() / "tiny_clinic.conf");
  fs::copy_file(fixture("pipeline/tiny_clinic.conf"), p.src() / "tiny_clinic.conf");
  CHECK(with_status(p.run(), TaskStatus::Skipped) == kAll);
}

TEST_CASE("changing one parameter reruns only that task and its descendants") {
  Project p;
  p.run();
  p.config["tasks"][2]["params"]["n_trees"] = 7;
  auto l = p.run();
  CHECK(with_status(l, TaskStatus::Skipped) == std::set<std::string>{"generate", "ingest", "features"});
  CHECK(with_status(l, TaskStatus::Executed) == std::set<std::string>{"train", "predict", "aggregate", "publish"});
}

TEST_CASE("a damaged or missing output forces its task to rerun") {
  Project p;
  p.run();
  {
    std::ofstream out(p.ws() / "features.csv", std::ios::app);
    out << "tampered\n";
  }
  fs::remove(p.ws() / "heatmap.json");
  auto l = p.run();
  CHECK(l.tasks.at("features").status == TaskStatus::Executed);
  CHECK(l.tasks.at("aggregate").status == TaskStatus::Executed);
  CHECK(l.tasks.at("train").status == TaskStatus::Skipped);
  CHECK(l.tasks.at("ingest").status == TaskStatus::Skipped);
  // Restored bytes equal the original, so nothing downstream of features moves.
  CHECK(l.tasks.at("predict").status == TaskStatus::Skipped);
}

TEST_CASE("an interrupted task has no ledger entry and reruns") {
  Project p;
  auto first = p.run();
  // State left by a crash during train: its entry removed before execution.
  auto ledger = RunLedger::load(p.ws() / kLedgerFile);
  ledger.tasks.erase("train");
  ledger.save(p.ws() / kLedgerFile);
  auto l = p.run();
  CHECK(l.tasks.at("train").status == TaskStatus::Executed);
  CHECK(l.tasks.at("train").output_hashes == first.tasks.at("train").output_hashes);
  CHECK(l.tasks.at("predict").status == TaskStatus::Skipped);
}

TEST_CASE("a failure blocks only its descendants") {
  Project p;
  p.config["tasks"][2]["params"]["min_leaf_size"] = -1;  // train fails
  auto l = p.run();
  CHECK(with_status(l, TaskStatus::Executed) == std::set<std::string>{"generate", "ingest", "features"});
  CHECK(with_status(l, TaskStatus::Failed) == std::set<std::string>{"train", "predict", "aggregate", "publish"});
  CHECK(l.tasks.at("predict").message == "blocked by upstream task 'train'");
  CHECK_FALSE(l.tasks.at("train").message.empty());
  CHECK(l.failed().size() == 4);

  p.config["tasks"][2]["params"]["min_leaf_size"] = 20;
  auto fixed = p.run();
  CHECK(with_status(fixed, TaskStatus::Skipped) == std::set<std::string>{"generate", "ingest", "features"});
  CHECK(fixed.failed().empty());
}

TEST_CASE("the seed override reaches generate and train") {
  Project p;
  p.run();
  auto l = p.run(99);
  CHECK(l.tasks.at("generate").status == TaskStatus::Executed);
  CHECK(l.tasks.at("train").status == TaskStatus::Executed);
}

TEST_CASE("identical inputs publish identical snapshots") {
  Project a, b;
  a.run();
  b.run();
  CHECK(slurp(a.ws() / "manifest.json") == slurp(b.ws() / "manifest.json"));
  CHECK(slurp(a.ws() / "heatmap.json") == slurp(b.ws() / "heatmap.json"));
}

TEST_CASE("tasks removed from the config leave the ledger") {
  Project p;
  p.run();
  p.config["tasks"].erase(6);
  auto l = p.run();
  CHECK_FALSE(l.tasks.contains("publish"));
  CHECK(l.tasks.size() == 6);
}

TEST_CASE("workspace lock") {
  TempDir dir;
  {
    WorkspaceLock held(dir.path());
    CHECK(error_code_of([&] { WorkspaceLock again(dir.path()); }) == ErrorCode::WorkspaceLocked);
    Project p;
    RunOptions o;
    o.workspace = dir.path();
    CHECK(error_code_of([&] { run_pipeline(p.dag(), o); }) == ErrorCode::WorkspaceLocked);
  }
  CHECK_FALSE(fs::exists(dir / std::string(kLockFile)));
  {
    std::ofstream stale(dir / std::string(kLockFile));
    stale << 2147483000 << "\n";  // no such process
  }
  CHECK_NOTHROW(WorkspaceLock(dir.path()));
}

TEST_CASE("ledger json round trip") {
  RunLedger l;
  TaskRecord r;
  r.status = TaskStatus::Executed;
  r.task_hash = "abc";
  r.input_hashes = {{"records", "11"}};
  r.output_hashes = {{"model", "22"}};
  r.wall_seconds = 1.5;
  l.tasks["train"] = r;
  auto back = RunLedger::from_json(nlohmann::json::parse(l.to_json().dump()));
  CHECK(back.to_json() == l.to_json());
  TempDir dir;
  {
    std::ofstream bad(dir / "ledger.json");
    bad << "{ not json";
  }
  CHECK(error_code_of([&] { RunLedger::load(dir / "ledger.json"); }) == ErrorCode::CorruptFile);
  CHECK(RunLedger::load(dir / "absent.json").tasks.empty());
}

TEST_CASE("two-branch fixture: touching one source reruns exactly its reachable tasks") {
  using noshow::test::TwoBranchProject;
  using noshow::test::tasks_with;
  for (const auto& [source, edit] : TwoBranchProject::edits()) {
    CAPTURE(source);
    TwoBranchProject p;
    auto first = p.run();
    CHECK(first.failed().empty());
    CHECK(tasks_with(first, TaskStatus::Executed) == p.all_tasks());
    CHECK(tasks_with(p.run(), TaskStatus::Skipped) == p.all_tasks());

    p.touch(source);
    const auto want = p.reachable_from(source);
    REQUIRE_FALSE(want.empty());
    auto l = p.run();
    CHECK(l.failed().empty());
    CHECK(tasks_with(l, TaskStatus::Executed) == want);
    std::set<std::string> rest;
    for (const auto& t : p.all_tasks()) {
      if (!want.contains(t)) rest.insert(t);
    }
    CHECK(tasks_with(l, TaskStatus::Skipped) == rest);
  }
}
