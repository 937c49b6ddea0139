#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace noshow {

/// Version string folded into every task hash; bump when an operation's
/// output for identical inputs changes.
inline constexpr std::string_view kCodeVersion = "noshow-0.1.0/1";

/// A named pipeline step. Inputs and outputs are keyed by role, e.g.
/// {"records": "records.csv"}. An input equal to another task's output path
/// is an artifact under the workspace; anything else is a source file
/// resolved against the config directory.
struct Task {
  std::string name;
  std::string op;  // generate | ingest | features | train | predict | aggregate | publish
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  nlohmann::json params = nlohmann::json::object();
};

struct Dag {
  std::filesystem::path source_dir;
  std::vector<Task> tasks;  // topological order, ties by declaration order
  /// dependencies[i]: indices of tasks producing an input of tasks[i].
  std::vector<std::vector<std::size_t>> dependencies;

  const Task* find(std::string_view name) const;
  /// Every task reachable downstream of `name`, including itself.
  std::vector<std::string> descendants(std::string_view name) const;
};

/// Throws CyclicDependency, MissingSource or InvalidArgument (duplicate names,
/// unknown ops, two producers for one output).
Dag build_dag(const nlohmann::json& config, const std::filesystem::path& source_dir);
Dag load_dag(const std::filesystem::path& config_path);

enum class TaskStatus { Skipped, Executed, Failed };

std::string_view to_string(TaskStatus status) noexcept;

struct TaskRecord {
  TaskStatus status = TaskStatus::Failed;
  std::string task_hash;
  std::map<std::string, std::string> input_hashes;
  std::map<std::string, std::string> output_hashes;
  double wall_seconds = 0.0;
  std::string message;  // diagnostics for failures
};

struct RunLedger {
  std::map<std::string, TaskRecord> tasks;

  nlohmann::ordered_json to_json() const;
  static RunLedger from_json(const nlohmann::json& j);
  static RunLedger load(const std::filesystem::path& path);  // missing file -> empty
  void save(const std::filesystem::path& path) const;

  std::vector<std::string> failed() const;
};

struct RunOptions {
  std::filesystem::path workspace;
  /// Concurrent tasks within a wave; 0 = hardware concurrency.
  int threads = 0;
  /// Overrides every task's "seed" parameter when set.
  std::optional<std::uint64_t> seed;
};

inline constexpr std::string_view kLedgerFile = "ledger.json";
inline constexpr std::string_view kLockFile = ".noshow.lock";

/// Runs stale tasks in dependency order, skipping those whose hash of
/// (op, params, code version, input contents) matches the last success and
/// whose outputs are intact. A failure blocks its descendants only. The ledger
/// is persisted after every task. Throws WorkspaceLocked.
RunLedger run_pipeline(const Dag& dag, const RunOptions& options);

/// Exclusive workspace lock backed by a pid file; a lock left by a dead
/// process is reclaimed.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(const std::filesystem::path& workspace);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// A five-stage config: ingest, features, predict, aggregate, publish. The
/// model is a source file.
nlohmann::json standard_pipeline_config(const std::string& export_csv, const std::string& model_path,
                                        const std::string& mapping_path = {});

}  // namespace noshow
