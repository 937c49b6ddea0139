#include "noshow/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "noshow/aggregate.hpp"
#include "noshow/datagen.hpp"
#include "noshow/error.hpp"
#include "noshow/hash.hpp"
#include "noshow/ingest.hpp"
#include "noshow/io.hpp"
#include "noshow/model.hpp"
#include "noshow/model_io.hpp"

namespace noshow {

namespace fs = std::filesystem;

namespace {

struct OpShape {
  std::string_view op;
  std::vector<std::string_view> required_inputs;
  std::vector<std::string_view> optional_inputs;
  std::vector<std::string_view> required_outputs;
  std::vector<std::string_view> optional_outputs;
};

const std::vector<OpShape>& op_shapes() {
  static const std::vector<OpShape> shapes = {
      {"generate", {}, {"config"}, {"export"}, {"truth"}},
      {"ingest", {"export"}, {"mapping"}, {"records"}, {"rejects"}},
      {"features", {"records"}, {}, {"features"}, {}},
      {"train", {"records"}, {}, {"model"}, {"report"}},
      {"predict", {"records", "features", "model"}, {}, {"scored"}, {}},
      {"aggregate", {"scored"}, {}, {"heatmap"}, {}},
      {"publish", {"scored", "heatmap"}, {"model", "records"}, {"manifest"}, {}},
  };
  return shapes;
}

void check_roles(const Task& t, const std::map<std::string, std::string>& given,
                 const std::vector<std::string_view>& required, const std::vector<std::string_view>& optional,
                 std::string_view kind) {
  for (auto r : required) {
    if (!given.contains(std::string(r))) {
      throw Error(ErrorCode::InvalidArgument, "task '" + t.name + "' needs " + std::string(kind) + " '" +
                                                  std::string(r) + "'");
    }
  }
  for (const auto& [role, path] : given) {
    if (std::find(required.begin(), required.end(), role) == required.end() &&
        std::find(optional.begin(), optional.end(), role) == optional.end()) {
      throw Error(ErrorCode::InvalidArgument, "task '" + t.name + "' has unknown " + std::string(kind) + " '" + role + "'");
    }
    if (path.empty()) throw Error(ErrorCode::InvalidArgument, "task '" + t.name + "' has an empty path for '" + role + "'");
  }
}

}  // namespace

// ---- DAG ---------------------------------------------------------------------

const Task* Dag::find(std::string_view name) const {
  for (const auto& t : tasks) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::string> Dag::descendants(std::string_view name) const {
  std::vector<bool> hit(tasks.size(), false);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].name == name) hit[i] = true;
    for (auto d : dependencies[i]) hit[i] = hit[i] || hit[d];  // topological order
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (hit[i]) out.push_back(tasks[i].name);
  }
  return out;
}

Dag build_dag(const nlohmann::json& config, const fs::path& source_dir) {
  std::vector<Task> declared;
  try {
    for (const auto& jt : config.at("tasks")) {
      Task t;
      t.name = jt.at("name").get<std::string>();
      t.op = jt.value("op", t.name);
      if (jt.contains("inputs")) t.inputs = jt.at("inputs").get<std::map<std::string, std::string>>();
      if (jt.contains("outputs")) t.outputs = jt.at("outputs").get<std::map<std::string, std::string>>();
      if (jt.contains("params")) t.params = jt.at("params");
      if (!t.params.is_object()) throw Error(ErrorCode::InvalidArgument, "task '" + t.name + "' params must be an object");
      declared.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("pipeline config: ") + e.what());
  }

  std::set<std::string> names;
  std::map<std::string, std::size_t> producer;
  for (std::size_t i = 0; i < declared.size(); ++i) {
    const auto& t = declared[i];
    if (t.name.empty() || !names.insert(t.name).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate or empty task name '" + t.name + "'");
    }
    auto shape = std::find_if(op_shapes().begin(), op_shapes().end(), [&](const OpShape& s) { return s.op == t.op; });
    if (shape == op_shapes().end()) throw Error(ErrorCode::InvalidArgument, "task '" + t.name + "' has unknown op '" + t.op + "'");
    check_roles(t, t.inputs, shape->required_inputs, shape->optional_inputs, "input");
    check_roles(t, t.outputs, shape->required_outputs, shape->optional_outputs, "output");
    for (const auto& [role, path] : t.outputs) {
      if (!producer.emplace(path, i).second) {
        throw Error(ErrorCode::InvalidArgument, "output '" + path + "' is produced by more than one task");
      }
    }
  }

  std::vector<std::set<std::size_t>> deps(declared.size());
  for (std::size_t i = 0; i < declared.size(); ++i) {
    for (const auto& [role, path] : declared[i].inputs) {
      if (auto p = producer.find(path); p != producer.end()) {
        deps[i].insert(p->second);
      } else if (!fs::exists(source_dir / path)) {
        throw Error(ErrorCode::MissingSource, "task '" + declared[i].name + "' input '" + path + "' does not exist");
      }
    }
  }

  // Kahn's algorithm, always taking the earliest-declared ready task.
  std::vector<std::size_t> indegree(declared.size());
  for (std::size_t i = 0; i < declared.size(); ++i) indegree[i] = deps[i].size();
  std::vector<bool> done(declared.size(), false);
  std::vector<std::size_t> order;
  while (order.size() < declared.size()) {
    std::size_t next = declared.size();
    for (std::size_t i = 0; i < declared.size(); ++i) {
      if (!done[i] && indegree[i] == 0) {
        next = i;
        break;
      }
    }
    if (next == declared.size()) {
      std::string cycle;
      for (std::size_t i = 0; i < declared.size(); ++i) {
        if (!done[i]) cycle += (cycle.empty() ? "" : ", ") + declared[i].name;
      }
      throw Error(ErrorCode::CyclicDependency, "dependency cycle among tasks: " + cycle);
    }
    done[next] = true;
    order.push_back(next);
    for (std::size_t i = 0; i < declared.size(); ++i) {
      if (deps[i].contains(next)) --indegree[i];
    }
  }

  Dag dag;
  dag.source_dir = source_dir;
  std::vector<std::size_t> position(declared.size());
  for (std::size_t k = 0; k < order.size(); ++k) position[order[k]] = k;
  for (auto i : order) {
    std::vector<std::size_t> d;
    for (auto j : deps[i]) d.push_back(position[j]);
    std::sort(d.begin(), d.end());
    dag.dependencies.push_back(std::move(d));
    dag.tasks.push_back(std::move(declared[i]));
  }
  return dag;
}

Dag load_dag(const fs::path& config_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(config_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, config_path.string() + ": " + e.what());
  }
  return build_dag(j, config_path.has_parent_path() ? config_path.parent_path() : fs::path("."));
}

nlohmann::json standard_pipeline_config(const std::string& export_csv, const std::string& model_path,
                                        const std::string& mapping_path) {
  nlohmann::json ingest_inputs = {{"export", export_csv}};
  if (!mapping_path.empty()) ingest_inputs["mapping"] = mapping_path;
  return {{"tasks",
           {{{"name", "ingest"}, {"op", "ingest"}, {"inputs", ingest_inputs},
             {"outputs", {{"records", "records.csv"}, {"rejects", "rejects.csv"}}}},
            {{"name", "features"}, {"op", "features"}, {"inputs", {{"records", "records.csv"}}},
             {"outputs", {{"features", "features.csv"}}}},
            {{"name", "predict"}, {"op", "predict"},
             {"inputs", {{"records", "records.csv"}, {"features", "features.csv"}, {"model", model_path}}},
             {"outputs", {{"scored", "scored.csv"}}}},
            {{"name", "aggregate"}, {"op", "aggregate"}, {"inputs", {{"scored", "scored.csv"}}},
             {"outputs", {{"heatmap", "heatmap.json"}}}},
            {{"name", "publish"}, {"op", "publish"},
             {"inputs", {{"scored", "scored.csv"}, {"heatmap", "heatmap.json"}, {"records", "records.csv"}}},
             {"outputs", {{"manifest", "publish.json"}}}}}}};
}

// ---- ledger ------------------------------------------------------------------

std::string_view to_string(TaskStatus s) noexcept {
  switch (s) {
    case TaskStatus::Skipped: return "skipped";
    case TaskStatus::Executed: return "executed";
    case TaskStatus::Failed: return "failed";
  }
  return "failed";
}

nlohmann::ordered_json RunLedger::to_json() const {
  nlohmann::ordered_json j;
  auto& ts = j["tasks"] = nlohmann::ordered_json::object();
  for (const auto& [name, r] : tasks) {
    ts[name] = {{"status", to_string(r.status)},   {"task_hash", r.task_hash},       {"input_hashes", r.input_hashes},
                {"output_hashes", r.output_hashes}, {"wall_seconds", r.wall_seconds}, {"message", r.message}};
  }
  return j;
}

RunLedger RunLedger::from_json(const nlohmann::json& j) {
  RunLedger l;
  try {
    for (const auto& [name, jt] : j.at("tasks").items()) {
      TaskRecord r;
      const auto s = jt.at("status").get<std::string>();
      r.status = s == "skipped" ? TaskStatus::Skipped : s == "executed" ? TaskStatus::Executed : TaskStatus::Failed;
      r.task_hash = jt.at("task_hash").get<std::string>();
      r.input_hashes = jt.at("input_hashes").get<std::map<std::string, std::string>>();
      r.output_hashes = jt.at("output_hashes").get<std::map<std::string, std::string>>();
      r.wall_seconds = jt.value("wall_seconds", 0.0);
      r.message = jt.value("message", "");
      l.tasks.emplace(name, std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("ledger: ") + e.what());
  }
  return l;
}

RunLedger RunLedger::load(const fs::path& path) {
  if (!fs::exists(path)) return {};
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, "ledger " + path.string() + ": " + e.what());
  }
}

void RunLedger::save(const fs::path& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }

std::vector<std::string> RunLedger::failed() const {
  std::vector<std::string> out;
  for (const auto& [name, r] : tasks) {
    if (r.status == TaskStatus::Failed) out.push_back(name);
  }
  return out;
}

// ---- lock --------------------------------------------------------------------

WorkspaceLock::WorkspaceLock(const fs::path& workspace) : path_(workspace / kLockFile) {
  fs::create_directories(workspace);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw Error(ErrorCode::Io, "cannot create lock " + path_.string());
    std::ifstream in(path_);
    long holder = 0;
    in >> holder;
    const bool alive = holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM);
    if (alive) {
      throw Error(ErrorCode::WorkspaceLocked, "workspace is locked by process " + std::to_string(holder));
    }
    fs::remove(path_);  // stale: holder is gone
  }
  throw Error(ErrorCode::WorkspaceLocked, "could not acquire " + path_.string());
}

WorkspaceLock::~WorkspaceLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---- operations --------------------------------------------------------------

namespace {

struct TaskContext {
  const Task& task;
  std::map<std::string, fs::path> inputs;  // resolved
  fs::path workspace;
  nlohmann::json params;
};

using Outputs = std::map<std::string, std::string>;

template <class T>
T param(const TaskContext& c, const char* key, T fallback) {
  if (!c.params.contains(key)) return fallback;
  try {
    return c.params.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::InvalidArgument, std::string("parameter '") + key + "' has the wrong type");
  }
}

std::vector<AppointmentRecord> sorted_records(const fs::path& path) {
  auto records = load_records_csv(path);
  std::sort(records.begin(), records.end(), scheduled_before);
  return records;
}

Outputs op_generate(const TaskContext& c) {
  GeneratorConfig cfg;
  if (c.inputs.contains("config")) cfg = GeneratorConfig::from_config(KeyValueConfig::load(c.inputs.at("config")));
  if (c.params.contains("seed")) cfg.seed = param<std::uint64_t>(c, "seed", cfg.seed);
  const int upcoming_days = param<int>(c, "upcoming_days", 7);
  const auto history = generate_history(cfg);

  // Pending schedule for the days right after the history.
  Rng rng(derive_seed(cfg.seed, {4}));
  const Date first = cfg.start_date + std::chrono::days{cfg.horizon_days};
  auto upcoming = draw_schedule(history.config, history.patients, first, upcoming_days, rng, "U");

  std::vector<AppointmentRecord> all = history.records;
  all.insert(all.end(), upcoming.begin(), upcoming.end());
  Outputs out;
  std::ostringstream exp;
  write_records_csv(exp, all);
  out["export"] = exp.str();
  if (c.task.outputs.contains("truth")) {
    std::ostringstream truth;
    write_truth_csv(truth, history.records, history.true_probabilities);
    out["truth"] = truth.str();
  }
  return out;
}

Outputs op_ingest(const TaskContext& c) {
  const auto mapping = c.inputs.contains("mapping") ? ColumnMapping::from_config(KeyValueConfig::load(c.inputs.at("mapping")))
                                                    : ColumnMapping::canonical();
  std::ifstream in(c.inputs.at("export"), std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + c.inputs.at("export").string());
  auto parsed = parse_export(in, mapping);
  std::sort(parsed.records.begin(), parsed.records.end(), scheduled_before);
  Outputs out;
  std::ostringstream rec;
  write_records_csv(rec, parsed.records);
  out["records"] = rec.str();
  if (c.task.outputs.contains("rejects")) {
    std::ostringstream rej;
    write_csv_row(rej, {"row", "reason"});
    for (const auto& e : parsed.errors) write_csv_row(rej, {std::to_string(e.row), e.reason});
    out["rejects"] = rej.str();
  }
  return out;
}

Outputs op_features(const TaskContext& c) {
  const auto records = sorted_records(c.inputs.at("records"));
  const double k = param<double>(c, "pseudo_count", kDefaultPseudoCount);
  const auto features = engineer_features(records, global_no_show_rate(records), k);
  std::ostringstream out;
  write_features_csv(out, features);
  return {{"features", out.str()}};
}

Outputs op_train(const TaskContext& c) {
  auto records = sorted_records(c.inputs.at("records"));
  std::erase_if(records, [](const AppointmentRecord& r) { return r.outcome == Outcome::Pending; });
  ForestHyperparams hp;
  hp.n_trees = param<int>(c, "n_trees", hp.n_trees);
  hp.min_leaf_size = param<int>(c, "min_leaf_size", hp.min_leaf_size);
  if (c.params.contains("max_depth")) hp.max_depth = param<int>(c, "max_depth", 0);
  if (c.params.contains("features_per_split")) hp.features_per_split = param<int>(c, "features_per_split", 0);
  hp.seed = param<std::uint64_t>(c, "seed", hp.seed);
  const double vf = param<double>(c, "validation_fraction", 0.2);
  const double k = param<double>(c, "pseudo_count", kDefaultPseudoCount);
  auto trained = train_from_records(records, hp, FeatureSet{}, vf, k);
  Outputs out;
  out["model"] = serialize_model(trained.model);
  if (c.task.outputs.contains("report")) {
    nlohmann::ordered_json report;
    report["model"] = trained.model.metadata_json();
    report["validation"] = trained.validation.to_json();
    report["baseline_validation"] = trained.baseline_validation.to_json();
    out["report"] = report.dump(2) + "\n";
  }
  return out;
}

Outputs op_predict(const TaskContext& c) {
  const auto records = sorted_records(c.inputs.at("records"));
  std::ifstream fin(c.inputs.at("features"), std::ios::binary);
  if (!fin) throw Error(ErrorCode::Io, "cannot read " + c.inputs.at("features").string());
  const auto features = read_features_csv(fin);
  const auto model = load_model(c.inputs.at("model"));
  const auto scope = param<std::string>(c, "scope", "pending");
  if (scope != "pending" && scope != "all") throw Error(ErrorCode::InvalidArgument, "scope must be 'pending' or 'all'");

  std::map<std::string_view, const AppointmentRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.appointment_id, &r);
  std::vector<FeatureVector> rows;
  std::vector<const AppointmentRecord*> meta;
  for (const auto& f : features) {
    if (scope == "pending" && f.label) continue;
    auto it = by_id.find(f.appointment_id);
    if (it == by_id.end()) throw Error(ErrorCode::SchemaMismatch, "feature row " + f.appointment_id + " has no record");
    rows.push_back(f);
    meta.push_back(it->second);
  }
  const auto probs = rows.empty() ? std::vector<double>{} : predict_proba(model, rows);
  std::vector<ScoredAppointment> scored;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = *meta[i];
    scored.push_back({r.appointment_id, r.provider_id, r.provider_specialty, r.site_id, r.scheduled_at, probs[i]});
  }
  std::ostringstream out;
  write_scored_csv(out, scored);
  return {{"scored", out.str()}};
}

ClinicHours clinic_hours_from(const nlohmann::json& params) {
  ClinicHours h;
  h.open_hour = params.value("open_hour", h.open_hour);
  h.close_hour = params.value("close_hour", h.close_hour);
  if (params.contains("weekdays")) h.weekdays = params.at("weekdays").get<std::vector<int>>();
  if (h.open_hour < 0 || h.close_hour > 24 || h.open_hour >= h.close_hour) {
    throw Error(ErrorCode::InvalidArgument, "clinic hours must satisfy 0 <= open < close <= 24");
  }
  return h;
}

std::vector<ScoredAppointment> load_scored(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return read_scored_csv(in);
}

std::vector<Date> weeks_of(std::span<const ScoredAppointment> scored) {
  std::set<Date> weeks;
  for (const auto& a : scored) weeks.insert(week_start(a.scheduled_at.local_date()));
  return {weeks.begin(), weeks.end()};
}

Outputs op_aggregate(const TaskContext& c) {
  const auto scored = load_scored(c.inputs.at("scored"));
  const auto hours = clinic_hours_from(c.params);
  nlohmann::ordered_json j;
  j["clinic_hours"] = {{"open_hour", hours.open_hour}, {"close_hour", hours.close_hour}, {"weekdays", hours.weekdays}};
  auto& weeks = j["weeks"] = nlohmann::ordered_json::array();
  for (auto w : weeks_of(scored)) {
    const auto range = WeekRange::containing(w);
    auto grids = build_provider_heatmaps(scored, range, {}, hours);
    std::vector<std::string> providers;
    for (const auto& g : grids) providers.push_back(g.provider_id);
    grids.insert(grids.begin(), build_heatmap(scored, range, {}, hours));
    weeks.push_back(heatmap_json(range, providers, grids));
  }
  return {{"heatmap", j.dump() + "\n"}};
}

Outputs op_publish(const TaskContext& c) {
  const auto scored_bytes = read_file(c.inputs.at("scored"));
  const auto heatmap_bytes = read_file(c.inputs.at("heatmap"));
  const auto heatmap = nlohmann::ordered_json::parse(heatmap_bytes);
  const auto scored = load_scored(c.inputs.at("scored"));

  std::string generated_at = param<std::string>(c, "generated_at", "");
  if (generated_at.empty() && c.inputs.contains("records")) {
    std::optional<Timestamp> latest;
    for (const auto& r : load_records_csv(c.inputs.at("records"))) {
      if (!latest || latest->utc_minutes() < r.booked_at.utc_minutes()) latest = r.booked_at;
    }
    if (latest) generated_at = format_timestamp(*latest);
  }

  std::map<std::string, std::pair<std::string, std::set<std::string>>> catalog;
  for (const auto& a : scored) {
    auto& entry = catalog[a.provider_id];
    entry.first = a.provider_specialty;
    entry.second.insert(a.site_id);
  }
  nlohmann::ordered_json providers = nlohmann::ordered_json::array();
  for (const auto& [id, e] : catalog) {
    providers.push_back({{"provider_id", id}, {"specialty", e.first}, {"sites", std::vector<std::string>(e.second.begin(), e.second.end())}});
  }

  nlohmann::ordered_json meta;
  meta["generated_at"] = generated_at.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(generated_at);
  meta["clinic_hours"] = heatmap.at("clinic_hours");
  auto& weeks = meta["weeks"] = nlohmann::ordered_json::array();
  for (auto w : weeks_of(scored)) weeks.push_back(format_date(w));
  meta["n_appointments"] = scored.size();
  meta["model"] = nullptr;
  if (c.inputs.contains("model")) meta["model"] = load_model(c.inputs.at("model")).metadata_json();

  const std::string providers_text = providers.dump() + "\n";
  const std::string id = sha256_hex(scored_bytes + '\0' + heatmap_bytes + '\0' + providers_text + '\0' + meta.dump()).substr(0, 16);
  nlohmann::ordered_json full_meta;
  full_meta["snapshot_id"] = id;
  for (const auto& [k, v] : meta.items()) full_meta[k] = v;

  const fs::path root = c.workspace / param<std::string>(c, "snapshot_dir", "published");
  const fs::path final_dir = root / id;
  if (!fs::exists(final_dir)) {
    const fs::path tmp = root / (".tmp-" + id + "-" + std::to_string(::getpid()));
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    write_file_atomic(tmp / "meta.json", full_meta.dump(2) + "\n");
    write_file_atomic(tmp / "providers.json", providers_text);
    write_file_atomic(tmp / "scored.csv", scored_bytes);
    write_file_atomic(tmp / "heatmap.json", heatmap_bytes);
    fs::rename(tmp, final_dir);
  }
  write_file_atomic(root / "CURRENT", id + "\n");

  nlohmann::ordered_json manifest = {{"snapshot_id", id}, {"path", fs::relative(final_dir, c.workspace).generic_string()}};
  return {{"manifest", manifest.dump(2) + "\n"}};
}

Outputs dispatch(const TaskContext& c) {
  const auto& op = c.task.op;
  if (op == "generate") return op_generate(c);
  if (op == "ingest") return op_ingest(c);
  if (op == "features") return op_features(c);
  if (op == "train") return op_train(c);
  if (op == "predict") return op_predict(c);
  if (op == "aggregate") return op_aggregate(c);
  if (op == "publish") return op_publish(c);
  throw Error(ErrorCode::InvalidArgument, "unknown op '" + op + "'");
}

std::string task_hash(const Task& t, const nlohmann::json& params, const std::map<std::string, std::string>& input_hashes) {
  std::string s;
  s += kCodeVersion;
  s += '\0' + t.op + '\0' + params.dump() + '\0';
  for (const auto& [role, h] : input_hashes) s += role + '=' + h + '\0';
  for (const auto& [role, p] : t.outputs) s += role + '>' + p + '\0';
  return sha256_hex(s);
}

}  // namespace

RunLedger run_pipeline(const Dag& dag, const RunOptions& options) {
  const fs::path ws = options.workspace.empty() ? fs::path("workspace") : options.workspace;
  WorkspaceLock lock(ws);
  const fs::path ledger_path = ws / kLedgerFile;
  const RunLedger previous = RunLedger::load(ledger_path);
  RunLedger ledger = previous;
  std::mutex mu;

  std::set<std::string> artifacts;
  for (const auto& t : dag.tasks) {
    for (const auto& [role, p] : t.outputs) artifacts.insert(p);
  }
  auto resolve = [&](const std::string& p) { return artifacts.contains(p) ? ws / p : dag.source_dir / p; };

  // Waves: a task's level is one more than its deepest dependency.
  std::vector<int> level(dag.tasks.size(), 0);
  int max_level = 0;
  for (std::size_t i = 0; i < dag.tasks.size(); ++i) {
    for (auto d : dag.dependencies[i]) level[i] = std::max(level[i], level[d] + 1);
    max_level = std::max(max_level, level[i]);
  }
  std::vector<bool> ok(dag.tasks.size(), false);

  auto run_one = [&](std::size_t i) {
    const Task& t = dag.tasks[i];
    TaskRecord rec;
    const auto start = std::chrono::steady_clock::now();
    for (auto d : dag.dependencies[i]) {
      if (!ok[d]) {
        rec.status = TaskStatus::Failed;
        rec.message = "blocked by upstream task '" + dag.tasks[d].name + "'";
        std::lock_guard g(mu);
        ledger.tasks[t.name] = rec;
        ledger.save(ledger_path);
        return;
      }
    }
    try {
      nlohmann::json params = t.params;
      if (options.seed && (t.op == "generate" || t.op == "train")) params["seed"] = *options.seed;
      TaskContext ctx{t, {}, ws, params};
      for (const auto& [role, p] : t.inputs) {
        ctx.inputs[role] = resolve(p);
        rec.input_hashes[role] = sha256_file_hex(ctx.inputs[role]);
      }
      rec.task_hash = task_hash(t, params, rec.input_hashes);

      bool fresh = false;
      if (auto prev = previous.tasks.find(t.name); prev != previous.tasks.end()) {
        const auto& pr = prev->second;
        fresh = pr.status != TaskStatus::Failed && pr.task_hash == rec.task_hash && pr.output_hashes.size() == t.outputs.size();
        for (const auto& [role, p] : t.outputs) {
          if (!fresh) break;
          const auto path = ws / p;
          auto h = pr.output_hashes.find(role);
          fresh = h != pr.output_hashes.end() && fs::exists(path) && sha256_file_hex(path) == h->second;
        }
        if (fresh) rec.output_hashes = pr.output_hashes;
      }
      if (fresh) {
        rec.status = TaskStatus::Skipped;
      } else {
        {
          // Forget the old entry first so a crash mid-task forces a rerun.
          std::lock_guard g(mu);
          ledger.tasks.erase(t.name);
          ledger.save(ledger_path);
        }
        auto outputs = dispatch(ctx);
        for (const auto& [role, p] : t.outputs) {
          auto it = outputs.find(role);
          if (it == outputs.end()) throw Error(ErrorCode::TaskFailed, "operation produced no '" + role + "' output");
          write_file_atomic(ws / p, it->second);
          rec.output_hashes[role] = sha256_hex(it->second);
        }
        rec.status = TaskStatus::Executed;
      }
    } catch (const std::exception& e) {
      rec.status = TaskStatus::Failed;
      rec.output_hashes.clear();
      rec.message = e.what();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard g(mu);
    ok[i] = rec.status != TaskStatus::Failed;
    ledger.tasks[t.name] = rec;
    ledger.save(ledger_path);
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t width = options.threads > 0 ? static_cast<std::size_t>(options.threads) : hw;
  for (int lv = 0; lv <= max_level; ++lv) {
    std::vector<std::size_t> wave;
    for (std::size_t i = 0; i < dag.tasks.size(); ++i) {
      if (level[i] == lv) wave.push_back(i);
    }
    for (std::size_t b = 0; b < wave.size(); b += width) {
      const std::size_t e = std::min(wave.size(), b + width);
      if (e - b == 1) {
        run_one(wave[b]);
        continue;
      }
      std::vector<std::jthread> workers;
      for (std::size_t k = b; k < e; ++k) workers.emplace_back(run_one, wave[k]);
    }
  }

  // Drop entries for tasks no longer in the DAG.
  std::erase_if(ledger.tasks, [&](const auto& kv) { return dag.find(kv.first) == nullptr; });
  ledger.save(ledger_path);
  return ledger;
}

}  // namespace noshow
