#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "noshow/aggregate.hpp"

namespace noshow {

/// One immutable published snapshot directory (meta.json, providers.json,
/// scored.csv, heatmap.json).
struct PublishedSnapshot {
  std::string id;
  nlohmann::ordered_json meta;
  nlohmann::ordered_json providers;
  std::vector<ScoredAppointment> scored;
  ClinicHours hours;
  std::vector<Date> weeks;
  std::set<std::string> provider_ids;
  std::set<std::string> specialties;
  std::set<std::string> sites;
};

/// Throws CorruptFile / Io / InvalidRecord.
std::shared_ptr<const PublishedSnapshot> load_snapshot(const std::filesystem::path& dir);

/// Holds the snapshot named by `<root>/CURRENT`. Readers take a shared_ptr
/// once per request, so a swap never mixes two snapshots.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path root) : root_(std::move(root)) {}

  /// Reloads if CURRENT names a different snapshot. Returns true on a swap.
  /// A missing or unreadable snapshot keeps the previous one.
  bool refresh();
  std::shared_ptr<const PublishedSnapshot> current() const;
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::shared_ptr<const PublishedSnapshot> snapshot_;
};

struct HttpRequest {
  std::string path;
  std::map<std::string, std::string> query;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// GET routes:
///   /healthz
///   /api/v1/meta
///   /api/v1/providers
///   /api/v1/heatmap?week&provider&specialty&site&group=provider
///   /api/v1/blocks/{date}/{hour}?provider
/// A pure function of (snapshot, request); `snapshot` may be null (503).
HttpResponse handle_request(const PublishedSnapshot* snapshot, const HttpRequest& request);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::chrono::milliseconds poll_interval{1000};
};

/// HTTP/1.1 front end over a SnapshotStore. No authentication: requests pass
/// through handle_request unchanged, which is the place to add a check.
class Server {
 public:
  Server(SnapshotStore& store, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace noshow
