#include "noshow/service.hpp"

// The library default of 5 drops connections under modest bursts.
#define CPPHTTPLIB_LISTEN_BACKLOG 512
#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <sstream>
#include <thread>

#include "noshow/error.hpp"
#include "noshow/io.hpp"

namespace noshow {

namespace fs = std::filesystem;

std::shared_ptr<const PublishedSnapshot> load_snapshot(const fs::path& dir) {
  auto s = std::make_shared<PublishedSnapshot>();
  try {
    s->meta = nlohmann::ordered_json::parse(read_file(dir / "meta.json"));
    s->providers = nlohmann::ordered_json::parse(read_file(dir / "providers.json"));
    s->id = s->meta.at("snapshot_id").get<std::string>();
    const auto& h = s->meta.at("clinic_hours");
    s->hours.open_hour = h.at("open_hour").get<int>();
    s->hours.close_hour = h.at("close_hour").get<int>();
    s->hours.weekdays = h.at("weekdays").get<std::vector<int>>();
    for (const auto& w : s->meta.at("weeks")) {
      auto d = parse_date(w.get<std::string>());
      if (!d) throw Error(ErrorCode::CorruptFile, "snapshot week is not a date");
      s->weeks.push_back(*d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, "snapshot " + dir.string() + ": " + e.what());
  }
  std::ifstream in(dir / "scored.csv", std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + (dir / "scored.csv").string());
  s->scored = read_scored_csv(in);
  for (const auto& a : s->scored) {
    s->provider_ids.insert(a.provider_id);
    s->specialties.insert(a.provider_specialty);
    s->sites.insert(a.site_id);
  }
  return s;
}

bool SnapshotStore::refresh() {
  std::string id;
  {
    std::ifstream in(root_ / "CURRENT");
    if (!(in >> id)) return false;
  }
  if (auto cur = current(); cur && cur->id == id) return false;
  std::shared_ptr<const PublishedSnapshot> next;
  try {
    next = load_snapshot(root_ / id);
  } catch (const Error&) {
    return false;
  }
  std::lock_guard g(mu_);
  snapshot_ = std::move(next);
  return true;
}

std::shared_ptr<const PublishedSnapshot> SnapshotStore::current() const {
  std::lock_guard g(mu_);
  return snapshot_;
}

// ---- routing -----------------------------------------------------------------

namespace {

HttpResponse json_response(int status, const nlohmann::ordered_json& body) {
  return {status, body.dump() + "\n", "application/json"};
}

HttpResponse error_response(int status, std::string_view error, std::string_view message,
                            std::string_view parameter = {}) {
  nlohmann::ordered_json j;
  j["error"] = error;
  if (!parameter.empty()) j["parameter"] = parameter;
  j["message"] = message;
  return json_response(status, j);
}

HttpResponse no_snapshot() { return error_response(503, "NoSnapshotPublished", "no snapshot has been published yet"); }

std::optional<std::string> query_value(const HttpRequest& r, const std::string& key) {
  auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

// Resolves the provider/specialty/site filters; returns an error response
// for values the snapshot does not know.
std::optional<HttpResponse> read_filter(const PublishedSnapshot& s, const HttpRequest& r, HeatmapFilter& f) {
  struct Spec {
    const char* key;
    const char* error;
    const std::set<std::string>* known;
    std::optional<std::string> HeatmapFilter::*field;
  };
  const Spec specs[] = {{"provider", "UnknownProvider", &s.provider_ids, &HeatmapFilter::provider},
                        {"specialty", "UnknownSpecialty", &s.specialties, &HeatmapFilter::specialty},
                        {"site", "UnknownSite", &s.sites, &HeatmapFilter::site}};
  for (const auto& sp : specs) {
    if (auto v = query_value(r, sp.key)) {
      if (!sp.known->contains(*v)) {
        return error_response(404, sp.error, std::string(sp.key) + " '" + *v + "' is not in the snapshot", sp.key);
      }
      f.*sp.field = *v;
    }
  }
  return std::nullopt;
}

HttpResponse heatmap(const PublishedSnapshot& s, const HttpRequest& r) {
  Date week;
  if (auto w = query_value(r, "week")) {
    auto d = parse_date(*w);
    if (!d) return error_response(400, "MalformedDate", "week must be an ISO date (YYYY-MM-DD)", "week");
    week = week_start(*d);
  } else if (!s.weeks.empty()) {
    week = s.weeks.front();
  } else {
    return error_response(404, "BlockOutOfRange", "snapshot has no scheduled weeks", "week");
  }
  HeatmapFilter filter;
  if (auto err = read_filter(s, r, filter)) return *err;
  const auto group = query_value(r, "group").value_or("provider");
  if (group != "combined" && group != "provider") {
    return error_response(400, "MalformedGroup", "group must be 'combined' or 'provider'", "group");
  }

  const auto range = WeekRange::containing(week);
  std::vector<HeatmapGrid> grids;
  std::vector<std::string> providers;
  try {
    if (group == "provider") {
      grids = build_provider_heatmaps(s.scored, range, filter, s.hours);
      for (const auto& g : grids) providers.push_back(g.provider_id);
      if (grids.empty()) {
        // Keep dates and hours in the body even when nothing matches.
        auto empty = build_heatmap(s.scored, range, filter, s.hours);
        empty.cells.clear();
        grids.push_back(std::move(empty));
      }
    } else {
      grids.push_back(build_heatmap(s.scored, range, filter, s.hours));
      if (filter.provider) providers.push_back(*filter.provider);
    }
  } catch (const Error& e) {
    return error_response(404, "BlockOutOfRange", e.what(), "week");
  }
  auto body = heatmap_json(range, providers, grids);
  nlohmann::ordered_json out;
  out["snapshot_id"] = s.id;
  out["group"] = group;
  out["filters"] = {{"provider", filter.provider ? nlohmann::ordered_json(*filter.provider) : nlohmann::ordered_json()},
                    {"specialty", filter.specialty ? nlohmann::ordered_json(*filter.specialty) : nlohmann::ordered_json()},
                    {"site", filter.site ? nlohmann::ordered_json(*filter.site) : nlohmann::ordered_json()}};
  for (const auto& [k, v] : body.items()) out[k] = v;
  return json_response(200, out);
}

HttpResponse block(const PublishedSnapshot& s, const HttpRequest& r, std::string_view date_text,
                   std::string_view hour_text) {
  auto date = parse_date(date_text);
  if (!date) return error_response(400, "MalformedDate", "date must be an ISO date (YYYY-MM-DD)", "date");
  auto hour = parse_int(hour_text);
  if (!hour || *hour < 0 || *hour > 23) return error_response(400, "MalformedHour", "hour must be an integer 0-23", "hour");
  HeatmapFilter filter;
  if (auto err = read_filter(s, r, filter)) return *err;

  const auto range = WeekRange::containing(*date);
  const bool in_snapshot = std::find(s.weeks.begin(), s.weeks.end(), range.first) != s.weeks.end();
  const int h = static_cast<int>(*hour);
  if (!in_snapshot || !s.hours.is_clinic_day(*date) || h < s.hours.open_hour || h >= s.hours.close_hour) {
    return error_response(404, "BlockOutOfRange",
                          "no block at " + format_date(*date) + " hour " + std::to_string(h) + " in this snapshot");
  }
  const auto grid = build_heatmap(s.scored, range, filter, s.hours);
  const auto* cell = grid.find(*date, h);
  nlohmann::ordered_json out;
  out["snapshot_id"] = s.id;
  const auto cell_json = block_json(*cell);
  for (const auto& [k, v] : cell_json.items()) out[k] = v;
  return json_response(200, out);
}

}  // namespace

HttpResponse handle_request(const PublishedSnapshot* s, const HttpRequest& r) {
  const std::string& p = r.path;
  if (p == "/healthz") {
    if (!s) return no_snapshot();
    return json_response(200, {{"status", "ok"}, {"snapshot_id", s->id}});
  }
  constexpr std::string_view api = "/api/v1/";
  if (!p.starts_with(api)) return error_response(404, "NotFound", "no route for " + p);
  if (!s) return no_snapshot();
  const std::string_view rest = std::string_view(p).substr(api.size());
  if (rest == "meta") return json_response(200, s->meta);
  if (rest == "providers") {
    nlohmann::ordered_json out;
    out["snapshot_id"] = s->id;
    out["providers"] = s->providers;
    return json_response(200, out);
  }
  if (rest == "heatmap") return heatmap(*s, r);
  if (rest.starts_with("blocks/")) {
    const auto tail = rest.substr(7);
    const auto slash = tail.find('/');
    if (slash != std::string_view::npos && tail.find('/', slash + 1) == std::string_view::npos) {
      return block(*s, r, tail.substr(0, slash), tail.substr(slash + 1));
    }
  }
  return error_response(404, "NotFound", "no route for " + p);
}

// ---- HTTP front end ------------------------------------------------------------

struct Server::Impl {
  SnapshotStore& store;
  ServerOptions options;
  httplib::Server http;
  std::jthread listener;
  std::jthread poller;
  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;

  Impl(SnapshotStore& s, ServerOptions o) : store(s), options(std::move(o)) {}
};

Server::Server(SnapshotStore& store, ServerOptions options) : impl_(std::make_unique<Impl>(store, std::move(options))) {
  impl_->http.Get(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    HttpRequest r;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    const auto snapshot = impl_->store.current();
    const auto out = handle_request(snapshot.get(), r);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  });
}

Server::~Server() { stop(); }

int Server::start() {
  impl_->store.refresh();
  int port = impl_->options.port;
  if (port == 0) {
    port = impl_->http.bind_to_any_port(impl_->options.host);
  } else if (!impl_->http.bind_to_port(impl_->options.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error(ErrorCode::Io, "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  }
  impl_->listener = std::jthread([this] { impl_->http.listen_after_bind(); });
  impl_->poller = std::jthread([this] {
    std::unique_lock lk(impl_->mu);
    while (!impl_->stopping) {
      impl_->cv.wait_for(lk, impl_->options.poll_interval, [this] { return impl_->stopping; });
      if (impl_->stopping) break;
      lk.unlock();
      impl_->store.refresh();
      lk.lock();
    }
  });
  impl_->http.wait_until_ready();
  return port;
}

void Server::wait() {
  if (impl_->listener.joinable()) impl_->listener.join();
}

void Server::stop() {
  {
    std::lock_guard g(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  impl_->http.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  if (impl_->poller.joinable()) impl_->poller.join();
}

}  // namespace noshow
