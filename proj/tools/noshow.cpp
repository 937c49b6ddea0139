// noshow: command-line front end for data generation, training, scoring,
// heatmaps, policy simulation, the incremental pipeline and the HTTP API.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "noshow/aggregate.hpp"
#include "noshow/datagen.hpp"
#include "noshow/error.hpp"
#include "noshow/ingest.hpp"
#include "noshow/io.hpp"
#include "noshow/model.hpp"
#include "noshow/model_io.hpp"
#include "noshow/pipeline.hpp"
#include "noshow/service.hpp"
#include "noshow/simulate.hpp"

namespace fs = std::filesystem;
using namespace noshow;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string workspace = "workspace";

  fs::path in_ws(const std::string& p) const { return fs::path(p).is_absolute() ? fs::path(p) : fs::path(workspace) / p; }
};

GeneratorConfig generator_config(const Globals& g) {
  GeneratorConfig cfg = g.config.empty() ? GeneratorConfig{} : GeneratorConfig::from_config(KeyValueConfig::load(g.config));
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  return in;
}

std::vector<AppointmentRecord> sorted_records(const fs::path& p) {
  auto r = load_records_csv(p);
  std::sort(r.begin(), r.end(), scheduled_before);
  return r;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p == "-") {
    std::cout << text;
  } else {
    write_file_atomic(p, text);
  }
}

volatile std::sig_atomic_t g_interrupted = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Appointment no-show prediction and overbooking decision support"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may also follow the subcommand
  Globals g;
  app.add_option("--config", g.config, "Config file (generator key=value, or pipeline JSON for `run`)");
  app.add_option("--seed", g.seed, "Override the master seed");
  app.add_option("--workspace", g.workspace, "Workspace directory")->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic history plus an upcoming pending week");
  std::string gen_out = "export.csv", gen_truth;
  int gen_days = 7;
  gen->add_option("--out", gen_out, "Record CSV (workspace-relative)")->capture_default_str();
  gen->add_option("--truth", gen_truth, "Also write true probabilities");
  gen->add_option("--upcoming-days", gen_days, "Days of pending schedule after the history")->capture_default_str();

  // ingest
  auto* ing = app.add_subcommand("ingest", "Map a vendor export onto canonical records");
  std::string ing_export, ing_mapping, ing_out = "records.csv", ing_rejects = "rejects.csv";
  ing->add_option("--export", ing_export, "Vendor CSV (relative to the current directory)")->required();
  ing->add_option("--mapping", ing_mapping, "Column mapping (key=value; relative to the current directory)");
  ing->add_option("--out", ing_out)->capture_default_str();
  ing->add_option("--rejects", ing_rejects)->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Fit the forest on labeled records");
  std::string tr_records = "records.csv", tr_out = "model.nsrf", tr_report = "train_report.json";
  ForestHyperparams hp;
  bool tr_tune = false;
  double tr_vf = 0.2;
  tr->add_option("--records", tr_records)->capture_default_str();
  tr->add_option("--out", tr_out)->capture_default_str();
  tr->add_option("--report", tr_report)->capture_default_str();
  tr->add_option("--trees", hp.n_trees)->capture_default_str();
  tr->add_option("--min-leaf", hp.min_leaf_size)->capture_default_str();
  tr->add_option("--max-depth", hp.max_depth);
  tr->add_option("--mtry", hp.features_per_split);
  tr->add_option("--threads", hp.threads)->capture_default_str();
  tr->add_option("--validation-fraction", tr_vf)->capture_default_str();
  tr->add_flag("--tune", tr_tune, "Grid-search trees x leaf size on the validation window");

  // predict
  auto* pr = app.add_subcommand("predict", "Score appointments with a saved model");
  std::string pr_records = "records.csv", pr_model = "model.nsrf", pr_out = "scored.csv", pr_scope = "pending";
  pr->add_option("--records", pr_records)->capture_default_str();
  pr->add_option("--model", pr_model)->capture_default_str();
  pr->add_option("--out", pr_out)->capture_default_str();
  pr->add_option("--scope", pr_scope, "pending | all")->capture_default_str();

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "Expected misses per provider hour-block for one week");
  std::string hm_scored = "scored.csv", hm_week, hm_out = "-", hm_group = "provider";
  HeatmapFilter hm_filter;
  ClinicHours hm_hours;
  hm->add_option("--scored", hm_scored)->capture_default_str();
  hm->add_option("--week", hm_week, "Any date in the week (default: first scored week)");
  hm->add_option("--provider", hm_filter.provider);
  hm->add_option("--specialty", hm_filter.specialty);
  hm->add_option("--site", hm_filter.site);
  hm->add_option("--group", hm_group, "combined | provider")->capture_default_str();
  hm->add_option("--open-hour", hm_hours.open_hour)->capture_default_str();
  hm->add_option("--close-hour", hm_hours.close_hour)->capture_default_str();
  hm->add_option("--out", hm_out, "JSON output path, - for stdout")->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Compare overbooking policies by Monte Carlo");
  std::vector<std::string> sim_policies = {"none", "baseline", "model", "oracle"};
  int sim_reps = 200, sim_trees = 200, sim_min_leaf = 100;
  std::optional<int> sim_mtry;
  std::uint64_t sim_seed = 7;
  std::string sim_model, sim_json;
  sim->add_option("--policies", sim_policies, "none, fixed:K, baseline, model, oracle")->delimiter(',')->capture_default_str();
  sim->add_option("--replications", sim_reps)->capture_default_str();
  sim->add_option("--sim-seed", sim_seed, "Seed for the simulated weeks")->capture_default_str();
  sim->add_option("--model", sim_model, "Saved model; trained on the generated history when omitted");
  sim->add_option("--trees", sim_trees, "Trees when training in place")->capture_default_str();
  sim->add_option("--min-leaf", sim_min_leaf, "Minimum leaf size when training in place")->capture_default_str();
  sim->add_option("--mtry", sim_mtry, "Features per split when training in place (default: all)");
  sim->add_option("--json", sim_json, "Also write the report as JSON");

  // run
  auto* run = app.add_subcommand("run", "Run the pipeline DAG from --config (JSON)");
  int run_threads = 0;
  run->add_option("--threads", run_threads)->capture_default_str();

  // serve
  auto* srv = app.add_subcommand("serve", "Serve the latest published snapshot over HTTP");
  ServerOptions srv_opts;
  std::string srv_dir;
  srv->add_option("--port", srv_opts.port)->capture_default_str();
  srv->add_option("--host", srv_opts.host)->capture_default_str();
  srv->add_option("--snapshot-dir", srv_dir, "Directory holding CURRENT (default: <workspace>/published)");

  CLI11_PARSE(app, argc, argv);

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (*gen) {
      auto cfg = generator_config(g);
      auto history = generate_history(cfg);
      Rng rng(derive_seed(cfg.seed, {4}));
      auto upcoming = draw_schedule(history.config, history.patients,
                                    cfg.start_date + std::chrono::days{cfg.horizon_days}, gen_days, rng, "U");
      auto all = history.records;
      all.insert(all.end(), upcoming.begin(), upcoming.end());
      std::ostringstream out;
      write_records_csv(out, all);
      write_text(g.in_ws(gen_out), out.str());
      if (!gen_truth.empty()) {
        std::ostringstream t;
        write_truth_csv(t, history.records, history.true_probabilities);
        write_text(g.in_ws(gen_truth), t.str());
      }
      long missed = 0;
      for (const auto& r : history.records) missed += r.outcome == Outcome::Missed;
      std::cout << "history " << history.records.size() << " appointments, missed rate "
                << format_double(static_cast<double>(missed) / static_cast<double>(history.records.size()))
                << ", base_logit " << format_double(history.config.base_logit) << "; upcoming " << upcoming.size()
                << " pending\n";
    } else if (*ing) {
      auto mapping = ing_mapping.empty() ? ColumnMapping::canonical() : ColumnMapping::from_config(KeyValueConfig::load(ing_mapping));
      auto in = open_in(ing_export);
      auto parsed = parse_export(in, mapping);
      std::sort(parsed.records.begin(), parsed.records.end(), scheduled_before);
      std::ostringstream rec, rej;
      write_records_csv(rec, parsed.records);
      write_csv_row(rej, {"row", "reason"});
      for (const auto& e : parsed.errors) write_csv_row(rej, {std::to_string(e.row), e.reason});
      write_text(g.in_ws(ing_out), rec.str());
      write_text(g.in_ws(ing_rejects), rej.str());
      std::cout << "rows " << parsed.rows_read << ": " << parsed.records.size() << " records, " << parsed.errors.size()
                << " rejected, " << parsed.dropped_cancellations << " early cancellations dropped\n";
    } else if (*tr) {
      auto records = sorted_records(g.in_ws(tr_records));
      std::erase_if(records, [](const AppointmentRecord& r) { return r.outcome == Outcome::Pending; });
      if (g.seed) hp.seed = *g.seed;
      if (tr_tune) {
        ForestHyperparams probe = hp;
        probe.n_trees = 1;  // only the split and features are reused
        auto base = train_from_records(records, probe, {}, tr_vf);
        std::vector<FeatureVector> train_rows, val_rows;
        for (auto i : base.split.train) train_rows.push_back(base.features[i]);
        for (auto i : base.split.validation) val_rows.push_back(base.features[i]);
        auto tuned = tune_forest(train_rows, val_rows, hp, kDefaultTreeGrid, kDefaultLeafGrid);
        for (const auto& t : tuned.trials) {
          std::cout << "trees " << t.n_trees << " min_leaf " << t.min_leaf_size << " validation_auc "
                    << format_double(t.validation_auc) << "\n";
        }
        hp = tuned.best;
      }
      auto trained = train_from_records(records, hp, {}, tr_vf);
      save_model(trained.model, g.in_ws(tr_out));
      nlohmann::ordered_json report;
      report["model"] = trained.model.metadata_json();
      report["validation"] = trained.validation.to_json();
      report["baseline_validation"] = trained.baseline_validation.to_json();
      write_text(g.in_ws(tr_report), report.dump(2) + "\n");
      std::cout << "forest (validation)\n" << trained.validation.to_text() << "historical-rate baseline (validation)\n"
                << trained.baseline_validation.to_text();
    } else if (*pr) {
      if (pr_scope != "pending" && pr_scope != "all") throw Error(ErrorCode::InvalidArgument, "--scope must be pending or all");
      const auto records = sorted_records(g.in_ws(pr_records));
      const auto model = load_model(g.in_ws(pr_model));
      const auto& meta = model.metadata();
      const auto features = engineer_features(records, meta.global_rate, meta.pseudo_count);
      std::vector<FeatureVector> rows;
      std::vector<const AppointmentRecord*> which;
      for (std::size_t i = 0; i < records.size(); ++i) {
        if (pr_scope == "pending" && records[i].outcome != Outcome::Pending) continue;
        rows.push_back(features[i]);
        which.push_back(&records[i]);
      }
      const auto probs = rows.empty() ? std::vector<double>{} : predict_proba(model, rows);
      std::vector<ScoredAppointment> scored;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = *which[i];
        scored.push_back({r.appointment_id, r.provider_id, r.provider_specialty, r.site_id, r.scheduled_at, probs[i]});
      }
      std::ostringstream out;
      write_scored_csv(out, scored);
      write_text(g.in_ws(pr_out), out.str());
      std::cout << "scored " << scored.size() << " appointments\n";
    } else if (*hm) {
      auto in = open_in(g.in_ws(hm_scored));
      const auto scored = read_scored_csv(in);
      Date week{};
      if (!hm_week.empty()) {
        auto d = parse_date(hm_week);
        if (!d) throw Error(ErrorCode::InvalidArgument, "--week must be YYYY-MM-DD");
        week = *d;
      } else if (!scored.empty()) {
        week = scored.front().scheduled_at.local_date();
        for (const auto& a : scored) week = std::min(week, a.scheduled_at.local_date());
      } else {
        throw Error(ErrorCode::EmptyWeek, "no scored appointments and no --week");
      }
      const auto range = WeekRange::containing(week);
      std::vector<HeatmapGrid> grids;
      std::vector<std::string> providers;
      if (hm_group == "provider") {
        grids = build_provider_heatmaps(scored, range, hm_filter, hm_hours);
        for (const auto& gr : grids) providers.push_back(gr.provider_id);
      } else {
        grids.push_back(build_heatmap(scored, range, hm_filter, hm_hours));
        if (hm_filter.provider) providers.push_back(*hm_filter.provider);
      }
      write_text(hm_out == "-" ? fs::path("-") : g.in_ws(hm_out), heatmap_json(range, providers, grids).dump(2) + "\n");
    } else if (*sim) {
      auto cfg = generator_config(g);
      std::vector<Policy> policies;
      for (const auto& p : sim_policies) policies.push_back(Policy::parse(p));
      auto history = generate_history(cfg);
      std::shared_ptr<const FrozenForestModel> model;
      const bool wants_model = std::any_of(policies.begin(), policies.end(), [](const Policy& p) {
        return p.kind == Policy::Kind::ModelExpectationFloor;
      });
      if (!sim_model.empty()) {
        model = std::make_shared<FrozenForestModel>(load_model(sim_model));
      } else if (wants_model) {
        std::cerr << "training a " << sim_trees << "-tree model on the generated history\n";
        ForestHyperparams mhp;
        mhp.n_trees = sim_trees;
        mhp.min_leaf_size = sim_min_leaf;
        mhp.features_per_split = sim_mtry.value_or(
            static_cast<int>(FeatureEncoder(FeatureSet{}, cfg.specialties, cfg.sites).columns().size()));
        mhp.seed = cfg.seed;
        model = std::make_shared<FrozenForestModel>(train_from_records(history.records, mhp).model);
      }
      PolicySimulator simulator(std::move(history), model);
      const auto table = simulator.compare(policies, sim_reps, sim_seed);
      std::cout << table.to_text();
      if (!sim_json.empty()) write_text(g.in_ws(sim_json), table.to_json().dump(2) + "\n");
    } else if (*run) {
      if (g.config.empty()) throw Error(ErrorCode::InvalidArgument, "run needs --config <pipeline.json>");
      const auto dag = load_dag(g.config);
      RunOptions opts;
      opts.workspace = g.workspace;
      opts.threads = run_threads;
      opts.seed = g.seed;
      const auto ledger = run_pipeline(dag, opts);
      for (const auto& t : dag.tasks) {
        const auto& r = ledger.tasks.at(t.name);
        std::cout << std::left << std::setw(14) << t.name << to_string(r.status);
        if (!r.message.empty()) std::cout << "  (" << r.message << ")";
        std::cout << "\n";
      }
      bool failed = false;
      for (const auto& t : dag.tasks) {
        const auto& r = ledger.tasks.at(t.name);
        if (r.status == TaskStatus::Failed) {
          std::cerr << "noshow run: task '" << t.name << "' failed: " << r.message << "\n";
          failed = true;
        }
      }
      return failed ? 1 : 0;
    } else if (*srv) {
      SnapshotStore store(srv_dir.empty() ? fs::path(g.workspace) / "published" : fs::path(srv_dir));
      Server server(store, srv_opts);
      const int port = server.start();
      std::cout << "serving " << store.root().string() << " on http://" << srv_opts.host << ":" << port << "\n"
                << std::flush;
      std::signal(SIGINT, [](int) { g_interrupted = 1; });
      std::signal(SIGTERM, [](int) { g_interrupted = 1; });
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      server.stop();
    }
  } catch (const Error& e) {
    std::cerr << "noshow " << stage << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "noshow " << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
