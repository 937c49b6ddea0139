#include <doctest.h>

#include <random>
#include <sstream>

#include "noshow/aggregate.hpp"
#include "support.hpp"

using namespace noshow;
using noshow::test::at;
using noshow::test::error_code_of;
using noshow::test::ymd;

namespace {

ScoredAppointment scored(std::string id, std::string provider, Timestamp t, double p,
                         std::string specialty = "family_medicine", std::string site = "main") {
  return {std::move(id), std::move(provider), std::move(specialty), std::move(site), t, p};
}

const WeekRange kWeek = WeekRange::containing(ymd(2022, 5, 4));  // Mon 2 May .. Sun 8 May

int rank(BlockColor c) { return static_cast<int>(c); }

std::vector<ScoredAppointment> random_week(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> day(0, 6), hour(6, 18), minute(0, 59), who(0, 2);
  std::uniform_real_distribution<double> prob(0.0, 1.0);
  const char* providers[] = {"D001", "D002", "D003"};
  const char* specialties[] = {"family_medicine", "pediatrics", "ob_gyn"};
  std::vector<ScoredAppointment> out;
  for (int i = 0; i < n; ++i) {
    const int w = who(rng);
    out.push_back(scored("A" + std::to_string(i), providers[w],
                         at(2022, 5, 2 + static_cast<unsigned>(day(rng)), hour(rng), minute(rng)), prob(rng),
                         specialties[w], i % 2 ? "main" : "north"));
  }
  return out;
}

}  // namespace

TEST_CASE("expected no-shows is an exact sum") {
  CHECK(expected_no_shows(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 1.0);
  CHECK(expected_no_shows(std::vector<double>{}) == 0.0);
  CHECK(expected_no_shows(std::vector<double>{0.1, 0.7, 0.33}) == doctest::Approx(1.13).epsilon(1e-12));
  CHECK(error_code_of([] { expected_no_shows(std::vector<double>{0.5, 1.2}); }) == ErrorCode::OutOfRangeProbability);
  CHECK(error_code_of([] { expected_no_shows(std::vector<double>{-0.1}); }) == ErrorCode::OutOfRangeProbability);
}

TEST_CASE("color thresholds") {
  CHECK(color_code(0.0) == BlockColor::Yellow);
  CHECK(color_code(0.8) == BlockColor::Yellow);
  CHECK(color_code(1.0) == BlockColor::Orange);
  CHECK(color_code(1.5) == BlockColor::Orange);
  CHECK(color_code(2.0) == BlockColor::Orange);
  CHECK(color_code(2.3) == BlockColor::Red);
  CHECK(error_code_of([] { color_code(-0.01); }) == ErrorCode::NegativeInput);
  CHECK(to_string(BlockColor::Orange) == "orange");
  int prev = 0;
  for (int i = 0; i <= 400; ++i) {
    const int r = rank(color_code(i / 100.0));
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("overbook recommendation floors the expectation") {
  CHECK(recommend_overbook(1.0) == 1);
  CHECK(recommend_overbook(0.8) == 0);
  CHECK(recommend_overbook(2.6) == 2);
  CHECK(error_code_of([] { recommend_overbook(-1.0); }) == ErrorCode::NegativeInput);
}

TEST_CASE("four quarter-risk appointments make one orange block") {
  std::vector<ScoredAppointment> s;
  for (int m : {0, 15, 30, 45}) s.push_back(scored("T" + std::to_string(m), "D001", at(2022, 5, 3, 13, m), 0.25));
  auto g = build_heatmap(s, kWeek, {}, ClinicHours{});
  CHECK(g.dates.size() == 5);
  CHECK(g.hours.size() == 8);
  CHECK(g.cells.size() == 40);
  CHECK(g.provider_id == kAllProviders);
  int non_empty = 0;
  for (const auto& c : g.cells) {
    if (c.n_scheduled == 0) {
      CHECK(c.expected_misses == 0.0);
      CHECK(c.color == BlockColor::Yellow);
      continue;
    }
    ++non_empty;
    CHECK(c.block.date == ymd(2022, 5, 3));
    CHECK(c.block.start_hour == 13);
    CHECK(c.expected_misses == 1.0);
    CHECK(c.color == BlockColor::Orange);
    CHECK(c.recommended_overbook == 1);
    REQUIRE(c.appointments.size() == 4);
    CHECK(c.appointments.front().appointment_id == "T0");
    CHECK(c.appointments.back().probability == 0.25);
  }
  CHECK(non_empty == 1);
  const auto* cell = g.find(ymd(2022, 5, 3), 13);
  REQUIRE(cell);
  CHECK(cell->n_scheduled == 4);
  CHECK_FALSE(g.find(ymd(2022, 5, 7), 13));  // Saturday is not a clinic day
}

TEST_CASE("filters that match nothing give an empty grid") {
  std::vector<ScoredAppointment> s = {scored("A", "B", at(2022, 5, 3, 9, 0), 0.4)};
  HeatmapFilter f;
  f.provider = "A";
  auto g = build_heatmap(s, kWeek, f, ClinicHours{});
  CHECK(g.provider_id == "A");
  CHECK(g.cells.size() == 40);
  CHECK(g.total_scheduled() == 0);
  CHECK(g.total_expected() == 0.0);
}

TEST_CASE("a week without clinic days is rejected") {
  WeekRange weekend{ymd(2022, 5, 7), ymd(2022, 5, 8)};
  CHECK(error_code_of([] {
          build_heatmap(std::vector<ScoredAppointment>{}, WeekRange{ymd(2022, 5, 7), ymd(2022, 5, 8)}, {},
                        ClinicHours{});
        }) == ErrorCode::EmptyWeek);
  CHECK(weekend.first < weekend.last);
}

TEST_CASE("per-provider grids sum to the combined grid") {
  const auto s = random_week(7, 600);
  const auto combined = build_heatmap(s, kWeek, {}, ClinicHours{});
  const auto per = build_provider_heatmaps(s, kWeek, {}, ClinicHours{});
  REQUIRE(per.size() == 3);
  CHECK(per[0].provider_id == "D001");
  for (std::size_t i = 0; i < combined.cells.size(); ++i) {
    double e = 0;
    int n = 0;
    for (const auto& g : per) {
      e += g.cells[i].expected_misses;
      n += g.cells[i].n_scheduled;
    }
    CHECK(e == doctest::Approx(combined.cells[i].expected_misses).epsilon(1e-12));
    CHECK(n == combined.cells[i].n_scheduled);
  }
}

TEST_CASE("conservation and placement accounting under filters") {
  const auto s = random_week(11, 800);
  const ClinicHours hours;
  for (int variant = 0; variant < 4; ++variant) {
    HeatmapFilter f;
    if (variant == 1) f.provider = "D002";
    if (variant == 2) f.specialty = "pediatrics";
    if (variant == 3) {
      f.site = "main";
      f.specialty = "ob_gyn";
    }
    double want = 0;
    std::size_t placed = 0, total = 0;
    for (const auto& a : s) {
      if (!f.matches(a)) continue;
      ++total;
      const int h = a.scheduled_at.hour();
      if (hours.is_clinic_day(a.scheduled_at.local_date()) && h >= hours.open_hour && h < hours.close_hour) {
        ++placed;
        want += a.probability;
      }
    }
    auto g = build_heatmap(s, kWeek, f, hours);
    CHECK(g.total_expected() == doctest::Approx(want).epsilon(1e-9));
    CHECK(static_cast<std::size_t>(g.total_scheduled()) == placed);
    CHECK(g.unplaced == total - placed);
    for (const auto& c : g.cells) {
      double sum = 0;
      for (const auto& t : c.appointments) sum += t.probability;
      CHECK(c.expected_misses == doctest::Approx(sum).epsilon(1e-12));
      CHECK(c.recommended_overbook == static_cast<int>(std::floor(c.expected_misses)));
      CHECK(c.color == color_code(c.expected_misses));
    }
  }
}

TEST_CASE("raising one probability never lowers its block") {
  auto s = random_week(3, 200);
  const auto before = build_heatmap(s, kWeek, {}, ClinicHours{});
  for (auto& a : s) {
    if (a.scheduled_at.hour() == 10 && a.probability < 0.5) {
      a.probability += 0.5;
      break;
    }
  }
  const auto after = build_heatmap(s, kWeek, {}, ClinicHours{});
  for (std::size_t i = 0; i < before.cells.size(); ++i) {
    CHECK(after.cells[i].expected_misses >= before.cells[i].expected_misses);
    CHECK(rank(after.cells[i].color) >= rank(before.cells[i].color));
    CHECK(after.cells[i].recommended_overbook >= before.cells[i].recommended_overbook);
  }
}

TEST_CASE("heatmap json shape") {
  std::vector<ScoredAppointment> s = {scored("A", "D001", at(2022, 5, 3, 13, 0), 0.6),
                                      scored("B", "D001", at(2022, 5, 3, 13, 30), 0.7)};
  auto g = build_heatmap(s, kWeek, {}, ClinicHours{});
  std::vector<std::string> providers = {"D001"};
  auto j = heatmap_json(kWeek, providers, std::span<const HeatmapGrid>(&g, 1));
  CHECK(j["week"] == "2022-05-02");
  CHECK(j["dates"].size() == 5);
  CHECK(j["hours"].front() == 8);
  CHECK(j["providers"] == nlohmann::ordered_json::array({"D001"}));
  const auto& cell = j["cells"][1 * 8 + 5];
  CHECK(cell["date"] == "2022-05-03");
  CHECK(cell["hour"] == 13);
  CHECK(cell["expected"].get<double>() == doctest::Approx(1.3));
  CHECK(cell["color"] == "orange");
  CHECK(cell["overbook"] == 1);
  CHECK(cell["appointments"].size() == 2);
}

TEST_CASE("scored csv round trip") {
  const auto s = random_week(5, 50);
  std::ostringstream out;
  write_scored_csv(out, s);
  std::istringstream in(out.str());
  CHECK(read_scored_csv(in) == s);
}
