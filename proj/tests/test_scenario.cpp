#include "lemsim/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lemsim/rng.hpp"

using namespace lemsim;
namespace fs = std::filesystem;

namespace {

HourlySeries constant_series(int days, double demand) {
  HourlySeries s;
  s.demand.assign(days * 24, demand);
  s.cf_solar.assign(days * 24, 0.2);
  s.cf_onshore.assign(days * 24, 0.3);
  s.cf_offshore.assign(days * 24, 0.4);
  s.hydro_inflow.assign(days * 24, 1.0);
  return s;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

void write_csv(const fs::path& p, const std::vector<double>& v) {
  std::ofstream f(p);
  f << "value\n";
  for (double x : v) f << x << "\n";
}

fs::path fixture_dir() {
  fs::path dir = fs::temp_directory_path() / "lemsim_scenario_fixture";
  fs::create_directories(dir);
  return dir;
}

// Minimal loadable scenario; callers may patch the JSON before writing.
std::string minimal_json() {
  return R"({
  "schema_version": 1,
  "name": "minimal",
  "base_year": 2025,
  "warmup_years": 1, "study_years": 4, "cooldown_years": 1,
  "steps_per_year": 6,
  "voll": 4000.0,
  "discount_rate": 0.08,
  "markets": {"merchant": true, "cfd": true, "cm": true,
              "cfd_price_cap": 200.0, "cm_price_cap": 40.0,
              "planning_horizon_years": 4},
  "series": {"demand": "demand.csv", "cf_solar": "cf_solar.csv"},
  "technologies": [
    {"id": "ocgt", "capex_by_year": {"2020": 480, "2040": 443},
     "opex_fixed_pct": 0.033, "opex_var": 46.0, "emission_factor": 0.34,
     "construction_years": 3, "lifetime_years": 25, "max_invest_mw": 4000}
  ],
  "agents": [
    {"name": "a", "enabled_techs": ["ocgt"],
     "initial_assets": [{"tech": "ocgt", "capacity_mw": 100,
                         "remaining_life_years": 10}]},
    {"name": "b", "enabled_techs": ["ocgt"]}
  ]
})";
}

fs::path write_minimal_fixture(const std::string& json_text) {
  fs::path dir = fixture_dir();
  write_file(dir / "scenario.json", json_text);
  std::vector<double> demand(288), cf(288);
  for (int i = 0; i < 288; ++i) {
    demand[i] = 80.0 + 20.0 * std::sin(i * 0.26);
    cf[i] = (i % 24 >= 7 && i % 24 <= 17) ? 0.5 : 0.0;
  }
  write_csv(dir / "demand.csv", demand);
  write_csv(dir / "cf_solar.csv", cf);
  return dir / "scenario.json";
}

}  // namespace

TEST_CASE("availability distribution: degenerate moments") {
  auto d = solve_availability(1.0, 0.0);
  CHECK(d.p100 == doctest::Approx(1.0));
  CHECK(d.p0 == doctest::Approx(0.0));
  CHECK(d.p50 == doctest::Approx(0.0));
  Technology t;
  t.availability = d;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) CHECK(sample_availability(rng, t) == 1.0);
}

TEST_CASE("availability distribution: default generation parameters") {
  auto d = solve_availability(0.925, 0.23);
  CHECK(d.p0 == doctest::Approx(0.042).epsilon(0.03));
  CHECK(d.p50 == doctest::Approx(0.066).epsilon(0.03));
  CHECK(d.p100 == doctest::Approx(0.892).epsilon(0.03));

  Technology t;
  t.availability_mean = 0.925;
  t.availability_std = 0.23;
  t.availability = d;
  std::mt19937_64 rng(42);
  const int n = 1'000'000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = sample_availability(rng, t);
    sum += x;
    sum2 += x * x;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 0.925) < 0.003);
  CHECK(std::abs(std::sqrt(var) - 0.23) < 0.003);
}

TEST_CASE("availability distribution: infeasible moments rejected") {
  CHECK_THROWS_AS(solve_availability(0.5, 0.6), std::invalid_argument);
}

TEST_CASE("availability distribution: moments reproduced algebraically") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    double a = rand_u01(rng), b = rand_u01(rng), c = rand_u01(rng);
    double s = a + b + c;
    double p0 = a / s, p50 = b / s, p100 = c / s;
    double mean = 0.5 * p50 + p100;
    double m2 = 0.25 * p50 + p100;
    double var = m2 - mean * mean;
    if (mean <= 0.0) continue;
    auto d = solve_availability(mean, std::sqrt(std::max(var, 0.0)));
    CHECK(d.p0 == doctest::Approx(p0).epsilon(1e-9));
    CHECK(d.p50 == doctest::Approx(p50).epsilon(1e-9));
    CHECK(d.p100 == doctest::Approx(p100).epsilon(1e-9));
  }
}

TEST_CASE("representative days: constant input is a fixed point") {
  auto days = build_representative_days(constant_series(365, 100.0), 6);
  REQUIRE(days.size() == 6);
  for (const auto& d : days) {
    CHECK(d.months_represented == doctest::Approx(2.0));
    for (int h = 0; h < 24; ++h) {
      CHECK(d.demand[h] == doctest::Approx(100.0));
      CHECK(d.cf_solar[h] == doctest::Approx(0.2));
    }
  }
}

TEST_CASE("representative days: two-day window averages alternating demand") {
  HourlySeries s = constant_series(12, 0.0);
  for (int d = 0; d < 12; ++d)
    for (int h = 0; h < 24; ++h) s.demand[d * 24 + h] = (d % 2 == 0) ? 50 : 150;
  auto days = build_representative_days(s, 6);
  REQUIRE(days.size() == 6);
  for (const auto& d : days)
    for (int h = 0; h < 24; ++h) CHECK(d.demand[h] == doctest::Approx(100.0));
}

TEST_CASE("representative days: window means preserved") {
  std::mt19937_64 rng(3);
  HourlySeries s;
  int days = 365;
  for (int i = 0; i < days * 24; ++i) {
    s.demand.push_back(50.0 + 100.0 * rand_u01(rng));
    s.cf_solar.push_back(rand_u01(rng));
    s.cf_onshore.push_back(rand_u01(rng));
    s.cf_offshore.push_back(rand_u01(rng));
    s.hydro_inflow.push_back(10.0 * rand_u01(rng));
  }
  int windows = 6;
  auto reps = build_representative_days(s, windows);

  std::vector<double> in_mean(windows, 0.0);
  std::vector<int> in_count(windows, 0);
  for (int d = 0; d < days; ++d) {
    int w = std::min(windows - 1, int(std::int64_t(d) * windows / days));
    for (int h = 0; h < 24; ++h) in_mean[w] += s.demand[d * 24 + h];
    in_count[w] += 24;
  }
  for (int w = 0; w < windows; ++w) {
    in_mean[w] /= in_count[w];
    double out_mean = 0.0;
    for (int h = 0; h < 24; ++h) out_mean += reps[w].demand[h];
    out_mean /= 24.0;
    CHECK(std::abs(out_mean - in_mean[w]) <= 1e-9 * std::abs(in_mean[w]));
  }
}

TEST_CASE("peak day: argmax day extracted with concurrent series") {
  HourlySeries s = constant_series(365, 100.0);
  int day = 200, hour = 19;
  for (int h = 0; h < 24; ++h) {
    s.demand[day * 24 + h] = 120.0 + h;
    s.cf_solar[day * 24 + h] = 0.01 * h;
  }
  s.demand[day * 24 + hour] = 500.0;
  auto peak = build_peak_day(s, 6);
  CHECK(peak.demand[hour] == doctest::Approx(500.0));
  for (int h = 0; h < 24; ++h) {
    if (h != hour) CHECK(peak.demand[h] == doctest::Approx(120.0 + h));
    CHECK(peak.cf_solar[h] == doctest::Approx(0.01 * h));
  }

  double in_max = *std::max_element(s.demand.begin(), s.demand.end());
  double out_max = *std::max_element(peak.demand.begin(), peak.demand.end());
  CHECK(in_max == out_max);
}

TEST_CASE("peak day: ties resolved to the earliest day") {
  HourlySeries s = constant_series(10, 100.0);
  s.demand[3 * 24 + 5] = 200.0;  // day 3
  s.demand[7 * 24 + 9] = 200.0;  // day 7, same peak
  s.cf_solar[3 * 24 + 0] = 0.77;
  auto peak = build_peak_day(s, 6);
  CHECK(peak.cf_solar[0] == doctest::Approx(0.77));
  CHECK(peak.demand[5] == doctest::Approx(200.0));
}

TEST_CASE("cost interpolation between anchors") {
  Technology t;
  t.capex_by_year = {{2020, 562.0}, {2040, 323.0}};
  t.opex_fixed_pct = 0.025;
  t.opex_var = 1.0;
  CHECK(cost_at_year(t, 2030).capex_k_per_mw == doctest::Approx(442.5));
  CHECK(cost_at_year(t, 2020).capex_k_per_mw == doctest::Approx(562.0));
  CHECK(cost_at_year(t, 2040).capex_k_per_mw == doctest::Approx(323.0));
  CHECK(cost_at_year(t, 2050).capex_k_per_mw == doctest::Approx(323.0));
  CHECK(cost_at_year(t, 2000).capex_k_per_mw == doctest::Approx(562.0));
  // monotone between monotone anchors
  double prev = cost_at_year(t, 2020).capex_k_per_mw;
  for (int y = 2021; y <= 2040; ++y) {
    double cur = cost_at_year(t, y).capex_k_per_mw;
    CHECK(cur <= prev);
    prev = cur;
  }
  // derived units
  auto c = cost_at_year(t, 2030);
  CHECK(c.capex_per_mw == doctest::Approx(442500.0));
  CHECK(c.opex_fixed_per_mw_yr == doctest::Approx(0.025 * 442500.0));
  CHECK(c.opex_var_per_mwh == doctest::Approx(1.0));
}

TEST_CASE("load_scenario: minimal two-agent config") {
  auto path = write_minimal_fixture(minimal_json());
  Scenario s = load_scenario(path.string());
  CHECK(s.agents.size() == 2);
  CHECK(s.techs.size() == 1);
  CHECK(s.steps_per_year == 6);
  CHECK(int(s.rep_days.size()) == 6);
  CHECK(s.years() == 6);
  CHECK(s.total_steps() == 36);
  CHECK(s.agents[0].initial_assets.size() == 1);
}

TEST_CASE("load_scenario: out-of-range RES target names the field") {
  std::string j = minimal_json();
  auto pos = j.find("\"markets\"");
  j.insert(pos, "\"res_target_curve\": {\"2030\": 1.2},\n  ");
  auto path = write_minimal_fixture(j);
  try {
    load_scenario(path.string());
    FAIL("expected invariant error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("res_target_curve") !=
          std::string::npos);
  }
}

TEST_CASE("load_scenario: headline market parameters echoed") {
  Scenario s = load_scenario(write_minimal_fixture(minimal_json()).string());
  CHECK(s.voll == doctest::Approx(4000.0));
  CHECK(s.cm_price_cap == doctest::Approx(40.0));
  CHECK(s.cfd_price_cap == doctest::Approx(200.0));
  CHECK(s.discount_rate == doctest::Approx(0.08));
}

TEST_CASE("load_scenario: missing files reported") {
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"),
                  std::invalid_argument);
  fs::path dir = fixture_dir();
  std::string j = minimal_json();
  auto pos = j.find("demand.csv");
  j.replace(pos, 10, "absent.csv");
  write_file(dir / "scenario.json", j);
  CHECK_THROWS_AS(load_scenario((dir / "scenario.json").string()),
                  std::invalid_argument);
}

TEST_CASE("scenario schedules: growth clamped to the study window") {
  Scenario s = load_scenario(write_minimal_fixture(minimal_json()).string());
  Scenario g = s;
  g.demand_growth = 0.10;
  CHECK(g.demand_scale(0) == doctest::Approx(1.0));       // warm-up
  CHECK(g.demand_scale(1) == doctest::Approx(1.0));       // study start
  CHECK(g.demand_scale(3) == doctest::Approx(1.21));      // two years in
  CHECK(g.demand_scale(5) == doctest::Approx(std::pow(1.1, 4)));  // frozen
  CHECK(g.demand_scale(9) == doctest::Approx(std::pow(1.1, 4)));
}

TEST_CASE("load_scenario: committed scenarios load and validate") {
  Scenario toy =
      load_scenario(LEMSIM_SOURCE_DIR "/scenarios/toy/scenario.json");
  CHECK(toy.agents.size() == 2);
  CHECK(toy.techs.size() == 2);
  CHECK(toy.total_steps() == 36);
  CHECK_FALSE(toy.cfd_enabled);
  CHECK_FALSE(toy.cm_enabled);

  Scenario base =
      load_scenario(LEMSIM_SOURCE_DIR "/scenarios/base/scenario.json");
  CHECK(base.agents.size() == 4);
  CHECK(base.techs.size() == 8);
  CHECK(base.years() == 25);
  CHECK(base.cfd_enabled);
  CHECK(base.cm_enabled);
  CHECK(base.tech(TechId::ess_mid).ess_duration_hours == doctest::Approx(8.0));
}
