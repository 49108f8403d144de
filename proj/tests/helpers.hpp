#pragma once

// In-memory scenario builders shared across test binaries.

#include <array>

#include "lemsim/scenario.hpp"

namespace testutil {

inline lemsim::RepresentativeDay flat_day(double demand, double cf_solar = 0.3,
                                          double cf_wind = 0.4,
                                          double inflow = 0.0) {
  lemsim::RepresentativeDay d;
  for (int h = 0; h < 24; ++h) {
    d.demand[h] = demand;
    d.cf_solar[h] = (h >= 7 && h <= 17) ? cf_solar : 0.0;
    d.cf_onshore[h] = cf_wind;
    d.cf_offshore[h] = cf_wind;
    d.hydro_inflow[h] = inflow;
  }
  d.months_represented = 2.0;
  return d;
}

inline lemsim::Technology make_tech(lemsim::TechId id, double capex_k,
                                    double opex_var, double ef, int build,
                                    int life, double max_invest,
                                    bool is_res = false,
                                    double ess_hours = 0.0) {
  lemsim::Technology t;
  t.id = id;
  t.capex_by_year = {{2020, capex_k}};
  t.opex_fixed_pct = 0.02;
  t.opex_var = opex_var;
  t.emission_factor = ef;
  t.construction_years = build;
  t.lifetime_years = life;
  t.max_invest_mw = max_invest;
  t.is_res = is_res;
  t.ess_duration_hours = ess_hours;
  t.availability_mean = 0.925;
  t.availability_std = 0.23;
  t.availability = lemsim::solve_availability(0.925, 0.23);
  return t;
}

// Flat-demand scenario with solar, onshore wind, OCGT and a short battery.
inline lemsim::Scenario make_flat_scenario(double demand = 100.0) {
  lemsim::Scenario s;
  s.name = "flat";
  s.base_year = 2025;
  s.warmup_years = 1;
  s.study_years = 6;
  s.cooldown_years = 1;
  s.steps_per_year = 6;
  for (int w = 0; w < 6; ++w) s.rep_days.push_back(flat_day(demand));
  s.peak_day = flat_day(demand);
  s.voll = 4000.0;
  s.discount_rate = 0.08;
  s.techs.push_back(
      make_tech(lemsim::TechId::solar, 400, 1.0, 0.0, 2, 35, 200, true));
  s.techs.push_back(
      make_tech(lemsim::TechId::onshore_wind, 1100, 1.5, 0.0, 3, 28, 200,
                true));
  s.techs.push_back(
      make_tech(lemsim::TechId::ocgt, 480, 46.0, 0.34, 3, 25, 200));
  s.techs.push_back(make_tech(lemsim::TechId::ess_short, 560, 0.0, 0.0, 2, 25,
                              100, false, 4.0));
  s.agents.push_back({"a", {lemsim::TechId::solar, lemsim::TechId::ocgt}, {}});
  s.agents.push_back({"b", {lemsim::TechId::solar, lemsim::TechId::ocgt}, {}});
  return s;
}

}  // namespace testutil
