#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace lemsim {

enum class TechId {
  solar,
  onshore_wind,
  offshore_wind,
  coal,
  ocgt,
  ccgt,
  ess_short,
  ess_mid,
};

const char* tech_name(TechId id);
TechId tech_from_name(const std::string& name);

enum class Channel { existing, merchant, cfd, cm };

const char* channel_name(Channel c);
Channel channel_from_name(const std::string& name);

enum class PricingRule { marginal, pay_as_bid };

// Three-point availability distribution on {0, 0.5, 1} matching a given
// mean and standard deviation. Solved once per technology and cached.
struct AvailabilityDist {
  double p0 = 0.0;
  double p50 = 0.0;
  double p100 = 1.0;
};

// Solves p100 + 0.5*p50 = mean and p100 + 0.25*p50 = std^2 + mean^2.
// Throws std::invalid_argument when the moment pair is infeasible.
AvailabilityDist solve_availability(double mean, double std);

struct Technology {
  TechId id = TechId::solar;
  std::map<int, double> capex_by_year;  // anchor year -> thousand-currency/MW
  double opex_fixed_pct = 0.0;          // fraction of CAPEX per MW-year
  double opex_var = 0.0;                // currency per MWh
  double emission_factor = 0.0;         // tCO2 per MWh
  int construction_years = 0;
  int lifetime_years = 1;
  double max_invest_mw = 0.0;  // per agent per decision; 0 = not investable
  double availability_mean = 0.925;
  double availability_std = 0.23;
  bool is_res = false;
  double ess_duration_hours = 0.0;  // > 0 marks a storage technology
  double round_trip_efficiency = 0.90;
  AvailabilityDist availability;  // cached at load

  bool is_ess() const { return ess_duration_hours > 0.0; }
  bool investable() const { return max_invest_mw > 0.0; }
};

struct CostPoint {
  double capex_k_per_mw = 0.0;        // thousand-currency per MW, anchor units
  double capex_per_mw = 0.0;          // currency per MW
  double opex_fixed_per_mw_yr = 0.0;  // currency per MW-year
  double opex_var_per_mwh = 0.0;      // currency per MWh
};

// Linear interpolation between CAPEX anchors, constant beyond the range.
CostPoint cost_at_year(const Technology& tech, int calendar_year);

// Draws from the cached 3-point distribution of the technology.
double sample_availability(std::mt19937_64& rng, const Technology& tech);

struct RepresentativeDay {
  std::array<double, 24> demand{};     // MWh per hour
  std::array<double, 24> cf_solar{};   // capacity factors in [0,1]
  std::array<double, 24> cf_onshore{};
  std::array<double, 24> cf_offshore{};
  std::array<double, 24> hydro_inflow{};  // MWh per hour
  double months_represented = 1.0;
};

// One year of hourly input series, all the same length (a multiple of 24).
struct HourlySeries {
  std::vector<double> demand;
  std::vector<double> cf_solar;
  std::vector<double> cf_onshore;
  std::vector<double> cf_offshore;
  std::vector<double> hydro_inflow;
};

std::vector<RepresentativeDay> build_representative_days(
    const HourlySeries& series, int windows_per_year);

RepresentativeDay build_peak_day(const HourlySeries& series,
                                 int windows_per_year);

struct InitialAsset {
  TechId tech = TechId::solar;
  double capacity_mw = 0.0;
  int remaining_life_years = 1;
};

struct AgentSpec {
  std::string name;
  std::vector<TechId> enabled_techs;  // technologies this agent may invest in
  std::vector<InitialAsset> initial_assets;
};

// Exogenous investment prohibition, optionally channel- and agent-specific.
struct InvestmentBan {
  TechId tech = TechId::coal;
  int from_year = 0;                       // calendar year
  std::optional<Channel> channel;          // empty = all channels
  std::optional<std::string> agent;        // empty = all agents
};

struct Scenario {
  int schema_version = 1;
  std::string name;
  int base_year = 2025;  // calendar year of simulation year 0
  int warmup_years = 2;
  int study_years = 20;
  int cooldown_years = 3;
  int steps_per_year = 6;
  std::vector<RepresentativeDay> rep_days;  // indexed by window-of-year
  RepresentativeDay peak_day;
  double demand_growth = 0.0;   // annual fraction
  double discount_rate = 0.08;  // annual fraction
  double voll = 4000.0;         // currency per MWh
  std::map<int, double> carbon_tax_schedule;  // calendar year -> currency/tCO2
  std::map<int, double> res_target_curve;     // calendar year -> fraction
  bool merchant_enabled = true;
  bool cfd_enabled = true;
  bool cm_enabled = true;
  double cfd_price_cap = 200.0;          // currency per MWh
  double cm_price_cap = 40.0;            // thousand-currency per MW-firm-year
  double scarcity_strike = 500.0;        // currency per MWh
  double adequacy_demand_margin = 0.0;   // fraction over grown peak demand
  int planning_horizon_years = 4;
  PricingRule pricing_rule = PricingRule::marginal;
  int quantity_steps = 4;  // discrete grid sizes for agent actions
  int price_steps = 12;
  int soc_steps = 7;
  std::vector<Technology> techs;
  std::vector<AgentSpec> agents;
  std::vector<InvestmentBan> bans;
  std::uint64_t seed = 0;

  int years() const { return warmup_years + study_years + cooldown_years; }
  int total_steps() const { return years() * steps_per_year; }
  // Weight of one representative-day hour in hours of the real year.
  double hour_weight() const { return 8760.0 / (steps_per_year * 24.0); }
  // Reward normalization factor.
  double nf() const { return voll * voll * years(); }

  const Technology& tech(TechId id) const;
  const Technology* find_tech(TechId id) const;
  int tech_index(TechId id) const;  // -1 when absent

  // Demand growth applies across the study window only; warm-up years stay
  // at the base profile and cool-down years stay at the study-end level.
  double demand_scale(int year_index) const;
  double carbon_tax_at(int year_index) const;
  double res_target_at(int year_index) const;

  // Capacity factor profile of a technology on a given day (1 for thermal).
  double cf_at(TechId id, const RepresentativeDay& day, int hour) const;
  // Mean capacity factor across the representative year.
  double mean_cf(TechId id) const;
  // Mean hourly demand across the representative year at base scale.
  double mean_demand() const;
  // Maximum hourly demand at end-of-study scale (observation reference).
  double max_system_demand() const;
  double max_carbon_tax() const;

  void validate() const;  // throws std::invalid_argument naming the field
};

// Reads the documented JSON scenario file; time-series CSV paths are
// resolved relative to the scenario file's directory.
Scenario load_scenario(const std::string& path);

// Single-column CSV with a header row.
std::vector<double> load_series_csv(const std::string& path);

}  // namespace lemsim
