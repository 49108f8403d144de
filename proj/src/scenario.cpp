#include "lemsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lemsim/rng.hpp"

namespace lemsim {

namespace {

using nlohmann::json;

constexpr const char* kTechNames[] = {
    "solar",  "onshore_wind", "offshore_wind", "coal",
    "ocgt",   "ccgt",         "ess_short",     "ess_mid",
};

// Linear interpolation over integer-keyed anchors, clamped outside the range.
double interp_schedule(const std::map<int, double>& anchors, int year) {
  if (anchors.empty()) throw std::invalid_argument("empty schedule");
  auto hi = anchors.lower_bound(year);
  if (hi == anchors.end()) return anchors.rbegin()->second;
  if (hi->first == year || hi == anchors.begin()) return hi->second;
  auto lo = std::prev(hi);
  double t = double(year - lo->first) / double(hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

[[noreturn]] void fail_field(const std::string& field, const std::string& why) {
  throw std::invalid_argument("scenario field '" + field + "': " + why);
}

}  // namespace

const char* tech_name(TechId id) { return kTechNames[static_cast<int>(id)]; }

TechId tech_from_name(const std::string& name) {
  for (int i = 0; i < 8; ++i)
    if (name == kTechNames[i]) return static_cast<TechId>(i);
  throw std::invalid_argument("unknown technology id '" + name + "'");
}

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::existing: return "existing";
    case Channel::merchant: return "merchant";
    case Channel::cfd: return "cfd";
    case Channel::cm: return "cm";
  }
  return "?";
}

Channel channel_from_name(const std::string& name) {
  if (name == "existing") return Channel::existing;
  if (name == "merchant") return Channel::merchant;
  if (name == "cfd") return Channel::cfd;
  if (name == "cm") return Channel::cm;
  throw std::invalid_argument("unknown channel '" + name + "'");
}

AvailabilityDist solve_availability(double mean, double std) {
  // Moments of a distribution on {0, 0.5, 1}:
  //   E[x]   = p100 + 0.5 p50
  //   E[x^2] = p100 + 0.25 p50
  double m2 = std * std + mean * mean;
  AvailabilityDist d;
  d.p50 = 4.0 * (mean - m2);
  d.p100 = mean - 0.5 * d.p50;
  d.p0 = 1.0 - d.p50 - d.p100;
  const double eps = 1e-9;
  for (double p : {d.p0, d.p50, d.p100}) {
    if (p < -eps || p > 1.0 + eps)
      throw std::invalid_argument(
          "availability moments (mean " + std::to_string(mean) + ", std " +
          std::to_string(std) + ") admit no distribution on {0, 0.5, 1}");
  }
  d.p0 = std::clamp(d.p0, 0.0, 1.0);
  d.p50 = std::clamp(d.p50, 0.0, 1.0);
  d.p100 = std::clamp(d.p100, 0.0, 1.0);
  return d;
}

CostPoint cost_at_year(const Technology& tech, int calendar_year) {
  CostPoint c;
  c.capex_k_per_mw = interp_schedule(tech.capex_by_year, calendar_year);
  c.capex_per_mw = c.capex_k_per_mw * 1000.0;
  c.opex_fixed_per_mw_yr = tech.opex_fixed_pct * c.capex_per_mw;
  c.opex_var_per_mwh = tech.opex_var;
  return c;
}

double sample_availability(std::mt19937_64& rng, const Technology& tech) {
  double u = rand_u01(rng);
  if (u < tech.availability.p0) return 0.0;
  if (u < tech.availability.p0 + tech.availability.p50) return 0.5;
  return 1.0;
}

namespace {

void check_series(const std::vector<double>& s, const char* name,
                  std::size_t need) {
  if (s.size() < need)
    throw std::invalid_argument(std::string("series '") + name +
                                "' too short: " + std::to_string(s.size()) +
                                " < " + std::to_string(need));
  for (double v : s)
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string("series '") + name +
                                  "' contains a non-finite value");
}

}  // namespace

std::vector<RepresentativeDay> build_representative_days(
    const HourlySeries& series, int windows_per_year) {
  if (windows_per_year <= 0)
    throw std::invalid_argument("windows_per_year must be positive");
  std::size_t need = std::size_t(windows_per_year) * 24;
  check_series(series.demand, "demand", need);
  std::size_t len = series.demand.size() / 24 * 24;
  int days = int(len / 24);
  auto at = [&](const std::vector<double>& s, std::size_t i) {
    return i < s.size() ? s[i] : 0.0;
  };
  for (auto* s : {&series.cf_solar, &series.cf_onshore, &series.cf_offshore,
                  &series.hydro_inflow})
    check_series(*s, "capacity-factor/inflow", 0);

  std::vector<RepresentativeDay> out(windows_per_year);
  std::vector<int> counts(windows_per_year, 0);
  for (int d = 0; d < days; ++d) {
    int w = std::min(windows_per_year - 1,
                     int(std::int64_t(d) * windows_per_year / days));
    counts[w]++;
    for (int h = 0; h < 24; ++h) {
      std::size_t i = std::size_t(d) * 24 + h;
      out[w].demand[h] += series.demand[i];
      out[w].cf_solar[h] += at(series.cf_solar, i);
      out[w].cf_onshore[h] += at(series.cf_onshore, i);
      out[w].cf_offshore[h] += at(series.cf_offshore, i);
      out[w].hydro_inflow[h] += at(series.hydro_inflow, i);
    }
  }
  for (int w = 0; w < windows_per_year; ++w) {
    if (counts[w] == 0)
      throw std::invalid_argument("series too short: empty window " +
                                  std::to_string(w));
    for (int h = 0; h < 24; ++h) {
      out[w].demand[h] /= counts[w];
      out[w].cf_solar[h] /= counts[w];
      out[w].cf_onshore[h] /= counts[w];
      out[w].cf_offshore[h] /= counts[w];
      out[w].hydro_inflow[h] /= counts[w];
    }
    out[w].months_represented = 12.0 / windows_per_year;
  }
  return out;
}

RepresentativeDay build_peak_day(const HourlySeries& series,
                                 int windows_per_year) {
  std::size_t need = std::size_t(windows_per_year) * 24;
  check_series(series.demand, "demand", need);
  std::size_t arg = 0;
  for (std::size_t i = 0; i < series.demand.size(); ++i)
    if (series.demand[i] > series.demand[arg]) arg = i;  // ties: earliest
  std::size_t day = arg / 24;
  auto at = [&](const std::vector<double>& s, std::size_t i) {
    return i < s.size() ? s[i] : 0.0;
  };
  RepresentativeDay out;
  for (int h = 0; h < 24; ++h) {
    std::size_t i = day * 24 + h;
    out.demand[h] = at(series.demand, i);
    out.cf_solar[h] = at(series.cf_solar, i);
    out.cf_onshore[h] = at(series.cf_onshore, i);
    out.cf_offshore[h] = at(series.cf_offshore, i);
    out.hydro_inflow[h] = at(series.hydro_inflow, i);
  }
  out.months_represented = 1.0;
  return out;
}

const Technology& Scenario::tech(TechId id) const {
  const Technology* t = find_tech(id);
  if (!t)
    throw std::invalid_argument(std::string("technology '") + tech_name(id) +
                                "' not in scenario");
  return *t;
}

const Technology* Scenario::find_tech(TechId id) const {
  for (const auto& t : techs)
    if (t.id == id) return &t;
  return nullptr;
}

int Scenario::tech_index(TechId id) const {
  for (std::size_t i = 0; i < techs.size(); ++i)
    if (techs[i].id == id) return int(i);
  return -1;
}

double Scenario::demand_scale(int year_index) const {
  int g = std::clamp(year_index, warmup_years, warmup_years + study_years) -
          warmup_years;
  return std::pow(1.0 + demand_growth, g);
}

double Scenario::carbon_tax_at(int year_index) const {
  if (carbon_tax_schedule.empty()) return 0.0;
  return interp_schedule(carbon_tax_schedule, base_year + year_index);
}

double Scenario::res_target_at(int year_index) const {
  if (res_target_curve.empty()) return 0.0;
  return interp_schedule(res_target_curve, base_year + year_index);
}

double Scenario::cf_at(TechId id, const RepresentativeDay& day,
                       int hour) const {
  switch (id) {
    case TechId::solar: return day.cf_solar[hour];
    case TechId::onshore_wind: return day.cf_onshore[hour];
    case TechId::offshore_wind: return day.cf_offshore[hour];
    default: return 1.0;  // thermal; ESS capacity factors are not meaningful
  }
}

double Scenario::mean_cf(TechId id) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& day : rep_days)
    for (int h = 0; h < 24; ++h) {
      sum += cf_at(id, day, h);
      ++n;
    }
  return n ? sum / n : 0.0;
}

double Scenario::mean_demand() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& day : rep_days)
    for (int h = 0; h < 24; ++h) {
      sum += day.demand[h];
      ++n;
    }
  return n ? sum / n : 0.0;
}

double Scenario::max_system_demand() const {
  double peak = 0.0;
  for (const auto& day : rep_days)
    for (double d : day.demand) peak = std::max(peak, d);
  for (double d : peak_day.demand) peak = std::max(peak, d);
  return peak * std::pow(1.0 + demand_growth, study_years);
}

double Scenario::max_carbon_tax() const {
  double m = 0.0;
  for (const auto& [y, v] : carbon_tax_schedule) m = std::max(m, v);
  return m;
}

void Scenario::validate() const {
  if (steps_per_year <= 0) fail_field("steps_per_year", "must be positive");
  if (warmup_years < 0 || study_years <= 0 || cooldown_years < 0)
    fail_field("study_years", "year counts must be non-negative, study > 0");
  if (int(rep_days.size()) != steps_per_year)
    fail_field("rep_days", "one representative day per step-of-year required");
  if (discount_rate < 0) fail_field("discount_rate", "must be >= 0");
  if (steps_per_year < 5 && (cfd_enabled || cm_enabled))
    fail_field("steps_per_year",
               "expansion-auction slots need at least 5 steps per year");
  if (voll <= 0) fail_field("voll", "must be > 0");
  if (cfd_price_cap < 0) fail_field("cfd_price_cap", "must be >= 0");
  if (cm_price_cap < 0) fail_field("cm_price_cap", "must be >= 0");
  if (quantity_steps < 2) fail_field("quantity_steps", "must be >= 2");
  if (price_steps < 2) fail_field("price_steps", "must be >= 2");
  if (soc_steps < 2) fail_field("soc_steps", "must be >= 2");
  for (const auto& [y, v] : res_target_curve)
    if (v < 0.0 || v > 1.0)
      fail_field("res_target_curve",
                 "value " + std::to_string(v) + " at year " +
                     std::to_string(y) + " outside [0,1]");
  if (techs.empty()) fail_field("technologies", "at least one required");
  int max_build = 0;
  for (const auto& t : techs) {
    std::string f = std::string("technologies[") + tech_name(t.id) + "]";
    if (t.capex_by_year.empty()) fail_field(f + ".capex_by_year", "empty");
    for (const auto& [y, v] : t.capex_by_year)
      if (v <= 0)
        fail_field(f + ".capex_by_year",
                   "anchor at " + std::to_string(y) + " not positive");
    if (t.availability_mean <= 0 || t.availability_mean > 1)
      fail_field(f + ".availability_mean", "outside (0,1]");
    if (t.availability_std < 0)
      fail_field(f + ".availability_std", "negative");
    if (t.lifetime_years <= 0) fail_field(f + ".lifetime_years", "must be > 0");
    if (t.construction_years < 0)
      fail_field(f + ".construction_years", "negative");
    if ((t.is_res || t.is_ess()) && t.emission_factor != 0)
      fail_field(f + ".emission_factor", "must be 0 for RES and ESS");
    if (t.is_ess() && (t.round_trip_efficiency <= 0 ||
                       t.round_trip_efficiency > 1))
      fail_field(f + ".round_trip_efficiency", "outside (0,1]");
    solve_availability(t.availability_mean, t.availability_std);
    if (t.investable())
      max_build = std::max(max_build, t.construction_years);
  }
  if (planning_horizon_years < max_build)
    fail_field("planning_horizon_years",
               "below the longest construction time of investable "
               "technologies (" + std::to_string(max_build) + ")");
  if (agents.empty()) fail_field("agents", "at least one required");
  for (const auto& a : agents) {
    for (TechId id : a.enabled_techs)
      if (!find_tech(id))
        fail_field("agents[" + a.name + "].enabled_techs",
                   std::string("unknown technology ") + tech_name(id));
    for (const auto& ia : a.initial_assets) {
      if (!find_tech(ia.tech))
        fail_field("agents[" + a.name + "].initial_assets",
                   std::string("unknown technology ") + tech_name(ia.tech));
      if (ia.capacity_mw <= 0)
        fail_field("agents[" + a.name + "].initial_assets",
                   "capacity must be positive");
      if (ia.remaining_life_years <= 0)
        fail_field("agents[" + a.name + "].initial_assets",
                   "remaining life must be positive");
    }
  }
  for (const auto& b : bans)
    if (!find_tech(b.tech))
      fail_field("bans", std::string("unknown technology ") +
                             tech_name(b.tech));
}

std::vector<double> load_series_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open time-series file " + path);
  std::vector<double> out;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (first) {  // header row
      first = false;
      continue;
    }
    try {
      out.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad value in " + path + ": '" + line + "'");
    }
  }
  return out;
}

namespace {

std::map<int, double> parse_year_map(const json& j, const std::string& field) {
  std::map<int, double> out;
  if (!j.is_object()) fail_field(field, "expected an object of year: value");
  for (auto it = j.begin(); it != j.end(); ++it) {
    try {
      out[std::stoi(it.key())] = it.value().get<double>();
    } catch (const std::exception&) {
      fail_field(field, "bad anchor '" + it.key() + "'");
    }
  }
  return out;
}

Technology parse_technology(const json& j) {
  Technology t;
  t.id = tech_from_name(j.at("id").get<std::string>());
  t.capex_by_year = parse_year_map(j.at("capex_by_year"),
                                   std::string("technologies[") +
                                       tech_name(t.id) + "].capex_by_year");
  t.opex_fixed_pct = j.value("opex_fixed_pct", 0.0);
  t.opex_var = j.value("opex_var", 0.0);
  t.emission_factor = j.value("emission_factor", 0.0);
  t.construction_years = j.value("construction_years", 0);
  t.lifetime_years = j.value("lifetime_years", 1);
  t.max_invest_mw = j.value("max_invest_mw", 0.0);
  t.availability_mean = j.value("availability_mean", 0.925);
  t.availability_std = j.value("availability_std", 0.23);
  t.is_res = j.value("is_res", false);
  t.ess_duration_hours = j.value("ess_duration_hours", 0.0);
  t.round_trip_efficiency = j.value("round_trip_efficiency", 0.90);
  return t;
}

}  // namespace

Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open scenario file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("scenario parse failure in " + path + ": " +
                                e.what());
  }

  Scenario s;
  try {
    s.schema_version = j.at("schema_version").get<int>();
    if (s.schema_version != 1)
      fail_field("schema_version",
                 "unsupported version " + std::to_string(s.schema_version));
    s.name = j.value("name", "unnamed");
    s.base_year = j.value("base_year", 2025);
    s.warmup_years = j.value("warmup_years", 2);
    s.study_years = j.value("study_years", 20);
    s.cooldown_years = j.value("cooldown_years", 3);
    s.steps_per_year = j.value("steps_per_year", 6);
    s.demand_growth = j.value("demand_growth", 0.0);
    s.discount_rate = j.value("discount_rate", 0.08);
    s.voll = j.value("voll", 4000.0);
    if (j.contains("carbon_tax_schedule"))
      s.carbon_tax_schedule =
          parse_year_map(j["carbon_tax_schedule"], "carbon_tax_schedule");
    if (j.contains("res_target_curve"))
      s.res_target_curve =
          parse_year_map(j["res_target_curve"], "res_target_curve");
    if (j.contains("markets")) {
      const json& m = j["markets"];
      s.merchant_enabled = m.value("merchant", true);
      s.cfd_enabled = m.value("cfd", true);
      s.cm_enabled = m.value("cm", true);
      s.cfd_price_cap = m.value("cfd_price_cap", 200.0);
      s.cm_price_cap = m.value("cm_price_cap", 40.0);
      s.scarcity_strike = m.value("scarcity_strike", 500.0);
      s.adequacy_demand_margin = m.value("adequacy_demand_margin", 0.0);
      s.planning_horizon_years = m.value("planning_horizon_years", 4);
      std::string rule = m.value("pricing_rule", "marginal");
      if (rule == "marginal")
        s.pricing_rule = PricingRule::marginal;
      else if (rule == "pay_as_bid")
        s.pricing_rule = PricingRule::pay_as_bid;
      else
        fail_field("markets.pricing_rule", "unknown rule '" + rule + "'");
    }
    s.seed = j.value("seed", std::uint64_t(0));
    if (j.contains("actions")) {
      const json& a = j["actions"];
      s.quantity_steps = a.value("quantity_steps", 4);
      s.price_steps = a.value("price_steps", 12);
      s.soc_steps = a.value("soc_steps", 7);
    }

    for (const json& tj : j.at("technologies"))
      s.techs.push_back(parse_technology(tj));
    for (auto& t : s.techs)
      t.availability =
          solve_availability(t.availability_mean, t.availability_std);

    for (const json& aj : j.at("agents")) {
      AgentSpec a;
      a.name = aj.at("name").get<std::string>();
      if (aj.contains("enabled_techs"))
        for (const json& tj : aj["enabled_techs"])
          a.enabled_techs.push_back(tech_from_name(tj.get<std::string>()));
      if (aj.contains("initial_assets"))
        for (const json& ij : aj["initial_assets"]) {
          InitialAsset ia;
          ia.tech = tech_from_name(ij.at("tech").get<std::string>());
          ia.capacity_mw = ij.at("capacity_mw").get<double>();
          ia.remaining_life_years = ij.at("remaining_life_years").get<int>();
          a.initial_assets.push_back(ia);
        }
      s.agents.push_back(std::move(a));
    }

    if (j.contains("bans"))
      for (const json& bj : j["bans"]) {
        InvestmentBan b;
        b.tech = tech_from_name(bj.at("tech").get<std::string>());
        b.from_year = bj.at("from_year").get<int>();
        if (bj.contains("channel"))
          b.channel = channel_from_name(bj["channel"].get<std::string>());
        if (bj.contains("agent")) b.agent = bj["agent"].get<std::string>();
        s.bans.push_back(b);
      }

    // Time series, resolved relative to the scenario file.
    std::filesystem::path dir =
        std::filesystem::path(path).parent_path();
    auto read = [&](const char* key, bool required) -> std::vector<double> {
      const json& series = j.at("series");
      if (!series.contains(key)) {
        if (required) fail_field(std::string("series.") + key, "missing");
        return {};
      }
      std::string rel = series[key].get<std::string>();
      return load_series_csv((dir / rel).string());
    };
    HourlySeries hs;
    hs.demand = read("demand", true);
    hs.cf_solar = read("cf_solar", s.find_tech(TechId::solar) != nullptr);
    hs.cf_onshore =
        read("cf_onshore", s.find_tech(TechId::onshore_wind) != nullptr);
    hs.cf_offshore =
        read("cf_offshore", s.find_tech(TechId::offshore_wind) != nullptr);
    hs.hydro_inflow = read("inflow", false);
    s.rep_days = build_representative_days(hs, s.steps_per_year);
    s.peak_day = build_peak_day(hs, s.steps_per_year);
  } catch (const json::exception& e) {
    throw std::invalid_argument("scenario schema error in " + path + ": " +
                                e.what());
  }

  s.validate();
  return s;
}

}  // namespace lemsim
