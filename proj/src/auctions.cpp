#include "lemsim/auctions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lemsim {

namespace {

constexpr double kEps = 1e-9;

// Operating interval of an asset, measured in whole years from now:
// [years_to_operation, years_to_operation + remaining_life_years).
bool operating_at_horizon(const Asset& a, int horizon_years) {
  return a.years_to_operation <= horizon_years &&
         horizon_years < a.years_to_operation + a.remaining_life_years;
}

}  // namespace

double res_deficit(const std::vector<Asset>& assets, const Scenario& sc,
                   int decision_year_index) {
  int horizon = decision_year_index + sc.planning_horizon_years;
  double target = sc.res_target_at(horizon);
  double avg_demand = sc.mean_demand() * sc.demand_scale(horizon);
  double res_avg_mw = 0.0;
  for (const auto& a : assets) {
    const Technology& t = sc.tech(a.tech);
    if (!t.is_res) continue;
    if (!operating_at_horizon(a, sc.planning_horizon_years)) continue;
    res_avg_mw += a.capacity_mw * sc.mean_cf(a.tech) * t.availability_mean;
  }
  return target * avg_demand - res_avg_mw;
}

AdequacyResult adequacy_assessment(const std::vector<Asset>& assets,
                                   const Scenario& sc,
                                   int decision_year_index) {
  int horizon = decision_year_index + sc.planning_horizon_years;
  double scale =
      sc.demand_scale(horizon) * (1.0 + sc.adequacy_demand_margin);
  std::array<double, 24> demand{};
  for (int h = 0; h < 24; ++h) demand[h] = sc.peak_day.demand[h] * scale;
  std::vector<Asset> at_horizon;
  for (const auto& a : assets)
    if (operating_at_horizon(a, sc.planning_horizon_years))
      at_horizon.push_back(a);
  return capacity_credits(at_horizon, sc.peak_day, demand, sc);
}

double adequacy_deficit(const std::vector<Asset>& assets, const Scenario& sc,
                        int decision_year_index) {
  return -adequacy_assessment(assets, sc, decision_year_index)
              .adequacy_margin;
}

AuctionResult run_auction(std::vector<AuctionBid> bids, double target_quantity,
                          double ceiling, PricingRule rule) {
  if (target_quantity <= 0.0)
    throw std::invalid_argument("auction target must be positive");
  for (const auto& b : bids) {
    if (b.price < -kEps || b.price > ceiling + kEps)
      throw std::invalid_argument(
          "auction bid price " + std::to_string(b.price) +
          " outside [0, ceiling " + std::to_string(ceiling) + "]");
  }
  std::erase_if(bids, [](const AuctionBid& b) {
    return b.quantity_mw <= 0.0 || b.contribution <= 0.0;
  });
  std::sort(bids.begin(), bids.end(),
            [](const AuctionBid& a, const AuctionBid& b) {
              if (a.price != b.price) return a.price < b.price;
              if (a.contribution != b.contribution)
                return a.contribution > b.contribution;
              if (a.agent != b.agent) return a.agent < b.agent;
              return a.tech < b.tech;
            });

  AuctionResult out;
  double covered = 0.0;
  for (const auto& b : bids) {
    if (covered >= target_quantity) break;
    out.awards.push_back({b.agent, b.tech, b.quantity_mw, b.contribution,
                          b.price});
    covered += b.contribution;
    out.clearing_price = b.price;  // last accepted bid, in full
  }
  if (rule == PricingRule::marginal)
    for (auto& a : out.awards) a.price_paid = out.clearing_price;
  out.unfilled = std::max(0.0, target_quantity - covered);
  return out;
}

namespace {

struct EnergyCost {
  double energy = 0.0;
  double var_cost = 0.0;
  double carbon_cost = 0.0;
};

EnergyCost energy_costs(const Technology& tech,
                        const std::array<double, 24>& dispatch_mwh,
                        const SettleInputs& in) {
  EnergyCost e;
  for (double q : dispatch_mwh) e.energy += q;
  e.energy *= in.hour_weight;
  e.var_cost = tech.opex_var * e.energy;
  e.carbon_cost = tech.emission_factor * in.carbon_tax * e.energy;
  return e;
}

double fixed_cost_per_step(const Asset& plant, const SettleInputs& in) {
  return in.opex_fixed_per_mw_yr * plant.capacity_mw / in.steps_per_year;
}

double option_refund(const Asset& plant, const SettleInputs& in) {
  double refund = 0.0;
  for (double p : in.spot)
    refund += std::max(p - in.scarcity_strike, 0.0) *
              plant.cm_firm_capacity_mw * in.hour_weight;
  return refund;
}

}  // namespace

StepProfit settle_merchant(const Asset& plant, const Technology& tech,
                           const std::array<double, 24>& dispatch_mwh,
                           const SettleInputs& in) {
  StepProfit p;
  for (int h = 0; h < 24; ++h)
    p.energy_revenue += in.spot[h] * dispatch_mwh[h] * in.hour_weight;
  EnergyCost e = energy_costs(tech, dispatch_mwh, in);
  p.var_cost = e.var_cost;
  p.carbon_cost = e.carbon_cost;
  p.fixed_cost = fixed_cost_per_step(plant, in);
  return p;
}

StepProfit settle_cfd(const Asset& plant, const Technology& tech,
                      const std::array<double, 24>& dispatch_mwh,
                      const SettleInputs& in) {
  StepProfit p;
  EnergyCost e = energy_costs(tech, dispatch_mwh, in);
  p.energy_revenue = plant.cfd_strike * e.energy;
  p.var_cost = e.var_cost;
  p.carbon_cost = e.carbon_cost;
  p.fixed_cost = fixed_cost_per_step(plant, in);
  return p;
}

StepProfit settle_cm(const Asset& plant, const Technology& tech,
                     const std::array<double, 24>& dispatch_mwh,
                     const SettleInputs& in) {
  StepProfit p = settle_merchant(plant, tech, dispatch_mwh, in);
  p.premium =
      plant.cm_premium * plant.cm_firm_capacity_mw / in.steps_per_year;
  p.option_refund = option_refund(plant, in);
  return p;
}

StepProfit settle_ess(const Asset& ess, const Technology&,
                      const EssSchedule& schedule, const SettleInputs& in) {
  StepProfit p;
  for (int h = 0; h < 24; ++h)
    p.energy_revenue += in.spot[h] * schedule.net_mw[h] * in.hour_weight;
  p.fixed_cost = fixed_cost_per_step(ess, in);
  if (ess.entry_channel == Channel::cm) {
    p.premium =
        ess.cm_premium * ess.cm_firm_capacity_mw / in.steps_per_year;
    p.option_refund = option_refund(ess, in);
  }
  return p;
}

Asset make_pipeline_asset(int id, int agent, const Technology& tech,
                          double capacity_mw, Channel channel,
                          const Scenario& sc, int year_index) {
  Asset a;
  a.id = id;
  a.owner = agent;
  a.tech = tech.id;
  a.capacity_mw = capacity_mw;
  a.entry_channel = channel;
  a.years_to_operation = tech.construction_years;
  a.remaining_life_years = tech.lifetime_years;
  double capex =
      cost_at_year(tech, sc.base_year + year_index).capex_per_mw * capacity_mw;
  int n = std::max(1, tech.construction_years * sc.steps_per_year);
  a.capex_installment = capex / n;
  a.installments_left = n;
  return a;
}

std::vector<Asset> commit_merchant(int agent,
                                   const std::map<TechId, double>& decisions,
                                   const Scenario& sc, int year_index,
                                   int quantity_steps, int& next_asset_id) {
  std::vector<Asset> added;
  for (const auto& [tech_id, mw] : decisions) {
    if (mw == 0.0) continue;
    const Technology& tech = sc.tech(tech_id);
    if (mw < 0.0 || mw > tech.max_invest_mw + kEps)
      throw std::logic_error(std::string("merchant commitment for ") +
                             tech_name(tech_id) + " above cap: " +
                             std::to_string(mw));
    double lump = tech.max_invest_mw / (quantity_steps - 1);
    double steps = mw / lump;
    if (std::abs(steps - std::round(steps)) > 1e-6)
      throw std::logic_error(std::string("merchant commitment for ") +
                             tech_name(tech_id) +
                             " off the lumped grid: " + std::to_string(mw));
    added.push_back(make_pipeline_asset(next_asset_id++, agent, tech, mw,
                                        Channel::merchant, sc, year_index));
  }
  return added;
}

}  // namespace lemsim
