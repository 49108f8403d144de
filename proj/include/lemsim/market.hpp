#pragma once

#include <array>
#include <map>
#include <utility>
#include <vector>

#include "lemsim/scenario.hpp"

namespace lemsim {

struct Asset {
  int id = 0;      // unique within an episode, assignment order
  int owner = -1;  // agent index
  TechId tech = TechId::solar;
  double capacity_mw = 0.0;
  Channel entry_channel = Channel::existing;
  int years_to_operation = 0;  // 0 = operating
  int remaining_life_years = 0;
  double cfd_strike = 0.0;           // currency/MWh, cfd channel only
  double cm_premium = 0.0;           // currency per MW-firm and year, cm only
  double cm_firm_capacity_mw = 0.0;  // cm only, <= capacity_mw
  double availability_draw = 1.0;    // in {0, 0.5, 1}, redrawn each step
  // CAPEX financing: equal per-step installments across construction.
  double capex_installment = 0.0;
  int installments_left = 0;

  bool operating() const {
    return years_to_operation == 0 && remaining_life_years > 0;
  }
};

struct SupplyBid {
  int asset_id = -1;
  double quantity_mwh = 0.0;
  double price = 0.0;
};

struct HourlyClearing {
  double price = 0.0;
  // (asset id, dispatched MWh) for every bid with positive dispatch,
  // ascending price order.
  std::vector<std::pair<int, double>> dispatched;
  double lost_load = 0.0;
  double demand_served = 0.0;
};

// Merit-order clearing of one hour against inelastic demand valued at voll.
// Ties at the marginal price are rationed pro-rata by offered quantity.
// Zero demand clears at price 0; shortfall clears at voll.
HourlyClearing clear_hour(const std::vector<SupplyBid>& bids,
                          double demand_mwh, double voll);

// Short-term marginal cost bid: variable cost plus carbon pass-through.
double marginal_bid(const Technology& tech, double carbon_tax);

// Hourly system margin: available generation (capacity x CF x draw) minus
// demand. ESS excluded.
std::array<double, 24> system_margins(const std::vector<Asset>& operating,
                                      const RepresentativeDay& day,
                                      const std::array<double, 24>& demand,
                                      const Scenario& sc);

struct EssSchedule {
  int asset_id = -1;
  std::array<double, 24> net_mw{};  // positive = discharge to the grid
  double soc_start = 0.0;           // MWh
  double soc_end = 0.0;             // MWh
};

// Greedy balanced cycle: charge at the maximum-margin hours, discharge at
// the minimum-margin hours, one full cycle, soc_end = soc_start.
EssSchedule schedule_short_ess(const std::array<double, 24>& margins,
                               const Asset& ess, const Technology& tech);

// Balanced cycle plus the net shift moving soc_start + inflows toward
// target_soc x energy capacity, clamped to power and SoC bounds.
EssSchedule schedule_mid_ess(const std::array<double, 24>& margins,
                             const Asset& ess, const Technology& tech,
                             const std::array<double, 24>& inflow_mwh,
                             double soc_start, double target_soc);

struct AdequacyResult {
  std::map<TechId, double> credits;  // fraction in [0,1] per technology
  int critical_hour = 0;
  double adequacy_margin = 0.0;  // MW at the critical hour
};

// Expected dispatch of all assets (mean availability) against grown peak
// demand; the credit of a technology is the expected available fraction of
// its capacity at the critical (minimum-margin) hour.
AdequacyResult capacity_credits(const std::vector<Asset>& assets,
                                const RepresentativeDay& peak_day,
                                const std::array<double, 24>& demand_grown,
                                const Scenario& sc);

}  // namespace lemsim
