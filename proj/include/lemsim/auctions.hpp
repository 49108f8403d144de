#pragma once

#include <array>
#include <map>
#include <vector>

#include "lemsim/market.hpp"
#include "lemsim/scenario.hpp"

namespace lemsim {

// Expected-average-MW shortfall against the RES target at the planning
// horizon. Positive means a CfD auction is scheduled for next year.
double res_deficit(const std::vector<Asset>& assets, const Scenario& sc,
                   int decision_year_index);

// Adequacy snapshot at the planning horizon of a decision year: capacity
// credits, critical hour, and the firm margin against grown peak demand
// (plus the adequacy margin). Only assets operating at the horizon count.
AdequacyResult adequacy_assessment(const std::vector<Asset>& assets,
                                   const Scenario& sc,
                                   int decision_year_index);

// Firm-capacity shortfall at the critical hour of the horizon year.
// Positive means a capacity-market auction is scheduled for next year.
double adequacy_deficit(const std::vector<Asset>& assets, const Scenario& sc,
                        int decision_year_index);

struct AuctionBid {
  int agent = -1;
  TechId tech = TechId::solar;
  double quantity_mw = 0.0;    // offered capacity
  double contribution = 0.0;   // expected average MW (CfD) or firm MW (CM)
  double price = 0.0;          // bounded by the channel ceiling
};

struct AuctionAward {
  int agent = -1;
  TechId tech = TechId::solar;
  double quantity_mw = 0.0;
  double contribution = 0.0;
  double price_paid = 0.0;
};

struct AuctionResult {
  double clearing_price = 0.0;  // price of the last accepted bid
  std::vector<AuctionAward> awards;
  double unfilled = 0.0;  // residual target
};

// Ascending-price greedy acceptance until the target contribution is
// covered; the marginal bid is taken in full (lumpy bids, no partial
// award). Ties: larger contribution first, then agent id, then tech.
AuctionResult run_auction(std::vector<AuctionBid> bids, double target_quantity,
                          double ceiling, PricingRule rule);

// Cash decomposition of one settlement step for one asset.
struct StepProfit {
  double energy_revenue = 0.0;  // dispatch x settled price (can be negative
                                // for storage purchases)
  double var_cost = 0.0;
  double carbon_cost = 0.0;
  double fixed_cost = 0.0;
  double premium = 0.0;        // capacity-market premium income
  double option_refund = 0.0;  // reliability-option payback (subtracted)

  double total() const {
    return energy_revenue - var_cost - carbon_cost - fixed_cost + premium -
           option_refund;
  }
};

struct SettleInputs {
  std::array<double, 24> spot{};     // currency/MWh
  double hour_weight = 1.0;          // real hours per representative hour
  double carbon_tax = 0.0;           // currency/tCO2
  double scarcity_strike = 500.0;    // reliability-option strike
  double opex_fixed_per_mw_yr = 0.0;
  int steps_per_year = 6;
};

// dispatch_mwh: energy per representative hour (MW x 1 h), scaled inside by
// hour_weight. Fixed costs and premia are prorated by steps_per_year.
StepProfit settle_merchant(const Asset& plant, const Technology& tech,
                           const std::array<double, 24>& dispatch_mwh,
                           const SettleInputs& in);

// Two-way CfD: all output is paid the strike. Spot prices do not enter.
StepProfit settle_cfd(const Asset& plant, const Technology& tech,
                      const std::array<double, 24>& dispatch_mwh,
                      const SettleInputs& in);

// Merchant cash plus premium, minus the reliability-option refund
// max(spot - strike, 0) on the firm commitment, owed even when down.
StepProfit settle_cm(const Asset& plant, const Technology& tech,
                     const std::array<double, 24>& dispatch_mwh,
                     const SettleInputs& in);

// Storage settlement on the scheduled net flows; cm-channel storage also
// carries premium and option terms on its firm capacity.
StepProfit settle_ess(const Asset& ess, const Technology& tech,
                      const EssSchedule& schedule, const SettleInputs& in);

// Builds a pipeline asset entering through `channel`, with CAPEX registered
// as equal per-step installments across construction.
Asset make_pipeline_asset(int id, int agent, const Technology& tech,
                          double capacity_mw, Channel channel,
                          const Scenario& sc, int year_index);

// Validates each decision against the lumped grid and cap, then returns the
// new pipeline assets. Violations are hard errors (masking bug upstream).
std::vector<Asset> commit_merchant(int agent,
                                   const std::map<TechId, double>& decisions,
                                   const Scenario& sc, int year_index,
                                   int quantity_steps, int& next_asset_id);

}  // namespace lemsim
