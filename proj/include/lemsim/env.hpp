#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lemsim/auctions.hpp"
#include "lemsim/market.hpp"
#include "lemsim/scenario.hpp"

namespace lemsim {

enum class DimKind { quantity, price, soc };

struct DimSpec {
  Channel channel = Channel::merchant;
  TechId tech = TechId::solar;
  DimKind kind = DimKind::quantity;
  int cardinality = 2;
};

// Discrete per-agent action layout: merchant quantities over investable
// technologies, CfD quantity+price over investable RES, CM quantity+price
// over investable technologies, and one SoC dimension when a mid-term ESS
// technology is in the catalog. Quantity grids span [0, max_invest_mw],
// price grids [0, channel ceiling], the SoC grid [0, 1], all uniform.
struct ActionLayout {
  std::vector<DimSpec> dims;

  static ActionLayout build(const Scenario& sc);
  int size() const { return static_cast<int>(dims.size()); }
  std::string dim_name(int d) const;
};

struct AgentDecision {
  std::map<TechId, double> merchant_mw;
  std::map<TechId, double> cfd_mw;
  std::map<TechId, double> cfd_price;   // currency/MWh
  std::map<TechId, double> cm_mw;
  std::map<TechId, double> cm_price_k;  // thousand-currency/MW-firm-year
  double soc_target = 0.0;              // fraction of reservoir capacity
};

// Terminal annuity compensating remaining asset lifetime: the net present
// value of mean_income_per_year applied over remaining_life_years.
double absorbing_payment(double mean_income_per_year, double r,
                         double remaining_life_years);

// Channel x technology cash breakdown of one step for one agent.
struct AgentCashFlow {
  std::map<std::pair<Channel, TechId>, StepProfit> profits;
  std::map<std::pair<Channel, TechId>, double> capex;  // installments paid
  std::map<std::pair<Channel, TechId>, double> absorbing;  // terminal only

  double net() const;
};

// One step of the info ledger, serializable for evaluation runs.
struct StepRecord {
  int step = 0;
  int year_index = 0;
  int pos_in_year = 0;
  std::array<double, 24> prices{};
  double demand_served_mwh = 0.0;  // weighted, storage load excluded
  double lost_load_mwh = 0.0;      // weighted
  double ess_charge_curtailed_mwh = 0.0;
  std::map<TechId, double> dispatch_mwh;  // weighted, storage net
  // Operating capacity at settlement time, by entry channel and technology.
  std::map<std::pair<Channel, TechId>, double> installed_mw;
  double emissions_t = 0.0;
  double consumer_payment = 0.0;  // spot + CfD top-up + net CM premiums
  std::vector<AgentCashFlow> cash;  // per agent
  std::vector<double> rewards;
  std::optional<AuctionResult> cm_auction;
  std::optional<AuctionResult> cfd_auction;
};

struct StepOutcome {
  std::vector<std::vector<double>> obs;       // per agent
  std::vector<double> rewards;                // per agent
  std::vector<std::vector<std::uint8_t>> masks;  // per agent, 1 = dim live
  bool done = false;
  StepRecord record;  // empty of market data for reset()
};

// Multi-agent episodic wholesale-market environment. Bimonthly steps over
// warm-up, study, and cool-down years; single-threaded; owns its RNG, so
// identical (scenario, seed, actions) give bit-identical trajectories.
class MarketEnv {
 public:
  explicit MarketEnv(const Scenario& sc);

  StepOutcome reset(std::uint64_t episode_seed);
  StepOutcome step(const std::vector<std::vector<int>>& raw_actions);

  const Scenario& scenario() const { return *sc_; }
  const ActionLayout& layout() const { return layout_; }
  int n_agents() const { return static_cast<int>(sc_->agents.size()); }
  int obs_size() const;
  int step_index() const { return step_; }
  bool done() const { return step_ >= sc_->total_steps(); }

  std::vector<std::uint8_t> action_mask(int agent) const;
  AgentDecision decode_actions(int agent,
                               const std::vector<int>& raw) const;
  std::vector<double> build_observation(int agent) const;

  const std::vector<Asset>& assets() const { return assets_; }
  const std::vector<StepRecord>& history() const { return history_; }

  // (1+r)^(-step/steps_per_year) / nf, the per-step reward map.
  static double reward_from_cash(double net_cash, int step,
                                 const Scenario& sc);

 private:
  struct EssState {
    double soc = 0.0;  // mid-term reservoir level carried across steps
  };

  int year_index() const { return step_ / sc_->steps_per_year; }
  int pos_in_year() const { return step_ % sc_->steps_per_year; }

  bool dim_live(int agent, const DimSpec& d) const;
  bool tech_allowed(int agent, TechId tech, Channel channel) const;
  bool owns_mid_ess(int agent) const;

  void assess_year(int decision_year);  // deficits -> scheduled auctions
  void run_cm_auction(const std::vector<AgentDecision>& decisions,
                      StepRecord& rec);
  void run_cfd_auction(const std::vector<AgentDecision>& decisions,
                       StepRecord& rec);
  void add_absorbing_payments(StepRecord& rec);

  const Scenario* sc_;
  ActionLayout layout_;
  std::mt19937_64 rng_;

  int step_ = 0;
  std::vector<Asset> assets_;
  int next_asset_id_ = 0;
  std::map<int, EssState> mid_soc_;  // by asset id

  // Scheduled expansion auctions: year they run in and frozen target.
  struct Pending {
    int year = -1;
    double target = 0.0;
  };
  std::optional<Pending> pending_cm_;
  std::optional<Pending> pending_cfd_;

  AdequacyResult adequacy_;      // latest assessment (credits for CM/obs)
  double res_margin_ = 0.0;      // -res_deficit at latest assessment
  double cm_margin_ = 0.0;       // -adequacy_deficit at latest assessment
  double last_cfd_price_ = 0.0;  // currency/MWh
  double last_cm_price_k_ = 0.0;

  std::array<double, 24> last_prices_{};
  // Running undiscounted cash per agent x channel x tech (observations).
  std::vector<std::map<std::pair<Channel, TechId>, double>> acc_cash_;
  // System-wide operating income for the terminal annuity.
  std::map<std::pair<Channel, TechId>, double> income_sum_;
  std::map<std::pair<Channel, TechId>, double> mw_steps_;

  std::vector<StepRecord> history_;
};

}  // namespace lemsim
