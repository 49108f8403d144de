#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "helpers.hpp"
#include "lemsim/env.hpp"
#include "lemsim/rng.hpp"

using namespace lemsim;
using doctest::Approx;

namespace {

// Flat catalog plus initial fleets so markets are non-degenerate.
Scenario env_scenario() {
  Scenario s = testutil::make_flat_scenario(100.0);
  s.seed = 42;
  s.agents[0].initial_assets.push_back({TechId::ocgt, 80.0, 40});
  s.agents[1].initial_assets.push_back({TechId::solar, 60.0, 40});
  s.agents[1].initial_assets.push_back({TechId::ocgt, 40.0, 40});
  return s;
}

Scenario full_catalog_scenario() {
  Scenario s = testutil::make_flat_scenario(100.0);
  s.seed = 5;
  s.techs.push_back(testutil::make_tech(TechId::offshore_wind, 2500, 2.0, 0.0,
                                        4, 30, 150, true));
  s.techs.push_back(
      testutil::make_tech(TechId::coal, 1600, 22.0, 0.95, 4, 40, 200));
  s.techs.push_back(
      testutil::make_tech(TechId::ccgt, 800, 28.0, 0.36, 3, 30, 200));
  s.techs.push_back(testutil::make_tech(TechId::ess_mid, 1200, 0.0, 0.0, 3,
                                        60, 0.0, false, 8.0));
  s.agents[0].initial_assets.push_back({TechId::ess_mid, 50.0, 60});
  s.agents[0].initial_assets.push_back({TechId::ocgt, 120.0, 60});
  return s;
}

std::vector<std::vector<int>> noop_actions(const MarketEnv& env) {
  return std::vector<std::vector<int>>(
      env.n_agents(), std::vector<int>(env.layout().dims.size(), 0));
}

std::vector<std::vector<int>> legal_actions(const MarketEnv& env,
                                            std::mt19937_64& g) {
  const auto& dims = env.layout().dims;
  std::vector<std::vector<int>> acts;
  for (int i = 0; i < env.n_agents(); ++i) {
    auto m = env.action_mask(i);
    std::vector<int> a(dims.size(), 0);
    for (std::size_t d = 0; d < dims.size(); ++d)
      if (m[d]) a[d] = rand_below(g, dims[d].cardinality);
    acts.push_back(std::move(a));
  }
  return acts;
}

}  // namespace

TEST_CASE("action layout follows the catalog") {
  Scenario s = env_scenario();
  ActionLayout l = ActionLayout::build(s);
  // merchant q x4, cfd q x2, cfd p x2, cm q x4, cm p x4; no mid-term ESS.
  REQUIRE(l.size() == 16);
  CHECK(l.dims[0].channel == Channel::merchant);
  CHECK(l.dims[0].tech == TechId::solar);
  CHECK(l.dims[0].kind == DimKind::quantity);
  CHECK(l.dims[0].cardinality == 4);
  CHECK(l.dim_name(0) == "merchant_q:solar");
  CHECK(l.dim_name(3) == "merchant_q:ess_short");
  CHECK(l.dims[4].channel == Channel::cfd);
  CHECK(l.dim_name(5) == "cfd_q:onshore_wind");
  CHECK(l.dims[6].kind == DimKind::price);
  CHECK(l.dims[6].cardinality == 12);
  CHECK(l.dim_name(6) == "cfd_p:solar");
  CHECK(l.dim_name(10) == "cm_q:ocgt");
  CHECK(l.dims[14].cardinality == 12);
  CHECK(l.dim_name(15) == "cm_p:ess_short");
}

TEST_CASE("decoding maps grid indices to physical values") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  std::vector<int> raw(16, 0);
  AgentDecision d = env.decode_actions(0, raw);
  CHECK(d.merchant_mw.at(TechId::solar) == 0.0);
  CHECK(d.cfd_price.at(TechId::solar) == 0.0);

  raw[0] = 3;   // merchant solar, endpoint
  raw[1] = 1;   // merchant wind, 1/3 of 200
  raw[6] = 6;   // cfd price solar, 6/11 of 200
  raw[14] = 11; // cm price ocgt, endpoint
  d = env.decode_actions(0, raw);
  CHECK(d.merchant_mw.at(TechId::solar) == Approx(200.0));
  CHECK(d.merchant_mw.at(TechId::onshore_wind) == Approx(200.0 / 3));
  CHECK(d.cfd_price.at(TechId::solar) == Approx(200.0 * 6 / 11));
  CHECK(d.cm_price_k.at(TechId::ocgt) == Approx(40.0));

  raw[14] = 12;
  CHECK_THROWS_AS(env.decode_actions(0, raw), std::out_of_range);
  raw.pop_back();
  CHECK_THROWS_AS(env.decode_actions(0, raw), std::invalid_argument);
}

TEST_CASE("masks: merchant slot, enabled techs, off-slot steps") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  StepOutcome out = env.reset(0);
  REQUIRE(out.masks.size() == 2);
  auto& m = out.masks[0];
  REQUIRE(m.size() == 16);
  CHECK(m[0] == 1);  // merchant solar: enabled
  CHECK(m[1] == 0);  // wind not in enabled_techs
  CHECK(m[2] == 1);  // merchant ocgt
  CHECK(m[3] == 0);  // battery not enabled
  for (int d = 4; d < 16; ++d) CHECK(m[d] == 0);  // no auction pending

  out = env.step(noop_actions(env));  // now pos 1: nothing is live
  for (int i = 0; i < 2; ++i)
    for (int d = 0; d < 16; ++d) CHECK(out.masks[i][d] == 0);
}

TEST_CASE("masks: construction must finish inside the episode") {
  Scenario s = env_scenario();  // 8 years; solar builds in 2
  MarketEnv env(s);
  env.reset(0);
  while (env.step_index() < 6 * 6) env.step(noop_actions(env));
  // year 6: 6 + 2 > 7, too late for solar; ocgt (3y) likewise.
  auto m = env.action_mask(0);
  CHECK(m[0] == 0);
  CHECK(m[2] == 0);
}

TEST_CASE("acting on a masked dimension is a hard error") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  env.reset(0);
  auto acts = noop_actions(env);
  acts[0][1] = 2;  // wind is masked for agent 0
  CHECK_THROWS_WITH_AS(
      env.step(acts),
      "agent 0: masked action dimension 1 (merchant_q:onshore_wind) got "
      "index 2",
      std::invalid_argument);
}

TEST_CASE("episode length and termination") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  env.reset(1);
  int n = 0;
  bool done = false;
  while (!done) {
    done = env.step(noop_actions(env)).done;
    ++n;
  }
  CHECK(n == s.total_steps());
  CHECK(n == 48);
  CHECK(env.done());
  CHECK_THROWS_AS(env.step(noop_actions(env)), std::logic_error);
}

TEST_CASE("identical seeds give bit-identical trajectories") {
  Scenario s = env_scenario();
  MarketEnv a(s), b(s);
  StepOutcome oa = a.reset(123), ob = b.reset(123);
  CHECK(oa.obs == ob.obs);
  std::mt19937_64 ga(99), gb(99);
  while (!a.done()) {
    oa = a.step(legal_actions(a, ga));
    ob = b.step(legal_actions(b, gb));
    CHECK(oa.obs == ob.obs);
    CHECK(oa.rewards == ob.rewards);
    CHECK(oa.masks == ob.masks);
  }
  CHECK(b.done());

  MarketEnv c(s);
  StepOutcome oc = c.reset(124);  // different episode seed diverges
  std::mt19937_64 gc(99);
  bool diverged = false;
  while (!c.done()) {
    oc = c.step(legal_actions(c, gc));
    if (oc.record.prices != a.history()[c.step_index() - 1].prices)
      diverged = true;
  }
  CHECK(diverged);
}

TEST_CASE("observations stay in [-1,1] and match the declared size") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  // 4 techs, 4 investable, 2 RES: fixed layout arithmetic.
  CHECK(env.obs_size() == 96);
  StepOutcome out = env.reset(3);
  for (int h = 0; h < 24; ++h)
    CHECK(out.obs[0][h] == -1.0);  // no prices seen yet
  std::mt19937_64 g(17);
  while (!env.done()) {
    out = env.step(legal_actions(env, g));
    for (int i = 0; i < env.n_agents(); ++i) {
      REQUIRE(int(out.obs[i].size()) == env.obs_size());
      for (double v : out.obs[i]) {
        CHECK(std::isfinite(v));
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("reward map: discounting and normalization") {
  Scenario s = env_scenario();
  double nf = 4000.0 * 4000.0 * 8;
  CHECK(s.nf() == Approx(nf));
  CHECK(MarketEnv::reward_from_cash(0.0, 7, s) == 0.0);
  CHECK(MarketEnv::reward_from_cash(100.0, 12, s) ==
        Approx(100.0 / (1.08 * 1.08) / nf));
  CHECK(MarketEnv::reward_from_cash(100.0, 0, s) == Approx(100.0 / nf));
  s.discount_rate = 0.0;
  CHECK(MarketEnv::reward_from_cash(100.0, 30, s) == Approx(100.0 / nf));
}

TEST_CASE("absorbing annuity") {
  CHECK(absorbing_payment(10.0, 0.08, 10.0) == Approx(67.100814).epsilon(1e-6));
  CHECK(absorbing_payment(10.0, 0.08, 0.0) == 0.0);
  CHECK(absorbing_payment(10.0, 0.0, 10.0) == Approx(100.0));
  // continuity at r -> 0
  CHECK(absorbing_payment(10.0, 1e-9, 10.0) == Approx(100.0).epsilon(1e-6));
}

TEST_CASE("per-step reward equals the discounted normalized ledger") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  env.reset(8);
  std::mt19937_64 g(21);
  while (!env.done()) {
    StepOutcome out = env.step(legal_actions(env, g));
    for (int i = 0; i < env.n_agents(); ++i)
      CHECK(out.rewards[i] ==
            MarketEnv::reward_from_cash(out.record.cash[i].net(),
                                        out.record.step, s));
  }
  // terminal step pays the absorbing annuity for surviving assets
  const StepRecord& last = env.history().back();
  CHECK(last.cash[0].absorbing.count({Channel::existing, TechId::ocgt}) == 1);
}

TEST_CASE("consumer payment equals producer market income") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  env.reset(9);
  std::mt19937_64 g(33);
  while (!env.done()) {
    StepOutcome out = env.step(legal_actions(env, g));
    const StepRecord& r = out.record;
    double producer = 0.0;
    for (const auto& cf : r.cash)
      for (const auto& [k, p] : cf.profits)
        producer += p.energy_revenue + p.premium - p.option_refund;
    CHECK(r.consumer_payment == Approx(producer).epsilon(1e-9));
    CHECK(r.demand_served_mwh + r.lost_load_mwh ==
          Approx(24 * 100.0 * s.hour_weight()));
  }
}

TEST_CASE("no-op policy leaves the portfolio untouched") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  env.reset(2);
  while (!env.done()) {
    env.step(noop_actions(env));
    CHECK(env.assets().size() == 3);  // lifetimes outlast the episode
  }
}

TEST_CASE("warm-up freezes operating lifetimes") {
  Scenario s = testutil::make_flat_scenario(100.0);  // 1 warm-up year
  s.agents[0].initial_assets.push_back({TechId::ocgt, 50.0, 2});
  MarketEnv env(s);
  env.reset(0);
  // alive through years 0 (frozen), 1 and 2; gone at the year-2 boundary
  for (int t = 0; t < 18; ++t) {
    CHECK(env.assets().size() == 1);
    env.step(noop_actions(env));
  }
  CHECK(env.assets().empty());
}

TEST_CASE("merchant commitment: pipeline, installments, operation") {
  Scenario s = env_scenario();
  MarketEnv env(s);
  env.reset(0);
  auto acts = noop_actions(env);
  acts[0][0] = 3;  // 200 MW of solar at the first merchant slot
  StepOutcome out = env.step(acts);
  REQUIRE(env.assets().size() == 4);
  const Asset& a = env.assets().back();
  CHECK(a.owner == 0);
  CHECK(a.entry_channel == Channel::merchant);
  CHECK(a.capacity_mw == Approx(200.0));
  CHECK(a.years_to_operation == 2);
  CHECK(!a.operating());
  // 400 k/MW x 200 MW over 2 years x 6 steps
  double inst = 400.0e3 * 200.0 / 12.0;
  CHECK(out.record.cash[0].capex.at({Channel::merchant, TechId::solar}) ==
        Approx(inst));

  for (int t = 1; t < 12; ++t) {
    out = env.step(noop_actions(env));
    CHECK(out.record.cash[0].capex.at({Channel::merchant, TechId::solar}) ==
          Approx(inst));
  }
  CHECK(env.assets().back().operating());  // step 12, two boundaries passed
  out = env.step(noop_actions(env));
  CHECK(out.record.cash[0].capex.count({Channel::merchant, TechId::solar}) ==
        0);
}

TEST_CASE("capacity deficit runs one CM auction the following year") {
  Scenario s = testutil::make_flat_scenario(100.0);
  s.seed = 7;
  s.merchant_enabled = false;
  s.cfd_enabled = false;
  s.agents[0].initial_assets.push_back({TechId::ocgt, 50.0, 40});
  MarketEnv env(s);
  env.reset(0);

  int auction_steps = 0;
  while (!env.done()) {
    bool cm_slot = env.step_index() == 6 + 2;
    auto acts = noop_actions(env);
    if (cm_slot) {
      CHECK(env.action_mask(0)[10] == 1);  // cm_q:ocgt live
      acts[0][10] = 3;                     // 200 MW
      acts[0][14] = 3;                     // 3/11 of the 40 k cap
    }
    StepOutcome out = env.step(acts);
    if (out.record.cm_auction) {
      ++auction_steps;
      CHECK(out.record.step == 8);
      const AuctionResult& res = *out.record.cm_auction;
      REQUIRE(res.awards.size() == 1);
      CHECK(res.awards[0].quantity_mw == Approx(200.0));
      CHECK(res.awards[0].price_paid == Approx(40.0 * 3 / 11));
      CHECK(res.unfilled == 0.0);
    }
  }
  CHECK(auction_steps == 1);  // the new plant clears later deficits

  const Asset& cm = env.assets().back();
  CHECK(cm.entry_channel == Channel::cm);
  CHECK(cm.cm_premium == Approx(40.0e3 * 3 / 11));
  CHECK(cm.cm_firm_capacity_mw == Approx(200.0 * 0.925));

  // premium income flows once the plant operates (year 4 on)
  double premium = 0.0;
  for (const StepRecord& r : env.history())
    if (r.year_index >= 4) {
      auto it = r.cash[0].profits.find({Channel::cm, TechId::ocgt});
      if (it != r.cash[0].profits.end()) premium += it->second.premium;
    }
  double per_step = (40.0e3 * 3 / 11) * (200.0 * 0.925) / 6.0;
  CHECK(premium == Approx(per_step * 4 * 6));
}

TEST_CASE("RES deficit runs a CfD auction; output settles at the strike") {
  Scenario s = testutil::make_flat_scenario(100.0);
  s.seed = 11;
  s.merchant_enabled = false;
  s.cm_enabled = false;
  s.res_target_curve = {{2025, 0.8}};
  s.agents[0].initial_assets.push_back({TechId::ocgt, 200.0, 40});
  MarketEnv env(s);
  env.reset(0);

  bool saw_auction = false;
  while (!env.done()) {
    bool cfd_slot = env.step_index() == 6 + 4;
    auto acts = noop_actions(env);
    if (cfd_slot) {
      CHECK(env.action_mask(0)[4] == 1);  // cfd_q:solar live
      acts[0][4] = 3;
      acts[0][6] = 6;
    }
    StepOutcome out = env.step(acts);
    if (out.record.step == 10) {
      REQUIRE(out.record.cfd_auction.has_value());
      saw_auction = true;
      const AuctionResult& res = *out.record.cfd_auction;
      REQUIRE(res.awards.size() == 1);
      CHECK(res.clearing_price == Approx(200.0 * 6 / 11));
      // contribution = 200 MW x mean CF (0.3 x 11/24) x availability
      CHECK(res.awards[0].contribution == Approx(200.0 * 0.1375 * 0.925));
      CHECK(res.unfilled == Approx(80.0 - 200.0 * 0.1375 * 0.925));
    }
  }
  REQUIRE(saw_auction);
  CHECK(env.assets().back().cfd_strike == Approx(200.0 * 6 / 11));

  // solar (2y build, committed in year 1) earns strike revenue from year 3
  double rev = 0.0, mwh = 0.0;
  for (const StepRecord& r : env.history())
    if (r.year_index >= 3) {
      auto it = r.cash[0].profits.find({Channel::cfd, TechId::solar});
      if (it != r.cash[0].profits.end()) rev += it->second.energy_revenue;
      auto dit = r.dispatch_mwh.find(TechId::solar);
      if (dit != r.dispatch_mwh.end()) mwh += dit->second;
    }
  CHECK(rev > 0.0);
  CHECK(rev == Approx(mwh * 200.0 * 6 / 11));
}

TEST_CASE("full catalog: layout width, observation width, SoC ownership") {
  Scenario s = full_catalog_scenario();
  MarketEnv env(s);
  CHECK(env.layout().size() == 28);
  CHECK(env.layout().dim_name(27) == "soc");
  CHECK(env.obs_size() == 140);

  StepOutcome out = env.reset(0);
  REQUIRE(out.obs[0].size() == 140);
  CHECK(out.masks[0][27] == 1);  // agent 0 owns the reservoir
  CHECK(out.masks[1][27] == 0);

  auto acts = noop_actions(env);
  acts[0][27] = 4;  // mid-term SoC target is live on every step
  out = env.step(acts);
  CHECK(out.masks[0][27] == 1);
  acts = noop_actions(env);
  acts[0][27] = 6;
  CHECK_NOTHROW(env.step(acts));

  std::mt19937_64 g(2);
  while (!env.done()) {
    out = env.step(legal_actions(env, g));
    for (int i = 0; i < env.n_agents(); ++i)
      for (double v : out.obs[i]) {
        CHECK(std::isfinite(v));
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
  }
}
