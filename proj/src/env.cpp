#include "lemsim/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lemsim/rng.hpp"

namespace lemsim {

namespace {

constexpr double kEps = 1e-9;

using CKey = std::pair<Channel, TechId>;

void accumulate(StepProfit& dst, const StepProfit& src) {
  dst.energy_revenue += src.energy_revenue;
  dst.var_cost += src.var_cost;
  dst.carbon_cost += src.carbon_cost;
  dst.fixed_cost += src.fixed_cost;
  dst.premium += src.premium;
  dst.option_refund += src.option_refund;
}

double clip1(double v) { return std::clamp(v, -1.0, 1.0); }

double norm_1(double x, double mx) {
  if (mx <= 0.0) return -1.0;
  return clip1(2.0 * x / mx - 1.0);
}

double norm_2(double a, double b) {
  double s = a + b;
  if (std::abs(s) <= 1e-12) return 0.0;
  return clip1((a - b) / s);
}

double norm_4(double x) { return clip1(2.0 * x - 1.0); }

double day_mean(const std::array<double, 24>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / 24.0;
}

double day_sum(const std::array<double, 24>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

double absorbing_payment(double mean_income_per_year, double r,
                         double remaining_life_years) {
  if (remaining_life_years <= 0.0) return 0.0;
  if (r == 0.0) return mean_income_per_year * remaining_life_years;
  return mean_income_per_year *
         (1.0 - std::pow(1.0 + r, -remaining_life_years)) / r;
}

double AgentCashFlow::net() const {
  double s = 0.0;
  for (const auto& [k, p] : profits) s += p.total();
  for (const auto& [k, v] : absorbing) s += v;
  for (const auto& [k, v] : capex) s -= v;
  return s;
}

ActionLayout ActionLayout::build(const Scenario& sc) {
  ActionLayout l;
  for (const auto& t : sc.techs)
    if (t.investable())
      l.dims.push_back(
          {Channel::merchant, t.id, DimKind::quantity, sc.quantity_steps});
  for (const auto& t : sc.techs)
    if (t.investable() && t.is_res)
      l.dims.push_back(
          {Channel::cfd, t.id, DimKind::quantity, sc.quantity_steps});
  for (const auto& t : sc.techs)
    if (t.investable() && t.is_res)
      l.dims.push_back({Channel::cfd, t.id, DimKind::price, sc.price_steps});
  for (const auto& t : sc.techs)
    if (t.investable())
      l.dims.push_back(
          {Channel::cm, t.id, DimKind::quantity, sc.quantity_steps});
  for (const auto& t : sc.techs)
    if (t.investable())
      l.dims.push_back({Channel::cm, t.id, DimKind::price, sc.price_steps});
  if (sc.find_tech(TechId::ess_mid))
    l.dims.push_back(
        {Channel::existing, TechId::ess_mid, DimKind::soc, sc.soc_steps});
  return l;
}

std::string ActionLayout::dim_name(int d) const {
  const DimSpec& s = dims.at(d);
  if (s.kind == DimKind::soc) return "soc";
  std::string name = channel_name(s.channel);
  name += s.kind == DimKind::quantity ? "_q:" : "_p:";
  name += tech_name(s.tech);
  return name;
}

MarketEnv::MarketEnv(const Scenario& sc)
    : sc_(&sc), layout_(ActionLayout::build(sc)) {
  sc.validate();
}

int MarketEnv::obs_size() const {
  int n_all = static_cast<int>(sc_->techs.size());
  int n_inv = 0, n_res = 0;
  for (const auto& t : sc_->techs)
    if (t.investable()) {
      ++n_inv;
      if (t.is_res) ++n_res;
    }
  // prices, resource/inflow/demand indicators, capacity blocks, market
  // state, credits, tax, calendar, accumulated rewards.
  return 24 + 4 + 2 + 2 + 2 * n_all + 2 * n_all + 2 * n_inv + 2 * n_res +
         2 * n_inv + 2 + 2 + 2 + n_inv + 1 + 3 +
         (n_all + n_inv + n_res + n_inv);
}

bool MarketEnv::owns_mid_ess(int agent) const {
  for (const auto& a : assets_)
    if (a.owner == agent && a.tech == TechId::ess_mid &&
        a.remaining_life_years > 0)
      return true;
  return false;
}

bool MarketEnv::tech_allowed(int agent, TechId tech, Channel channel) const {
  const AgentSpec& spec = sc_->agents[agent];
  if (std::find(spec.enabled_techs.begin(), spec.enabled_techs.end(), tech) ==
      spec.enabled_techs.end())
    return false;
  int year = sc_->base_year + year_index();
  for (const auto& b : sc_->bans) {
    if (b.tech != tech) continue;
    if (year < b.from_year) continue;
    if (b.channel && *b.channel != channel) continue;
    if (b.agent && *b.agent != spec.name) continue;
    return false;
  }
  return true;
}

bool MarketEnv::dim_live(int agent, const DimSpec& d) const {
  if (done()) return false;
  if (d.kind == DimKind::soc) return owns_mid_ess(agent);
  int pos = pos_in_year();
  int yi = year_index();
  switch (d.channel) {
    case Channel::merchant:
      if (pos != 0 || !sc_->merchant_enabled) return false;
      break;
    case Channel::cm:
      if (pos != 2 || !sc_->cm_enabled) return false;
      if (!pending_cm_ || pending_cm_->year != yi) return false;
      break;
    case Channel::cfd:
      if (pos != 4 || !sc_->cfd_enabled) return false;
      if (!pending_cfd_ || pending_cfd_->year != yi) return false;
      break;
    case Channel::existing:
      return false;
  }
  if (!tech_allowed(agent, d.tech, d.channel)) return false;
  // The plant must reach operation before the episode ends.
  if (yi + sc_->tech(d.tech).construction_years > sc_->years() - 1)
    return false;
  return true;
}

std::vector<std::uint8_t> MarketEnv::action_mask(int agent) const {
  std::vector<std::uint8_t> m(layout_.dims.size(), 0);
  for (std::size_t d = 0; d < layout_.dims.size(); ++d)
    m[d] = dim_live(agent, layout_.dims[d]) ? 1 : 0;
  return m;
}

AgentDecision MarketEnv::decode_actions(int agent,
                                        const std::vector<int>& raw) const {
  if (raw.size() != layout_.dims.size())
    throw std::invalid_argument(
        "agent " + std::to_string(agent) + ": expected " +
        std::to_string(layout_.dims.size()) + " action indices, got " +
        std::to_string(raw.size()));
  AgentDecision dec;
  for (std::size_t d = 0; d < layout_.dims.size(); ++d) {
    const DimSpec& spec = layout_.dims[d];
    int idx = raw[d];
    if (idx < 0 || idx >= spec.cardinality)
      throw std::out_of_range("agent " + std::to_string(agent) +
                              ": action index " + std::to_string(idx) +
                              " out of range for dimension " +
                              layout_.dim_name(static_cast<int>(d)));
    double frac = double(idx) / double(spec.cardinality - 1);
    switch (spec.kind) {
      case DimKind::quantity: {
        double v = frac * sc_->tech(spec.tech).max_invest_mw;
        if (spec.channel == Channel::merchant)
          dec.merchant_mw[spec.tech] = v;
        else if (spec.channel == Channel::cfd)
          dec.cfd_mw[spec.tech] = v;
        else
          dec.cm_mw[spec.tech] = v;
        break;
      }
      case DimKind::price: {
        if (spec.channel == Channel::cfd)
          dec.cfd_price[spec.tech] = frac * sc_->cfd_price_cap;
        else
          dec.cm_price_k[spec.tech] = frac * sc_->cm_price_cap;
        break;
      }
      case DimKind::soc:
        dec.soc_target = frac;
        break;
    }
  }
  return dec;
}

void MarketEnv::assess_year(int decision_year) {
  double rd = res_deficit(assets_, *sc_, decision_year);
  adequacy_ = adequacy_assessment(assets_, *sc_, decision_year);
  double ad = -adequacy_.adequacy_margin;
  res_margin_ = -rd;
  cm_margin_ = -ad;
  if (decision_year <= year_index()) return;  // observation refresh only
  if (sc_->cm_enabled && ad > kEps) pending_cm_ = {decision_year, ad};
  if (sc_->cfd_enabled && rd > kEps) pending_cfd_ = {decision_year, rd};
}

StepOutcome MarketEnv::reset(std::uint64_t episode_seed) {
  rng_ = std::mt19937_64(mix_seed(sc_->seed, episode_seed));
  step_ = 0;
  assets_.clear();
  mid_soc_.clear();
  next_asset_id_ = 0;
  pending_cm_.reset();
  pending_cfd_.reset();
  last_cfd_price_ = 0.0;
  last_cm_price_k_ = 0.0;
  last_prices_.fill(0.0);
  acc_cash_.assign(sc_->agents.size(), {});
  income_sum_.clear();
  mw_steps_.clear();
  history_.clear();

  for (std::size_t i = 0; i < sc_->agents.size(); ++i) {
    for (const auto& ia : sc_->agents[i].initial_assets) {
      Asset a;
      a.id = next_asset_id_++;
      a.owner = static_cast<int>(i);
      a.tech = ia.tech;
      a.capacity_mw = ia.capacity_mw;
      a.entry_channel = Channel::existing;
      a.years_to_operation = 0;
      a.remaining_life_years = ia.remaining_life_years;
      a.availability_draw = 1.0;
      assets_.push_back(a);
      if (a.tech == TechId::ess_mid) {
        const Technology& t = sc_->tech(a.tech);
        mid_soc_[a.id].soc = 0.5 * t.ess_duration_hours * a.capacity_mw;
      }
    }
  }
  assess_year(0);

  StepOutcome out;
  out.done = false;
  out.rewards.assign(sc_->agents.size(), 0.0);
  for (int i = 0; i < n_agents(); ++i) {
    out.obs.push_back(build_observation(i));
    out.masks.push_back(action_mask(i));
  }
  return out;
}

double MarketEnv::reward_from_cash(double net_cash, int step,
                                   const Scenario& sc) {
  double t_years = double(step) / double(sc.steps_per_year);
  double df = sc.discount_rate == 0.0
                  ? 1.0
                  : std::pow(1.0 + sc.discount_rate, -t_years);
  return net_cash * df / sc.nf();
}

void MarketEnv::run_cm_auction(const std::vector<AgentDecision>& decisions,
                               StepRecord& rec) {
  std::vector<AuctionBid> bids;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    for (const auto& [tech, mw] : decisions[i].cm_mw) {
      if (mw <= 0.0) continue;
      double credit = adequacy_.credits.count(tech)
                          ? adequacy_.credits.at(tech)
                          : 0.0;
      bids.push_back({static_cast<int>(i), tech, mw, mw * credit,
                      decisions[i].cm_price_k.at(tech)});
    }
  }
  AuctionResult res = run_auction(bids, pending_cm_->target,
                                  sc_->cm_price_cap, sc_->pricing_rule);
  for (const auto& aw : res.awards) {
    const Technology& t = sc_->tech(aw.tech);
    Asset a = make_pipeline_asset(next_asset_id_++, aw.agent, t,
                                  aw.quantity_mw, Channel::cm, *sc_,
                                  year_index());
    a.cm_premium = aw.price_paid * 1000.0;  // quoted in k-currency
    a.cm_firm_capacity_mw = aw.contribution;
    assets_.push_back(a);
  }
  last_cm_price_k_ = res.clearing_price;
  rec.cm_auction = std::move(res);
  pending_cm_.reset();
}

void MarketEnv::run_cfd_auction(const std::vector<AgentDecision>& decisions,
                                StepRecord& rec) {
  std::vector<AuctionBid> bids;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    for (const auto& [tech, mw] : decisions[i].cfd_mw) {
      if (mw <= 0.0) continue;
      const Technology& t = sc_->tech(tech);
      double avg = sc_->mean_cf(tech) * t.availability_mean;
      bids.push_back({static_cast<int>(i), tech, mw, mw * avg,
                      decisions[i].cfd_price.at(tech)});
    }
  }
  AuctionResult res = run_auction(bids, pending_cfd_->target,
                                  sc_->cfd_price_cap, sc_->pricing_rule);
  for (const auto& aw : res.awards) {
    const Technology& t = sc_->tech(aw.tech);
    Asset a = make_pipeline_asset(next_asset_id_++, aw.agent, t,
                                  aw.quantity_mw, Channel::cfd, *sc_,
                                  year_index());
    a.cfd_strike = aw.price_paid;
    assets_.push_back(a);
  }
  last_cfd_price_ = res.clearing_price;
  rec.cfd_auction = std::move(res);
  pending_cfd_.reset();
}

void MarketEnv::add_absorbing_payments(StepRecord& rec) {
  for (const auto& a : assets_) {
    if (!a.operating()) continue;
    CKey key{a.entry_channel, a.tech};
    auto it = mw_steps_.find(key);
    if (it == mw_steps_.end() || it->second <= 0.0) continue;
    double income_per_mw_year =
        income_sum_.at(key) / it->second * sc_->steps_per_year;
    double pay = a.capacity_mw *
                 absorbing_payment(income_per_mw_year, sc_->discount_rate,
                                   double(a.remaining_life_years));
    rec.cash[a.owner].absorbing[key] += pay;
  }
}

StepOutcome MarketEnv::step(const std::vector<std::vector<int>>& raw_actions) {
  if (done()) throw std::logic_error("step() called on finished episode");
  if (raw_actions.size() != sc_->agents.size())
    throw std::invalid_argument("expected one action vector per agent");

  const int n = n_agents();
  const int yi = year_index();
  const int pos = pos_in_year();
  const RepresentativeDay& day = sc_->rep_days[pos];
  const double scale = sc_->demand_scale(yi);
  const double tax = sc_->carbon_tax_at(yi);
  const double w = sc_->hour_weight();
  const int cur_step = step_;

  StepRecord rec;
  rec.step = cur_step;
  rec.year_index = yi;
  rec.pos_in_year = pos;
  rec.cash.resize(n);

  // 1. Validate against masks and decode.
  std::vector<AgentDecision> dec(n);
  for (int i = 0; i < n; ++i) {
    auto mask = action_mask(i);
    const auto& raw = raw_actions[i];
    if (raw.size() != mask.size())
      throw std::invalid_argument("agent " + std::to_string(i) +
                                  ": wrong action vector length");
    for (std::size_t d = 0; d < mask.size(); ++d)
      if (!mask[d] && raw[d] != 0)
        throw std::invalid_argument(
            "agent " + std::to_string(i) + ": masked action dimension " +
            std::to_string(d) + " (" +
            layout_.dim_name(static_cast<int>(d)) + ") got index " +
            std::to_string(raw[d]));
    dec[i] = decode_actions(i, raw);
  }

  // 2. Availability redraws.
  for (auto& a : assets_)
    a.availability_draw = sample_availability(rng_, sc_->tech(a.tech));

  // 3. Storage day plans from forecast system margins.
  std::array<double, 24> demand_h;
  for (int h = 0; h < 24; ++h) demand_h[h] = day.demand[h] * scale;
  std::array<double, 24> margins =
      system_margins(assets_, day, demand_h, *sc_);

  struct EssPlan {
    const Asset* asset = nullptr;
    bool mid = false;
    double eff = 1.0;
    double ecap = 0.0;
    double soc = 0.0;
    std::array<double, 24> charge{};
    std::array<double, 24> discharge{};
    std::array<double, 24> inflow{};
    std::array<double, 24> net_act{};
    double c_av = 0.0;  // per-hour scratch
  };
  std::vector<EssPlan> plans;
  double mid_cap_total = 0.0;
  for (const auto& a : assets_)
    if (a.operating() && a.tech == TechId::ess_mid)
      mid_cap_total += a.capacity_mw;
  for (const auto& a : assets_) {
    const Technology& t = sc_->tech(a.tech);
    if (!a.operating() || !t.is_ess()) continue;
    EssPlan p;
    p.asset = &a;
    p.eff = t.round_trip_efficiency;
    EssSchedule sch;
    if (a.tech == TechId::ess_mid) {
      p.mid = true;
      p.ecap = t.ess_duration_hours * a.capacity_mw;
      if (mid_cap_total > 0.0)
        for (int h = 0; h < 24; ++h)
          p.inflow[h] =
              day.hydro_inflow[h] * a.capacity_mw / mid_cap_total;
      sch = schedule_mid_ess(margins, a, t, p.inflow, mid_soc_[a.id].soc,
                             dec[a.owner].soc_target);
      p.soc = std::clamp(mid_soc_[a.id].soc, 0.0, p.ecap);
    } else {
      p.ecap = t.ess_duration_hours * a.capacity_mw * a.availability_draw;
      sch = schedule_short_ess(margins, a, t);
      p.soc = sch.soc_start;
    }
    for (int h = 0; h < 24; ++h) {
      p.charge[h] = std::max(-sch.net_mw[h], 0.0);
      p.discharge[h] = std::max(sch.net_mw[h], 0.0);
    }
    plans.push_back(p);
  }

  // 4. Chronological clearing: storage is a price taker (discharge offered
  // at zero, charge added to demand); shortage curtails storage charging
  // pro-rata before any load is shed, and reservoir levels track actual
  // dispatch so energy conservation is exact.
  std::array<double, 24> prices{};
  std::map<int, std::array<double, 24>> dispatch;
  double lost_mwh = 0.0, curtailed_mwh = 0.0, base_served_mwh = 0.0;
  double spot_load_cost = 0.0;
  std::vector<SupplyBid> bids;
  for (int h = 0; h < 24; ++h) {
    bids.clear();
    for (const auto& a : assets_) {
      const Technology& t = sc_->tech(a.tech);
      if (!a.operating() || t.is_ess()) continue;
      double q = a.capacity_mw * sc_->cf_at(a.tech, day, h) *
                 a.availability_draw;
      if (q > kEps) bids.push_back({a.id, q, marginal_bid(t, tax)});
    }
    double tot_charge = 0.0;
    for (auto& p : plans) {
      if (p.mid) p.soc = std::min(p.soc + p.inflow[h], p.ecap);
      double d_av =
          std::clamp(p.discharge[h], 0.0, std::max(p.soc * p.eff, 0.0));
      p.c_av = std::clamp(p.charge[h], 0.0, std::max(p.ecap - p.soc, 0.0));
      if (d_av > kEps) bids.push_back({p.asset->id, d_av, 0.0});
      tot_charge += p.c_av;
    }
    HourlyClearing cl =
        clear_hour(bids, demand_h[h] + tot_charge, sc_->voll);
    if (cl.lost_load > kEps && tot_charge > kEps) {
      double curt = std::min(cl.lost_load, tot_charge);
      double f = 1.0 - curt / tot_charge;
      for (auto& p : plans) p.c_av *= f;
      tot_charge -= curt;
      curtailed_mwh += curt * w;
      cl = clear_hour(bids, demand_h[h] + tot_charge, sc_->voll);
    }
    prices[h] = cl.price;
    for (const auto& [id, q] : cl.dispatched) dispatch[id][h] += q;
    for (auto& p : plans) {
      double d_act = 0.0;
      auto it = dispatch.find(p.asset->id);
      if (it != dispatch.end()) d_act = it->second[h];
      p.net_act[h] = d_act - p.c_av;
      p.soc = std::clamp(p.soc + p.c_av - d_act / p.eff, 0.0, p.ecap);
    }
    lost_mwh += cl.lost_load * w;
    base_served_mwh += (demand_h[h] - cl.lost_load) * w;
    spot_load_cost += prices[h] * (demand_h[h] - cl.lost_load) * w;
  }
  for (auto& p : plans)
    if (p.mid) mid_soc_[p.asset->id].soc = p.soc;
  last_prices_ = prices;

  // 5. Settlement.
  SettleInputs in;
  in.spot = prices;
  in.hour_weight = w;
  in.carbon_tax = tax;
  in.scarcity_strike = sc_->scarcity_strike;
  in.steps_per_year = sc_->steps_per_year;
  double cfd_topup = 0.0, premiums = 0.0, refunds = 0.0;
  std::map<int, const EssPlan*> plan_by_id;
  for (const auto& p : plans) plan_by_id[p.asset->id] = &p;

  for (const auto& a : assets_) {
    if (!a.operating()) continue;
    const Technology& t = sc_->tech(a.tech);
    in.opex_fixed_per_mw_yr =
        cost_at_year(t, sc_->base_year + yi).opex_fixed_per_mw_yr;
    StepProfit p;
    if (t.is_ess()) {
      EssSchedule es;
      es.asset_id = a.id;
      es.net_mw = plan_by_id.at(a.id)->net_act;
      p = settle_ess(a, t, es, in);
      double net_sum = 0.0;
      for (int h = 0; h < 24; ++h) net_sum += es.net_mw[h];
      rec.dispatch_mwh[a.tech] += net_sum * w;
    } else {
      std::array<double, 24> dq{};
      auto it = dispatch.find(a.id);
      if (it != dispatch.end()) dq = it->second;
      switch (a.entry_channel) {
        case Channel::cfd:
          p = settle_cfd(a, t, dq, in);
          for (int h = 0; h < 24; ++h)
            cfd_topup += (a.cfd_strike - prices[h]) * dq[h] * w;
          break;
        case Channel::cm:
          p = settle_cm(a, t, dq, in);
          break;
        default:
          p = settle_merchant(a, t, dq, in);
          break;
      }
      double q_sum = day_sum(dq);
      rec.dispatch_mwh[a.tech] += q_sum * w;
      rec.emissions_t += q_sum * w * t.emission_factor;
    }
    premiums += p.premium;
    refunds += p.option_refund;
    CKey key{a.entry_channel, a.tech};
    rec.installed_mw[key] += a.capacity_mw;
    accumulate(rec.cash[a.owner].profits[key], p);
    income_sum_[key] += p.total();
    mw_steps_[key] += a.capacity_mw;
  }

  // 6. Investment slot of the yearly sequence.
  if (pos == 0 && sc_->merchant_enabled) {
    for (int i = 0; i < n; ++i) {
      auto added = commit_merchant(i, dec[i].merchant_mw, *sc_, yi,
                                   sc_->quantity_steps, next_asset_id_);
      for (auto& a : added) assets_.push_back(a);
    }
  } else if (pos == 2 && pending_cm_ && pending_cm_->year == yi) {
    run_cm_auction(dec, rec);
  } else if (pos == 4 && pending_cfd_ && pending_cfd_->year == yi) {
    run_cfd_auction(dec, rec);
  }

  // 7. CAPEX installments, including the commitment step itself.
  for (auto& a : assets_) {
    if (a.installments_left <= 0) continue;
    rec.cash[a.owner].capex[{a.entry_channel, a.tech}] +=
        a.capex_installment;
    --a.installments_left;
  }

  // 8. Year boundary: aging, decommissioning, next year's assessments.
  // Warm-up years freeze operating lifetimes (stable starting mix) while
  // construction pipelines still advance.
  if (pos == sc_->steps_per_year - 1) {
    for (auto& a : assets_) {
      if (a.years_to_operation > 0)
        --a.years_to_operation;
      else if (yi >= sc_->warmup_years)
        --a.remaining_life_years;
    }
    for (auto it = assets_.begin(); it != assets_.end();) {
      if (it->remaining_life_years <= 0) {
        mid_soc_.erase(it->id);
        it = assets_.erase(it);
      } else {
        ++it;
      }
    }
    if (yi + 1 < sc_->years()) assess_year(yi + 1);
  }

  ++step_;
  bool is_done = done();
  if (is_done) add_absorbing_payments(rec);

  // Consumer payment: spot on served base load, CfD top-ups, and net
  // capacity premiums. Equals total producer market income by energy
  // balance (checked as an invariant in tests).
  rec.consumer_payment = spot_load_cost + cfd_topup + premiums - refunds;
  rec.demand_served_mwh = base_served_mwh;
  rec.lost_load_mwh = lost_mwh;
  rec.ess_charge_curtailed_mwh = curtailed_mwh;

  StepOutcome out;
  out.done = is_done;
  out.rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    double net = rec.cash[i].net();
    out.rewards[i] = reward_from_cash(net, cur_step, *sc_);
    for (const auto& [k, p] : rec.cash[i].profits)
      acc_cash_[i][k] += p.total();
    for (const auto& [k, v] : rec.cash[i].absorbing) acc_cash_[i][k] += v;
    for (const auto& [k, v] : rec.cash[i].capex) acc_cash_[i][k] -= v;
  }
  rec.rewards = out.rewards;
  for (int h = 0; h < 24; ++h) rec.prices[h] = prices[h];
  history_.push_back(rec);
  out.record = std::move(rec);
  for (int i = 0; i < n; ++i) {
    out.obs.push_back(build_observation(i));
    out.masks.push_back(action_mask(i));
  }
  return out;
}

std::vector<double> MarketEnv::build_observation(int agent) const {
  const Scenario& sc = *sc_;
  int ctx = std::min(step_, sc.total_steps() - 1);
  int yi = ctx / sc.steps_per_year;
  int pos = ctx % sc.steps_per_year;
  const RepresentativeDay& day = sc.rep_days[pos];
  int horizon = yi + sc.planning_horizon_years;
  double lt_proj = sc.mean_demand() * sc.demand_scale(horizon);
  double dmax = sc.max_system_demand();
  int n = n_agents();

  std::vector<const Technology*> all, inv, inv_res;
  for (const auto& t : sc.techs) {
    all.push_back(&t);
    if (t.investable()) {
      inv.push_back(&t);
      if (t.is_res) inv_res.push_back(&t);
    }
  }
  auto subset = [&](Channel ch) -> const std::vector<const Technology*>& {
    if (ch == Channel::existing) return all;
    if (ch == Channel::cfd) return inv_res;
    return inv;
  };

  std::map<TechId, double> ind_cap, sys_cap;
  std::map<CKey, double> ind_ch, sys_ch;
  for (const auto& a : assets_) {
    if (!a.operating()) continue;
    sys_cap[a.tech] += a.capacity_mw;
    sys_ch[{a.entry_channel, a.tech}] += a.capacity_mw;
    if (a.owner == agent) {
      ind_cap[a.tech] += a.capacity_mw;
      ind_ch[{a.entry_channel, a.tech}] += a.capacity_mw;
    }
  }
  auto at = [](const std::map<TechId, double>& m, TechId k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };
  auto at2 = [](const std::map<CKey, double>& m, CKey k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };

  std::vector<double> o;
  o.reserve(obs_size());

  for (int h = 0; h < 24; ++h) o.push_back(norm_1(last_prices_[h], sc.voll));

  o.push_back(norm_4(day_mean(day.cf_solar)));
  o.push_back(norm_4(day_mean(day.cf_onshore)));
  o.push_back(norm_4(sc.mean_cf(TechId::solar)));
  o.push_back(norm_4(sc.mean_cf(TechId::onshore_wind)));

  double st_demand_day = day_sum(day.demand) * sc.demand_scale(yi);
  o.push_back(norm_2(day_sum(day.hydro_inflow), st_demand_day));
  double lt_inflow = 0.0;
  for (const auto& d : sc.rep_days) lt_inflow += day_sum(d.hydro_inflow);
  lt_inflow /= double(sc.rep_days.size());
  o.push_back(norm_2(lt_inflow, 24.0 * lt_proj));

  o.push_back(norm_1(day_mean(day.demand) * sc.demand_scale(yi), dmax));
  o.push_back(norm_1(lt_proj, dmax));

  for (const auto* t : all)
    o.push_back(norm_2(at(ind_cap, t->id), lt_proj / double(n)));
  for (const auto* t : all) o.push_back(norm_2(at(sys_cap, t->id), lt_proj));

  for (Channel ch :
       {Channel::existing, Channel::merchant, Channel::cfd, Channel::cm}) {
    for (const auto* t : subset(ch))
      o.push_back(norm_2(at2(ind_ch, {ch, t->id}), at(ind_cap, t->id)));
    for (const auto* t : subset(ch))
      o.push_back(norm_2(at2(sys_ch, {ch, t->id}), at(sys_cap, t->id)));
  }

  o.push_back(norm_2(res_margin_, dmax));
  o.push_back(norm_2(cm_margin_, dmax));

  o.push_back(norm_1(last_cfd_price_, sc.cfd_price_cap));
  o.push_back(norm_1(last_cm_price_k_, sc.cm_price_cap));

  o.push_back(norm_4(pending_cfd_ ? 1.0 : 0.0));
  o.push_back(norm_4(pending_cm_ ? 1.0 : 0.0));

  for (const auto* t : inv) {
    auto it = adequacy_.credits.find(t->id);
    o.push_back(norm_4(it == adequacy_.credits.end() ? 0.0 : it->second));
  }

  o.push_back(norm_1(sc.carbon_tax_at(yi), sc.max_carbon_tax()));

  o.push_back(norm_1(double(pos + 1), double(sc.steps_per_year)));
  o.push_back(norm_1(double(yi + 1), double(sc.years())));
  o.push_back(norm_1(double(sc.years()), double(sc.years())));

  const auto& acc = acc_cash_[agent];
  for (Channel ch :
       {Channel::existing, Channel::merchant, Channel::cfd, Channel::cm}) {
    for (const auto* t : subset(ch)) {
      auto it = acc.find({ch, t->id});
      o.push_back(clip1((it == acc.end() ? 0.0 : it->second) / sc.nf()));
    }
  }
  return o;
}

}  // namespace lemsim
