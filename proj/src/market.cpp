#include "lemsim/market.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lemsim {

namespace {

constexpr double kEps = 1e-9;

// Hour processing orders. Charging prefers high margins, earliest hour on
// ties; discharging prefers low margins, latest hour on ties.
std::array<int, 24> charge_order(const std::array<double, 24>& margins) {
  std::array<int, 24> idx;
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (margins[a] != margins[b]) return margins[a] > margins[b];
    return a < b;
  });
  return idx;
}

std::array<int, 24> discharge_order(const std::array<double, 24>& margins) {
  std::array<int, 24> idx;
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (margins[a] != margins[b]) return margins[a] < margins[b];
    return a > b;
  });
  return idx;
}

}  // namespace

double marginal_bid(const Technology& tech, double carbon_tax) {
  return tech.opex_var + tech.emission_factor * carbon_tax;
}

HourlyClearing clear_hour(const std::vector<SupplyBid>& bids,
                          double demand_mwh, double voll) {
  HourlyClearing out;
  if (demand_mwh <= 0.0) {
    out.price = 0.0;
    return out;
  }
  std::vector<const SupplyBid*> order;
  order.reserve(bids.size());
  for (const auto& b : bids)
    if (b.quantity_mwh > 0.0) order.push_back(&b);
  std::sort(order.begin(), order.end(),
            [](const SupplyBid* a, const SupplyBid* b) {
              if (a->price != b->price) return a->price < b->price;
              return a->asset_id < b->asset_id;
            });

  double remaining = demand_mwh;
  std::size_t i = 0;
  while (i < order.size() && remaining > kEps) {
    std::size_t j = i;
    double group_q = 0.0;
    while (j < order.size() && order[j]->price == order[i]->price) {
      group_q += order[j]->quantity_mwh;
      ++j;
    }
    out.price = order[i]->price;
    if (group_q <= remaining) {
      for (std::size_t k = i; k < j; ++k)
        out.dispatched.emplace_back(order[k]->asset_id,
                                    order[k]->quantity_mwh);
      remaining -= group_q;
    } else {
      // Marginal price level: ration pro-rata by offered quantity.
      double frac = remaining / group_q;
      for (std::size_t k = i; k < j; ++k)
        out.dispatched.emplace_back(order[k]->asset_id,
                                    order[k]->quantity_mwh * frac);
      remaining = 0.0;
    }
    i = j;
  }
  remaining = std::max(remaining, 0.0);
  if (remaining > kEps) {
    out.price = voll;
    out.lost_load = remaining;
  }
  out.demand_served = demand_mwh - out.lost_load;
  return out;
}

std::array<double, 24> system_margins(const std::vector<Asset>& operating,
                                      const RepresentativeDay& day,
                                      const std::array<double, 24>& demand,
                                      const Scenario& sc) {
  std::array<double, 24> m{};
  for (int h = 0; h < 24; ++h) m[h] = -demand[h];
  for (const auto& a : operating) {
    if (!a.operating()) continue;
    const Technology& t = sc.tech(a.tech);
    if (t.is_ess()) continue;
    for (int h = 0; h < 24; ++h)
      m[h] += a.capacity_mw * sc.cf_at(a.tech, day, h) * a.availability_draw;
  }
  return m;
}

namespace {

struct CycleArrays {
  std::array<double, 24> charge{};     // grid MWh bought per hour
  std::array<double, 24> discharge{};  // grid MWh sold per hour
};

// Places a balanced cycle of energy target_e (grid charge side) onto free
// per-hour capacity. Discharge delivers target_e x eff. If the hour budget
// runs out, charge is trimmed so the cycle stays balanced.
void place_cycle(CycleArrays& c, const std::array<double, 24>& margins,
                 double power, double eff, double target_e) {
  if (target_e <= kEps || power <= kEps) return;
  auto corder = charge_order(margins);
  auto dorder = discharge_order(margins);
  std::array<double, 24> added_charge{};
  double need = target_e;
  for (int h : corder) {
    double spare = power - c.charge[h] - c.discharge[h];
    if (spare <= kEps) continue;
    double a = std::min(spare, need);
    added_charge[h] = a;
    c.charge[h] += a;
    need -= a;
    if (need <= kEps) break;
  }
  double placed = target_e - std::max(need, 0.0);
  double dneed = placed * eff;
  for (int h : dorder) {
    if (c.charge[h] > kEps) continue;  // one action per hour
    double spare = power - c.discharge[h];
    if (spare <= kEps) continue;
    double a = std::min(spare, dneed);
    c.discharge[h] += a;
    dneed -= a;
    if (dneed <= kEps) break;
  }
  if (dneed > kEps) {
    // Not enough discharge hours: give back charge to stay balanced.
    double give_back = dneed / eff;
    for (int k = 23; k >= 0 && give_back > kEps; --k) {
      int h = corder[k];
      double r = std::min(added_charge[h], give_back);
      c.charge[h] -= r;
      added_charge[h] -= r;
      give_back -= r;
    }
  }
}

}  // namespace

EssSchedule schedule_short_ess(const std::array<double, 24>& margins,
                               const Asset& ess, const Technology& tech) {
  EssSchedule s;
  s.asset_id = ess.id;
  double power = ess.capacity_mw * ess.availability_draw;
  if (power <= kEps) return s;
  double eff = tech.round_trip_efficiency;
  double cycle = tech.ess_duration_hours * power;
  cycle = std::min(cycle, 24.0 * power / (1.0 + eff));

  CycleArrays c;
  place_cycle(c, margins, power, eff, cycle);

  // SoC trajectory: charging fills 1:1, discharging delivers x eff while
  // draining delivered/eff. Start level chosen so the path touches zero.
  double run = 0.0, low = 0.0;
  for (int h = 0; h < 24; ++h) {
    run += c.charge[h] - c.discharge[h] / eff;
    low = std::min(low, run);
  }
  s.soc_start = -low;
  s.soc_end = s.soc_start;  // balanced cycle by construction
  for (int h = 0; h < 24; ++h) s.net_mw[h] = c.discharge[h] - c.charge[h];
  return s;
}

EssSchedule schedule_mid_ess(const std::array<double, 24>& margins,
                             const Asset& ess, const Technology& tech,
                             const std::array<double, 24>& inflow_mwh,
                             double soc_start, double target_soc) {
  EssSchedule s;
  s.asset_id = ess.id;
  double power = ess.capacity_mw * ess.availability_draw;
  double eff = tech.round_trip_efficiency;
  // The reservoir itself keeps nameplate size; outages scale power only.
  double ecap = tech.ess_duration_hours * ess.capacity_mw;
  soc_start = std::clamp(soc_start, 0.0, ecap);
  s.soc_start = soc_start;
  s.soc_end = soc_start;
  if (ecap <= kEps) return s;
  double desired = std::clamp(target_soc, 0.0, 1.0) * ecap;

  std::array<double, 24> charge{}, discharge{};

  // Dispatch semantics: inflow spills above the reservoir rim, exchanges
  // must respect the bounds outright. Hours are exclusive (charge xor
  // discharge), so a net schedule reproduces this path exactly.
  auto sim = [&](bool* ok = nullptr) {
    double soc = soc_start;
    bool good = true;
    for (int h = 0; h < 24; ++h) {
      soc = std::min(soc + inflow_mwh[h], ecap);
      soc += charge[h];
      good = good && soc <= ecap + 1e-9;
      soc -= discharge[h] / eff;
      good = good && soc >= -1e-9;
    }
    if (ok) *ok = good;
    return soc;
  };
  double end = sim();

  auto corder = charge_order(margins);
  auto dorder = discharge_order(margins);

  // Largest feasible addition into one slot. effect_ok rejects amounts whose
  // effect on the end level is washed out (e.g. charge a later spill absorbs
  // is wasted power). Both feasibility and effect are monotone in the
  // amount, so bisection applies.
  auto probe = [&](double* slot, double want, auto&& effect_ok) {
    if (want <= kEps) return 0.0;
    auto fits = [&](double a) {
      *slot += a;
      bool ok;
      double e = sim(&ok);
      *slot -= a;
      return ok && effect_ok(e, a);
    };
    if (fits(want)) return want;
    double lo = 0.0, hi = want;
    for (int i = 0; i < 60; ++i) {
      double mid = 0.5 * (lo + hi);
      (fits(mid) ? lo : hi) = mid;
    }
    return lo;
  };

  auto steer = [&]() {
    double err = desired - end;
    if (err > 1e-9) {
      for (int h : corder) {
        if (discharge[h] > kEps) continue;
        double want = std::min(power - charge[h], err);
        double a = probe(&charge[h], want, [&](double e, double x) {
          return e - end >= x - 1e-9;
        });
        if (a <= 0.0) continue;
        charge[h] += a;
        end = sim();
        err = desired - end;
        if (err <= 1e-9) break;
      }
    } else if (err < -1e-9) {
      for (int h : dorder) {
        if (charge[h] > kEps) continue;
        double want = std::min(power - discharge[h], -err * eff);
        double a = probe(&discharge[h], want, [&](double e, double x) {
          return end - e >= x / eff - 1e-9;
        });
        if (a <= 0.0) continue;
        discharge[h] += a;
        end = sim();
        err = desired - end;
        if (err >= -1e-9) break;
      }
    }
  };
  if (power > kEps) steer();

  // Arbitrage cycle in the leftover power: balanced charge/discharge pairs
  // placed by merit, each constrained to leave the end level untouched.
  double budget = std::min(ecap, 24.0 * power / (1.0 + eff));
  bool dead[24][24] = {};
  for (int guard = 0; guard < 700 && budget > 1e-9 && power > kEps;
       ++guard) {
    int bc = -1, bd = -1;
    double amount = 0.0;
    for (int hc : corder) {
      if (discharge[hc] > kEps || power - charge[hc] <= kEps) continue;
      for (int hd : dorder) {
        if (hd == hc || dead[hc][hd]) continue;
        if (charge[hd] > kEps || power - discharge[hd] <= kEps) continue;
        double cap = std::min(
            {power - charge[hc], (power - discharge[hd]) / eff, budget});
        auto pair_ok = [&](double a) {
          charge[hc] += a;
          discharge[hd] += a * eff;
          bool ok;
          double e = sim(&ok);
          charge[hc] -= a;
          discharge[hd] -= a * eff;
          return ok && std::abs(e - end) <= 1e-9;
        };
        double a = cap;
        if (!pair_ok(a)) {
          double lo = 0.0, hi = cap;
          for (int i = 0; i < 60; ++i) {
            double mid = 0.5 * (lo + hi);
            (pair_ok(mid) ? lo : hi) = mid;
          }
          a = lo;
        }
        if (a < 1e-6) {
          dead[hc][hd] = true;
          continue;
        }
        bc = hc;
        bd = hd;
        amount = a;
        break;
      }
      if (bc >= 0) break;
    }
    if (bc < 0) break;
    charge[bc] += amount;
    discharge[bd] += amount * eff;
    budget -= amount;
  }

  // Pairing is end-neutral by construction; correction passes absorb any
  // residual drift within the remaining power.
  end = sim();
  for (int pass = 0; pass < 2 && std::abs(desired - end) > 1e-9; ++pass)
    steer();

  s.soc_end = end;
  for (int h = 0; h < 24; ++h) s.net_mw[h] = discharge[h] - charge[h];
  return s;
}

AdequacyResult capacity_credits(const std::vector<Asset>& assets,
                                const RepresentativeDay& peak_day,
                                const std::array<double, 24>& demand_grown,
                                const Scenario& sc) {
  std::array<double, 24> supply{};
  for (const auto& a : assets) {
    const Technology& t = sc.tech(a.tech);
    if (t.is_ess()) continue;
    for (int h = 0; h < 24; ++h)
      supply[h] +=
          a.capacity_mw * sc.cf_at(a.tech, peak_day, h) * t.availability_mean;
  }

  std::array<double, 24> gen_margin{};
  for (int h = 0; h < 24; ++h) gen_margin[h] = supply[h] - demand_grown[h];

  // Expected ESS contribution: balanced cycles at mean availability.
  std::map<TechId, std::array<double, 24>> ess_net;
  std::map<TechId, double> ess_cap;
  for (const auto& a : assets) {
    const Technology& t = sc.tech(a.tech);
    if (!t.is_ess()) continue;
    Asset expected = a;
    expected.availability_draw = t.availability_mean;
    EssSchedule es = schedule_short_ess(gen_margin, expected, t);
    for (int h = 0; h < 24; ++h) {
      supply[h] += es.net_mw[h];
      ess_net[a.tech][h] += es.net_mw[h];
    }
    ess_cap[a.tech] += a.capacity_mw;
  }

  AdequacyResult out;
  double best = supply[0] - demand_grown[0];
  out.critical_hour = 0;
  for (int h = 1; h < 24; ++h) {
    double m = supply[h] - demand_grown[h];
    if (m < best) {
      best = m;
      out.critical_hour = h;
    }
  }
  out.adequacy_margin = best;

  int hc = out.critical_hour;
  for (const auto& t : sc.techs) {
    double credit;
    if (t.is_ess()) {
      auto it = ess_cap.find(t.id);
      if (it != ess_cap.end() && it->second > 0.0)
        credit = std::clamp(std::max(ess_net[t.id][hc], 0.0) / it->second,
                            0.0, 1.0);
      else
        credit = t.availability_mean;
    } else if (t.is_res) {
      credit = sc.cf_at(t.id, peak_day, hc) * t.availability_mean;
    } else {
      credit = t.availability_mean;
    }
    out.credits[t.id] = std::clamp(credit, 0.0, 1.0);
  }
  return out;
}

}  // namespace lemsim
