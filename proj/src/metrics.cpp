#include "lemsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "lemsim/rng.hpp"

namespace lemsim {

namespace {

using nlohmann::json;

constexpr std::uint64_t kActionStream = 0x9e3779b97f4a7c15ULL;

double discount(const Scenario& sc, int step) {
  if (sc.discount_rate == 0.0) return 1.0;
  return std::pow(1.0 + sc.discount_rate,
                  -double(step) / sc.steps_per_year);
}

void check_compatible(const Scenario& sc,
                      const std::vector<PolicyParams>& policies) {
  if (policies.size() != sc.agents.size())
    throw CheckpointMismatchError("agent count differs from scenario");
  const ActionLayout layout = ActionLayout::build(sc);
  int cards = 0;
  for (const auto& d : layout.dims) cards += d.cardinality;
  const int obs = MarketEnv(sc).obs_size();
  for (const auto& p : policies)
    if (p.actor.input_size() != obs || p.critic.input_size() != obs ||
        p.actor.output_size() != cards)
      throw CheckpointMismatchError(
          "network shapes incompatible with scenario");
}

EpisodeRecord run_episode(const Scenario& sc,
                          const std::vector<PolicyParams>& policies,
                          std::uint64_t env_seed, std::uint64_t action_seed) {
  MarketEnv env(sc);
  const ActionLayout& layout = env.layout();
  const int n = env.n_agents();
  StepOutcome out = env.reset(env_seed);
  std::mt19937_64 arng(action_seed);
  std::vector<double> rewards(n, 0.0);
  std::vector<std::vector<int>> acts(n);
  while (!out.done) {
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd obs = Eigen::Map<const Eigen::VectorXd>(
          out.obs[i].data(), long(out.obs[i].size()));
      acts[i] = sample_action(
          forward_actor(policies[i], obs, out.masks[i], layout), arng);
    }
    out = env.step(acts);
    for (int i = 0; i < n; ++i) rewards[i] += out.rewards[i];
  }
  EpisodeRecord rec;
  rec.episode_seed = env_seed;
  rec.steps = env.history();
  rec.episode_rewards = std::move(rewards);
  rec.final_agent_capacity_mw.assign(n, 0.0);
  for (const auto& a : env.assets()) {
    if (!a.operating()) continue;
    rec.final_agent_capacity_mw[a.owner] += a.capacity_mw;
    rec.final_capacity_mw[{a.entry_channel, a.tech}] += a.capacity_mw;
  }
  return rec;
}

// Ordered parallel map: task t -> slot t, threads stride the index space.
template <typename Fn>
void run_tasks(int count, int workers, Fn&& fn) {
  int w = std::clamp(workers, 1, std::max(count, 1));
  if (w == 1) {
    for (int t = 0; t < count; ++t) fn(t);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(w);
  for (int k = 0; k < w; ++k)
    pool.emplace_back([&, k] {
      try {
        for (int t = k; t < count; t += w) fn(t);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<EpisodeRecord> simulate(
    const Scenario& sc, const std::vector<PolicyParams>& policies,
    int episodes, std::uint64_t seed, int workers,
    const std::function<void(const EpisodeRecord&)>& on_episode) {
  if (episodes < 0) throw std::invalid_argument("episodes must be >= 0");
  check_compatible(sc, policies);
  std::vector<EpisodeRecord> out(episodes);
  run_tasks(episodes, workers, [&](int e) {
    out[e] = run_episode(sc, policies, mix_seed(seed, e),
                         mix_seed(seed ^ kActionStream, e));
  });
  if (on_episode)
    for (const auto& rec : out) on_episode(rec);
  return out;
}

double compute_hhi(const std::vector<double>& capacities) {
  double total = 0.0;
  for (double c : capacities) {
    if (c < 0.0) throw std::invalid_argument("negative capacity");
    total += c;
  }
  if (capacities.empty() || total <= 0.0)
    throw std::invalid_argument("zero total capacity");
  bool equal = true;
  for (double c : capacities) equal = equal && c == capacities.front();
  if (equal) return 10000.0 / double(capacities.size());
  double s2 = 0.0;
  for (double c : capacities) {
    double share = c / total;
    s2 += share * share;
  }
  return 10000.0 * s2;
}

std::optional<double> compute_irr(const std::vector<double>& cash) {
  bool pos = false, neg = false;
  for (double c : cash) {
    pos = pos || c > 0.0;
    neg = neg || c < 0.0;
  }
  if (!pos || !neg) return std::nullopt;
  auto npv = [&](double r) {
    double acc = 0.0, f = 1.0;
    const double d = 1.0 / (1.0 + r);
    for (double c : cash) {
      acc += c * f;
      f *= d;
    }
    return acc;
  };
  double lo = -0.99, hi = 10.0;
  double flo = npv(lo);
  if ((flo > 0.0) == (npv(hi) > 0.0)) return std::nullopt;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    double mid = 0.5 * (lo + hi);
    if ((npv(mid) > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = npv(mid);
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

PenaltyResult compute_penalty(const EpisodeRecord& rec, const Scenario& sc) {
  const int spy = sc.steps_per_year;
  const int total_steps = sc.total_steps();
  const int years = sc.years();
  if (int(rec.steps.size()) != total_steps)
    throw std::invalid_argument("incomplete episode record");
  const int n_agents = static_cast<int>(sc.agents.size());
  const double w = sc.hour_weight();

  std::vector<const AuctionResult*> cm_year(years, nullptr);
  std::vector<const AuctionResult*> cfd_year(years, nullptr);
  for (const auto& s : rec.steps) {
    if (s.cm_auction) cm_year[s.year_index] = &*s.cm_auction;
    if (s.cfd_auction) cfd_year[s.year_index] = &*s.cfd_auction;
  }

  auto banned = [&](const Technology& t, Channel ch, int yi) {
    for (const auto& b : sc.bans) {
      if (b.tech != t.id || b.agent) continue;  // agent bans spare others
      if (b.channel && *b.channel != ch) continue;
      if (sc.base_year + yi >= b.from_year) return true;
    }
    return false;
  };

  // Hypothetical price-taking entrant of one action lump, settled with
  // the production rules against the recorded prices. Mean availability
  // stands in for the random draws.
  auto virtual_npv = [&](const Technology& t, Channel ch, int yi) {
    const double size = t.max_invest_mw / (sc.quantity_steps - 1);
    Asset a = make_pipeline_asset(-1, -1, t, size, ch, sc, yi);
    if (ch == Channel::cfd) {
      const AuctionResult* ar = cfd_year[yi];
      a.cfd_strike =
          ar->unfilled > 1e-9 ? sc.cfd_price_cap : ar->clearing_price;
    } else if (ch == Channel::cm) {
      const AuctionResult* ar = cm_year[yi];
      double price_k =
          ar->unfilled > 1e-9 ? sc.cm_price_cap : ar->clearing_price;
      a.cm_premium = price_k * 1000.0;
      double credit =
          t.availability_mean * (t.is_res ? sc.mean_cf(t.id) : 1.0);
      a.cm_firm_capacity_mw = size * credit;
    }
    const int commit_step =
        yi * spy +
        (ch == Channel::merchant ? 0 : ch == Channel::cm ? 2 : 4);
    double npv = 0.0;
    for (int k = 0; k < a.installments_left; ++k) {
      int s = commit_step + k;
      if (s >= total_steps) break;
      npv -= discount(sc, s) * a.capex_installment;
    }
    double income_sum = 0.0;
    int op_steps = 0;
    for (int s = (yi + t.construction_years) * spy; s < total_steps; ++s) {
      const StepRecord& sr = rec.steps[s];
      SettleInputs in;
      in.spot = sr.prices;
      in.hour_weight = w;
      in.carbon_tax = sc.carbon_tax_at(sr.year_index);
      in.scarcity_strike = sc.scarcity_strike;
      in.opex_fixed_per_mw_yr =
          cost_at_year(t, sc.base_year + sr.year_index).opex_fixed_per_mw_yr;
      in.steps_per_year = spy;
      const double mc = marginal_bid(t, in.carbon_tax);
      const RepresentativeDay& day = sc.rep_days[sr.pos_in_year];
      std::array<double, 24> dispatch{};
      for (int h = 0; h < 24; ++h) {
        double cf = t.is_res ? sc.cf_at(t.id, day, h) : 1.0;
        bool runs = ch == Channel::cfd ? cf > 0.0 : sr.prices[h] > mc;
        if (runs) dispatch[h] = size * t.availability_mean * cf;
      }
      StepProfit p = ch == Channel::cfd ? settle_cfd(a, t, dispatch, in)
                     : ch == Channel::cm ? settle_cm(a, t, dispatch, in)
                                         : settle_merchant(a, t, dispatch, in);
      npv += discount(sc, s) * p.total();
      income_sum += p.total();
      ++op_steps;
    }
    if (op_steps > 0) {
      double income_per_year = income_sum / op_steps * spy;
      int aged = std::max(
          0, years - std::max(yi + t.construction_years, sc.warmup_years));
      double remaining = std::max(0, t.lifetime_years - aged);
      npv += discount(sc, total_steps - 1) *
             absorbing_payment(income_per_year, sc.discount_rate, remaining);
    }
    return npv;
  };

  PenaltyResult out;
  for (const auto& t : sc.techs) {
    if (!t.investable() || t.is_ess()) continue;
    for (Channel ch : {Channel::merchant, Channel::cfd, Channel::cm}) {
      if (ch == Channel::merchant && !sc.merchant_enabled) continue;
      if (ch == Channel::cfd && (!sc.cfd_enabled || !t.is_res)) continue;
      if (ch == Channel::cm && !sc.cm_enabled) continue;
      bool any = false;
      double best = 0.0;
      for (int yi = 0; yi + t.construction_years <= years - 1; ++yi) {
        if (banned(t, ch, yi)) continue;
        if (ch == Channel::cfd && !cfd_year[yi]) continue;
        if (ch == Channel::cm && !cm_year[yi]) continue;
        double npv = virtual_npv(t, ch, yi);
        if (!any || npv > best) best = npv;
        any = true;
      }
      if (any) {
        out.virtual_npv[{ch, t.id}] = best;
        out.unexploited += std::max(best, 0.0);
      }
    }
  }

  std::map<std::pair<int, std::pair<Channel, TechId>>, double> realized;
  for (int s = 0; s < total_steps; ++s) {
    const double d = discount(sc, s);
    for (int i = 0; i < n_agents; ++i) {
      const AgentCashFlow& cf = rec.steps[s].cash[i];
      for (const auto& [key, p] : cf.profits)
        if (key.first != Channel::existing)
          realized[{i, key}] += d * p.total();
      for (const auto& [key, x] : cf.capex)
        if (key.first != Channel::existing) realized[{i, key}] -= d * x;
      for (const auto& [key, x] : cf.absorbing)
        if (key.first != Channel::existing) realized[{i, key}] += d * x;
    }
  }
  out.agent_loss.assign(n_agents, 0.0);
  for (const auto& [key, npv] : realized)
    out.agent_loss[key.first] += std::max(-npv, 0.0);
  out.agent_penalty.resize(n_agents);
  for (int i = 0; i < n_agents; ++i)
    out.agent_penalty[i] = out.unexploited + out.agent_loss[i];
  return out;
}

LeagueTable run_league(const Scenario& sc,
                       const std::vector<std::vector<PolicyParams>>& configs,
                       int rounds, int episodes_per_lineup,
                       std::uint64_t seed, int workers) {
  const int k = static_cast<int>(configs.size());
  if (k == 0) throw std::invalid_argument("league needs at least one config");
  if (rounds < 1 || episodes_per_lineup < 1)
    throw std::invalid_argument("league needs rounds and episodes >= 1");
  for (const auto& c : configs) check_compatible(sc, c);
  const int n = static_cast<int>(sc.agents.size());

  std::mt19937_64 lrng(mix_seed(seed, 0xF00DF00DULL));
  std::vector<std::vector<int>> lineups(rounds, std::vector<int>(n));
  for (auto& lineup : lineups)
    for (int& slot : lineup) slot = int(rand_below(lrng, k));

  const int tasks = rounds * episodes_per_lineup;
  std::vector<std::vector<double>> rewards(tasks);
  run_tasks(tasks, workers, [&](int task) {
    int round = task / episodes_per_lineup;
    std::vector<PolicyParams> pols;
    pols.reserve(n);
    for (int i = 0; i < n; ++i) pols.push_back(configs[lineups[round][i]][i]);
    rewards[task] = run_episode(sc, pols, mix_seed(seed, 1 + task),
                                mix_seed(seed ^ kActionStream, 1 + task))
                        .episode_rewards;
  });

  std::vector<double> sum(k, 0.0);
  std::vector<long> apps(k, 0);
  for (int task = 0; task < tasks; ++task) {
    const auto& lineup = lineups[task / episodes_per_lineup];
    for (int i = 0; i < n; ++i) {
      sum[lineup[i]] += rewards[task][i];
      apps[lineup[i]] += 1;
    }
  }

  LeagueTable table;
  for (int c = 0; c < k; ++c) {
    LeagueEntry e;
    e.config = c;
    e.appearances = apps[c];
    e.mean_score = apps[c] > 0 ? sum[c] / double(apps[c]) : 0.0;
    table.entries.push_back(e);
  }
  double best = 0.0;
  bool has_best = false;
  for (const auto& e : table.entries)
    if (e.appearances > 0 && (!has_best || e.mean_score > best)) {
      best = e.mean_score;
      has_best = true;
    }
  for (auto& e : table.entries)
    e.normalized = has_best && best > 0.0 ? e.mean_score / best : e.mean_score;
  std::stable_sort(table.entries.begin(), table.entries.end(),
                   [](const LeagueEntry& a, const LeagueEntry& b) {
                     if ((a.appearances > 0) != (b.appearances > 0))
                       return a.appearances > 0;
                     if (a.mean_score != b.mean_score)
                       return a.mean_score > b.mean_score;
                     return a.config < b.config;
                   });
  for (std::size_t i = 0; i < table.entries.size(); ++i)
    table.entries[i].rank = int(i) + 1;
  return table;
}

namespace {

BandRow band_from(std::vector<double> v) {
  BandRow row;
  for (double x : v) row.mean += x;
  row.mean /= double(v.size());
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    double pos = q * double(v.size() - 1);
    std::size_t lo = std::size_t(pos);
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - double(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
  };
  row.p10 = quantile(0.10);
  row.p50 = quantile(0.50);
  row.p90 = quantile(0.90);
  return row;
}

}  // namespace

SummaryTables aggregate_results(const std::vector<EpisodeRecord>& records,
                                const Scenario& sc) {
  if (records.empty()) throw std::invalid_argument("no episode records");
  const int total_steps = sc.total_steps();
  const int spy = sc.steps_per_year;
  for (const auto& r : records)
    if (int(r.steps.size()) != total_steps)
      throw std::invalid_argument("incomplete episode record");
  const int n_agents = static_cast<int>(sc.agents.size());

  SummaryTables tables;
  for (int s = 0; s < total_steps; ++s) {
    std::vector<double> price, emis;
    for (const auto& r : records) {
      const StepRecord& sr = r.steps[s];
      price.push_back(sr.demand_served_mwh > 0.0
                          ? sr.consumer_payment / sr.demand_served_mwh
                          : 0.0);
      emis.push_back(sr.emissions_t);
    }
    BandRow p = band_from(std::move(price));
    p.step = s;
    p.year = s / spy;
    p.pos = s % spy;
    tables.prices.push_back(p);
    BandRow e = band_from(std::move(emis));
    e.step = s;
    e.year = s / spy;
    e.pos = s % spy;
    tables.emissions.push_back(e);
  }

  for (int y = 0; y < sc.years(); ++y) {
    const int s = (y + 1) * spy - 1;
    std::map<std::pair<Channel, TechId>, bool> keys;
    for (const auto& r : records)
      for (const auto& [key, mw] : r.steps[s].installed_mw) keys[key] = true;
    // Row order: technology catalog order, then channel enum order.
    for (const auto& t : sc.techs)
      for (Channel ch : {Channel::existing, Channel::merchant, Channel::cfd,
                         Channel::cm}) {
        if (!keys.count({ch, t.id})) continue;
        std::vector<double> v;
        for (const auto& r : records) {
          auto it = r.steps[s].installed_mw.find({ch, t.id});
          v.push_back(it == r.steps[s].installed_mw.end() ? 0.0
                                                          : it->second);
        }
        BandRow b = band_from(std::move(v));
        CapacityRow row;
        row.year = y;
        row.tech = t.id;
        row.channel = ch;
        row.mean = b.mean;
        row.p10 = b.p10;
        row.p50 = b.p50;
        row.p90 = b.p90;
        tables.capacity.push_back(row);
      }
  }

  for (const auto& r : records)
    tables.hhi.push_back(
        {r.episode_seed, compute_hhi(r.final_agent_capacity_mw)});

  for (int i = 0; i < n_agents; ++i) {
    std::vector<double> annual(sc.years(), 0.0);
    // One undiscounted stream per agent across all episodes (mean), so a
    // single rate summarizes the portfolio.
    for (const auto& r : records)
      for (int s = 0; s < total_steps; ++s) {
        const AgentCashFlow& cf = r.steps[s].cash[i];
        double net = 0.0;
        for (const auto& [key, p] : cf.profits) net += p.total();
        for (const auto& [key, x] : cf.capex) net -= x;
        for (const auto& [key, x] : cf.absorbing) net += x;
        annual[s / spy] += net / double(records.size());
      }
    tables.irr.push_back({i, compute_irr(annual)});
  }

  std::vector<PenaltyRow> pen(n_agents);
  for (int i = 0; i < n_agents; ++i) pen[i].agent = i;
  for (const auto& r : records) {
    PenaltyResult pr = compute_penalty(r, sc);
    for (int i = 0; i < n_agents; ++i) {
      pen[i].unexploited += pr.unexploited / double(records.size());
      pen[i].realized_loss += pr.agent_loss[i] / double(records.size());
    }
  }
  for (int i = 0; i < n_agents; ++i)
    pen[i].total = pen[i].unexploited + pen[i].realized_loss;
  tables.penalty = std::move(pen);
  return tables;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << body;
}

}  // namespace

std::vector<std::string> write_summary_csvs(const SummaryTables& tables,
                                            const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  auto emit = [&](const char* name, const std::string& body) {
    std::string path = (std::filesystem::path(out_dir) / name).string();
    write_file(path, body);
    paths.push_back(path);
  };

  std::string s = "step,year,pos,mean,p10,p50,p90\n";
  for (const auto& r : tables.prices)
    s += std::to_string(r.step) + "," + std::to_string(r.year) + "," +
         std::to_string(r.pos) + "," + num(r.mean) + "," + num(r.p10) + "," +
         num(r.p50) + "," + num(r.p90) + "\n";
  emit("prices.csv", s);

  s = "step,year,pos,mean,p10,p50,p90\n";
  for (const auto& r : tables.emissions)
    s += std::to_string(r.step) + "," + std::to_string(r.year) + "," +
         std::to_string(r.pos) + "," + num(r.mean) + "," + num(r.p10) + "," +
         num(r.p50) + "," + num(r.p90) + "\n";
  emit("emissions.csv", s);

  s = "year,tech,channel,mean,p10,p50,p90\n";
  for (const auto& r : tables.capacity)
    s += std::to_string(r.year) + "," + tech_name(r.tech) + "," +
         channel_name(r.channel) + "," + num(r.mean) + "," + num(r.p10) +
         "," + num(r.p50) + "," + num(r.p90) + "\n";
  emit("capacity.csv", s);

  s = "episode_seed,hhi\n";
  for (const auto& [seed, hhi] : tables.hhi)
    s += std::to_string(seed) + "," + num(hhi) + "\n";
  emit("hhi.csv", s);

  s = "agent,irr\n";
  for (const auto& r : tables.irr)
    s += std::to_string(r.agent) + "," + (r.irr ? num(*r.irr) : "") + "\n";
  emit("irr.csv", s);

  s = "agent,unexploited,realized_loss,total\n";
  for (const auto& r : tables.penalty)
    s += std::to_string(r.agent) + "," + num(r.unexploited) + "," +
         num(r.realized_loss) + "," + num(r.total) + "\n";
  emit("penalty.csv", s);
  return paths;
}

namespace {

json channel_tech_map(const std::map<std::pair<Channel, TechId>, double>& m) {
  json arr = json::array();
  for (const auto& [key, v] : m)
    arr.push_back({{"channel", channel_name(key.first)},
                   {"tech", tech_name(key.second)},
                   {"value", v}});
  return arr;
}

void parse_channel_tech_map(const json& arr,
                            std::map<std::pair<Channel, TechId>, double>& m) {
  for (const auto& e : arr)
    m[{channel_from_name(e.at("channel").get<std::string>()),
       tech_from_name(e.at("tech").get<std::string>())}] =
        e.at("value").get<double>();
}

json auction_to_json(const AuctionResult& ar) {
  json awards = json::array();
  for (const auto& a : ar.awards)
    awards.push_back({{"agent", a.agent},
                      {"tech", tech_name(a.tech)},
                      {"mw", a.quantity_mw},
                      {"contribution", a.contribution},
                      {"price_paid", a.price_paid}});
  return {{"clearing_price", ar.clearing_price},
          {"unfilled", ar.unfilled},
          {"awards", awards}};
}

AuctionResult auction_from_json(const json& j) {
  AuctionResult ar;
  ar.clearing_price = j.at("clearing_price").get<double>();
  ar.unfilled = j.at("unfilled").get<double>();
  for (const auto& a : j.at("awards")) {
    AuctionAward aw;
    aw.agent = a.at("agent").get<int>();
    aw.tech = tech_from_name(a.at("tech").get<std::string>());
    aw.quantity_mw = a.at("mw").get<double>();
    aw.contribution = a.at("contribution").get<double>();
    aw.price_paid = a.at("price_paid").get<double>();
    ar.awards.push_back(aw);
  }
  return ar;
}

json step_to_json(const StepRecord& sr) {
  json j;
  j["step"] = sr.step;
  j["year"] = sr.year_index;
  j["pos"] = sr.pos_in_year;
  j["prices"] = sr.prices;
  j["served_mwh"] = sr.demand_served_mwh;
  j["lost_mwh"] = sr.lost_load_mwh;
  j["curtailed_mwh"] = sr.ess_charge_curtailed_mwh;
  json dispatch = json::object();
  for (const auto& [tech, v] : sr.dispatch_mwh) dispatch[tech_name(tech)] = v;
  j["dispatch_mwh"] = dispatch;
  j["installed_mw"] = channel_tech_map(sr.installed_mw);
  j["emissions_t"] = sr.emissions_t;
  j["consumer_payment"] = sr.consumer_payment;
  json cash = json::array();
  for (const auto& cf : sr.cash) {
    json profits = json::array();
    for (const auto& [key, p] : cf.profits)
      profits.push_back({{"channel", channel_name(key.first)},
                         {"tech", tech_name(key.second)},
                         {"energy_revenue", p.energy_revenue},
                         {"var_cost", p.var_cost},
                         {"carbon_cost", p.carbon_cost},
                         {"fixed_cost", p.fixed_cost},
                         {"premium", p.premium},
                         {"option_refund", p.option_refund}});
    cash.push_back({{"profits", profits},
                    {"capex", channel_tech_map(cf.capex)},
                    {"absorbing", channel_tech_map(cf.absorbing)}});
  }
  j["cash"] = cash;
  j["rewards"] = sr.rewards;
  j["cm_auction"] = sr.cm_auction ? auction_to_json(*sr.cm_auction) : json();
  j["cfd_auction"] =
      sr.cfd_auction ? auction_to_json(*sr.cfd_auction) : json();
  return j;
}

StepRecord step_from_json(const json& j) {
  StepRecord sr;
  sr.step = j.at("step").get<int>();
  sr.year_index = j.at("year").get<int>();
  sr.pos_in_year = j.at("pos").get<int>();
  sr.prices = j.at("prices").get<std::array<double, 24>>();
  sr.demand_served_mwh = j.at("served_mwh").get<double>();
  sr.lost_load_mwh = j.at("lost_mwh").get<double>();
  sr.ess_charge_curtailed_mwh = j.at("curtailed_mwh").get<double>();
  for (const auto& [name, v] : j.at("dispatch_mwh").items())
    sr.dispatch_mwh[tech_from_name(name)] = v.get<double>();
  parse_channel_tech_map(j.at("installed_mw"), sr.installed_mw);
  sr.emissions_t = j.at("emissions_t").get<double>();
  sr.consumer_payment = j.at("consumer_payment").get<double>();
  for (const auto& c : j.at("cash")) {
    AgentCashFlow cf;
    for (const auto& p : c.at("profits")) {
      StepProfit sp;
      sp.energy_revenue = p.at("energy_revenue").get<double>();
      sp.var_cost = p.at("var_cost").get<double>();
      sp.carbon_cost = p.at("carbon_cost").get<double>();
      sp.fixed_cost = p.at("fixed_cost").get<double>();
      sp.premium = p.at("premium").get<double>();
      sp.option_refund = p.at("option_refund").get<double>();
      cf.profits[{channel_from_name(p.at("channel").get<std::string>()),
                  tech_from_name(p.at("tech").get<std::string>())}] = sp;
    }
    parse_channel_tech_map(c.at("capex"), cf.capex);
    parse_channel_tech_map(c.at("absorbing"), cf.absorbing);
    sr.cash.push_back(std::move(cf));
  }
  sr.rewards = j.at("rewards").get<std::vector<double>>();
  if (!j.at("cm_auction").is_null())
    sr.cm_auction = auction_from_json(j.at("cm_auction"));
  if (!j.at("cfd_auction").is_null())
    sr.cfd_auction = auction_from_json(j.at("cfd_auction"));
  return sr;
}

}  // namespace

std::string record_to_line(const EpisodeRecord& rec) {
  json j;
  j["episode_seed"] = rec.episode_seed;
  j["episode_rewards"] = rec.episode_rewards;
  j["final_agent_capacity_mw"] = rec.final_agent_capacity_mw;
  j["final_capacity_mw"] = channel_tech_map(rec.final_capacity_mw);
  json steps = json::array();
  for (const auto& s : rec.steps) steps.push_back(step_to_json(s));
  j["steps"] = steps;
  return j.dump();
}

EpisodeRecord record_from_line(const std::string& line, int line_no) {
  try {
    json j = json::parse(line);
    EpisodeRecord rec;
    rec.episode_seed = j.at("episode_seed").get<std::uint64_t>();
    rec.episode_rewards =
        j.at("episode_rewards").get<std::vector<double>>();
    rec.final_agent_capacity_mw =
        j.at("final_agent_capacity_mw").get<std::vector<double>>();
    parse_channel_tech_map(j.at("final_capacity_mw"), rec.final_capacity_mw);
    for (const auto& s : j.at("steps")) rec.steps.push_back(step_from_json(s));
    return rec;
  } catch (const std::exception& e) {
    throw std::runtime_error("records line " + std::to_string(line_no) +
                             ": " + e.what());
  }
}

void write_records(const std::string& path,
                   const std::vector<EpisodeRecord>& records) {
  std::string body;
  for (const auto& r : records) {
    body += record_to_line(r);
    body += '\n';
  }
  write_file(path, body);
}

std::vector<EpisodeRecord> read_records(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<EpisodeRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(record_from_line(line, line_no));
  }
  return out;
}

}  // namespace lemsim
