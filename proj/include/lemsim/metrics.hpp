#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lemsim/ippo.hpp"

namespace lemsim {

// One frozen-policy episode: the env's full step ledger plus end-of-run
// summaries. Round-trips through the line-delimited record format.
struct EpisodeRecord {
  std::uint64_t episode_seed = 0;
  std::vector<StepRecord> steps;
  std::vector<double> episode_rewards;  // per agent, summed over steps
  std::vector<double> final_agent_capacity_mw;  // operating assets only
  std::map<std::pair<Channel, TechId>, double> final_capacity_mw;
};

// Frozen stochastic rollouts: action sampling is preserved, parameters
// never change. Deterministic for a given seed at any worker count;
// `on_episode` streams records in episode order.
std::vector<EpisodeRecord> simulate(
    const Scenario& sc, const std::vector<PolicyParams>& policies,
    int episodes, std::uint64_t seed, int workers = 1,
    const std::function<void(const EpisodeRecord&)>& on_episode = {});

// Concentration of final capacities: 10000 * sum of squared shares.
// Equal inputs hit 10000/n exactly; zero total is an error.
double compute_hhi(const std::vector<double>& capacities);

// Bisection root of NPV(rate) = 0 on (-0.99, 10); cash[t] falls at the
// end of year t. Streams without a sign change have no defined rate.
std::optional<double> compute_irr(const std::vector<double>& cash);

// Distance-from-equilibrium penalty. For every open entry opportunity a
// "virtual plant" of the smallest action lump is priced against the
// episode's realized prices and auction outcomes under the exact
// settlement rules; unexploited profit and realized investment losses
// both count. Zero means no profitable entry was left on the table and
// nothing the agents built lost money.
struct PenaltyResult {
  // Best NPV over entry years per (channel, technology) virtual plant.
  std::map<std::pair<Channel, TechId>, double> virtual_npv;
  double unexploited = 0.0;  // sum of max(virtual NPV, 0)
  std::vector<double> agent_loss;  // per agent: sum of max(-realized NPV, 0)
  std::vector<double> agent_penalty;  // unexploited + own losses
};

PenaltyResult compute_penalty(const EpisodeRecord& rec, const Scenario& sc);

struct LeagueEntry {
  int config = 0;
  long appearances = 0;     // episode-slots occupied
  double mean_score = 0.0;  // accumulated reward per appearance
  double normalized = 0.0;  // mean_score / best mean_score (when positive)
  int rank = 0;
};

struct LeagueTable {
  std::vector<LeagueEntry> entries;  // sorted by rank (1 = best)
};

// Randomized-lineup competition: each round assigns every agent slot one
// of the K configurations uniformly at random and plays
// episodes_per_lineup episodes. Seed-stable; ranks are a permutation.
LeagueTable run_league(const Scenario& sc,
                       const std::vector<std::vector<PolicyParams>>& configs,
                       int rounds, int episodes_per_lineup,
                       std::uint64_t seed, int workers = 1);

// Cross-episode summary rows (percentile bands use linear interpolation
// between order statistics).
struct BandRow {
  int step = 0, year = 0, pos = 0;
  double mean = 0, p10 = 0, p50 = 0, p90 = 0;
};
struct CapacityRow {
  int year = 0;
  TechId tech = TechId::solar;
  Channel channel = Channel::existing;
  double mean = 0, p10 = 0, p50 = 0, p90 = 0;
};
struct IrrRow {
  int agent = 0;
  std::optional<double> irr;
};
struct PenaltyRow {
  int agent = 0;
  double unexploited = 0, realized_loss = 0, total = 0;
};

struct SummaryTables {
  std::vector<BandRow> prices;     // consumer payment per served MWh
  std::vector<BandRow> emissions;  // weighted tonnes per step
  std::vector<CapacityRow> capacity;  // operating MW at each year end
  std::vector<std::pair<std::uint64_t, double>> hhi;  // per episode seed
  std::vector<IrrRow> irr;          // per agent, annual net cash stream
  std::vector<PenaltyRow> penalty;  // per agent, averaged over episodes
};

SummaryTables aggregate_results(const std::vector<EpisodeRecord>& records,
                                const Scenario& sc);

// CSV export with fixed column order; returns the six file paths.
std::vector<std::string> write_summary_csvs(const SummaryTables& tables,
                                            const std::string& out_dir);

// Line-delimited records: one episode per line. Reads report malformed
// lines by number; writes are deterministic byte-for-byte.
void write_records(const std::string& path,
                   const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> read_records(const std::string& path);
std::string record_to_line(const EpisodeRecord& rec);
EpisodeRecord record_from_line(const std::string& line, int line_no);

}  // namespace lemsim
