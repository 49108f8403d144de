#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lemsim/env.hpp"
#include "lemsim/nets.hpp"

namespace lemsim {

// One agent's actor/critic and optimizer state. Nothing is shared between
// agents (independent learners).
struct PolicyParams {
  Mlp actor;   // output = concatenated per-dimension logit blocks
  Mlp critic;  // scalar output
  Adam actor_opt;
  Adam critic_opt;
};

PolicyParams make_policy(int obs_size, const std::vector<int>& hidden,
                         const ActionLayout& layout, std::mt19937_64& rng);

// Per-dimension categorical distributions. A dead dimension collapses to
// index 0 with probability exactly 1 (zero entropy, zero gradient).
struct ActorDist {
  std::vector<Eigen::VectorXd> probs;

  double log_prob(const std::vector<int>& action) const;
  double entropy() const;
};

ActorDist forward_actor(const PolicyParams& p, const Eigen::VectorXd& obs,
                        const std::vector<std::uint8_t>& mask,
                        const ActionLayout& layout,
                        MlpCache* cache = nullptr);

std::vector<int> sample_action(const ActorDist& dist, std::mt19937_64& rng);

// One agent's experience; whole episodes laid back to back.
struct Trajectory {
  std::vector<Eigen::VectorXd> obs;
  std::vector<std::vector<int>> actions;
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<double> logp;    // behavior joint log-probability
  std::vector<double> rewards;
  std::vector<double> values;  // behavior critic estimates
  std::vector<std::uint8_t> done;

  int size() const { return static_cast<int>(rewards.size()); }
};

struct Targets {
  std::vector<double> v_target;
  std::vector<double> advantage;
};

// GAE(lambda) from the behavior values; the last step must be terminal.
// lambda = 1 degenerates to full-return targets (the test oracle).
Targets compute_targets(const Trajectory& t, double gamma, double lambda);

struct TrainConfig {
  double clip_eps = 0.1;
  double entropy_coef = 0.01;
  double value_coef = 1.0;
  int batch_size = 1440;    // rounded up to whole episodes
  int minibatch_size = 0;   // 0 = full batch
  int epochs = 4;
  double lr = 3e-4;
  double gamma = 1.0;       // discounting lives inside the environment
  double gae_lambda = 1.0;
  bool normalize_advantage = true;
  std::vector<int> hidden = {256, 256};
  int iterations = 100;
  int checkpoint_interval = 50;
  int workers = 1;
  double wall_clock_cap_s = 0.0;  // 0 = no cap
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument naming the field
};

struct LossStats {
  double loss = 0.0;
  double policy_loss = 0.0;  // -L_CLIP
  double value_loss = 0.0;   // mean squared error
  double entropy = 0.0;      // mean per-step entropy
};

// Loss and (optionally) accumulated gradients over the given sample
// indices. loss = -L_CLIP - entropy_coef * L_ent + value_coef * L_VF.
LossStats ppo_loss(const Trajectory& batch, const Targets& targets,
                   const std::vector<int>& idx, const PolicyParams& p,
                   const ActionLayout& layout, const TrainConfig& cfg,
                   MlpGrads* actor_grads, MlpGrads* critic_grads);

// Adaptive-moment step on both networks.
void sga_update(PolicyParams& p, const MlpGrads& actor_grads,
                const MlpGrads& critic_grads, double lr);

struct RolloutBatch {
  std::vector<Trajectory> agents;
  std::vector<std::vector<double>> episode_returns;  // [agent][episode]
  int episodes = 0;
  int steps_per_agent = 0;
};

// Whole-episode collection until every agent holds >= batch_size steps.
// Episode e uses env seed mix(seed, episode_offset + e); results are
// ordered by episode index, so the batch is identical for any worker
// count. Policies are frozen for the duration of the call.
RolloutBatch collect_rollouts(const Scenario& sc,
                              const std::vector<PolicyParams>& policies,
                              int batch_size, std::uint64_t seed,
                              std::uint64_t episode_offset, int workers);

struct IterationMetrics {
  int iteration = 0;
  int agent = 0;
  double mean_reward = 0.0;  // per-episode aggregated reward
  double min_reward = 0.0;
  double max_reward = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  long steps_sampled = 0;
};

struct TrainResult {
  std::vector<PolicyParams> policies;
  std::vector<IterationMetrics> metrics;
  int completed_iterations = 0;
  bool diverged = false;
};

// Collect / target / update loop. A non-finite loss aborts the run: the
// pre-iteration parameters are restored and `diverged` is set. Callbacks
// (either may be empty) receive metric rows and checkpoint snapshots.
TrainResult train(
    const Scenario& sc, const TrainConfig& cfg,
    const std::function<void(const IterationMetrics&)>& on_metrics = {},
    const std::function<void(int, const std::vector<PolicyParams>&)>&
        on_checkpoint = {});

// FNV-1a over the technology catalog fields that shape policies
// (identity, investability, grid sizes): the checkpoint compatibility key.
std::uint64_t tech_set_hash(const Scenario& sc);

struct CheckpointParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary, versioned, atomic (tmp + rename); save/load round-trips
// bit-exactly, including optimizer state.
void save_checkpoint(const std::string& path,
                     const std::vector<PolicyParams>& policies,
                     const Scenario& sc);
std::vector<PolicyParams> load_checkpoint(const std::string& path,
                                          const Scenario& sc);

}  // namespace lemsim
