#include "lemsim/ippo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <thread>

#include "lemsim/rng.hpp"

namespace lemsim {

namespace {

int total_cardinality(const ActionLayout& layout) {
  int s = 0;
  for (const auto& d : layout.dims) s += d.cardinality;
  return s;
}

void fail_cfg(const char* field, const char* why) {
  throw std::invalid_argument(std::string("train config: ") + field + " " +
                              why);
}

}  // namespace

void TrainConfig::validate() const {
  if (clip_eps <= 0) fail_cfg("clip_eps", "must be > 0");
  if (entropy_coef < 0) fail_cfg("entropy_coef", "must be >= 0");
  if (value_coef < 0) fail_cfg("value_coef", "must be >= 0");
  if (batch_size <= 0) fail_cfg("batch_size", "must be > 0");
  if (minibatch_size < 0) fail_cfg("minibatch_size", "must be >= 0");
  if (epochs < 1) fail_cfg("epochs", "must be >= 1");
  if (lr <= 0) fail_cfg("lr", "must be > 0");
  if (gamma <= 0 || gamma > 1) fail_cfg("gamma", "must be in (0,1]");
  if (gae_lambda < 0 || gae_lambda > 1)
    fail_cfg("gae_lambda", "must be in [0,1]");
  if (hidden.empty()) fail_cfg("hidden", "needs at least one layer");
  for (int h : hidden)
    if (h <= 0) fail_cfg("hidden", "layer sizes must be > 0");
  if (iterations < 0) fail_cfg("iterations", "must be >= 0");
  if (checkpoint_interval <= 0)
    fail_cfg("checkpoint_interval", "must be > 0");
  if (workers < 1) fail_cfg("workers", "must be >= 1");
}

PolicyParams make_policy(int obs_size, const std::vector<int>& hidden,
                         const ActionLayout& layout, std::mt19937_64& rng) {
  PolicyParams p;
  p.actor = make_mlp(obs_size, hidden, total_cardinality(layout), 0.01, rng);
  p.critic = make_mlp(obs_size, hidden, 1, 1.0, rng);
  p.actor_opt = Adam::zeros_like(p.actor);
  p.critic_opt = Adam::zeros_like(p.critic);
  return p;
}

double ActorDist::log_prob(const std::vector<int>& action) const {
  double lp = 0.0;
  for (std::size_t d = 0; d < probs.size(); ++d)
    lp += std::log(probs[d](action[d]));
  return lp;
}

double ActorDist::entropy() const {
  double h = 0.0;
  for (const auto& p : probs)
    for (int k = 0; k < p.size(); ++k)
      if (p(k) > 0.0) h -= p(k) * std::log(p(k));
  return h;
}

ActorDist forward_actor(const PolicyParams& p, const Eigen::VectorXd& obs,
                        const std::vector<std::uint8_t>& mask,
                        const ActionLayout& layout, MlpCache* cache) {
  Eigen::VectorXd logits = mlp_forward(p.actor, obs, cache);
  ActorDist dist;
  int off = 0;
  for (std::size_t d = 0; d < layout.dims.size(); ++d) {
    int card = layout.dims[d].cardinality;
    Eigen::VectorXd pr(card);
    if (!mask[d]) {
      pr.setZero();
      pr(0) = 1.0;  // dead dimension: only index 0 is legal
    } else {
      Eigen::VectorXd z = logits.segment(off, card);
      double m = z.maxCoeff();
      pr = (z.array() - m).exp();
      pr /= pr.sum();
    }
    dist.probs.push_back(std::move(pr));
    off += card;
  }
  return dist;
}

std::vector<int> sample_action(const ActorDist& dist, std::mt19937_64& rng) {
  std::vector<int> a(dist.probs.size(), 0);
  for (std::size_t d = 0; d < dist.probs.size(); ++d) {
    const Eigen::VectorXd& p = dist.probs[d];
    double u = rand_u01(rng), cum = 0.0;
    int pick = int(p.size()) - 1;
    for (int k = 0; k < p.size(); ++k) {
      cum += p(k);
      if (u < cum) {
        pick = k;
        break;
      }
    }
    a[d] = pick;
  }
  return a;
}

Targets compute_targets(const Trajectory& t, double gamma, double lambda) {
  int n = t.size();
  if (n == 0) return {};
  if (!t.done[n - 1])
    throw std::logic_error("trajectory must end on a terminal step");
  Targets out;
  out.v_target.resize(n);
  out.advantage.resize(n);
  double gae = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    double next_v = t.done[i] ? 0.0 : t.values[i + 1];
    double delta = t.rewards[i] + gamma * next_v - t.values[i];
    gae = delta + gamma * lambda * (t.done[i] ? 0.0 : gae);
    out.advantage[i] = gae;
    out.v_target[i] = gae + t.values[i];
  }
  return out;
}

LossStats ppo_loss(const Trajectory& batch, const Targets& targets,
                   const std::vector<int>& idx, const PolicyParams& p,
                   const ActionLayout& layout, const TrainConfig& cfg,
                   MlpGrads* actor_grads, MlpGrads* critic_grads) {
  const int n = static_cast<int>(idx.size());
  double adv_mean = 0.0, adv_std = 1.0;
  if (cfg.normalize_advantage && n > 1) {
    for (int i : idx) adv_mean += targets.advantage[i];
    adv_mean /= n;
    double s2 = 0.0;
    for (int i : idx) {
      double d = targets.advantage[i] - adv_mean;
      s2 += d * d;
    }
    adv_std = std::sqrt(s2 / n) + 1e-8;
  } else {
    adv_mean = 0.0;
  }

  LossStats st;
  MlpCache ac, cc;
  for (int i : idx) {
    double adv = (targets.advantage[i] - adv_mean) / adv_std;
    ActorDist dist = forward_actor(p, batch.obs[i], batch.masks[i], layout,
                                   actor_grads ? &ac : nullptr);
    double lp = dist.log_prob(batch.actions[i]);
    double ratio = std::exp(lp - batch.logp[i]);
    double lo = 1.0 - cfg.clip_eps, hi = 1.0 + cfg.clip_eps;
    double surr = std::min(ratio * adv, std::clamp(ratio, lo, hi) * adv);
    bool clip_active = ratio * adv > std::clamp(ratio, lo, hi) * adv;
    double ent = dist.entropy();
    st.policy_loss -= surr / n;
    st.entropy += ent / n;

    Eigen::VectorXd v =
        mlp_forward(p.critic, batch.obs[i], critic_grads ? &cc : nullptr);
    double verr = v(0) - targets.v_target[i];
    st.value_loss += verr * verr / n;

    if (actor_grads) {
      // d(-L_CLIP)/d(log pi) = -ratio*adv/n unless the clip is active.
      double dlp = clip_active ? 0.0 : -ratio * adv / n;
      Eigen::VectorXd dlogits(p.actor.output_size());
      int off = 0;
      for (std::size_t d = 0; d < layout.dims.size(); ++d) {
        const Eigen::VectorXd& pr = dist.probs[d];
        int card = layout.dims[d].cardinality;
        double hd = 0.0;
        for (int k = 0; k < card; ++k)
          if (pr(k) > 0.0) hd -= pr(k) * std::log(pr(k));
        for (int k = 0; k < card; ++k) {
          double onehot = k == batch.actions[i][d] ? 1.0 : 0.0;
          double g = dlp * (onehot - pr(k));
          // d(-h*L_ent)/dlogit_k = (h/n) * p_k (log p_k + H_d)
          if (pr(k) > 0.0)
            g += cfg.entropy_coef / n * pr(k) * (std::log(pr(k)) + hd);
          dlogits(off + k) = g;
        }
        off += card;
      }
      mlp_backward(p.actor, ac, dlogits, *actor_grads);
    }
    if (critic_grads) {
      Eigen::VectorXd dv(1);
      dv(0) = cfg.value_coef * 2.0 * verr / n;
      mlp_backward(p.critic, cc, dv, *critic_grads);
    }
  }
  st.loss = st.policy_loss - cfg.entropy_coef * st.entropy +
            cfg.value_coef * st.value_loss;
  return st;
}

void sga_update(PolicyParams& p, const MlpGrads& actor_grads,
                const MlpGrads& critic_grads, double lr) {
  p.actor_opt.update(p.actor, actor_grads, lr);
  p.critic_opt.update(p.critic, critic_grads, lr);
}

RolloutBatch collect_rollouts(const Scenario& sc,
                              const std::vector<PolicyParams>& policies,
                              int batch_size, std::uint64_t seed,
                              std::uint64_t episode_offset, int workers) {
  const int ep_len = sc.total_steps();
  const int episodes = (batch_size + ep_len - 1) / ep_len;
  const int n_agents = static_cast<int>(sc.agents.size());

  struct Slot {
    std::vector<Trajectory> traj;
    std::vector<double> returns;
  };
  std::vector<Slot> slots(episodes);

  auto run_episode = [&](int e) {
    MarketEnv env(sc);
    const ActionLayout& layout = env.layout();
    Slot& slot = slots[e];
    slot.traj.resize(n_agents);
    slot.returns.assign(n_agents, 0.0);
    StepOutcome out = env.reset(mix_seed(seed, episode_offset + e));
    std::mt19937_64 arng(
        mix_seed(seed ^ 0x9e3779b97f4a7c15ULL, episode_offset + e));
    std::vector<std::vector<int>> acts(n_agents);
    while (!out.done) {
      for (int i = 0; i < n_agents; ++i) {
        Trajectory& tr = slot.traj[i];
        Eigen::VectorXd obs = Eigen::Map<const Eigen::VectorXd>(
            out.obs[i].data(), long(out.obs[i].size()));
        ActorDist dist =
            forward_actor(policies[i], obs, out.masks[i], layout);
        acts[i] = sample_action(dist, arng);
        tr.obs.push_back(std::move(obs));
        tr.actions.push_back(acts[i]);
        tr.masks.push_back(out.masks[i]);
        tr.logp.push_back(dist.log_prob(acts[i]));
        tr.values.push_back(mlp_forward(policies[i].critic, tr.obs.back())(0));
      }
      out = env.step(acts);
      for (int i = 0; i < n_agents; ++i) {
        slot.traj[i].rewards.push_back(out.rewards[i]);
        slot.traj[i].done.push_back(out.done ? 1 : 0);
        slot.returns[i] += out.rewards[i];
      }
    }
  };

  int w = std::clamp(workers, 1, episodes);
  if (w == 1) {
    for (int e = 0; e < episodes; ++e) run_episode(e);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(w);
    for (int t = 0; t < w; ++t)
      pool.emplace_back([&, t] {
        try {
          for (int e = t; e < episodes; e += w) run_episode(e);
        } catch (...) {
          errs[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& err : errs)
      if (err) std::rethrow_exception(err);
  }

  RolloutBatch batch;
  batch.agents.resize(n_agents);
  batch.episode_returns.resize(n_agents);
  batch.episodes = episodes;
  batch.steps_per_agent = episodes * ep_len;
  for (int e = 0; e < episodes; ++e)
    for (int i = 0; i < n_agents; ++i) {
      Trajectory& dst = batch.agents[i];
      Trajectory& src = slots[e].traj[i];
      dst.obs.insert(dst.obs.end(), src.obs.begin(), src.obs.end());
      dst.actions.insert(dst.actions.end(), src.actions.begin(),
                         src.actions.end());
      dst.masks.insert(dst.masks.end(), src.masks.begin(), src.masks.end());
      dst.logp.insert(dst.logp.end(), src.logp.begin(), src.logp.end());
      dst.rewards.insert(dst.rewards.end(), src.rewards.begin(),
                         src.rewards.end());
      dst.values.insert(dst.values.end(), src.values.begin(),
                        src.values.end());
      dst.done.insert(dst.done.end(), src.done.begin(), src.done.end());
      batch.episode_returns[i].push_back(slots[e].returns[i]);
    }
  return batch;
}

TrainResult train(
    const Scenario& sc, const TrainConfig& cfg,
    const std::function<void(const IterationMetrics&)>& on_metrics,
    const std::function<void(int, const std::vector<PolicyParams>&)>&
        on_checkpoint) {
  sc.validate();
  cfg.validate();
  const ActionLayout layout = ActionLayout::build(sc);
  const int n = static_cast<int>(sc.agents.size());
  const int obs_size = MarketEnv(sc).obs_size();

  TrainResult res;
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xA11CE000ULL + i));
    res.policies.push_back(make_policy(obs_size, cfg.hidden, layout, rng));
  }
  if (on_checkpoint) on_checkpoint(0, res.policies);

  auto t0 = std::chrono::steady_clock::now();
  std::uint64_t ep_off = 0;
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    if (cfg.wall_clock_cap_s > 0) {
      double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      if (elapsed > cfg.wall_clock_cap_s) break;
    }
    RolloutBatch batch = collect_rollouts(sc, res.policies, cfg.batch_size,
                                          cfg.seed, ep_off, cfg.workers);
    ep_off += batch.episodes;

    std::vector<PolicyParams> snapshot = res.policies;
    bool bad = false;
    std::vector<LossStats> agg(n);
    for (int a = 0; a < n && !bad; ++a) {
      const Trajectory& traj = batch.agents[a];
      Targets targets = compute_targets(traj, cfg.gamma, cfg.gae_lambda);
      const int total = traj.size();
      int mbs = cfg.minibatch_size == 0
                    ? total
                    : std::min(cfg.minibatch_size, total);
      std::mt19937_64 shuffle_rng(
          mix_seed(cfg.seed ^ 0x51a5511eULL, std::uint64_t(iter) * 4096 + a));
      std::vector<int> order(total);
      for (int i = 0; i < total; ++i) order[i] = i;
      int calls = 0;
      for (int epoch = 0; epoch < cfg.epochs && !bad; ++epoch) {
        if (mbs < total)
          for (int i = total - 1; i > 0; --i)
            std::swap(order[i], order[rand_below(shuffle_rng, i + 1)]);
        for (int start = 0; start < total && !bad; start += mbs) {
          int end = std::min(start + mbs, total);
          std::vector<int> idx(order.begin() + start, order.begin() + end);
          MlpGrads ag = MlpGrads::zeros_like(res.policies[a].actor);
          MlpGrads cg = MlpGrads::zeros_like(res.policies[a].critic);
          LossStats st = ppo_loss(traj, targets, idx, res.policies[a],
                                  layout, cfg, &ag, &cg);
          if (!std::isfinite(st.loss)) {
            bad = true;
            break;
          }
          sga_update(res.policies[a], ag, cg, cfg.lr);
          agg[a].loss += st.loss;
          agg[a].policy_loss += st.policy_loss;
          agg[a].value_loss += st.value_loss;
          agg[a].entropy += st.entropy;
          ++calls;
        }
      }
      if (calls > 0) {
        agg[a].loss /= calls;
        agg[a].policy_loss /= calls;
        agg[a].value_loss /= calls;
        agg[a].entropy /= calls;
      }
    }
    if (bad) {
      res.policies = std::move(snapshot);
      res.diverged = true;
      break;
    }
    for (int a = 0; a < n; ++a) {
      const auto& r = batch.episode_returns[a];
      IterationMetrics m;
      m.iteration = iter;
      m.agent = a;
      m.mean_reward = 0.0;
      m.min_reward = r.front();
      m.max_reward = r.front();
      for (double x : r) {
        m.mean_reward += x;
        m.min_reward = std::min(m.min_reward, x);
        m.max_reward = std::max(m.max_reward, x);
      }
      m.mean_reward /= double(r.size());
      m.policy_loss = agg[a].policy_loss;
      m.value_loss = agg[a].value_loss;
      m.entropy = agg[a].entropy;
      m.steps_sampled = batch.steps_per_agent;
      res.metrics.push_back(m);
      if (on_metrics) on_metrics(m);
    }
    res.completed_iterations = iter;
    if (on_checkpoint && iter % cfg.checkpoint_interval == 0)
      on_checkpoint(iter, res.policies);
  }
  return res;
}

std::uint64_t tech_set_hash(const Scenario& sc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto mix_d = [&](double v) { mix(&v, sizeof v); };
  auto mix_i = [&](int v) { mix(&v, sizeof v); };
  for (const auto& t : sc.techs) {
    const char* name = tech_name(t.id);
    mix(name, std::strlen(name));
    mix_d(t.max_invest_mw);
    mix_d(t.ess_duration_hours);
    mix_i(t.is_res ? 1 : 0);
  }
  mix_i(sc.quantity_steps);
  mix_i(sc.price_steps);
  mix_i(sc.soc_steps);
  return h;
}

namespace {

constexpr char kMagic[8] = {'L', 'E', 'M', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::string buf;
  void bytes(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i64(std::int64_t v) { bytes(&v, 8); }
  void mat(const Eigen::MatrixXd& m) {
    u32(std::uint32_t(m.rows()));
    u32(std::uint32_t(m.cols()));
    bytes(m.data(), sizeof(double) * m.size());
  }
  void vec(const Eigen::VectorXd& v) {
    u32(std::uint32_t(v.size()));
    bytes(v.data(), sizeof(double) * v.size());
  }
};

struct Reader {
  const char* p;
  const char* end;
  void bytes(void* out, std::size_t n) {
    if (std::size_t(end - p) < n)
      throw CheckpointParseError("checkpoint truncated");
    std::memcpy(out, p, n);
    p += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    bytes(&v, 8);
    return v;
  }
  Eigen::MatrixXd mat() {
    std::uint32_t r = u32(), c = u32();
    if (r > 1u << 20 || c > 1u << 20)
      throw CheckpointParseError("absurd tensor shape");
    Eigen::MatrixXd m(r, c);
    bytes(m.data(), sizeof(double) * m.size());
    return m;
  }
  Eigen::VectorXd vec() {
    std::uint32_t n = u32();
    if (n > 1u << 24) throw CheckpointParseError("absurd vector length");
    Eigen::VectorXd v(n);
    bytes(v.data(), sizeof(double) * v.size());
    return v;
  }
};

void write_mlp(Writer& w, const Mlp& net) {
  w.u32(std::uint32_t(net.n_layers()));
  for (int l = 0; l < net.n_layers(); ++l) {
    w.mat(net.w[l]);
    w.vec(net.b[l]);
  }
}

Mlp read_mlp(Reader& r) {
  Mlp net;
  std::uint32_t n = r.u32();
  if (n == 0 || n > 64) throw CheckpointParseError("bad layer count");
  for (std::uint32_t l = 0; l < n; ++l) {
    net.w.push_back(r.mat());
    net.b.push_back(r.vec());
    if (net.b.back().size() != net.w.back().rows())
      throw CheckpointParseError("layer shape mismatch");
  }
  return net;
}

void write_adam(Writer& w, const Adam& a) {
  w.i64(a.t);
  w.u32(std::uint32_t(a.mw.size()));
  for (std::size_t l = 0; l < a.mw.size(); ++l) {
    w.mat(a.mw[l]);
    w.mat(a.vw[l]);
    w.vec(a.mb[l]);
    w.vec(a.vb[l]);
  }
}

Adam read_adam(Reader& r) {
  Adam a;
  a.t = r.i64();
  std::uint32_t n = r.u32();
  if (n > 64) throw CheckpointParseError("bad layer count");
  for (std::uint32_t l = 0; l < n; ++l) {
    a.mw.push_back(r.mat());
    a.vw.push_back(r.mat());
    a.mb.push_back(r.vec());
    a.vb.push_back(r.vec());
  }
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<PolicyParams>& policies,
                     const Scenario& sc) {
  const ActionLayout layout = ActionLayout::build(sc);
  Writer w;
  w.bytes(kMagic, 8);
  w.u32(kVersion);
  w.u64(tech_set_hash(sc));
  w.u32(std::uint32_t(layout.dims.size()));
  for (const auto& d : layout.dims) {
    w.u32(std::uint32_t(d.channel));
    w.u32(std::uint32_t(d.tech));
    w.u32(std::uint32_t(d.kind));
    w.u32(std::uint32_t(d.cardinality));
  }
  w.u32(std::uint32_t(policies.size()));
  for (const auto& p : policies) {
    write_mlp(w, p.actor);
    write_mlp(w, p.critic);
    write_adam(w, p.actor_opt);
    write_adam(w, p.critic_opt);
  }

  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f.write(w.buf.data(), std::streamsize(w.buf.size()));
    if (!f) throw std::runtime_error("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move " + tmp + " into place");
}

std::vector<PolicyParams> load_checkpoint(const std::string& path,
                                          const Scenario& sc) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointParseError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r{buf.data(), buf.data() + buf.size()};

  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointParseError("not a checkpoint file");
  if (r.u32() != kVersion)
    throw CheckpointMismatchError("unsupported checkpoint version");
  if (r.u64() != tech_set_hash(sc))
    throw CheckpointMismatchError(
        "checkpoint was trained against a different technology set");
  const ActionLayout layout = ActionLayout::build(sc);
  std::uint32_t nd = r.u32();
  if (nd != layout.dims.size())
    throw CheckpointMismatchError("action layout width differs");
  for (const auto& d : layout.dims) {
    bool ok = r.u32() == std::uint32_t(d.channel) &&
              r.u32() == std::uint32_t(d.tech) &&
              r.u32() == std::uint32_t(d.kind) &&
              r.u32() == std::uint32_t(d.cardinality);
    if (!ok) throw CheckpointMismatchError("action layout differs");
  }
  std::uint32_t n_agents = r.u32();
  if (n_agents != sc.agents.size())
    throw CheckpointMismatchError("agent count differs");

  std::vector<PolicyParams> out;
  const int obs_size = MarketEnv(sc).obs_size();
  for (std::uint32_t i = 0; i < n_agents; ++i) {
    PolicyParams p;
    p.actor = read_mlp(r);
    p.critic = read_mlp(r);
    p.actor_opt = read_adam(r);
    p.critic_opt = read_adam(r);
    if (p.actor.input_size() != obs_size ||
        p.critic.input_size() != obs_size)
      throw CheckpointMismatchError("observation width differs");
    if (p.actor.output_size() != total_cardinality(layout))
      throw CheckpointMismatchError("logit width differs");
    out.push_back(std::move(p));
  }
  if (r.p != r.end) throw CheckpointParseError("trailing bytes");
  return out;
}

}  // namespace lemsim
