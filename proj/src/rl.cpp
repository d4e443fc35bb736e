#include "burstscale/rl.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "burstscale/common.hpp"
#include "config_json.hpp"

namespace burstscale::rl {

namespace {

constexpr const char* kFormat = "burstscale.agent";
constexpr int kVersion = 1;
constexpr double kRuCeiling = 1.0 - 1e-6;
constexpr double kRtStateCap = 10.0;

double log_sum_exp(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp().matrix();
  return p / p.sum();
}

double masked_log_prob(const Eigen::VectorXd& logits, std::uint64_t mask) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (mask >> j & 1U) m = std::max(m, logits[j]);
  }
  if (!std::isfinite(m)) return -std::numeric_limits<double>::infinity();
  double s = 0;
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (mask >> j & 1U) s += std::exp(logits[j] - m);
  }
  return m + std::log(s) - log_sum_exp(logits);
}

void clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0 && norm > max_norm) grad *= max_norm / norm;
}

nn::Mlp<double> mlp_from_json(const json_io::json& j, const char* what) {
  const auto sizes = j.at("sizes").get<std::vector<int>>();
  nn::Mlp<double> net(sizes);
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(params.size()) != net.parameter_count())
    throw ValidationError(std::string("agent: ") + what + " parameter count does not match its layer sizes");
  net.parameters() = Eigen::Map<const Eigen::VectorXd>(params.data(), net.parameter_count());
  return net;
}

json_io::json mlp_to_json(const nn::Mlp<double>& net) {
  return {{"sizes", net.sizes()}, {"parameters", json_io::vector_to_json(net.parameters())}};
}

}  // namespace

void RlConfig::validate() const {
  if (!(gamma >= 0 && gamma <= 1)) throw ValidationError("rl: gamma must lie in [0, 1]");
  if (!(beta > 0 && beta < 1)) throw ValidationError("rl: beta must lie in (0, 1)");
  if (sigma < 0 || slot_count(sigma) > 64) throw ValidationError("rl: sigma must lie in [0, 15]");
  if (!(ru_knee > 0 && ru_knee < 1)) throw ValidationError("rl: ru_knee must lie in (0, 1)");
  if (!(slo_ms > 0) || !(alpha > 0)) throw ValidationError("rl: slo_ms and alpha must be positive");
  if (!(clip > 0) || epochs == 0 || rollout_length == 0 || minibatch == 0 || hidden < 1)
    throw ValidationError("rl: clip, epochs, rollout_length, minibatch and hidden must be positive");
  if (!(learning_rate > 0) || !(gae_lambda >= 0 && gae_lambda <= 1) || !(entropy_coef >= 0))
    throw ValidationError("rl: require learning_rate > 0, gae_lambda in [0, 1], entropy_coef >= 0");
  if (in_max < 1) throw ValidationError("rl: in_max must be at least 1");
  if (!(reward_floor > 0)) throw ValidationError("rl: reward_floor must be positive");
}

std::vector<int> build_action_space(int p0, int p1, int sigma, int in_max) {
  if (p0 < 1 || p1 < 1) throw ValidationError("build_action_space: pivots must be at least 1");
  std::vector<int> out;
  for (int pivot : {p0, p1}) {
    for (int j = -sigma; j <= sigma; ++j) out.push_back(std::clamp(pivot + j, 1, in_max));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double reward_ru(double ru, double knee) {
  if (ru <= knee) return ru / knee;
  const double r = std::min(ru, kRuCeiling);
  return 2.0 - (1.0 - knee) / (1.0 - r);
}

double reward_rt(double rt, double slo_ms, double alpha) {
  if (rt <= slo_ms) return 1.0;
  return alpha * (slo_ms / rt - 2.0);
}

double reward(double r_ru, double r_rt, double beta) { return beta * r_ru + (1.0 - beta) * r_rt; }

double step_reward(const RlConfig& config, double ru, double rt) {
  return reward(reward_ru(ru, config.ru_knee), reward_rt(rt, config.slo_ms, config.alpha), config.beta);
}

std::size_t slot_count(int sigma) { return 2 * (2 * static_cast<std::size_t>(std::max(sigma, 0)) + 1); }

DualPivotAction resolve_slot(std::size_t slot, int p0, int p1, int sigma, int in_max) {
  const std::size_t width = 2 * static_cast<std::size_t>(sigma) + 1;
  if (slot >= 2 * width) throw ValidationError("resolve_slot: slot out of range");
  DualPivotAction a;
  a.pivot = static_cast<int>(slot / width);
  a.offset = static_cast<int>(slot % width) - sigma;
  a.instances = std::clamp((a.pivot == 0 ? p0 : p1) + a.offset, 1, in_max);
  return a;
}

ActionDistribution merge_slots(const Eigen::VectorXd& logits, int p0, int p1, int sigma, int in_max) {
  const std::size_t slots = slot_count(sigma);
  if (static_cast<std::size_t>(logits.size()) != slots)
    throw ValidationError("merge_slots: expected " + std::to_string(slots) + " logits");
  const Eigen::VectorXd p = softmax(logits);
  ActionDistribution out;
  out.counts = build_action_space(p0, p1, sigma, in_max);
  out.probabilities.assign(out.counts.size(), 0.0);
  out.masks.assign(out.counts.size(), 0);
  for (std::size_t s = 0; s < slots; ++s) {
    const int count = resolve_slot(s, p0, p1, sigma, in_max).instances;
    const auto idx = static_cast<std::size_t>(
        std::lower_bound(out.counts.begin(), out.counts.end(), count) - out.counts.begin());
    out.probabilities[idx] += p[static_cast<Eigen::Index>(s)];
    out.masks[idx] |= std::uint64_t{1} << s;
  }
  return out;
}

std::size_t state_dimension(const RlConfig& config) { return 3 + config.workload_history + 4; }

Eigen::VectorXd make_state(const RlConfig& config, double ru, double rt, int instances,
                           std::span<const double> recent_workloads, double workload_scale,
                           const Eigen::VectorXd& time_features) {
  const std::size_t k = config.workload_history;
  if (recent_workloads.size() != k) throw ValidationError("make_state: expected k recent workloads");
  if (time_features.size() != 4) throw ValidationError("make_state: expected four time features");
  if (!(workload_scale > 0)) throw ValidationError("make_state: workload scale must be positive");
  Eigen::VectorXd s(static_cast<Eigen::Index>(state_dimension(config)));
  s[0] = ru;
  s[1] = std::clamp(rt / config.slo_ms, 0.0, kRtStateCap);
  s[2] = static_cast<double>(instances) / config.in_max;
  for (std::size_t i = 0; i < k; ++i) s[3 + static_cast<Eigen::Index>(i)] = recent_workloads[i] / workload_scale;
  s.tail(4) = time_features;
  return s;
}

Agent::Agent(const RlConfig& config, std::size_t state_dim) : config_(config) {
  config_.validate();
  Rng rng(splitmix64(config.seed ^ 0x5eedULL));
  const int in = static_cast<int>(state_dim);
  policy_ = nn::Mlp<double>::initialized({in, config.hidden, config.hidden, static_cast<int>(slot_count(config.sigma))},
                                         rng, 0.01);
  value_ = nn::Mlp<double>::initialized({in, config.hidden, config.hidden, 1}, rng, 1.0);
}

Agent::Agent(const RlConfig& config, nn::Mlp<double> policy, nn::Mlp<double> value)
    : config_(config), policy_(std::move(policy)), value_(std::move(value)) {
  config_.validate();
  if (static_cast<std::size_t>(policy_.outputs()) != slot_count(config_.sigma) || value_.outputs() != 1 ||
      policy_.inputs() != value_.inputs())
    throw ValidationError("agent: network shapes do not match the configuration");
}

ActionDistribution Agent::distribution(const Eigen::VectorXd& state, int p0, int p1) const {
  return merge_slots(policy_.forward(state), p0, p1, config_.sigma, config_.in_max);
}

ActionChoice Agent::act(const Eigen::VectorXd& state, int p0, int p1, bool deterministic, Rng* rng) const {
  const Eigen::VectorXd logits = policy_.forward(state);
  const auto dist = merge_slots(logits, p0, p1, config_.sigma, config_.in_max);
  std::size_t pick = 0;
  if (deterministic) {
    for (std::size_t i = 1; i < dist.counts.size(); ++i) {
      if (dist.probabilities[i] > dist.probabilities[pick]) pick = i;
    }
  } else {
    if (rng == nullptr) throw ValidationError("agent: sampling needs a random generator");
    const double u = uniform01(*rng);
    double acc = 0;
    pick = dist.counts.size() - 1;
    for (std::size_t i = 0; i < dist.counts.size(); ++i) {
      acc += dist.probabilities[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
  }
  ActionChoice choice;
  choice.slot_mask = dist.masks[pick];
  const auto first_slot = static_cast<std::size_t>(std::countr_zero(choice.slot_mask));
  choice.action = resolve_slot(first_slot, p0, p1, config_.sigma, config_.in_max);
  choice.log_prob = masked_log_prob(logits, choice.slot_mask);
  return choice;
}

double Agent::value(const Eigen::VectorXd& state) const { return value_.forward(state)[0]; }

Advantages compute_gae(std::span<const double> rewards, std::span<const double> values,
                       const std::vector<bool>& terminals, double last_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || terminals.size() != n) throw ValidationError("compute_gae: length mismatch");
  Advantages out;
  out.advantages.resize(static_cast<Eigen::Index>(n));
  out.returns.resize(static_cast<Eigen::Index>(n));
  double next_adv = 0, next_value = last_value;
  for (std::size_t i = n; i-- > 0;) {
    const double live = terminals[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[static_cast<Eigen::Index>(i)] = next_adv;
    out.returns[static_cast<Eigen::Index>(i)] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

double policy_objective(const nn::Mlp<double>& policy, std::span<const PpoSample> batch, double clip,
                        double entropy_coef, Eigen::VectorXd* grad) {
  if (batch.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0;
  nn::Mlp<double>::Tape tape;
  for (const auto& s : batch) {
    const Eigen::VectorXd logits = policy.forward(s.state, grad ? &tape : nullptr);
    const Eigen::VectorXd p = softmax(logits);
    const double log_prob = masked_log_prob(logits, s.slot_mask);
    const double ratio = std::exp(log_prob - s.old_log_prob);
    const double unclipped = ratio * s.advantage;
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * s.advantage;
    double entropy = 0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      if (p[j] > 0) entropy -= p[j] * std::log(p[j]);
    }
    loss += (-std::min(unclipped, clipped) - entropy_coef * entropy) * inv_n;
    if (!grad) continue;
    // d log P(action) / d logits: restricted softmax over the merged slots minus the full softmax.
    const double prob_action = std::exp(log_prob);
    Eigen::VectorXd d_logits = Eigen::VectorXd::Zero(p.size());
    const double d_surrogate = unclipped <= clipped ? unclipped : 0.0;  // d J / d log P
    if (d_surrogate != 0.0) {
      for (Eigen::Index j = 0; j < p.size(); ++j) {
        const double in_mask = (s.slot_mask >> j & 1U) ? p[j] / prob_action : 0.0;
        d_logits[j] = -d_surrogate * (in_mask - p[j]);
      }
    }
    if (entropy_coef != 0.0) {
      for (Eigen::Index j = 0; j < p.size(); ++j) {
        const double log_pj = p[j] > 0 ? std::log(p[j]) : 0.0;
        d_logits[j] += entropy_coef * p[j] * (log_pj + entropy);
      }
    }
    policy.backward(tape, d_logits * inv_n, *grad);
  }
  return loss;
}

double value_objective(const nn::Mlp<double>& value, std::span<const PpoSample> batch, Eigen::VectorXd* grad) {
  if (batch.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0;
  nn::Mlp<double>::Tape tape;
  for (const auto& s : batch) {
    const double v = value.forward(s.state, grad ? &tape : nullptr)[0];
    const double err = v - s.ret;
    loss += 0.5 * err * err * inv_n;
    if (grad) value.backward(tape, Eigen::VectorXd::Constant(1, err * inv_n), *grad);
  }
  return loss;
}

Learner::Learner(Agent agent)
    : agent_(std::move(agent)),
      policy_opt_(agent_.policy().parameter_count(), agent_.config().learning_rate),
      value_opt_(agent_.value_net().parameter_count(), agent_.config().learning_rate) {}

PpoDiagnostics Learner::update(const Rollout& rollout, Rng& rng) {
  PpoDiagnostics diag;
  const auto& cfg = agent_.config();
  const std::size_t n = rollout.steps.size();
  if (n == 0) return diag;
  std::vector<double> rewards(n), values(n);
  std::vector<bool> terminals(n);
  for (std::size_t i = 0; i < n; ++i) {
    rewards[i] = rollout.steps[i].reward;
    values[i] = rollout.steps[i].value;
    terminals[i] = rollout.steps[i].terminal;
  }
  const auto gae = compute_gae(rewards, values, terminals, rollout.last_value, cfg.gamma, cfg.gae_lambda);
  Eigen::VectorXd adv = gae.advantages;
  if (n > 1) {
    const double mean = adv.mean();
    const double sd = std::sqrt((adv.array() - mean).square().sum() / static_cast<double>(n - 1));
    if (sd > 1e-8) adv = ((adv.array() - mean) / sd).matrix();
  }
  std::vector<PpoSample> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    samples[i] = {rollout.steps[i].state, rollout.steps[i].slot_mask, rollout.steps[i].log_prob, adv[ii],
                  gae.returns[ii]};
  }

  const Agent saved_agent = agent_;
  const auto saved_policy_opt = policy_opt_;
  const auto saved_value_opt = value_opt_;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PpoSample> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t from = 0; from < n; from += cfg.minibatch) {
      const std::size_t to = std::min(n, from + cfg.minibatch);
      batch.clear();
      for (std::size_t i = from; i < to; ++i) batch.push_back(samples[order[i]]);
      Eigen::VectorXd gp = Eigen::VectorXd::Zero(agent_.policy().parameter_count());
      Eigen::VectorXd gv = Eigen::VectorXd::Zero(agent_.value_net().parameter_count());
      const double lp = policy_objective(agent_.policy(), batch, cfg.clip, cfg.entropy_coef, &gp);
      const double lv = value_objective(agent_.value_net(), batch, &gv);
      if (!std::isfinite(lp) || !std::isfinite(lv) || !gp.allFinite() || !gv.allFinite()) {
        agent_ = saved_agent;
        policy_opt_ = saved_policy_opt;
        value_opt_ = saved_value_opt;
        diag.aborted = true;
        return diag;
      }
      clip_grad_norm(gp, cfg.max_grad_norm);
      clip_grad_norm(gv, cfg.max_grad_norm);
      policy_opt_.step(agent_.policy().parameters(), gp);
      value_opt_.step(agent_.value_net().parameters(), gv);
    }
  }

  diag.policy_loss = policy_objective(agent_.policy(), samples, cfg.clip, cfg.entropy_coef, nullptr);
  diag.value_loss = value_objective(agent_.value_net(), samples, nullptr);
  std::size_t clipped = 0;
  for (const auto& s : samples) {
    const double lp = masked_log_prob(agent_.policy().forward(s.state), s.slot_mask);
    diag.approx_kl += (s.old_log_prob - lp) / static_cast<double>(n);
    clipped += std::abs(std::exp(lp - s.old_log_prob) - 1.0) > cfg.clip ? 1 : 0;
  }
  diag.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
  return diag;
}

std::uint64_t episode_seed(const RlConfig& config, std::size_t episode) {
  return splitmix64(config.seed * 0x100000001b3ULL + episode);
}

TrainResult train_agent(Environment& env, const RlConfig& config, std::size_t episodes) {
  config.validate();
  Learner learner(Agent(config, env.state_dimension()));
  Rng rng(splitmix64(config.seed ^ 0xa11ce5ULL));
  TrainResult result;
  result.agent = learner.agent();
  std::vector<std::uint64_t> validation_seeds;
  for (std::size_t i = 0; i < config.validation_episodes; ++i)
    validation_seeds.push_back(splitmix64(config.seed ^ (0x0a11da7eULL + i)));
  double best = -std::numeric_limits<double>::infinity();
  env.set_exploration(true);
  Rollout rollout;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto obs = env.reset(episode_seed(config, e));
    double total = 0;
    std::size_t steps = 0;
    while (!obs.done) {
      const Agent& agent = learner.agent();
      const auto choice = agent.act(obs.state, obs.p0, obs.p1, false, &rng);
      const double v = agent.value(obs.state);
      auto fb = env.step(choice.action.instances);
      rollout.steps.push_back(
          {obs.state, choice.slot_mask, choice.log_prob, v, std::max(fb.reward, -config.reward_floor), fb.done});
      total += fb.reward;
      ++steps;
      if (fb.done) break;
      obs = std::move(fb.next);
    }
    if (!rollout.steps.empty()) rollout.steps.back().terminal = true;
    result.learning_curve.push_back(steps > 0 ? total / static_cast<double>(steps) : 0.0);
    if (rollout.steps.size() >= config.rollout_length || (e + 1 == episodes && !rollout.steps.empty())) {
      rollout.last_value = 0.0;
      result.updates.push_back(learner.update(rollout, rng));
      rollout.steps.clear();
      if (validation_seeds.empty()) {
        result.agent = learner.agent();
        continue;
      }
      env.set_exploration(false);
      auto scores = evaluate_agent(env, learner.agent(), validation_seeds, true);
      env.set_exploration(true);
      for (auto& x : scores) x = std::max(x, -config.reward_floor);
      const double score = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
      result.validation.push_back(score);
      if (score > best) {
        best = score;
        result.best_update = result.validation.size() - 1;
        result.agent = learner.agent();
      }
    }
  }
  return result;
}

std::vector<double> evaluate_random_policy(Environment& env, const RlConfig& config,
                                           std::span<const std::uint64_t> episode_seeds) {
  std::vector<double> out;
  Rng rng(splitmix64(config.seed ^ 0x7a4d0ULL));
  for (const auto seed : episode_seeds) {
    auto obs = env.reset(seed);
    double total = 0;
    std::size_t steps = 0;
    while (!obs.done) {
      const auto space = build_action_space(obs.p0, obs.p1, config.sigma, config.in_max);
      auto fb = env.step(space[uniform_index(rng, space.size())]);
      total += fb.reward;
      ++steps;
      if (fb.done) break;
      obs = std::move(fb.next);
    }
    out.push_back(steps > 0 ? total / static_cast<double>(steps) : 0.0);
  }
  return out;
}

std::vector<double> evaluate_agent(Environment& env, const Agent& agent, std::span<const std::uint64_t> episode_seeds,
                                   bool deterministic) {
  std::vector<double> out;
  Rng rng(splitmix64(agent.config().seed ^ 0xe7a1ULL));
  for (const auto seed : episode_seeds) {
    auto obs = env.reset(seed);
    double total = 0;
    std::size_t steps = 0;
    while (!obs.done) {
      auto fb = env.step(agent.act(obs.state, obs.p0, obs.p1, deterministic, &rng).action.instances);
      total += fb.reward;
      ++steps;
      if (fb.done) break;
      obs = std::move(fb.next);
    }
    out.push_back(steps > 0 ? total / static_cast<double>(steps) : 0.0);
  }
  return out;
}

void write_learning_curve(std::ostream& out, std::span<const double> curve) {
  out << "episode,mean_reward\n";
  for (std::size_t e = 0; e < curve.size(); ++e) out << e << ',' << format_double(curve[e]) << '\n';
}

std::string serialize(const Agent& agent) {
  json_io::json doc{{"format", kFormat},
                    {"version", kVersion},
                    {"config", json_io::to_json(agent.config())},
                    {"policy", mlp_to_json(agent.policy())},
                    {"value", mlp_to_json(agent.value_net())}};
  return doc.dump(1) + "\n";
}

Agent deserialize_agent(std::string_view text) {
  const auto doc = json_io::parse(text, "agent");
  json_io::check_format(doc, kFormat, kVersion);
  RlConfig config;
  json_io::from_json_strict(doc.at("config"), config);
  return Agent(config, mlp_from_json(doc.at("policy"), "policy"), mlp_from_json(doc.at("value"), "value"));
}

void save_agent(const std::filesystem::path& path, const Agent& agent) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize(agent);
}

Agent load_agent(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read agent file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_agent(ss.str());
}

}  // namespace burstscale::rl
