#ifndef BURSTSCALE_RL_HPP_
#define BURSTSCALE_RL_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "burstscale/nn.hpp"
#include "burstscale/random.hpp"

namespace burstscale::rl {

struct RlConfig {
  double gamma = 0.99;
  int sigma = 2;             // pivot half-width
  double beta = 0.5;         // weight of the utilization reward
  double ru_knee = 0.9;      // lambda_RU
  double slo_ms = 16.0;      // lambda_RT
  double alpha = 1.0;        // response-time penalty factor
  // PPO
  double clip = 0.2;
  std::size_t epochs = 4;
  std::size_t rollout_length = 2048;
  std::size_t minibatch = 64;
  int hidden = 64;
  double learning_rate = 3e-4;
  double gae_lambda = 0.95;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  double reward_floor = 5.0;  // the learner sees max(reward, -reward_floor)
  // Deterministic-policy validation after every update; the best snapshot is kept. 0 disables.
  std::size_t validation_episodes = 8;
  // State
  std::size_t workload_history = 24;  // k recent workloads in the state
  int in_max = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

/// {p0 +- j} U {p1 +- j} for j in [0, sigma], clamped to [1, in_max], ascending and distinct.
std::vector<int> build_action_space(int p0, int p1, int sigma, int in_max);

double reward_ru(double ru, double knee);
double reward_rt(double rt, double slo_ms, double alpha);
double reward(double r_ru, double r_rt, double beta);
/// Combined reward of one measured step.
double step_reward(const RlConfig& config, double ru, double rt);

/// Policy output layout: slot = pivot * (2 sigma + 1) + offset + sigma, pivot 0 is
/// the prediction pivot p0 and pivot 1 the current-instance pivot p1.
std::size_t slot_count(int sigma);

struct DualPivotAction {
  int pivot = 0;
  int offset = 0;
  int instances = 1;  // clamp(pivot value + offset, 1, in_max)
};
DualPivotAction resolve_slot(std::size_t slot, int p0, int p1, int sigma, int in_max);

/// Slot probabilities merged by resolved instance count.
struct ActionDistribution {
  std::vector<int> counts;             // ascending
  std::vector<double> probabilities;   // aligned with counts
  std::vector<std::uint64_t> masks;    // slots resolving to each count
};
ActionDistribution merge_slots(const Eigen::VectorXd& logits, int p0, int p1, int sigma, int in_max);

struct ActionChoice {
  DualPivotAction action;
  double log_prob = 0;       // of the merged action
  std::uint64_t slot_mask = 0;
};

/// [RU, min(RT / slo, 10), IN / in_max, k recent workloads / scale, time features].
std::size_t state_dimension(const RlConfig& config);
Eigen::VectorXd make_state(const RlConfig& config, double ru, double rt, int instances,
                           std::span<const double> recent_workloads, double workload_scale,
                           const Eigen::VectorXd& time_features);

/// Policy and value networks with their configuration.
class Agent {
 public:
  Agent() = default;
  /// Freshly initialized networks; near-uniform initial policy.
  Agent(const RlConfig& config, std::size_t state_dim);
  Agent(const RlConfig& config, nn::Mlp<double> policy, nn::Mlp<double> value);

  ActionDistribution distribution(const Eigen::VectorXd& state, int p0, int p1) const;
  /// Samples from the merged distribution, or takes its mode when `deterministic`
  /// (ties go to the smaller count). `rng` is only used when sampling.
  ActionChoice act(const Eigen::VectorXd& state, int p0, int p1, bool deterministic, Rng* rng) const;
  double value(const Eigen::VectorXd& state) const;

  const RlConfig& config() const noexcept { return config_; }
  nn::Mlp<double>& policy() noexcept { return policy_; }
  const nn::Mlp<double>& policy() const noexcept { return policy_; }
  nn::Mlp<double>& value_net() noexcept { return value_; }
  const nn::Mlp<double>& value_net() const noexcept { return value_; }

 private:
  RlConfig config_;
  nn::Mlp<double> policy_;
  nn::Mlp<double> value_;
};

inline ActionChoice policy_act(const Agent& agent, const Eigen::VectorXd& state, int p0, int p1, bool deterministic,
                               Rng* rng) {
  return agent.act(state, p0, p1, deterministic, rng);
}

struct Advantages {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

/// Generalized advantage estimation; `last_value` bootstraps a non-terminal tail.
Advantages compute_gae(std::span<const double> rewards, std::span<const double> values,
                       const std::vector<bool>& terminals, double last_value, double gamma, double lambda);

/// min(r A, clip(r, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double clip);

struct PpoSample {
  Eigen::VectorXd state;
  std::uint64_t slot_mask = 0;
  double old_log_prob = 0;
  double advantage = 0;
  double ret = 0;
};

/// Mean of -surrogate - entropy_coef * slot entropy over the batch; adds the
/// analytic gradient w.r.t. the policy parameters to `grad` when given.
double policy_objective(const nn::Mlp<double>& policy, std::span<const PpoSample> batch, double clip,
                        double entropy_coef, Eigen::VectorXd* grad);
/// Mean of 0.5 (V(s) - return)^2.
double value_objective(const nn::Mlp<double>& value, std::span<const PpoSample> batch, Eigen::VectorXd* grad);

struct Transition {
  Eigen::VectorXd state;
  std::uint64_t slot_mask = 0;
  double log_prob = 0;
  double value = 0;
  double reward = 0;
  bool terminal = false;
};

struct Rollout {
  std::vector<Transition> steps;
  double last_value = 0;  // V of the state after the last step, unused when it is terminal
};

struct PpoDiagnostics {
  double policy_loss = 0;
  double value_loss = 0;
  double approx_kl = 0;
  double clip_fraction = 0;
  bool aborted = false;  // a non-finite loss appeared; parameters were restored
};

/// Agent plus optimizer state, owned by one trainer.
class Learner {
 public:
  explicit Learner(Agent agent);
  PpoDiagnostics update(const Rollout& rollout, Rng& rng);
  const Agent& agent() const noexcept { return agent_; }
  Agent& agent() noexcept { return agent_; }

 private:
  Agent agent_;
  nn::Adam<double> policy_opt_;
  nn::Adam<double> value_opt_;
};

/// Episodic environment whose actions are instance counts. States come with
/// the two pivots of the action space.
class Environment {
 public:
  struct Observation {
    Eigen::VectorXd state;
    int p0 = 1;
    int p1 = 1;
    bool done = false;  // the episode ended before the agent had to act
  };
  struct Feedback {
    double reward = 0;
    bool done = false;
    Observation next;
  };

  virtual ~Environment() = default;
  virtual Observation reset(std::uint64_t episode_seed) = 0;
  virtual Feedback step(int instances) = 0;
  virtual std::size_t state_dimension() const = 0;
  /// Training episodes may start from perturbed states; validation turns this off.
  virtual void set_exploration(bool) {}
};

/// Seed of training episode `e`; evaluation harnesses reuse it to replay the same episodes.
std::uint64_t episode_seed(const RlConfig& config, std::size_t episode);

struct TrainResult {
  Agent agent;
  std::vector<double> learning_curve;  // mean reward per episode
  std::vector<PpoDiagnostics> updates;
  std::vector<double> validation;  // mean deterministic reward after each update
  std::size_t best_update = 0;     // index into `validation` of the returned agent
};

/// PPO with updates whenever `rollout_length` transitions have accumulated
/// (and after the final episode). Zero episodes return the initialized agent.
TrainResult train_agent(Environment& env, const RlConfig& config, std::size_t episodes);

/// Mean reward of each episode under a policy picking uniformly among the distinct counts.
std::vector<double> evaluate_random_policy(Environment& env, const RlConfig& config,
                                           std::span<const std::uint64_t> episode_seeds);
std::vector<double> evaluate_agent(Environment& env, const Agent& agent, std::span<const std::uint64_t> episode_seeds,
                                   bool deterministic);

/// CSV `episode,mean_reward`.
void write_learning_curve(std::ostream& out, std::span<const double> curve);

std::string serialize(const Agent& agent);
Agent deserialize_agent(std::string_view text);
void save_agent(const std::filesystem::path& path, const Agent& agent);
Agent load_agent(const std::filesystem::path& path);

}  // namespace burstscale::rl

#endif  // BURSTSCALE_RL_HPP_
