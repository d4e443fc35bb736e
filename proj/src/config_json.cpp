#include "config_json.hpp"

#include "burstscale/burst.hpp"
#include "burstscale/engine.hpp"
#include "burstscale/forecast.hpp"
#include "burstscale/perfmodel.hpp"
#include "burstscale/rl.hpp"
#include "burstscale/sim.hpp"

namespace burstscale::json_io {

json to_json(const forecast::ForecasterConfig& c) {
  return {{"input_length", c.input_length},     {"horizon", c.horizon},
          {"quantiles", c.quantiles},           {"season", c.season},
          {"learning_rate", c.learning_rate},   {"iterations", c.iterations},
          {"plateau_window", c.plateau_window}, {"plateau_tolerance", c.plateau_tolerance}};
}

void from_json_strict(const json& j, forecast::ForecasterConfig& c) {
  ObjectReader r(j, "forecaster");
  r.read("input_length", c.input_length);
  r.read("horizon", c.horizon);
  r.read("quantiles", c.quantiles);
  r.read("season", c.season);
  r.read("learning_rate", c.learning_rate);
  r.read("iterations", c.iterations);
  r.read("plateau_window", c.plateau_window);
  r.read("plateau_tolerance", c.plateau_tolerance);
  r.finish();
}

json to_json(const burst::DetectorConfig& c) {
  return {{"history", c.history},
          {"nearest", c.nearest},
          {"distance_threshold", c.distance_threshold},
          {"loss_threshold", c.loss_threshold}};
}

void from_json_strict(const json& j, burst::DetectorConfig& c) {
  ObjectReader r(j, "detector");
  r.read("history", c.history);
  r.read("nearest", c.nearest);
  r.read("distance_threshold", c.distance_threshold);
  r.read("loss_threshold", c.loss_threshold);
  r.finish();
}

json to_json(const burst::HandlerConfig& c) {
  return {{"fit_window", c.fit_window},
          {"fit", c.fit},
          {"defaults", {{"c", c.defaults.c}, {"phi1", c.defaults.phi1}, {"phi2", c.defaults.phi2}}},
          {"bootstrap",
           {{"iterations", c.bootstrap.iterations},
            {"percentile", c.bootstrap.percentile},
            {"confidence", c.bootstrap.confidence}}},
          {"seed", c.seed}};
}

void from_json_strict(const json& j, burst::HandlerConfig& c) {
  ObjectReader r(j, "handler");
  r.read("fit_window", c.fit_window);
  r.read("fit", c.fit);
  if (const json* d = r.child("defaults")) {
    ObjectReader rd(*d, "handler.defaults");
    rd.read("c", c.defaults.c);
    rd.read("phi1", c.defaults.phi1);
    rd.read("phi2", c.defaults.phi2);
    rd.finish();
  }
  if (const json* b = r.child("bootstrap")) {
    ObjectReader rb(*b, "handler.bootstrap");
    rb.read("iterations", c.bootstrap.iterations);
    rb.read("percentile", c.bootstrap.percentile);
    rb.read("confidence", c.bootstrap.confidence);
    rb.finish();
  }
  r.read("seed", c.seed);
  r.finish();
}

json to_json(const perf::SvrConfig& c) {
  return {{"C", c.C},
          {"epsilon", c.epsilon},
          {"gamma", c.gamma},
          {"tolerance", c.tolerance},
          {"max_iterations", c.max_iterations}};
}

void from_json_strict(const json& j, perf::SvrConfig& c) {
  ObjectReader r(j, "perfmodel");
  r.read("C", c.C);
  r.read("epsilon", c.epsilon);
  r.read("gamma", c.gamma);
  r.read("tolerance", c.tolerance);
  r.read("max_iterations", c.max_iterations);
  r.finish();
}

json to_json(const rl::RlConfig& c) {
  return {{"gamma", c.gamma},
          {"sigma", c.sigma},
          {"beta", c.beta},
          {"ru_knee", c.ru_knee},
          {"slo_ms", c.slo_ms},
          {"alpha", c.alpha},
          {"clip", c.clip},
          {"epochs", c.epochs},
          {"rollout_length", c.rollout_length},
          {"minibatch", c.minibatch},
          {"hidden", c.hidden},
          {"learning_rate", c.learning_rate},
          {"gae_lambda", c.gae_lambda},
          {"entropy_coef", c.entropy_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"reward_floor", c.reward_floor},
          {"validation_episodes", c.validation_episodes},
          {"workload_history", c.workload_history},
          {"in_max", c.in_max},
          {"seed", c.seed}};
}

void from_json_strict(const json& j, rl::RlConfig& c) {
  ObjectReader r(j, "rl");
  r.read("gamma", c.gamma);
  r.read("sigma", c.sigma);
  r.read("beta", c.beta);
  r.read("ru_knee", c.ru_knee);
  r.read("slo_ms", c.slo_ms);
  r.read("alpha", c.alpha);
  r.read("clip", c.clip);
  r.read("epochs", c.epochs);
  r.read("rollout_length", c.rollout_length);
  r.read("minibatch", c.minibatch);
  r.read("hidden", c.hidden);
  r.read("learning_rate", c.learning_rate);
  r.read("gae_lambda", c.gae_lambda);
  r.read("entropy_coef", c.entropy_coef);
  r.read("max_grad_norm", c.max_grad_norm);
  r.read("reward_floor", c.reward_floor);
  r.read("validation_episodes", c.validation_episodes);
  r.read("workload_history", c.workload_history);
  r.read("in_max", c.in_max);
  r.read("seed", c.seed);
  r.finish();
}

json to_json(const sim::ClusterConfig& c) {
  return {{"capacity", c.capacity}, {"base_rt", c.base_rt}, {"saturation", c.saturation},
          {"delay", c.delay},       {"in_max", c.in_max},   {"ru_noise", c.ru_noise},
          {"seed", c.seed},         {"slo_ms", c.slo_ms}};
}

void from_json_strict(const json& j, sim::ClusterConfig& c) {
  ObjectReader r(j, "sim");
  r.read("capacity", c.capacity);
  r.read("base_rt", c.base_rt);
  r.read("saturation", c.saturation);
  r.read("delay", c.delay);
  r.read("in_max", c.in_max);
  r.read("ru_noise", c.ru_noise);
  r.read("seed", c.seed);
  r.read("slo_ms", c.slo_ms);
  r.finish();
}

json to_json(const engine::EngineConfig& c) {
  return {{"forecaster", c.forecaster},
          {"train_steps", c.train_steps},
          {"hpa_target", c.hpa_target},
          {"hpa_tolerance", c.hpa_tolerance},
          {"hpa_cooldown", c.hpa_cooldown},
          {"perf_samples", c.perf_samples},
          {"perf_max_utilization", c.perf_max_utilization},
          {"perf_rt_cap", c.perf_rt_cap},
          {"perf_noise", c.perf_noise},
          {"rl_episodes", c.rl_episodes},
          {"rl_episode_length", c.rl_episode_length}};
}

void from_json_strict(const json& j, engine::EngineConfig& c) {
  ObjectReader r(j, "engine");
  r.read("forecaster", c.forecaster);
  r.read("train_steps", c.train_steps);
  r.read("hpa_target", c.hpa_target);
  r.read("hpa_tolerance", c.hpa_tolerance);
  r.read("hpa_cooldown", c.hpa_cooldown);
  r.read("perf_samples", c.perf_samples);
  r.read("perf_max_utilization", c.perf_max_utilization);
  r.read("perf_rt_cap", c.perf_rt_cap);
  r.read("perf_noise", c.perf_noise);
  r.read("rl_episodes", c.rl_episodes);
  r.read("rl_episode_length", c.rl_episode_length);
  r.finish();
}

}  // namespace burstscale::json_io
