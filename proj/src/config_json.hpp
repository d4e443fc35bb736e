// JSON echo and strict parsing of the per-module configuration structs.
#ifndef BURSTSCALE_SRC_CONFIG_JSON_HPP_
#define BURSTSCALE_SRC_CONFIG_JSON_HPP_

#include "json_io.hpp"

namespace burstscale {
namespace forecast {
struct ForecasterConfig;
}
namespace burst {
struct DetectorConfig;
struct HandlerConfig;
}  // namespace burst
namespace perf {
struct SvrConfig;
}
namespace rl {
struct RlConfig;
}
namespace sim {
struct ClusterConfig;
}
namespace engine {
struct EngineConfig;
}
}  // namespace burstscale

namespace burstscale::json_io {

json to_json(const forecast::ForecasterConfig& c);
void from_json_strict(const json& j, forecast::ForecasterConfig& c);

json to_json(const burst::DetectorConfig& c);
void from_json_strict(const json& j, burst::DetectorConfig& c);

json to_json(const burst::HandlerConfig& c);
void from_json_strict(const json& j, burst::HandlerConfig& c);

json to_json(const perf::SvrConfig& c);
void from_json_strict(const json& j, perf::SvrConfig& c);

json to_json(const rl::RlConfig& c);
void from_json_strict(const json& j, rl::RlConfig& c);

json to_json(const sim::ClusterConfig& c);
void from_json_strict(const json& j, sim::ClusterConfig& c);

json to_json(const engine::EngineConfig& c);
void from_json_strict(const json& j, engine::EngineConfig& c);

}  // namespace burstscale::json_io

#endif  // BURSTSCALE_SRC_CONFIG_JSON_HPP_
