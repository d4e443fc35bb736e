// Internal JSON helpers shared by the model and config serializers.
#ifndef BURSTSCALE_SRC_JSON_IO_HPP_
#define BURSTSCALE_SRC_JSON_IO_HPP_

#include <json.hpp>

#include <Eigen/Dense>

#include <set>
#include <string>

#include "burstscale/common.hpp"

namespace burstscale::json_io {

using nlohmann::json;

/// Reads optional keys of one JSON object and rejects any key it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string context) : object_(object), context_(std::move(context)) {
    if (!object_.is_object()) throw ValidationError(context_ + ": expected an object");
  }

  bool has(const char* key) const { return object_.contains(key); }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(context_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  template <typename T>
  T required(const char* key) {
    if (!object_.contains(key)) throw ValidationError(context_ + ": missing key '" + key + "'");
    T out{};
    read(key, out);
    return out;
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError(context_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& object_;
  std::string context_;
  std::set<std::string, std::less<>> seen_;
};

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& context) {
  if (!j.is_array()) throw ValidationError(context + ": expected a matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw ValidationError(context + ": ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Checks the envelope shared by every serialized artifact.
inline void check_format(const json& doc, const std::string& format, int version) {
  if (!doc.is_object() || doc.value("format", std::string{}) != format)
    throw ValidationError("expected a '" + format + "' document");
  if (doc.value("version", 0) != version)
    throw ValidationError(format + ": unsupported version " + std::to_string(doc.value("version", 0)));
}

inline json parse(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(what + ": malformed JSON: " + e.what());
  }
}

}  // namespace burstscale::json_io

#endif  // BURSTSCALE_SRC_JSON_IO_HPP_
