#include "burstscale/perfmodel.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "burstscale/common.hpp"
#include "config_json.hpp"

namespace burstscale::perf {

namespace {

constexpr const char* kFormat = "burstscale.svr";
constexpr int kVersion = 1;
constexpr double kTau = 1e-12;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

// Solves the epsilon-SVR dual over 2l variables (alpha, alpha*) with
// second-order working-set selection; returns beta = alpha - alpha* and rho.
struct SmoResult {
  Eigen::VectorXd beta;
  double rho = 0;
  bool converged = false;
  std::size_t iterations = 0;
};

SmoResult solve_epsilon_svr(const Eigen::MatrixXd& K, const Eigen::VectorXd& target, const SvrConfig& cfg) {
  const Eigen::Index l = K.rows();
  const Eigen::Index m = 2 * l;
  const double C = cfg.C;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd G(m);
  Eigen::VectorXi y(m);
  for (Eigen::Index i = 0; i < l; ++i) {
    G[i] = cfg.epsilon - target[i];
    y[i] = 1;
    G[i + l] = cfg.epsilon + target[i];
    y[i + l] = -1;
  }
  // Signed kernel row: Q(s, t) = y_s y_t K(s mod l, t mod l).
  auto q = [&](Eigen::Index s, Eigen::Index t) { return y[s] * y[t] * K(s % l, t % l); };
  auto qd = [&](Eigen::Index s) { return K(s % l, s % l); };
  auto is_upper = [&](Eigen::Index t) { return alpha[t] >= C; };
  auto is_lower = [&](Eigen::Index t) { return alpha[t] <= 0.0; };

  SmoResult result;
  for (result.iterations = 0; result.iterations < cfg.max_iterations; ++result.iterations) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < m; ++t) {
      if (y[t] == 1) {
        if (!is_upper(t) && -G[t] >= gmax) gmax = -G[t], i = t;
      } else {
        if (!is_lower(t) && G[t] >= gmax) gmax = G[t], i = t;
      }
    }
    if (i < 0) {
      result.converged = true;
      break;
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < m; ++t) {
      if (y[t] == 1) {
        if (is_lower(t)) continue;
        const double grad_diff = gmax + G[t];
        gmax2 = std::max(gmax2, G[t]);
        if (grad_diff > 0) {
          const double quad = qd(i) + qd(t) - 2.0 * y[i] * q(i, t);
          const double obj = -(grad_diff * grad_diff) / (quad > 0 ? quad : kTau);
          if (obj <= best) best = obj, j = t;
        }
      } else {
        if (is_upper(t)) continue;
        const double grad_diff = gmax - G[t];
        gmax2 = std::max(gmax2, -G[t]);
        if (grad_diff > 0) {
          const double quad = qd(i) + qd(t) + 2.0 * y[i] * q(i, t);
          const double obj = -(grad_diff * grad_diff) / (quad > 0 ? quad : kTau);
          if (obj <= best) best = obj, j = t;
        }
      }
    }
    if (gmax + gmax2 < cfg.tolerance || j < 0) {
      result.converged = true;
      break;
    }

    const double old_ai = alpha[i], old_aj = alpha[j];
    const double qij = q(i, j);
    if (y[i] != y[j]) {
      double quad = qd(i) + qd(j) + 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) alpha[j] = 0, alpha[i] = diff;
      } else {
        if (alpha[i] < 0) alpha[i] = 0, alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = C - diff;
      } else {
        if (alpha[j] > C) alpha[j] = C, alpha[i] = C + diff;
      }
    } else {
      double quad = qd(i) + qd(j) - 2.0 * qij;
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) alpha[i] = C, alpha[j] = sum - C;
      } else {
        if (alpha[j] < 0) alpha[j] = 0, alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) alpha[j] = C, alpha[i] = sum - C;
      } else {
        if (alpha[i] < 0) alpha[i] = 0, alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (Eigen::Index t = 0; t < m; ++t) G[t] += q(i, t) * dai + q(j, t) * daj;
  }

  // rho: mean of y*G over free variables, else the midpoint of the feasible range.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0;
  int nr_free = 0;
  for (Eigen::Index t = 0; t < m; ++t) {
    const double yg = y[t] * G[t];
    if (is_upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++nr_free;
      sum_free += yg;
    }
  }
  result.rho = nr_free > 0 ? sum_free / nr_free : (ub + lb) / 2.0;
  result.beta = alpha.head(l) - alpha.tail(l);
  return result;
}

}  // namespace

std::vector<PerfSample> parse_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("samples csv: empty input");
  const auto header = split_csv(line);
  auto col = [&](const char* name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError(std::string("samples csv: missing column '") + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ci = col("instances"), cw = col("workload"), cr = col("response_time");
  std::vector<PerfSample> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    ++row;
    const auto f = split_csv(line);
    if (f.size() <= std::max({ci, cw, cr})) throw RowError(row, "too few fields");
    PerfSample s;
    try {
      std::size_t pos = 0;
      s.instances = std::stoi(f[ci], &pos);
      if (pos != f[ci].size()) throw std::invalid_argument("instances");
      s.workload = std::stod(f[cw], &pos);
      if (pos != f[cw].size()) throw std::invalid_argument("workload");
      s.response_time = std::stod(f[cr], &pos);
      if (pos != f[cr].size()) throw std::invalid_argument("response_time");
    } catch (const std::exception&) {
      throw RowError(row, "non-numeric field");
    }
    if (s.instances < 1 || s.workload < 0 || !(s.response_time > 0))
      throw RowError(row, "require instances >= 1, workload >= 0, response_time > 0");
    out.push_back(s);
  }
  return out;
}

std::vector<PerfSample> load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read samples file " + path.string());
  return parse_samples_csv(in);
}

void write_samples_csv(std::ostream& out, std::span<const PerfSample> samples) {
  out << "instances,workload,response_time\n";
  for (const auto& s : samples)
    out << s.instances << ',' << format_double(s.workload) << ',' << format_double(s.response_time) << '\n';
}

SvrModel::SvrModel(Eigen::MatrixX2d support, Eigen::VectorXd coefficients, double bias, double gamma,
                   Eigen::RowVector2d feature_mean, Eigen::RowVector2d feature_scale, SvrConfig config)
    : support_(std::move(support)),
      coef_(std::move(coefficients)),
      bias_(bias),
      gamma_(gamma),
      mean_(feature_mean),
      scale_(feature_scale),
      config_(config) {
  if (support_.rows() != coef_.size()) throw ValidationError("svr: one coefficient per support vector");
  if (!(gamma_ > 0)) throw ValidationError("svr: gamma must be positive");
  if (!(scale_.array() > 0).all()) throw ValidationError("svr: feature scale must be positive");
}

Eigen::RowVector2d SvrModel::standardize(double instances, double workload) const {
  return (Eigen::RowVector2d(instances, workload) - mean_).cwiseQuotient(scale_);
}

double SvrModel::predict_standardized(const Eigen::RowVector2d& x) const {
  if (support_.rows() == 0) return bias_;
  const Eigen::VectorXd sq = (support_.rowwise() - x).rowwise().squaredNorm();
  return coef_.dot((-gamma_ * sq).array().exp().matrix()) + bias_;
}

double SvrModel::predict(double instances, double workload) const {
  return predict_standardized(standardize(instances, workload));
}

SvrModel train_svr(std::span<const PerfSample> samples, const SvrConfig& config) {
  if (samples.size() < 2) throw ValidationError("train_svr: need at least two samples");
  if (!(config.C > 0) || !(config.epsilon >= 0) || !(config.tolerance > 0))
    throw ValidationError("train_svr: require C > 0, epsilon >= 0, tolerance > 0");
  const auto l = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixX2d X(l, 2);
  Eigen::VectorXd target(l);
  for (Eigen::Index i = 0; i < l; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    X(i, 0) = s.instances;
    X(i, 1) = s.workload;
    target[i] = s.response_time;
  }
  const Eigen::RowVector2d mean = X.colwise().mean();
  Eigen::RowVector2d scale = ((X.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(l)).sqrt();
  for (int c = 0; c < 2; ++c) {
    if (!(scale[c] > 0)) scale[c] = 1.0;  // constant feature
  }
  const Eigen::MatrixX2d Z = (X.rowwise() - mean).array().rowwise() / scale.array();
  const double gamma = config.gamma > 0 ? config.gamma : 0.5;

  Eigen::MatrixXd K(l, l);
  for (Eigen::Index i = 0; i < l; ++i) {
    K(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < l; ++j) K(i, j) = K(j, i) = rbf_kernel(Z.row(i), Z.row(j), gamma);
  }
  const auto smo = solve_epsilon_svr(K, target, config);

  std::vector<Eigen::Index> sv;
  for (Eigen::Index i = 0; i < l; ++i) {
    if (smo.beta[i] != 0.0) sv.push_back(i);
  }
  Eigen::MatrixX2d support(static_cast<Eigen::Index>(sv.size()), 2);
  Eigen::VectorXd coef(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t r = 0; r < sv.size(); ++r) {
    support.row(static_cast<Eigen::Index>(r)) = Z.row(sv[r]);
    coef[static_cast<Eigen::Index>(r)] = smo.beta[sv[r]];
  }
  SvrModel model(std::move(support), std::move(coef), -smo.rho, gamma, mean, scale, config);
  model.converged = smo.converged;
  model.iterations = smo.iterations;
  return model;
}

std::string serialize(const SvrModel& model) {
  using json_io::json;
  json doc{{"format", kFormat},
           {"version", kVersion},
           {"config", json_io::to_json(model.config())},
           {"gamma", model.gamma()},
           {"bias", model.bias()},
           {"feature_mean", {model.feature_mean()[0], model.feature_mean()[1]}},
           {"feature_scale", {model.feature_scale()[0], model.feature_scale()[1]}},
           {"support_vectors", json_io::matrix_to_json(model.support_vectors())},
           {"coefficients", json_io::vector_to_json(model.coefficients())},
           {"converged", model.converged},
           {"iterations", model.iterations}};
  return doc.dump(1) + "\n";
}

SvrModel deserialize_svr(std::string_view text) {
  const auto doc = json_io::parse(text, "svr");
  json_io::check_format(doc, kFormat, kVersion);
  SvrConfig config;
  json_io::from_json_strict(doc.at("config"), config);
  const auto& fm = doc.at("feature_mean");
  const auto& fs = doc.at("feature_scale");
  Eigen::MatrixXd sv = json_io::matrix_from_json(doc.at("support_vectors"), "svr.support_vectors");
  if (sv.rows() > 0 && sv.cols() != 2) throw ValidationError("svr: support vectors must have two features");
  Eigen::MatrixX2d support(sv.rows(), 2);
  if (sv.rows() > 0) support = sv;
  SvrModel model(std::move(support), json_io::vector_from_json(doc.at("coefficients")), doc.at("bias").get<double>(),
                 doc.at("gamma").get<double>(), Eigen::RowVector2d(fm.at(0), fm.at(1)),
                 Eigen::RowVector2d(fs.at(0), fs.at(1)), config);
  model.converged = doc.value("converged", true);
  model.iterations = doc.value("iterations", std::size_t{0});
  return model;
}

void save_svr(const std::filesystem::path& path, const SvrModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize(model);
}

SvrModel load_svr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read svr file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_svr(ss.str());
}

}  // namespace burstscale::perf
