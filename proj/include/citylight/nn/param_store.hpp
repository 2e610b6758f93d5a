#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "citylight/nn/tensor.hpp"

namespace citylight::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // Adam first moment
  Tensor v;  // Adam second moment
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named parameters with gradient slots and Adam state. Iteration order is
/// by name, so serialization and updates are independent of creation order.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  // Parameters are referenced by address from tapes.
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  std::uint64_t seed() const { return seed_; }
  long adam_steps() const { return t_; }

  /// Adds a rows×cols parameter drawn from U(-sqrt(1/fan_in), sqrt(1/fan_in)).
  Parameter& add_uniform(const std::string& name, long rows, long cols, long fan_in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(rows, cols);
    for (long i = 0; i < t.size(); ++i) t.data()[i] = dist(rng_);
    return add(name, std::move(t));
  }

  Parameter& add_constant(const std::string& name, long rows, long cols, double value) {
    return add(name, Tensor::Constant(rows, cols, value));
  }

  Parameter& add(const std::string& name, Tensor value) {
    if (params_.count(name)) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
    Parameter p;
    p.name = name;
    p.grad = Tensor::Zero(value.rows(), value.cols());
    p.m = p.grad;
    p.v = p.grad;
    p.value = std::move(value);
    return params_.emplace(name, std::move(p)).first->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return it->second;
  }
  const Parameter& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Parameter>& params() const { return params_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.setZero();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& [_, p] : params_) s += p.grad.squaredNorm();
    return std::sqrt(s);
  }

  /// Rescales gradients so their global L2 norm is at most max_norm.
  void clip_grad_norm(double max_norm) {
    const double n = grad_norm();
    if (n > max_norm && n > 0.0) {
      for (auto& [_, p] : params_) p.grad *= max_norm / n;
    }
  }

  void adam_step(const AdamConfig& cfg = {}) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    for (auto& [_, p] : params_) {
      p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * p.grad;
      p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
      p.value.array() -= cfg.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + cfg.eps);
    }
  }

  /// Copies values (not moments) from a store with the same layout.
  void copy_values_from(const ParameterStore& other) {
    for (auto& [name, p] : params_) {
      const Parameter& o = other.get(name);
      require_shape(o.value.rows() == p.value.rows() && o.value.cols() == p.value.cols(), "copy_values_from", p.value,
                    o.value);
      p.value = o.value;
    }
  }

  // ---- checkpoint ------------------------------------------------------------
  // {"format":"citylight-params","version":1,"seed":S,"adam_t":T,"meta":{...},
  //  "tensors":[{"name":N,"shape":[r,c],"value":[...],"m":[...],"v":[...]}]}
  // Arrays are row-major. Doubles are printed with round-trip precision.

  nlohmann::json to_json(const nlohmann::json& meta = nlohmann::json::object()) const {
    auto flat = [](const Tensor& t) { return std::vector<double>(t.data(), t.data() + t.size()); };
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, p] : params_) {
      tensors.push_back({{"name", name},
                         {"shape", {p.value.rows(), p.value.cols()}},
                         {"value", flat(p.value)},
                         {"m", flat(p.m)},
                         {"v", flat(p.v)}});
    }
    return {{"format", "citylight-params"}, {"version", 1}, {"seed", seed_}, {"adam_t", t_}, {"meta", meta},
            {"tensors", tensors}};
  }

  static ParameterStore from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "citylight-params") throw std::runtime_error("checkpoint: unrecognized format");
    ParameterStore s(j.at("seed").get<std::uint64_t>());
    s.t_ = j.at("adam_t").get<long>();
    for (const auto& jt : j.at("tensors")) {
      const long r = jt.at("shape").at(0).get<long>(), c = jt.at("shape").at(1).get<long>();
      auto load = [&](const char* key) {
        const auto vals = jt.at(key).get<std::vector<double>>();
        if (static_cast<long>(vals.size()) != r * c) {
          throw std::runtime_error("checkpoint: tensor '" + jt.at("name").get<std::string>() + "' has wrong size");
        }
        Tensor t(r, c);
        std::copy(vals.begin(), vals.end(), t.data());
        return t;
      };
      Parameter& p = s.add(jt.at("name").get<std::string>(), load("value"));
      p.m = load("m");
      p.v = load("v");
    }
    return s;
  }

  void save(const std::filesystem::path& path, const nlohmann::json& meta = nlohmann::json::object()) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << to_json(meta).dump() << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }

  static nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
    }
  }

  static ParameterStore load(const std::filesystem::path& path) { return from_json(read_json(path)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  long t_ = 0;
  std::map<std::string, Parameter> params_;
};

}  // namespace citylight::nn
