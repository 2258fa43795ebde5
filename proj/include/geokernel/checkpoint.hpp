#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "geokernel/kernelnet.hpp"

namespace geokernel::checkpoint {

using kernelnet::KernelParameters;
using numeric::Tensor;

inline constexpr int kFormatVersion = 1;

/// Optimizer accumulators persisted alongside the weights so an interrupted
/// run resumes on the same trajectory.
struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

struct Checkpoint {
  KernelParameters params;
  double beta = 1.0;
  int epoch = 0;
  std::uint64_t config_hash = 0;
  std::optional<OptimizerState> optimizer;
};

inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = t.shape();
  j["data"] = t.data();
  return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("data").get<std::vector<double>>());
}

inline void save(const std::string& path, const Checkpoint& ck) {
  nlohmann::json j;
  j["version"] = kFormatVersion;
  j["template"] = geometry::template_name(ck.params.kind);
  j["hidden_dim"] = ck.params.hidden_dim;
  j["layers"] = ck.params.layers;
  j["descriptor_dim"] = ck.params.descriptor_dim;
  j["beta"] = ck.beta;
  j["epoch"] = ck.epoch;
  j["config_hash"] = ck.config_hash;
  nlohmann::json tensors;
  for (auto& [name, t] : ck.params.named()) tensors[name] = tensor_to_json(*t);
  j["tensors"] = tensors;
  if (ck.optimizer) {
    nlohmann::json opt;
    opt["step"] = ck.optimizer->step;
    opt["m"] = nlohmann::json::array();
    opt["v"] = nlohmann::json::array();
    for (const Tensor& t : ck.optimizer->m) opt["m"].push_back(tensor_to_json(t));
    for (const Tensor& t : ck.optimizer->v) opt["v"].push_back(tensor_to_json(t));
    j["optimizer"] = opt;
  }
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

inline Checkpoint load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open checkpoint '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail("checkpoint '" + path + "': invalid JSON");
  if (j.at("version").get<int>() != kFormatVersion)
    fail("checkpoint '" + path + "': unsupported version");
  Checkpoint ck;
  ck.params = KernelParameters::zeros(
      geometry::template_from_name(j.at("template").get<std::string>()),
      j.at("hidden_dim").get<int>(), j.at("layers").get<int>(),
      j.at("descriptor_dim").get<int>());
  ck.beta = j.at("beta").get<double>();
  ck.epoch = j.at("epoch").get<int>();
  ck.config_hash = j.at("config_hash").get<std::uint64_t>();
  for (auto& [name, t] : ck.params.named()) {
    Tensor loaded = tensor_from_json(j.at("tensors").at(name));
    if (!loaded.same_shape(*t))
      fail("checkpoint '" + path + "': tensor " + name + " has shape " +
           loaded.shape_string() + ", expected " + t->shape_string());
    *t = std::move(loaded);
  }
  if (!ck.params.all_finite()) fail("checkpoint '" + path + "': non-finite weights");
  if (j.contains("optimizer")) {
    OptimizerState opt;
    opt.step = j["optimizer"].at("step").get<std::size_t>();
    for (const auto& t : j["optimizer"].at("m")) opt.m.push_back(tensor_from_json(t));
    for (const auto& t : j["optimizer"].at("v")) opt.v.push_back(tensor_from_json(t));
    ck.optimizer = std::move(opt);
  }
  return ck;
}

}  // namespace geokernel::checkpoint
