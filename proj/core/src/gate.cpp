#include "t4d/gate.hpp"

#include <string>

#include "t4d/error.hpp"
#include "t4d/rng.hpp"

namespace t4d {

GateKind gate_kind_from(const std::string& name) {
  if (name == "train_opacity") return GateKind::kTrainOpacity;
  if (name == "bernoulli") return GateKind::kBernoulli;
  if (name == "threshold") return GateKind::kThreshold;
  throw Error("gate.mode", "unknown gate mode '" + name + "'");
}

const char* gate_kind_name(GateKind kind) {
  switch (kind) {
    case GateKind::kTrainOpacity:
      return "train_opacity";
    case GateKind::kBernoulli:
      return "bernoulli";
    case GateKind::kThreshold:
      return "threshold";
  }
  return "?";
}

std::vector<double> gate_train(const std::vector<double>& alpha,
                               const std::vector<double>& p) {
  if (alpha.size() != p.size())
    throw Error("gate.arity", "opacity and p_trans counts differ");
  std::vector<double> out(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) out[i] = alpha[i] * p[i];
  return out;
}

double gate_threshold_u(const GateConfig& gate, std::uint64_t id) {
  return rng_uniform(gate.seed, rng_stream::kGateThreshold, id);
}

std::vector<std::uint8_t> gate_infer(const GateConfig& gate,
                                     const std::vector<std::uint64_t>& ids,
                                     const std::vector<double>& p, int frame) {
  if (ids.size() != p.size()) throw Error("gate.arity", "id and p_trans counts differ");
  if (gate.kind == GateKind::kTrainOpacity)
    throw Error("gate.mode", "train_opacity is not a mask mode");
  std::vector<std::uint8_t> mask(ids.size(), 0);
  if (gate.kind == GateKind::kBernoulli) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      mask[i] = rng_uniform(gate.seed, rng_stream::kGateBernoulli, ids[i],
                            static_cast<std::uint64_t>(frame)) < p[i];
  } else {
    for (std::size_t i = 0; i < ids.size(); ++i)
      mask[i] = p[i] >= gate_threshold_u(gate, ids[i]);
  }
  return mask;
}

}  // namespace t4d
