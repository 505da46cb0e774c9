#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace t4d {

// How transition probabilities act on points: train_opacity multiplies
// opacity by p (differentiable); bernoulli redraws per frame; threshold
// fixes one u_i per point so appearance is monotone in p (no flicker).
enum class GateKind { kTrainOpacity, kBernoulli, kThreshold };

struct GateConfig {
  GateKind kind = GateKind::kThreshold;
  std::uint64_t seed = 0;
};

GateKind gate_kind_from(const std::string& name);
const char* gate_kind_name(GateKind kind);

// Effective opacities alpha_i * p_i. Throws Error("gate.arity") on length
// mismatch.
std::vector<double> gate_train(const std::vector<double>& alpha,
                               const std::vector<double>& p);

// Fixed per-id threshold draw, never redrawn.
double gate_threshold_u(const GateConfig& gate, std::uint64_t id);

// Inclusion mask for one frame. ids are scene-wide splat ids; bernoulli mode
// draws by (seed, id, frame), threshold mode compares p against the fixed
// per-id u. train_opacity is not a mask mode (Error("gate.mode")).
std::vector<std::uint8_t> gate_infer(const GateConfig& gate,
                                     const std::vector<std::uint64_t>& ids,
                                     const std::vector<double>& p, int frame);

}  // namespace t4d
