#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t4d/linalg.hpp"
#include "t4d/mlp.hpp"
#include "t4d/tape.hpp"

namespace t4d {

// Predicts (dx, dq) from (x, q, t). Zero output layer at init, so a fresh
// net is exactly the identity deformation.
struct DeformationNet {
  Mlp mlp;
  int bands_x = 6;
  int bands_t = 4;

  int input_dim() const { return posenc_dim(3, bands_x) + 4 + posenc_dim(1, bands_t); }
};

// Scalar head h plus fixed scaling: p = sigmoid(w_trans * h), strictly in (0,1).
struct TransitionNet {
  Mlp mlp;
  int bands_x = 6;
  int bands_t = 4;
  double w_trans = 10.0;

  int input_dim() const { return posenc_dim(3, bands_x) + 4 + posenc_dim(1, bands_t); }
};

// One deformation net per object plus one transition net per transition pair.
struct NetBundle {
  std::vector<DeformationNet> deforms;
  std::vector<TransitionNet> transitions;
};

DeformationNet make_deformation_net(std::uint64_t seed, std::uint32_t net_id = 0);
TransitionNet make_transition_net(std::uint64_t seed, std::uint32_t net_id,
                                  double w_trans = 10.0);
NetBundle make_net_bundle(std::uint64_t seed, std::size_t n_objects,
                          std::size_t n_transitions, double w_trans = 10.0);

// All trainable layers of the bundle (deformation first, then transition nets
// in order) — the theta_dyn parameter set.
std::vector<DenseLayer*> dyn_layers(NetBundle& nets);

// Fast paths; bit-identical to the tape versions below.
void deform(const DeformationNet& net, const Vec3& x, const Quat& q, double t, Vec3* dx,
            Quat* dq);
double transition_prob(const TransitionNet& net, const Vec3& x, const Quat& q, double t);

// Tape builders. x [N,3], q [N,4], t [N,1] are node ids; train routes
// gradients into the net parameters.
struct DeformRecord {
  int dx = -1;
  int dq = -1;
};
DeformRecord record_deform(Tape& tape, const DeformationNet& net, int x, int q, int t,
                           bool train);
int record_transition(Tape& tape, const TransitionNet& net, int x, int q, int t, bool train);

// "T4DN" checkpoint: magic, u32 version, net table (kind, name, layer dims,
// band counts, w_trans), float32 parameters in layer order, little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const NetBundle& nets);
NetBundle parse_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const NetBundle& nets, const std::string& path);
NetBundle load_checkpoint(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t n);
// Hash of the serialized bundle; used to assert phase separation in training.
std::uint64_t bundle_hash(const NetBundle& nets);

}  // namespace t4d
