#pragma once

#include <cstdint>
#include <vector>

namespace t4d {

// Dense layer with float32 parameter storage. All arithmetic widens to
// double; float32 is the storage and checkpoint precision.
struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<float> w;  // row-major [out_dim][in_dim]
  std::vector<float> b;  // [out_dim]

  int param_count() const { return out_dim * in_dim + out_dim; }
};

// Multilayer perceptron, ReLU on every layer except the last.
struct Mlp {
  std::vector<int> dims;
  std::vector<DenseLayer> layers;

  int param_count() const;
  std::vector<double> forward(const std::vector<double>& in) const;
};

// He-normal hidden weights keyed by (seed, net_id*1000+layer, flat index);
// zero biases everywhere and a fully zero output layer, so a fresh net is
// the exact zero function.
Mlp make_mlp(const std::vector<int>& dims, std::uint64_t seed, std::uint32_t net_id);

// [v, sin(2^0*pi*v), cos(2^0*pi*v), ..., sin(2^{bands-1}*pi*v), cos(2^{bands-1}*pi*v)]
std::vector<double> positional_encode(const std::vector<double>& v, int bands);

inline int posenc_dim(int dim, int bands) { return dim * (1 + 2 * bands); }

}  // namespace t4d
