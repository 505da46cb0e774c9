#include "t4d/mlp.hpp"

#include <cmath>

#include "t4d/error.hpp"
#include "t4d/mathutil.hpp"
#include "t4d/rng.hpp"

namespace t4d {

int Mlp::param_count() const {
  int n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

std::vector<double> Mlp::forward(const std::vector<double>& in) const {
  if (layers.empty()) return in;
  if (static_cast<int>(in.size()) != layers.front().in_dim)
    throw Error("mlp.dim", "input size does not match first layer");
  std::vector<double> x = in;
  std::vector<double> y;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const DenseLayer& l = layers[li];
    y.assign(static_cast<std::size_t>(l.out_dim), 0.0);
    for (int j = 0; j < l.out_dim; ++j) {
      double acc = static_cast<double>(l.b[j]);
      const float* wr = &l.w[static_cast<std::size_t>(j) * l.in_dim];
      for (int k = 0; k < l.in_dim; ++k) acc += static_cast<double>(wr[k]) * x[k];
      y[j] = acc;
    }
    if (li + 1 < layers.size())
      for (double& t : y) t = t > 0.0 ? t : 0.0;
    x.swap(y);
  }
  return x;
}

Mlp make_mlp(const std::vector<int>& dims, std::uint64_t seed, std::uint32_t net_id) {
  if (dims.size() < 2) throw Error("mlp.dim", "need at least two layer dims");
  Mlp net;
  net.dims = dims;
  net.layers.resize(dims.size() - 1);
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    DenseLayer& l = net.layers[li];
    l.in_dim = dims[li];
    l.out_dim = dims[li + 1];
    if (l.in_dim <= 0 || l.out_dim <= 0) throw Error("mlp.dim", "layer dims must be positive");
    l.w.assign(static_cast<std::size_t>(l.out_dim) * l.in_dim, 0.0f);
    l.b.assign(static_cast<std::size_t>(l.out_dim), 0.0f);
    const bool last = li + 1 == net.layers.size();
    if (last) continue;
    const double sd = std::sqrt(2.0 / static_cast<double>(l.in_dim));
    const std::uint64_t slot = static_cast<std::uint64_t>(net_id) * 1000 + li;
    for (std::size_t i = 0; i < l.w.size(); ++i)
      l.w[i] = static_cast<float>(sd * rng_normal(seed, rng_stream::kInitWeights, slot, i));
  }
  return net;
}

std::vector<double> positional_encode(const std::vector<double>& v, int bands) {
  std::vector<double> out;
  out.reserve(v.size() * (1 + 2 * static_cast<std::size_t>(bands)));
  out.insert(out.end(), v.begin(), v.end());
  double freq = kPi;
  for (int b = 0; b < bands; ++b) {
    for (double x : v) out.push_back(std::sin(freq * x));
    for (double x : v) out.push_back(std::cos(freq * x));
    freq *= 2.0;
  }
  return out;
}

}  // namespace t4d
