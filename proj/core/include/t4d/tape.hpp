#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "t4d/camera.hpp"
#include "t4d/linalg.hpp"
#include "t4d/mlp.hpp"

namespace t4d {

struct CompositeWork;

// Row-major [rows, cols] matrix of doubles. Rows are batch entries
// (points, pixels), cols are features.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return v.size(); }
};

enum class NodeKind {
  kInput,
  kParam,
  kPosEnc,
  kConcatCols,
  kConcatRows,
  kDense,
  kSliceCols,
  kAdd,
  kAffineRows,
  kQuatLeftMul,
  kQuatRenorm,
  kSigmoid,
  kScaledSigmoid,
  kExp,
  kMul,
  kColorMap,
  kComposite,
  kSumSq,
  kMse,
};

// Eagerly evaluated computation graph with exact reverse-mode gradients.
// Node values are computed at build time; backward() walks nodes in reverse
// creation order with fixed accumulation order, so gradients are bit-stable
// for any worker count.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int input(Tensor value);
  int param(Tensor value);
  int posenc(int in, int bands);
  int concat_cols(const std::vector<int>& ins);
  int concat_rows(const std::vector<int>& ins);
  // y = x W^T + b, optional ReLU; train_layer routes gradients into the
  // layer's accumulators (read back via layer_grad_*).
  int dense(int in, const DenseLayer* layer, bool relu, bool train_layer);
  int slice_cols(int in, int begin, int count);
  int add(int a, int b);
  // per row: y = A x + t with constant A, t
  int affine_rows(int in, const Mat3& a, const Vec3& t);
  // per row of 4: y = q0 * x (Hamilton product, constant left factor)
  int quat_left_mul(const Quat& q0, int in);
  int quat_renorm(int in);
  int sigmoid(int in);
  // y = strict_sigmoid(w * x), w constant
  int scaled_sigmoid(int in, double w);
  int exp(int in);
  int mul(int a, int b);
  // y = 0.5 + kSH0 * x
  int color_map(int in);
  // Differentiable splat compositing; inputs pos [N,3], rot [N,4],
  // scale [N,3], alpha [N,1], color [N,3]; output [H*W, 3].
  int composite(int pos, int rot, int scale, int alpha, int color, const Camera& cam,
                std::vector<std::uint64_t> ids);
  int sum_sq(int in);
  // sum((pred - target)^2) / rows(pred)
  int mse(int pred, int target);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  const Tensor& value(int id) const;
  // Zero-shaped tensor when the node carries no gradient.
  const Tensor& grad(int id) const;
  bool needs_grad(int id) const;

  // Seeds d(last node) = 1; the last node must be scalar [1,1].
  void backward();

  // Reverse sweep from externally supplied cotangents: each (node, seed)
  // adds seed to that node's incoming gradient before propagation. Seeds on
  // the same node accumulate; seed shapes must match their nodes.
  void backward_from(const std::vector<std::pair<int, Tensor>>& seeds);

  // Null when the layer received no gradient on this tape.
  const std::vector<double>* layer_grad_w(const DenseLayer& layer) const;
  const std::vector<double>* layer_grad_b(const DenseLayer& layer) const;

 private:
  struct Node {
    NodeKind kind;
    std::vector<int> inputs;
    bool needs_grad = false;
    int bands = 0;
    int begin = 0, count = 0;
    const DenseLayer* layer = nullptr;
    bool relu = false;
    bool train_layer = false;
    int layer_slot = -1;
    Mat3 a;
    Vec3 t;
    Quat q0;
    double w = 1.0;
    std::unique_ptr<CompositeWork> work;

    Node();
    ~Node();
    Node(Node&&) noexcept;
    Node& operator=(Node&&) noexcept;
  };

  struct LayerGrad {
    const DenseLayer* layer = nullptr;
    std::vector<double> dw, db;
  };

  int push(Node node, Tensor value);
  int require(int id) const;
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::vector<Tensor> vals_;
  std::vector<Tensor> grads_;
  std::vector<LayerGrad> layer_grads_;
  std::unordered_map<const DenseLayer*, int> layer_slots_;
  bool backward_done_ = false;
};

}  // namespace t4d
