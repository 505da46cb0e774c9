#include "t4d/tape.hpp"

#include <cmath>

#include "t4d/error.hpp"
#include "t4d/mathutil.hpp"
#include "t4d/renderer.hpp"
#include "t4d/threading.hpp"

namespace t4d {

namespace {
constexpr int kRowChunk = 64;
const Tensor kEmptyTensor;
}  // namespace

Tape::Node::Node() = default;
Tape::Node::~Node() = default;
Tape::Node::Node(Node&&) noexcept = default;
Tape::Node& Tape::Node::operator=(Node&&) noexcept = default;

Tape::Tape() = default;
Tape::~Tape() = default;

int Tape::require(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw Error("tape.node", "node id out of range");
  return id;
}

int Tape::push(Node node, Tensor value) {
  nodes_.push_back(std::move(node));
  vals_.push_back(std::move(value));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tensor& Tape::value(int id) const { return vals_[require(id)]; }

const Tensor& Tape::grad(int id) const {
  require(id);
  if (static_cast<std::size_t>(id) >= grads_.size()) return kEmptyTensor;
  return grads_[id];
}

bool Tape::needs_grad(int id) const { return nodes_[require(id)].needs_grad; }

int Tape::input(Tensor value) {
  Node n;
  n.kind = NodeKind::kInput;
  return push(std::move(n), std::move(value));
}

int Tape::param(Tensor value) {
  Node n;
  n.kind = NodeKind::kParam;
  n.needs_grad = true;
  return push(std::move(n), std::move(value));
}

int Tape::posenc(int in, int bands) {
  const Tensor& x = vals_[require(in)];
  if (bands < 0) throw Error("tape.shape", "negative band count");
  Tensor y(x.rows, posenc_dim(x.cols, bands));
  for (int r = 0; r < x.rows; ++r) {
    int o = 0;
    for (int c = 0; c < x.cols; ++c) y.at(r, o++) = x.at(r, c);
    double freq = kPi;
    for (int b = 0; b < bands; ++b) {
      for (int c = 0; c < x.cols; ++c) y.at(r, o++) = std::sin(freq * x.at(r, c));
      for (int c = 0; c < x.cols; ++c) y.at(r, o++) = std::cos(freq * x.at(r, c));
      freq *= 2.0;
    }
  }
  Node n;
  n.kind = NodeKind::kPosEnc;
  n.inputs = {in};
  n.bands = bands;
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::concat_cols(const std::vector<int>& ins) {
  if (ins.empty()) throw Error("tape.shape", "empty concat");
  int rows = vals_[require(ins[0])].rows;
  int cols = 0;
  bool ng = false;
  for (int id : ins) {
    const Tensor& t = vals_[require(id)];
    if (t.rows != rows) throw Error("tape.shape", "concat_cols row mismatch");
    cols += t.cols;
    ng = ng || nodes_[id].needs_grad;
  }
  Tensor y(rows, cols);
  for (int r = 0; r < rows; ++r) {
    int o = 0;
    for (int id : ins) {
      const Tensor& t = vals_[id];
      for (int c = 0; c < t.cols; ++c) y.at(r, o++) = t.at(r, c);
    }
  }
  Node n;
  n.kind = NodeKind::kConcatCols;
  n.inputs = ins;
  n.needs_grad = ng;
  return push(std::move(n), std::move(y));
}

int Tape::concat_rows(const std::vector<int>& ins) {
  if (ins.empty()) throw Error("tape.shape", "empty concat");
  int cols = vals_[require(ins[0])].cols;
  int rows = 0;
  bool ng = false;
  for (int id : ins) {
    const Tensor& t = vals_[require(id)];
    if (t.cols != cols) throw Error("tape.shape", "concat_rows col mismatch");
    rows += t.rows;
    ng = ng || nodes_[id].needs_grad;
  }
  Tensor y(rows, cols);
  int o = 0;
  for (int id : ins) {
    const Tensor& t = vals_[id];
    for (int r = 0; r < t.rows; ++r)
      for (int c = 0; c < cols; ++c) y.at(o + r, c) = t.at(r, c);
    o += t.rows;
  }
  Node n;
  n.kind = NodeKind::kConcatRows;
  n.inputs = ins;
  n.needs_grad = ng;
  return push(std::move(n), std::move(y));
}

int Tape::dense(int in, const DenseLayer* layer, bool relu, bool train_layer) {
  const Tensor& x = vals_[require(in)];
  if (x.cols != layer->in_dim) throw Error("tape.shape", "dense input width mismatch");
  const int od = layer->out_dim, idm = layer->in_dim;
  Tensor y(x.rows, od);
  parallel_chunks(x.rows, kRowChunk, [&](std::size_t, std::size_t rb, std::size_t re) {
    for (std::size_t r = rb; r < re; ++r) {
      const double* xr = &x.v[r * idm];
      double* yr = &y.v[r * od];
      for (int j = 0; j < od; ++j) {
        double acc = static_cast<double>(layer->b[j]);
        const float* wr = &layer->w[static_cast<std::size_t>(j) * idm];
        for (int k = 0; k < idm; ++k) acc += static_cast<double>(wr[k]) * xr[k];
        yr[j] = relu ? (acc > 0.0 ? acc : 0.0) : acc;
      }
    }
  });
  Node n;
  n.kind = NodeKind::kDense;
  n.inputs = {in};
  n.layer = layer;
  n.relu = relu;
  n.train_layer = train_layer;
  n.needs_grad = nodes_[in].needs_grad || train_layer;
  if (train_layer) {
    auto it = layer_slots_.find(layer);
    if (it == layer_slots_.end()) {
      n.layer_slot = static_cast<int>(layer_grads_.size());
      layer_slots_.emplace(layer, n.layer_slot);
      LayerGrad lg;
      lg.layer = layer;
      lg.dw.assign(layer->w.size(), 0.0);
      lg.db.assign(layer->b.size(), 0.0);
      layer_grads_.push_back(std::move(lg));
    } else {
      n.layer_slot = it->second;
    }
  }
  return push(std::move(n), std::move(y));
}

int Tape::slice_cols(int in, int begin, int count) {
  const Tensor& x = vals_[require(in)];
  if (begin < 0 || count < 0 || begin + count > x.cols)
    throw Error("tape.shape", "slice out of range");
  Tensor y(x.rows, count);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < count; ++c) y.at(r, c) = x.at(r, begin + c);
  Node n;
  n.kind = NodeKind::kSliceCols;
  n.inputs = {in};
  n.begin = begin;
  n.count = count;
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::add(int a, int b) {
  const Tensor& ta = vals_[require(a)];
  const Tensor& tb = vals_[require(b)];
  if (ta.rows != tb.rows || ta.cols != tb.cols) throw Error("tape.shape", "add shape mismatch");
  Tensor y(ta.rows, ta.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] = ta.v[i] + tb.v[i];
  Node n;
  n.kind = NodeKind::kAdd;
  n.inputs = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::affine_rows(int in, const Mat3& a, const Vec3& t) {
  const Tensor& x = vals_[require(in)];
  if (x.cols != 3) throw Error("tape.shape", "affine_rows needs 3 columns");
  Tensor y(x.rows, 3);
  for (int r = 0; r < x.rows; ++r) {
    const Vec3 v = a * Vec3{x.at(r, 0), x.at(r, 1), x.at(r, 2)} + t;
    y.at(r, 0) = v.x;
    y.at(r, 1) = v.y;
    y.at(r, 2) = v.z;
  }
  Node n;
  n.kind = NodeKind::kAffineRows;
  n.inputs = {in};
  n.a = a;
  n.t = t;
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::quat_left_mul(const Quat& q0, int in) {
  const Tensor& x = vals_[require(in)];
  if (x.cols != 4) throw Error("tape.shape", "quat_left_mul needs 4 columns");
  Tensor y(x.rows, 4);
  for (int r = 0; r < x.rows; ++r) {
    const Quat q = q0 * Quat{x.at(r, 0), x.at(r, 1), x.at(r, 2), x.at(r, 3)};
    y.at(r, 0) = q.w;
    y.at(r, 1) = q.x;
    y.at(r, 2) = q.y;
    y.at(r, 3) = q.z;
  }
  Node n;
  n.kind = NodeKind::kQuatLeftMul;
  n.inputs = {in};
  n.q0 = q0;
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::quat_renorm(int in) {
  const Tensor& x = vals_[require(in)];
  if (x.cols != 4) throw Error("tape.shape", "quat_renorm needs 4 columns");
  Tensor y(x.rows, 4);
  for (int r = 0; r < x.rows; ++r) {
    const Quat q = Quat{x.at(r, 0), x.at(r, 1), x.at(r, 2), x.at(r, 3)}.normalized();
    y.at(r, 0) = q.w;
    y.at(r, 1) = q.x;
    y.at(r, 2) = q.y;
    y.at(r, 3) = q.z;
  }
  Node n;
  n.kind = NodeKind::kQuatRenorm;
  n.inputs = {in};
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::sigmoid(int in) {
  const Tensor& x = vals_[require(in)];
  Tensor y(x.rows, x.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] = t4d::sigmoid(x.v[i]);
  Node n;
  n.kind = NodeKind::kSigmoid;
  n.inputs = {in};
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::scaled_sigmoid(int in, double w) {
  const Tensor& x = vals_[require(in)];
  Tensor y(x.rows, x.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] = sigmoid_strict(w * x.v[i]);
  Node n;
  n.kind = NodeKind::kScaledSigmoid;
  n.inputs = {in};
  n.w = w;
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::exp(int in) {
  const Tensor& x = vals_[require(in)];
  Tensor y(x.rows, x.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] = std::exp(x.v[i]);
  Node n;
  n.kind = NodeKind::kExp;
  n.inputs = {in};
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::mul(int a, int b) {
  const Tensor& ta = vals_[require(a)];
  const Tensor& tb = vals_[require(b)];
  if (ta.rows != tb.rows || ta.cols != tb.cols) throw Error("tape.shape", "mul shape mismatch");
  Tensor y(ta.rows, ta.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] = ta.v[i] * tb.v[i];
  Node n;
  n.kind = NodeKind::kMul;
  n.inputs = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::color_map(int in) {
  const Tensor& x = vals_[require(in)];
  Tensor y(x.rows, x.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.v[i] = 0.5 + kSH0 * x.v[i];
  Node n;
  n.kind = NodeKind::kColorMap;
  n.inputs = {in};
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::composite(int pos, int rot, int scale, int alpha, int color, const Camera& cam,
                    std::vector<std::uint64_t> ids) {
  require(pos);
  require(rot);
  require(scale);
  require(alpha);
  require(color);
  Node n;
  n.kind = NodeKind::kComposite;
  n.inputs = {pos, rot, scale, alpha, color};
  n.needs_grad = false;
  for (int id : n.inputs) n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  n.work = std::make_unique<CompositeWork>();
  Tensor y = composite_forward(vals_[pos], vals_[rot], vals_[scale], vals_[alpha], vals_[color],
                               cam, ids, *n.work);
  return push(std::move(n), std::move(y));
}

int Tape::sum_sq(int in) {
  const Tensor& x = vals_[require(in)];
  Tensor y(1, 1);
  double s = 0.0;
  for (double v : x.v) s += v * v;
  y.v[0] = s;
  Node n;
  n.kind = NodeKind::kSumSq;
  n.inputs = {in};
  n.needs_grad = nodes_[in].needs_grad;
  return push(std::move(n), std::move(y));
}

int Tape::mse(int pred, int target) {
  const Tensor& p = vals_[require(pred)];
  const Tensor& t = vals_[require(target)];
  if (p.rows != t.rows || p.cols != t.cols) throw Error("tape.shape", "mse shape mismatch");
  Tensor y(1, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.v[i] - t.v[i];
    s += d * d;
  }
  y.v[0] = s / static_cast<double>(p.rows);
  Node n;
  n.kind = NodeKind::kMse;
  n.inputs = {pred, target};
  n.needs_grad = nodes_[pred].needs_grad || nodes_[target].needs_grad;
  return push(std::move(n), std::move(y));
}

void Tape::backward() {
  if (backward_done_) throw Error("tape.backward-twice", "backward already ran on this tape");
  backward_done_ = true;
  if (nodes_.empty()) return;
  const int last = static_cast<int>(nodes_.size()) - 1;
  if (vals_[last].rows != 1 || vals_[last].cols != 1)
    throw Error("tape.scalar", "backward target must be a 1x1 tensor");
  grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].needs_grad) grads_[i] = Tensor(vals_[i].rows, vals_[i].cols);
  if (!nodes_[last].needs_grad) return;
  grads_[last].v[0] = 1.0;
  for (int i = last; i >= 0; --i)
    if (nodes_[i].needs_grad) backward_node(i);
}

void Tape::backward_from(const std::vector<std::pair<int, Tensor>>& seeds) {
  if (backward_done_) throw Error("tape.backward-twice", "backward already ran on this tape");
  backward_done_ = true;
  if (nodes_.empty() || seeds.empty()) return;
  grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].needs_grad) grads_[i] = Tensor(vals_[i].rows, vals_[i].cols);
  int top = -1;
  for (const auto& [id, seed] : seeds) {
    const int node = require(id);
    if (seed.rows != vals_[node].rows || seed.cols != vals_[node].cols)
      throw Error("tape.shape", "seed gradient shape does not match its node");
    if (!nodes_[node].needs_grad) continue;
    for (std::size_t k = 0; k < seed.size(); ++k) grads_[node].v[k] += seed.v[k];
    if (node > top) top = node;
  }
  for (int i = top; i >= 0; --i)
    if (nodes_[i].needs_grad) backward_node(i);
}

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  const Tensor& y = vals_[id];
  const Tensor& gy = grads_[id];
  auto gin = [&](int slot) -> Tensor* {
    const int in = n.inputs[slot];
    return nodes_[in].needs_grad ? &grads_[in] : nullptr;
  };

  switch (n.kind) {
    case NodeKind::kInput:
    case NodeKind::kParam:
      break;

    case NodeKind::kPosEnc: {
      Tensor* gx = gin(0);
      if (!gx) break;
      const Tensor& x = vals_[n.inputs[0]];
      for (int r = 0; r < x.rows; ++r) {
        for (int c = 0; c < x.cols; ++c) {
          double g = gy.at(r, c);
          double freq = kPi;
          int o = x.cols + c;
          for (int b = 0; b < n.bands; ++b) {
            const double a = freq * x.at(r, c);
            g += freq * std::cos(a) * gy.at(r, o);
            g -= freq * std::sin(a) * gy.at(r, o + x.cols);
            o += 2 * x.cols;
            freq *= 2.0;
          }
          gx->at(r, c) += g;
        }
      }
      break;
    }

    case NodeKind::kConcatCols: {
      int o = 0;
      for (std::size_t s = 0; s < n.inputs.size(); ++s) {
        const Tensor& t = vals_[n.inputs[s]];
        if (Tensor* gx = gin(static_cast<int>(s)))
          for (int r = 0; r < t.rows; ++r)
            for (int c = 0; c < t.cols; ++c) gx->at(r, c) += gy.at(r, o + c);
        o += t.cols;
      }
      break;
    }

    case NodeKind::kConcatRows: {
      int o = 0;
      for (std::size_t s = 0; s < n.inputs.size(); ++s) {
        const Tensor& t = vals_[n.inputs[s]];
        if (Tensor* gx = gin(static_cast<int>(s)))
          for (int r = 0; r < t.rows; ++r)
            for (int c = 0; c < t.cols; ++c) gx->at(r, c) += gy.at(o + r, c);
        o += t.rows;
      }
      break;
    }

    case NodeKind::kDense: {
      const Tensor& x = vals_[n.inputs[0]];
      Tensor* gx = gin(0);
      const DenseLayer* l = n.layer;
      const int od = l->out_dim, idm = l->in_dim;
      const bool train = n.train_layer;
      const std::size_t nch = chunk_count(x.rows, kRowChunk);
      std::vector<std::vector<double>> pdw, pdb;
      if (train) {
        pdw.resize(nch);
        pdb.resize(nch);
      }
      parallel_chunks(x.rows, kRowChunk, [&](std::size_t ci, std::size_t rb, std::size_t re) {
        std::vector<double>* dw = nullptr;
        std::vector<double>* db = nullptr;
        if (train) {
          pdw[ci].assign(l->w.size(), 0.0);
          pdb[ci].assign(l->b.size(), 0.0);
          dw = &pdw[ci];
          db = &pdb[ci];
        }
        for (std::size_t r = rb; r < re; ++r) {
          const double* yr = &y.v[r * od];
          const double* gyr = &gy.v[r * od];
          const double* xr = &x.v[r * idm];
          double* gxr = gx ? &gx->v[r * idm] : nullptr;
          for (int j = 0; j < od; ++j) {
            const double gp = (n.relu && yr[j] <= 0.0) ? 0.0 : gyr[j];
            if (gp == 0.0) continue;
            const float* wr = &l->w[static_cast<std::size_t>(j) * idm];
            if (gxr)
              for (int k = 0; k < idm; ++k) gxr[k] += gp * static_cast<double>(wr[k]);
            if (train) {
              double* dwr = &(*dw)[static_cast<std::size_t>(j) * idm];
              for (int k = 0; k < idm; ++k) dwr[k] += gp * xr[k];
              (*db)[j] += gp;
            }
          }
        }
      });
      if (train) {
        LayerGrad& lg = layer_grads_[n.layer_slot];
        for (std::size_t c = 0; c < nch; ++c) {
          for (std::size_t i = 0; i < lg.dw.size(); ++i) lg.dw[i] += pdw[c][i];
          for (std::size_t i = 0; i < lg.db.size(); ++i) lg.db[i] += pdb[c][i];
        }
      }
      break;
    }

    case NodeKind::kSliceCols: {
      if (Tensor* gx = gin(0))
        for (int r = 0; r < y.rows; ++r)
          for (int c = 0; c < n.count; ++c) gx->at(r, n.begin + c) += gy.at(r, c);
      break;
    }

    case NodeKind::kAdd: {
      for (int s = 0; s < 2; ++s)
        if (Tensor* gx = gin(s))
          for (std::size_t i = 0; i < gy.size(); ++i) gx->v[i] += gy.v[i];
      break;
    }

    case NodeKind::kAffineRows: {
      if (Tensor* gx = gin(0)) {
        const Mat3 at = n.a.transposed();
        for (int r = 0; r < y.rows; ++r) {
          const Vec3 g = at * Vec3{gy.at(r, 0), gy.at(r, 1), gy.at(r, 2)};
          gx->at(r, 0) += g.x;
          gx->at(r, 1) += g.y;
          gx->at(r, 2) += g.z;
        }
      }
      break;
    }

    case NodeKind::kQuatLeftMul: {
      if (Tensor* gx = gin(0)) {
        const Quat qc = n.q0.conjugate();
        for (int r = 0; r < y.rows; ++r) {
          const Quat g = qc * Quat{gy.at(r, 0), gy.at(r, 1), gy.at(r, 2), gy.at(r, 3)};
          gx->at(r, 0) += g.w;
          gx->at(r, 1) += g.x;
          gx->at(r, 2) += g.y;
          gx->at(r, 3) += g.z;
        }
      }
      break;
    }

    case NodeKind::kQuatRenorm: {
      if (Tensor* gx = gin(0)) {
        const Tensor& x = vals_[n.inputs[0]];
        for (int r = 0; r < y.rows; ++r) {
          const Quat q{x.at(r, 0), x.at(r, 1), x.at(r, 2), x.at(r, 3)};
          const double nn = q.norm();
          if (nn <= 0.0) continue;
          const Quat u{y.at(r, 0), y.at(r, 1), y.at(r, 2), y.at(r, 3)};
          const Quat g{gy.at(r, 0), gy.at(r, 1), gy.at(r, 2), gy.at(r, 3)};
          const double dot = u.w * g.w + u.x * g.x + u.y * g.y + u.z * g.z;
          gx->at(r, 0) += (g.w - u.w * dot) / nn;
          gx->at(r, 1) += (g.x - u.x * dot) / nn;
          gx->at(r, 2) += (g.y - u.y * dot) / nn;
          gx->at(r, 3) += (g.z - u.z * dot) / nn;
        }
      }
      break;
    }

    case NodeKind::kSigmoid: {
      if (Tensor* gx = gin(0))
        for (std::size_t i = 0; i < gy.size(); ++i)
          gx->v[i] += y.v[i] * (1.0 - y.v[i]) * gy.v[i];
      break;
    }

    case NodeKind::kScaledSigmoid: {
      if (Tensor* gx = gin(0))
        for (std::size_t i = 0; i < gy.size(); ++i)
          gx->v[i] += n.w * y.v[i] * (1.0 - y.v[i]) * gy.v[i];
      break;
    }

    case NodeKind::kExp: {
      if (Tensor* gx = gin(0))
        for (std::size_t i = 0; i < gy.size(); ++i) gx->v[i] += y.v[i] * gy.v[i];
      break;
    }

    case NodeKind::kMul: {
      const Tensor& ta = vals_[n.inputs[0]];
      const Tensor& tb = vals_[n.inputs[1]];
      if (Tensor* gx = gin(0))
        for (std::size_t i = 0; i < gy.size(); ++i) gx->v[i] += tb.v[i] * gy.v[i];
      if (Tensor* gx = gin(1))
        for (std::size_t i = 0; i < gy.size(); ++i) gx->v[i] += ta.v[i] * gy.v[i];
      break;
    }

    case NodeKind::kColorMap: {
      if (Tensor* gx = gin(0))
        for (std::size_t i = 0; i < gy.size(); ++i) gx->v[i] += kSH0 * gy.v[i];
      break;
    }

    case NodeKind::kComposite: {
      composite_backward(*n.work, vals_[n.inputs[0]], vals_[n.inputs[1]], vals_[n.inputs[2]],
                         vals_[n.inputs[3]], vals_[n.inputs[4]], gy, gin(0), gin(1), gin(2),
                         gin(3), gin(4));
      break;
    }

    case NodeKind::kSumSq: {
      if (Tensor* gx = gin(0)) {
        const Tensor& x = vals_[n.inputs[0]];
        const double g = gy.v[0];
        for (std::size_t i = 0; i < x.size(); ++i) gx->v[i] += 2.0 * x.v[i] * g;
      }
      break;
    }

    case NodeKind::kMse: {
      const Tensor& p = vals_[n.inputs[0]];
      const Tensor& t = vals_[n.inputs[1]];
      const double g = gy.v[0] * 2.0 / static_cast<double>(p.rows);
      if (Tensor* gx = gin(0))
        for (std::size_t i = 0; i < p.size(); ++i) gx->v[i] += g * (p.v[i] - t.v[i]);
      if (Tensor* gx = gin(1))
        for (std::size_t i = 0; i < p.size(); ++i) gx->v[i] -= g * (p.v[i] - t.v[i]);
      break;
    }
  }
}

const std::vector<double>* Tape::layer_grad_w(const DenseLayer& layer) const {
  auto it = layer_slots_.find(&layer);
  return it == layer_slots_.end() ? nullptr : &layer_grads_[it->second].dw;
}

const std::vector<double>* Tape::layer_grad_b(const DenseLayer& layer) const {
  auto it = layer_slots_.find(&layer);
  return it == layer_slots_.end() ? nullptr : &layer_grads_[it->second].db;
}

}  // namespace t4d
