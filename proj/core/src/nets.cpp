#include "t4d/nets.hpp"

#include <cstring>
#include <fstream>

#include "t4d/error.hpp"
#include "t4d/mathutil.hpp"

namespace t4d {

namespace {

const std::vector<int> kHidden{64, 64, 64};

std::vector<int> net_dims(int in_dim, int out_dim) {
  std::vector<int> dims{in_dim};
  dims.insert(dims.end(), kHidden.begin(), kHidden.end());
  dims.push_back(out_dim);
  return dims;
}

std::vector<double> featurize(const Vec3& x, const Quat& q, double t, int bands_x,
                              int bands_t) {
  std::vector<double> feat;
  feat.reserve(posenc_dim(3, bands_x) + 4 + posenc_dim(1, bands_t));
  const std::vector<double> pex = positional_encode({x.x, x.y, x.z}, bands_x);
  feat.insert(feat.end(), pex.begin(), pex.end());
  feat.push_back(q.w);
  feat.push_back(q.x);
  feat.push_back(q.y);
  feat.push_back(q.z);
  const std::vector<double> pet = positional_encode({t}, bands_t);
  feat.insert(feat.end(), pet.begin(), pet.end());
  return feat;
}

int record_backbone(Tape& tape, const Mlp& mlp, int bands_x, int bands_t, int x, int q, int t,
                    bool train) {
  const int pex = tape.posenc(x, bands_x);
  const int pet = tape.posenc(t, bands_t);
  int h = tape.concat_cols({pex, q, pet});
  for (std::size_t li = 0; li < mlp.layers.size(); ++li)
    h = tape.dense(h, &mlp.layers[li], li + 1 < mlp.layers.size(), train);
  return h;
}

}  // namespace

DeformationNet make_deformation_net(std::uint64_t seed, std::uint32_t net_id) {
  DeformationNet net;
  net.mlp = make_mlp(net_dims(net.input_dim(), 7), seed, net_id);
  return net;
}

TransitionNet make_transition_net(std::uint64_t seed, std::uint32_t net_id, double w_trans) {
  if (w_trans < 1.0) throw Error("net.wtrans", "w_trans must be >= 1");
  TransitionNet net;
  net.w_trans = w_trans;
  net.mlp = make_mlp(net_dims(net.input_dim(), 1), seed, net_id);
  return net;
}

NetBundle make_net_bundle(std::uint64_t seed, std::size_t n_objects,
                          std::size_t n_transitions, double w_trans) {
  NetBundle nets;
  nets.deforms.reserve(n_objects);
  for (std::size_t i = 0; i < n_objects; ++i)
    nets.deforms.push_back(make_deformation_net(seed, static_cast<std::uint32_t>(2 * i)));
  nets.transitions.reserve(n_transitions);
  for (std::size_t k = 0; k < n_transitions; ++k)
    nets.transitions.push_back(
        make_transition_net(seed, static_cast<std::uint32_t>(2 * k + 1), w_trans));
  return nets;
}

std::vector<DenseLayer*> dyn_layers(NetBundle& nets) {
  std::vector<DenseLayer*> out;
  for (auto& d : nets.deforms)
    for (auto& l : d.mlp.layers) out.push_back(&l);
  for (auto& t : nets.transitions)
    for (auto& l : t.mlp.layers) out.push_back(&l);
  return out;
}

void deform(const DeformationNet& net, const Vec3& x, const Quat& q, double t, Vec3* dx,
            Quat* dq) {
  const std::vector<double> out =
      net.mlp.forward(featurize(x, q, t, net.bands_x, net.bands_t));
  *dx = {out[0], out[1], out[2]};
  *dq = {out[3], out[4], out[5], out[6]};
}

double transition_prob(const TransitionNet& net, const Vec3& x, const Quat& q, double t) {
  const std::vector<double> out =
      net.mlp.forward(featurize(x, q, t, net.bands_x, net.bands_t));
  return sigmoid_strict(net.w_trans * out[0]);
}

DeformRecord record_deform(Tape& tape, const DeformationNet& net, int x, int q, int t,
                           bool train) {
  const int h = record_backbone(tape, net.mlp, net.bands_x, net.bands_t, x, q, t, train);
  DeformRecord rec;
  rec.dx = tape.slice_cols(h, 0, 3);
  rec.dq = tape.slice_cols(h, 3, 4);
  return rec;
}

int record_transition(Tape& tape, const TransitionNet& net, int x, int q, int t, bool train) {
  const int h = record_backbone(tape, net.mlp, net.bands_x, net.bands_t, x, q, t, train);
  return tape.scaled_sigmoid(h, net.w_trans);
}

namespace {

constexpr char kMagic[4] = {'T', '4', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > b.size()) throw Error("ckpt.truncated", "checkpoint file ends early");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(b.begin() + pos, b.begin() + pos + n);
    pos += n;
    return s;
  }
};

void put_mlp_params(std::vector<std::uint8_t>& out, const Mlp& mlp) {
  for (const auto& l : mlp.layers) {
    for (float v : l.w) put_f32(out, v);
    for (float v : l.b) put_f32(out, v);
  }
}

void put_net_header(std::vector<std::uint8_t>& out, std::uint32_t kind, const std::string& name,
                    const std::vector<int>& dims, int bands_x, int bands_t, double w_trans) {
  put_u32(out, kind);
  put_string(out, name);
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(bands_x));
  put_u32(out, static_cast<std::uint32_t>(bands_t));
  put_f64(out, w_trans);
}

Mlp read_mlp(Reader& r, const std::vector<int>& dims) {
  Mlp mlp;
  mlp.dims = dims;
  mlp.layers.resize(dims.size() - 1);
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    DenseLayer& l = mlp.layers[li];
    l.in_dim = dims[li];
    l.out_dim = dims[li + 1];
    l.w.resize(static_cast<std::size_t>(l.out_dim) * l.in_dim);
    l.b.resize(static_cast<std::size_t>(l.out_dim));
    for (auto& v : l.w) v = r.f32();
    for (auto& v : l.b) v = r.f32();
  }
  return mlp;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const NetBundle& nets) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(nets.deforms.size() + nets.transitions.size()));
  for (std::size_t i = 0; i < nets.deforms.size(); ++i) {
    const DeformationNet& d = nets.deforms[i];
    put_net_header(out, 0, "deform" + std::to_string(i), d.mlp.dims, d.bands_x, d.bands_t,
                   0.0);
    put_mlp_params(out, d.mlp);
  }
  for (std::size_t k = 0; k < nets.transitions.size(); ++k) {
    const TransitionNet& t = nets.transitions[k];
    put_net_header(out, 1, "transition" + std::to_string(k), t.mlp.dims, t.bands_x, t.bands_t,
                   t.w_trans);
    put_mlp_params(out, t.mlp);
  }
  return out;
}

NetBundle parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error("ckpt.magic", "not a T4DN checkpoint");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw Error("ckpt.version",
                "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  NetBundle nets;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw Error("ckpt.dim", "unknown network kind");
    r.str();  // name, informational
    const std::uint32_t ndims = r.u32();
    if (ndims < 2 || ndims > 64) throw Error("ckpt.dim", "bad layer dimension count");
    std::vector<int> dims(ndims);
    for (auto& d : dims) {
      d = static_cast<int>(r.u32());
      if (d <= 0 || d > 1 << 20) throw Error("ckpt.dim", "bad layer dimension");
    }
    const int bands_x = static_cast<int>(r.u32());
    const int bands_t = static_cast<int>(r.u32());
    if (bands_x < 0 || bands_x > 64 || bands_t < 0 || bands_t > 64)
      throw Error("ckpt.dim", "bad band count");
    const double w_trans = r.f64();
    const int expect_in = posenc_dim(3, bands_x) + 4 + posenc_dim(1, bands_t);
    if (dims.front() != expect_in)
      throw Error("ckpt.dim", "input width disagrees with band counts");
    if (kind == 0) {
      if (dims.back() != 7) throw Error("ckpt.dim", "deformation output width must be 7");
      DeformationNet d;
      d.bands_x = bands_x;
      d.bands_t = bands_t;
      d.mlp = read_mlp(r, dims);
      nets.deforms.push_back(std::move(d));
    } else {
      if (dims.back() != 1) throw Error("ckpt.dim", "transition output width must be 1");
      if (w_trans < 1.0) throw Error("ckpt.dim", "w_trans must be >= 1");
      TransitionNet t;
      t.bands_x = bands_x;
      t.bands_t = bands_t;
      t.w_trans = w_trans;
      t.mlp = read_mlp(r, dims);
      nets.transitions.push_back(std::move(t));
    }
  }
  if (nets.deforms.empty()) throw Error("ckpt.dim", "checkpoint has no deformation network");
  return nets;
}

void save_checkpoint(const NetBundle& nets, const std::string& path) {
  const auto bytes = serialize_checkpoint(nets);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("ckpt.io", "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("ckpt.io", "write failed for '" + path + "'");
}

NetBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("ckpt.io", "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t bundle_hash(const NetBundle& nets) {
  const auto bytes = serialize_checkpoint(nets);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace t4d
