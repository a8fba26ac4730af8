#include "tem4ctr/diff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace tem4ctr::diff {

// ---------------------------------------------------------------------------
// Tensor / ParamStore

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  Tensor t;
  std::size_t n = shape.empty() ? 0 : 1;
  for (auto d : shape) n *= d;
  t.shape = std::move(shape);
  t.values.assign(n, 0.0);
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad.assign(n, 0.0);
  return t;
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Tensor& ParamStore::create(const std::string& name, std::vector<std::size_t> shape,
                           bool requires_grad) {
  if (tensors_.count(name)) throw ConfigError("duplicate parameter: " + name);
  auto [it, inserted] = tensors_.emplace(name, Tensor::zeros(std::move(shape), requires_grad));
  (void)inserted;
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

namespace {

constexpr char kMagic[4] = {'T', '4', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("checkpoint truncated");
  return v;
}

}  // namespace

void ParamStore::save_binary(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, tensors_.size());
  for (const auto& [name, t] : tensors_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, t.requires_grad ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("failed writing checkpoint: " + path);
}

ParamStore ParamStore::load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a parameter checkpoint: " + path);
  if (get<std::uint32_t>(in) != kVersion) throw ParseError("unsupported checkpoint version");

  ParamStore store;
  const std::uint64_t count = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ParseError("checkpoint truncated");
    const bool requires_grad = get<std::uint8_t>(in) != 0;
    const std::uint32_t ndim = get<std::uint32_t>(in);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
    Tensor& t = store.create(name, std::move(shape), requires_grad);
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw ParseError("checkpoint truncated");
  }
  return store;
}

std::string ParamStore::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : tensors_) {
    j[name] = {{"shape", t.shape}, {"values", t.values}, {"requires_grad", t.requires_grad}};
  }
  return j.dump();
}

ParamStore ParamStore::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad parameter JSON: ") + e.what());
  }
  ParamStore store;
  for (const auto& [name, entry] : j.items()) {
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor& t = store.create(name, std::move(shape), entry.at("requires_grad").get<bool>());
    auto values = entry.at("values").get<std::vector<double>>();
    if (values.size() != t.size())
      throw ShapeError("parameter " + name + ": value count does not match shape");
    t.values = std::move(values);
  }
  return store;
}

void glorot_fill(Tensor& t, Rng& rng) {
  if (t.shape.size() != 2) throw ShapeError("glorot_fill expects a 2-D tensor");
  const double bound = std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[1]));
  for (auto& v : t.values) v = rng.uniform(-bound, bound);
}

Mlp3 make_mlp3(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t h1,
               std::size_t h2, std::size_t out, Rng& rng) {
  Mlp3 net;
  net.w1 = &store.create(prefix + ".w1", {h1, in});
  net.b1 = &store.create(prefix + ".b1", {h1});
  net.w2 = &store.create(prefix + ".w2", {h2, h1});
  net.b2 = &store.create(prefix + ".b2", {h2});
  net.w3 = &store.create(prefix + ".w3", {out, h2});
  net.b3 = &store.create(prefix + ".b3", {out});
  glorot_fill(*net.w1, rng);
  glorot_fill(*net.w2, rng);
  glorot_fill(*net.w3, rng);
  return net;
}

Mlp3 find_mlp3(ParamStore& store, const std::string& prefix) {
  Mlp3 net;
  net.w1 = &store.at(prefix + ".w1");
  net.b1 = &store.at(prefix + ".b1");
  net.w2 = &store.at(prefix + ".w2");
  net.b2 = &store.at(prefix + ".b2");
  net.w3 = &store.at(prefix + ".w3");
  net.b3 = &store.at(prefix + ".b3");
  if (net.w2->cols() != net.w1->rows() || net.w3->cols() != net.w2->rows() ||
      net.b1->size() != net.w1->rows() || net.b2->size() != net.w2->rows() ||
      net.b3->size() != net.w3->rows())
    throw ShapeError("mlp3 '" + prefix + "': layer shapes do not compose");
  return net;
}

// ---------------------------------------------------------------------------
// Graph

NodeId Graph::alloc(std::size_t n) {
  Node nd;
  nd.off = buf_.size();
  nd.len = static_cast<std::uint32_t>(n);
  buf_.resize(buf_.size() + 2 * n, 0.0);
  nodes_.push_back(std::move(nd));
  return static_cast<NodeId>(nodes_.size() - 1);
}

std::span<const double> Graph::val(NodeId id) const {
  const Node& nd = nodes_[id];
  return {buf_.data() + nd.off, nd.len};
}

std::span<double> Graph::val_mut(NodeId id) {
  const Node& nd = nodes_[id];
  return {buf_.data() + nd.off, nd.len};
}

std::span<double> Graph::grad(NodeId id) {
  const Node& nd = nodes_[id];
  return {buf_.data() + nd.off + nd.len, nd.len};
}

double Graph::scalar(NodeId id) const {
  if (len(id) != 1) throw ShapeError("scalar() on a node of length " + std::to_string(len(id)));
  return val(id)[0];
}

void Graph::clear() {
  buf_.clear();
  nodes_.clear();
  swept_ = false;
}

NodeId Graph::input(std::span<const double> v) {
  NodeId id = alloc(v.size());
  std::copy(v.begin(), v.end(), val_mut(id).begin());
  return id;
}

NodeId Graph::input(std::initializer_list<double> v) {
  return input(std::span<const double>(v.begin(), v.size()));
}

NodeId Graph::zeros(std::size_t n) { return alloc(n); }

NodeId Graph::param(Tensor& t) {
  NodeId id = alloc(t.size());
  std::copy(t.values.begin(), t.values.end(), val_mut(id).begin());
  if (t.requires_grad) {
    nodes_[id].back = [p = &t](Graph& g, NodeId self) {
      auto gr = g.grad(self);
      for (std::size_t i = 0; i < gr.size(); ++i) p->grad[i] += gr[i];
    };
  }
  return id;
}

NodeId Graph::row(Tensor& table, std::size_t r) {
  if (table.shape.size() != 2) throw ShapeError("row() expects a 2-D tensor");
  if (r >= table.rows()) throw ShapeError("row index out of range");
  const std::size_t d = table.cols();
  NodeId id = alloc(d);
  const double* src = table.values.data() + r * d;
  std::copy(src, src + d, val_mut(id).begin());
  if (table.requires_grad) {
    nodes_[id].back = [p = &table, r32 = static_cast<std::uint32_t>(r)](Graph& g, NodeId self) {
      auto gr = g.grad(self);
      double* dst = p->grad.data() + static_cast<std::size_t>(r32) * gr.size();
      for (std::size_t i = 0; i < gr.size(); ++i) dst[i] += gr[i];
    };
  }
  return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
  if (len(a) != len(b)) throw ShapeError("add: length mismatch");
  NodeId id = alloc(len(a));
  auto va = val(a);
  auto vb = val(b);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  nodes_[id].back = [a, b](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto ga = g.grad(a);
    auto gb = g.grad(b);
    for (std::size_t i = 0; i < gr.size(); ++i) {
      ga[i] += gr[i];
      gb[i] += gr[i];
    }
  };
  return id;
}

NodeId Graph::sub(NodeId a, NodeId b) {
  if (len(a) != len(b)) throw ShapeError("sub: length mismatch");
  NodeId id = alloc(len(a));
  auto va = val(a);
  auto vb = val(b);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  nodes_[id].back = [a, b](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto ga = g.grad(a);
    auto gb = g.grad(b);
    for (std::size_t i = 0; i < gr.size(); ++i) {
      ga[i] += gr[i];
      gb[i] -= gr[i];
    }
  };
  return id;
}

NodeId Graph::hadamard(NodeId a, NodeId b) {
  if (len(a) != len(b)) throw ShapeError("hadamard: length mismatch");
  NodeId id = alloc(len(a));
  auto va = val(a);
  auto vb = val(b);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  nodes_[id].back = [a, b](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto va = g.val(a);
    auto vb = g.val(b);
    auto ga = g.grad(a);
    auto gb = g.grad(b);
    for (std::size_t i = 0; i < gr.size(); ++i) {
      ga[i] += gr[i] * vb[i];
      gb[i] += gr[i] * va[i];
    }
  };
  return id;
}

NodeId Graph::concat(std::span<const NodeId> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  std::size_t total = 0;
  for (auto p : parts) total += len(p);
  NodeId id = alloc(total);
  auto out = val_mut(id);
  std::size_t off = 0;
  for (auto p : parts) {
    auto v = val(p);
    std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  if (parts.size() <= 3) {
    // Small-capture path: fits std::function's inline storage, which matters
    // because per-item embeddings funnel through here.
    std::array<NodeId, 3> ids{};
    std::copy(parts.begin(), parts.end(), ids.begin());
    const auto cnt = static_cast<std::uint8_t>(parts.size());
    nodes_[id].back = [ids, cnt](Graph& g, NodeId self) {
      auto gr = g.grad(self);
      std::size_t off = 0;
      for (std::uint8_t k = 0; k < cnt; ++k) {
        auto gp = g.grad(ids[k]);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gr[off + i];
        off += gp.size();
      }
    };
  } else {
    nodes_[id].back = [ids = std::vector<NodeId>(parts.begin(), parts.end())](Graph& g,
                                                                              NodeId self) {
      auto gr = g.grad(self);
      std::size_t off = 0;
      for (NodeId p : ids) {
        auto gp = g.grad(p);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gr[off + i];
        off += gp.size();
      }
    };
  }
  return id;
}

NodeId Graph::concat(std::initializer_list<NodeId> parts) {
  return concat(std::span<const NodeId>(parts.begin(), parts.size()));
}

NodeId Graph::interaction(NodeId q, NodeId k) {
  const std::size_t d = len(q);
  if (d != len(k)) throw ShapeError("interaction: length mismatch");
  NodeId id = alloc(4 * d);
  auto vq = val(q);
  auto vk = val(k);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = vq[i];
    out[d + i] = vk[i];
    out[2 * d + i] = vq[i] - vk[i];
    out[3 * d + i] = vq[i] * vk[i];
  }
  nodes_[id].back = [q, k](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto vq = g.val(q);
    auto vk = g.val(k);
    auto gq = g.grad(q);
    auto gk = g.grad(k);
    const std::size_t d = vq.size();
    for (std::size_t i = 0; i < d; ++i) {
      gq[i] += gr[i] + gr[2 * d + i] + gr[3 * d + i] * vk[i];
      gk[i] += gr[d + i] - gr[2 * d + i] + gr[3 * d + i] * vq[i];
    }
  };
  return id;
}

NodeId Graph::relu(NodeId x) {
  NodeId id = alloc(len(x));
  auto vx = val(x);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] > 0.0 ? vx[i] : 0.0;
  nodes_[id].back = [x](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto vx = g.val(x);
    auto gx = g.grad(x);
    for (std::size_t i = 0; i < gr.size(); ++i)
      if (vx[i] > 0.0) gx[i] += gr[i];
  };
  return id;
}

NodeId Graph::sigmoid(NodeId x) {
  NodeId id = alloc(len(x));
  auto vx = val(x);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z = vx[i];
    out[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  nodes_[id].back = [x](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto s = g.val(self);
    auto gx = g.grad(x);
    for (std::size_t i = 0; i < gr.size(); ++i) gx[i] += gr[i] * s[i] * (1.0 - s[i]);
  };
  return id;
}

NodeId Graph::log(NodeId x) {
  NodeId id = alloc(len(x));
  auto vx = val(x);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(vx[i]);
  nodes_[id].back = [x](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto vx = g.val(x);
    auto gx = g.grad(x);
    for (std::size_t i = 0; i < gr.size(); ++i) gx[i] += gr[i] / vx[i];
  };
  return id;
}

NodeId Graph::log1m(NodeId x) {
  NodeId id = alloc(len(x));
  auto vx = val(x);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log1p(-vx[i]);
  nodes_[id].back = [x](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto vx = g.val(x);
    auto gx = g.grad(x);
    for (std::size_t i = 0; i < gr.size(); ++i) gx[i] -= gr[i] / (1.0 - vx[i]);
  };
  return id;
}

NodeId Graph::clamp_prob(NodeId x) {
  constexpr double kLo = 1e-12;
  constexpr double kHi = 1.0 - 1e-12;
  NodeId id = alloc(len(x));
  auto vx = val(x);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(vx[i], kLo, kHi);
  nodes_[id].back = [x](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto vx = g.val(x);
    auto gx = g.grad(x);
    for (std::size_t i = 0; i < gr.size(); ++i)
      if (vx[i] > kLo && vx[i] < kHi) gx[i] += gr[i];
  };
  return id;
}

NodeId Graph::scale_const(double c, NodeId x) {
  NodeId id = alloc(len(x));
  auto vx = val(x);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * vx[i];
  nodes_[id].back = [c, x](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto gx = g.grad(x);
    for (std::size_t i = 0; i < gr.size(); ++i) gx[i] += c * gr[i];
  };
  return id;
}

NodeId Graph::inner(NodeId a, NodeId b) {
  if (len(a) != len(b)) throw ShapeError("inner: length mismatch");
  NodeId id = alloc(1);
  auto va = val(a);
  auto vb = val(b);
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  val_mut(id)[0] = s;
  nodes_[id].back = [a, b](Graph& g, NodeId self) {
    const double g0 = g.grad(self)[0];
    if (g0 == 0.0) return;
    auto va = g.val(a);
    auto vb = g.val(b);
    auto ga = g.grad(a);
    auto gb = g.grad(b);
    for (std::size_t i = 0; i < va.size(); ++i) {
      ga[i] += g0 * vb[i];
      gb[i] += g0 * va[i];
    }
  };
  return id;
}

NodeId Graph::matvec(Tensor& w, NodeId x) {
  if (w.shape.size() != 2) throw ShapeError("matvec: weight must be 2-D");
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  if (cols != len(x)) throw ShapeError("matvec: weight cols != input length");
  NodeId id = alloc(rows);
  auto vx = val(x);
  auto out = val_mut(id);
  const double* wd = w.values.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = wd + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * vx[c];
    out[r] = s;
  }
  nodes_[id].back = [pw = &w, x](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto vx = g.val(x);
    auto gx = g.grad(x);
    const std::size_t rows = pw->rows();
    const std::size_t cols = pw->cols();
    const double* wd = pw->values.data();
    double* wg = pw->requires_grad ? pw->grad.data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const double gr_r = gr[r];
      if (gr_r == 0.0) continue;
      const double* wr = wd + r * cols;
      for (std::size_t c = 0; c < cols; ++c) gx[c] += gr_r * wr[c];
      if (wg) {
        double* wgr = wg + r * cols;
        for (std::size_t c = 0; c < cols; ++c) wgr[c] += gr_r * vx[c];
      }
    }
  };
  return id;
}

NodeId Graph::bias_add(Tensor& b, NodeId x) {
  if (b.shape.size() != 1 || b.size() != len(x))
    throw ShapeError("bias_add: bias must be 1-D matching input length");
  NodeId id = alloc(len(x));
  auto vx = val(x);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] + b.values[i];
  nodes_[id].back = [pb = &b, x](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto gx = g.grad(x);
    double* bg = pb->requires_grad ? pb->grad.data() : nullptr;
    for (std::size_t i = 0; i < gr.size(); ++i) {
      gx[i] += gr[i];
      if (bg) bg[i] += gr[i];
    }
  };
  return id;
}

NodeId Graph::affine(Tensor& w, Tensor& b, NodeId x) { return bias_add(b, matvec(w, x)); }

NodeId Graph::mlp3(const Mlp3& net, NodeId x) {
  if (len(x) != net.in_dim()) throw ShapeError("mlp3: input length != w1 cols");
  NodeId h = relu(affine(*net.w1, *net.b1, x));
  h = relu(affine(*net.w2, *net.b2, h));
  return affine(*net.w3, *net.b3, h);
}

NodeId Graph::scale(NodeId s, NodeId v) {
  if (len(s) != 1) throw ShapeError("scale: multiplier must be scalar");
  NodeId id = alloc(len(v));
  const double sv = val(s)[0];
  auto vv = val(v);
  auto out = val_mut(id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * vv[i];
  nodes_[id].back = [s, v](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    const double sv = g.val(s)[0];
    auto vv = g.val(v);
    auto gv = g.grad(v);
    double gs = 0.0;
    for (std::size_t i = 0; i < gr.size(); ++i) {
      gs += gr[i] * vv[i];
      gv[i] += sv * gr[i];
    }
    g.grad(s)[0] += gs;
  };
  return id;
}

NodeId Graph::div(NodeId a, NodeId b) {
  if (len(a) != 1 || len(b) != 1) throw ShapeError("div: operands must be scalar");
  NodeId id = alloc(1);
  val_mut(id)[0] = val(a)[0] / val(b)[0];
  nodes_[id].back = [a, b](Graph& g, NodeId self) {
    const double g0 = g.grad(self)[0];
    if (g0 == 0.0) return;
    const double va = g.val(a)[0];
    const double vb = g.val(b)[0];
    g.grad(a)[0] += g0 / vb;
    g.grad(b)[0] -= g0 * va / (vb * vb);
  };
  return id;
}

NodeId Graph::stack(std::span<const NodeId> scalars) {
  if (scalars.empty()) throw ShapeError("stack: no inputs");
  for (auto s : scalars)
    if (len(s) != 1) throw ShapeError("stack: inputs must be scalar");
  NodeId id = alloc(scalars.size());
  auto out = val_mut(id);
  for (std::size_t i = 0; i < scalars.size(); ++i) out[i] = val(scalars[i])[0];
  nodes_[id].back = [ids = std::vector<NodeId>(scalars.begin(), scalars.end())](Graph& g,
                                                                                NodeId self) {
    auto gr = g.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) g.grad(ids[i])[0] += gr[i];
  };
  return id;
}

NodeId Graph::sum(std::span<const NodeId> scalars) {
  if (scalars.empty()) throw ShapeError("sum: no inputs");
  NodeId id = alloc(1);
  double s = 0.0;
  for (auto n : scalars) {
    if (len(n) != 1) throw ShapeError("sum: inputs must be scalar");
    s += val(n)[0];
  }
  val_mut(id)[0] = s;
  nodes_[id].back = [ids = std::vector<NodeId>(scalars.begin(), scalars.end())](Graph& g,
                                                                                NodeId self) {
    const double g0 = g.grad(self)[0];
    for (NodeId n : ids) g.grad(n)[0] += g0;
  };
  return id;
}

NodeId Graph::mean(std::span<const NodeId> vectors) {
  if (vectors.empty()) throw ShapeError("mean: no inputs");
  const std::size_t d = len(vectors[0]);
  for (auto v : vectors)
    if (len(v) != d) throw ShapeError("mean: length mismatch");
  NodeId id = alloc(d);
  auto out = val_mut(id);
  for (auto v : vectors) {
    auto vv = val(v);
    for (std::size_t i = 0; i < d; ++i) out[i] += vv[i];
  }
  const double inv = 1.0 / static_cast<double>(vectors.size());
  for (std::size_t i = 0; i < d; ++i) out[i] *= inv;
  nodes_[id].back = [ids = std::vector<NodeId>(vectors.begin(), vectors.end()),
                     inv](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    for (NodeId v : ids) {
      auto gv = g.grad(v);
      for (std::size_t i = 0; i < gr.size(); ++i) gv[i] += inv * gr[i];
    }
  };
  return id;
}

NodeId Graph::weighted_sum(NodeId weights, std::span<const NodeId> vectors) {
  if (len(weights) != vectors.size())
    throw ShapeError("weighted_sum: weight count != vector count");
  if (vectors.empty()) throw ShapeError("weighted_sum: no inputs");
  const std::size_t d = len(vectors[0]);
  for (auto v : vectors)
    if (len(v) != d) throw ShapeError("weighted_sum: length mismatch");
  NodeId id = alloc(d);
  auto vw = val(weights);
  auto out = val_mut(id);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    auto vv = val(vectors[k]);
    const double wk = vw[k];
    for (std::size_t i = 0; i < d; ++i) out[i] += wk * vv[i];
  }
  nodes_[id].back = [weights, ids = std::vector<NodeId>(vectors.begin(), vectors.end())](
                        Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto vw = g.val(weights);
    auto gw = g.grad(weights);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto vv = g.val(ids[k]);
      auto gv = g.grad(ids[k]);
      const double wk = vw[k];
      double acc = 0.0;
      for (std::size_t i = 0; i < gr.size(); ++i) {
        acc += gr[i] * vv[i];
        gv[i] += wk * gr[i];
      }
      gw[k] += acc;
    }
  };
  return id;
}

NodeId Graph::masked_softmax(NodeId logits, std::span<const std::uint8_t> mask, bool* empty) {
  const std::size_t n = len(logits);
  if (mask.size() != n) throw ShapeError("masked_softmax: mask length != logits length");
  NodeId id = alloc(n);
  auto vx = val(logits);
  auto out = val_mut(id);

  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] && vx[i] > mx) mx = vx[i];

  if (empty) *empty = false;
  if (mx == -std::numeric_limits<double>::infinity()) {
    if (empty) *empty = true;  // all slots invalid: weights stay zero
  } else {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = mask[i] ? std::exp(vx[i] - mx) : 0.0;
      z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  }

  // Invalid slots carry weight exactly 0, so the softmax Jacobian below
  // sends them no gradient; the mask is not needed again.
  nodes_[id].back = [logits](Graph& g, NodeId self) {
    auto gr = g.grad(self);
    auto w = g.val(self);
    auto gx = g.grad(logits);
    double s = 0.0;
    for (std::size_t i = 0; i < gr.size(); ++i) s += w[i] * gr[i];
    for (std::size_t i = 0; i < gr.size(); ++i) gx[i] += w[i] * (gr[i] - s);
  };
  return id;
}

NodeId Graph::project(NodeId e, NodeId c) {
  if (len(e) != len(c)) throw ShapeError("project: length mismatch");
  auto ve = val(e);
  double q = 0.0;
  for (double v : ve) q += v * v;
  if (q < 1e-24) {  // |e| < 1e-12: the projection direction is undefined
    ++zero_norm_projections_;
    return zeros(len(e));
  }
  NodeId s = inner(e, c);
  NodeId qn = inner(e, e);
  return scale(div(s, qn), e);
}

void Graph::backward(NodeId loss) {
  if (len(loss) != 1) throw ShapeError("backward: loss must be scalar");
  if (swept_) throw Error("backward() already ran on this graph; clear() first");
  swept_ = true;
  grad(loss)[0] = 1.0;
  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& nd = nodes_[id];
    if (nd.back) nd.back(*this, id);
  }
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(ParamStore& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, t] : params.tensors()) {
    if (!t.requires_grad) continue;
    Slot& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m.assign(t.size(), 0.0);
      slot.v.assign(t.size(), 0.0);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
      slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      t.values[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient audit

double finite_diff_check(const std::function<double()>& f, ParamStore& params, double step) {
  // Snapshot the analytic gradients before we start nudging values.
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, t] : params.tensors())
    if (t.requires_grad) analytic[name] = t.grad;

  double worst = 0.0;
  for (auto& [name, t] : params.tensors()) {
    if (!t.requires_grad) continue;
    const auto& a = analytic[name];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.values[i];
      t.values[i] = saved + step;
      const double fp = f();
      t.values[i] = saved - step;
      const double fm = f();
      t.values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace tem4ctr::diff
