#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tem4ctr/common.hpp"

namespace tem4ctr::diff {

// Dense double-precision value carrier. Parameters flip requires_grad and
// keep a same-sized gradient buffer that backward passes accumulate into.
// 1-D shapes are vectors, 2-D shapes are row-major matrices whose rows double
// as embedding slots.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  void zero_grad();
};

// Named parameter collection. std::map keeps iteration deterministic and
// tensor addresses stable, which graph nodes rely on.
class ParamStore {
 public:
  Tensor& create(const std::string& name, std::vector<std::size_t> shape,
                 bool requires_grad = true);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }

  void zero_grad();
  std::size_t total_size() const;

  std::map<std::string, Tensor>& tensors() { return tensors_; }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  // Versioned little-endian binary checkpoint; round-trips values bit-exactly.
  void save_binary(const std::string& path) const;
  static ParamStore load_binary(const std::string& path);

  // JSON form (name -> shape + row-major values) for inspection and
  // interchange.
  std::string to_json() const;
  static ParamStore from_json(const std::string& text);

 private:
  std::map<std::string, Tensor> tensors_;
};

// Fills a 2-D tensor uniformly in +-sqrt(6 / (shape[0] + shape[1])).
void glorot_fill(Tensor& t, Rng& rng);

// Three affine layers: rectifier on the two hidden layers, linear output.
struct Mlp3 {
  Tensor* w1 = nullptr;
  Tensor* b1 = nullptr;
  Tensor* w2 = nullptr;
  Tensor* b2 = nullptr;
  Tensor* w3 = nullptr;
  Tensor* b3 = nullptr;

  std::size_t in_dim() const { return w1->cols(); }
  std::size_t out_dim() const { return w3->rows(); }
};

// Creates prefix.w1/.b1/../.b3 in the store, weights Glorot-initialized from
// rng, biases zero.
Mlp3 make_mlp3(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t h1,
               std::size_t h2, std::size_t out, Rng& rng);

// Rebinds an Mlp3 onto tensors already present (e.g. after checkpoint load).
Mlp3 find_mlp3(ParamStore& store, const std::string& prefix);

using NodeId = std::uint32_t;

// Reverse-mode tape over vector-valued nodes. Values are computed eagerly at
// construction; backward() replays the tape in reverse creation order, which
// is a topological order by construction. Nodes referencing parameters
// accumulate straight into Tensor::grad, so one store can collect gradients
// across many graphs (per-sample graphs within a batch, for instance).
//
// Buffers are bump-allocated from one arena and survive clear(), keeping
// per-sample graph rebuilds cheap.
class Graph {
 public:
  // Leaves.
  NodeId input(std::span<const double> v);
  NodeId input(std::initializer_list<double> v);
  NodeId zeros(std::size_t len);
  NodeId param(Tensor& t);
  NodeId row(Tensor& table, std::size_t r);

  // Elementwise and structural.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId concat(std::span<const NodeId> parts);
  NodeId concat(std::initializer_list<NodeId> parts);
  // Interaction features [q, k, q - k, q ⊙ k] used by every attention scorer.
  NodeId interaction(NodeId q, NodeId k);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId log(NodeId x);
  NodeId log1m(NodeId x);  // log(1 - x), stable near x = 1
  NodeId clamp_prob(NodeId x);  // clamp into [1e-12, 1 - 1e-12]
  NodeId scale_const(double c, NodeId x);

  // Linear algebra and reductions.
  NodeId inner(NodeId a, NodeId b);
  NodeId matvec(Tensor& w, NodeId x);
  NodeId bias_add(Tensor& b, NodeId x);
  NodeId affine(Tensor& w, Tensor& b, NodeId x);
  NodeId mlp3(const Mlp3& net, NodeId x);
  NodeId scale(NodeId s, NodeId v);  // scalar node times vector node
  NodeId div(NodeId a, NodeId b);    // scalar / scalar
  NodeId stack(std::span<const NodeId> scalars);
  NodeId sum(std::span<const NodeId> scalars);
  NodeId mean(std::span<const NodeId> vectors);
  NodeId weighted_sum(NodeId weights, std::span<const NodeId> vectors);

  // Max-subtracted softmax over the valid slots; invalid slots get weight 0.
  // An all-invalid mask yields all-zero weights and sets *empty when given.
  NodeId masked_softmax(NodeId logits, std::span<const std::uint8_t> mask,
                        bool* empty = nullptr);

  // Vector projection (<e,c>/<e,e>) e. A norm below 1e-12 short-circuits to
  // a zero vector (counted in zero_norm_projections) instead of dividing.
  NodeId project(NodeId e, NodeId c);

  std::span<const double> val(NodeId id) const;
  std::span<double> grad(NodeId id);
  double scalar(NodeId id) const;
  std::size_t len(NodeId id) const { return nodes_[id].len; }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once. loss must be scalar.
  void backward(NodeId loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }
  std::size_t zero_norm_projections() const { return zero_norm_projections_; }

 private:
  struct Node {
    std::size_t off = 0;  // values at [off, off+len), grads right behind
    std::uint32_t len = 0;
    std::function<void(Graph&, NodeId)> back;
  };

  NodeId alloc(std::size_t len);
  std::span<double> val_mut(NodeId id);
  void check(NodeId id) const;

  std::vector<double> buf_;
  std::vector<Node> nodes_;
  std::size_t zero_norm_projections_ = 0;
  bool swept_ = false;
};

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a ParamStore. One step() consumes the gradients
// accumulated since the last zero_grad().
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStore& params);
  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::map<std::string, Slot> slots_;
  std::int64_t t_ = 0;
};

// Audits analytic gradients against central differences. Expects the
// analytic gradients already accumulated in the store (one backward pass);
// f must re-evaluate the same scalar function purely from current parameter
// values. Returns the worst relative error over every coordinate of every
// requires_grad tensor, with denominator max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<double()>& f, ParamStore& params, double step);

}  // namespace tem4ctr::diff
