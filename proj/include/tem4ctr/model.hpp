#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tem4ctr/common.hpp"
#include "tem4ctr/diff.hpp"
#include "tem4ctr/types.hpp"

namespace tem4ctr::model {

// Model ablations. Full wires temporal context search, projection
// enhancement, and attention-based interest extraction together; each
// ablation removes one mechanism. AvgPoolDnn is the plain click-history
// average-pooling DNN used as the uplift base.
enum class Variant { Full, NoStm, NoPem, NoIem, AvgPoolDnn };

// Interest extraction: target attention (the default) or average pooling.
enum class IemKind { TargetAttention, AvgPool };

const char* to_string(Variant v);
const char* to_string(IemKind k);
Variant variant_from_string(const std::string& s);
IemKind iem_from_string(const std::string& s);

struct ModelConfig {
  std::size_t d = 16;          // per-field embedding width
  std::int64_t num_items = 0;  // vocab bounds: ids live in [0, num_items)
  std::int64_t num_cats = 0;
  std::size_t dense_dim = 0;   // width of the optional dense feature input
  Variant variant = Variant::Full;
  IemKind iem_kind = IemKind::TargetAttention;
  bool iem_plain_concat = false;  // score [q, k] instead of [q, k, q-k, q*k]
  std::size_t scorer_h1 = 36;
  std::size_t scorer_h2 = 16;
  std::size_t head_h1 = 64;
  std::size_t head_h2 = 32;

  // Item representation width: id and category embeddings, plus a projected
  // dense block when configured.
  std::size_t d_model() const { return (dense_dim > 0 ? 3 : 2) * d; }
};

struct ForwardOutput {
  diff::NodeId p = 0;  // scalar click probability node
  double p_value = 0.0;
  // Per-history-click intermediates; empty when the variant skips the stage.
  std::vector<diff::NodeId> context_info;  // c_j
  std::vector<diff::NodeId> enhancement;   // projection of c_j onto the click
  std::vector<diff::NodeId> enhanced;      // click representation fed to interest extraction
  diff::NodeId h = 0;
  diff::NodeId g = 0;
  bool has_h = false;
  bool has_g = false;
};

class Tem4Ctr {
 public:
  // Fresh model: weights Glorot-initialized from seed, biases zero.
  Tem4Ctr(const ModelConfig& cfg, std::uint64_t seed);
  // Rebind onto an existing store (checkpoint load). Shapes must match cfg.
  Tem4Ctr(const ModelConfig& cfg, diff::ParamStore store);

  const ModelConfig& config() const { return cfg_; }
  diff::ParamStore& params() { return store_; }
  const diff::ParamStore& params() const { return store_; }

  // Item representation e = [E_c(item), E_c(cat), W_f * feat]. Ids outside
  // the configured vocab raise VocabError; a missing dense feature under a
  // configured projection contributes a zero block.
  diff::NodeId embed_item(diff::Graph& g, const ItemRecord& item) const;

  // Builds the prediction graph for one sample. Samples must carry contexts
  // for variants that search them (IntegrityError otherwise), and the pooled
  // context for the no-alignment variant.
  ForwardOutput forward(diff::Graph& g, const TrainingSample& sample) const;

  // Mean binary cross entropy over probability nodes, clamped into
  // [1e-12, 1-1e-12]. denom overrides the averaging denominator so callers
  // can build per-sample fractions of a larger batch mean; 0 means p.size().
  static diff::NodeId loss(diff::Graph& g, std::span<const diff::NodeId> p,
                           std::span<const std::uint8_t> labels, std::size_t denom = 0);

 private:
  void build_params(std::uint64_t seed);
  void bind_params();
  diff::NodeId attention(diff::Graph& g, const diff::Mlp3& scorer, diff::NodeId query,
                         std::span<const diff::NodeId> seq) const;
  diff::NodeId scorer_input(diff::Graph& g, diff::NodeId q, diff::NodeId k) const;

  bool uses_stm() const {
    return cfg_.variant == Variant::Full || cfg_.variant == Variant::NoPem ||
           cfg_.variant == Variant::NoIem;
  }
  bool uses_attention() const {
    return cfg_.iem_kind == IemKind::TargetAttention && cfg_.variant != Variant::NoIem &&
           cfg_.variant != Variant::AvgPoolDnn;
  }

  ModelConfig cfg_;
  diff::ParamStore store_;
  diff::Tensor* item_table_ = nullptr;
  diff::Tensor* cat_table_ = nullptr;
  diff::Tensor* dense_proj_ = nullptr;
  diff::Mlp3 stm_scorer_{};
  diff::Mlp3 click_scorer_{};
  diff::Mlp3 ctx_scorer_{};
  diff::Mlp3 head_{};
};

}  // namespace tem4ctr::model
