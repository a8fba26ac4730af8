#include "tem4ctr/model.hpp"

#include <algorithm>

namespace tem4ctr::model {

using diff::Graph;
using diff::Mlp3;
using diff::NodeId;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoStm: return "no-stm";
    case Variant::NoPem: return "no-pem";
    case Variant::NoIem: return "no-iem";
    case Variant::AvgPoolDnn: return "avgpool-dnn";
  }
  return "?";
}

const char* to_string(IemKind k) {
  return k == IemKind::TargetAttention ? "din" : "avgpool";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "no-stm") return Variant::NoStm;
  if (s == "no-pem") return Variant::NoPem;
  if (s == "no-iem") return Variant::NoIem;
  if (s == "avgpool-dnn") return Variant::AvgPoolDnn;
  throw ConfigError("unknown variant '" + s +
                    "' (expected full|no-stm|no-pem|no-iem|avgpool-dnn)");
}

IemKind iem_from_string(const std::string& s) {
  if (s == "din") return IemKind::TargetAttention;
  if (s == "avgpool") return IemKind::AvgPool;
  throw ConfigError("unknown iem kind '" + s + "' (expected din|avgpool)");
}

namespace {

ModelConfig normalize(ModelConfig cfg) {
  if (cfg.num_items <= 0 || cfg.num_cats <= 0)
    throw ConfigError("model requires positive item and category vocab sizes");
  if (cfg.d == 0) throw ConfigError("embedding width d must be positive");
  if (cfg.variant == Variant::NoIem) cfg.iem_kind = IemKind::AvgPool;
  return cfg;
}

}  // namespace

Tem4Ctr::Tem4Ctr(const ModelConfig& cfg, std::uint64_t seed) : cfg_(normalize(cfg)) {
  build_params(seed);
}

Tem4Ctr::Tem4Ctr(const ModelConfig& cfg, diff::ParamStore store)
    : cfg_(normalize(cfg)), store_(std::move(store)) {
  bind_params();
}

void Tem4Ctr::build_params(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t dm = cfg_.d_model();
  const std::size_t stm_in = 4 * dm;
  const std::size_t iem_in = cfg_.iem_plain_concat ? 2 * dm : 4 * dm;

  item_table_ = &store_.create("embed.item", {static_cast<std::size_t>(cfg_.num_items), cfg_.d});
  diff::glorot_fill(*item_table_, rng);
  cat_table_ = &store_.create("embed.cat", {static_cast<std::size_t>(cfg_.num_cats), cfg_.d});
  diff::glorot_fill(*cat_table_, rng);
  if (cfg_.dense_dim > 0) {
    dense_proj_ = &store_.create("embed.dense", {cfg_.d, cfg_.dense_dim});
    diff::glorot_fill(*dense_proj_, rng);
  }

  if (uses_stm())
    stm_scorer_ = diff::make_mlp3(store_, "stm.scorer", stm_in, cfg_.scorer_h1, cfg_.scorer_h2,
                                  1, rng);
  if (uses_attention()) {
    click_scorer_ = diff::make_mlp3(store_, "iem.click", iem_in, cfg_.scorer_h1, cfg_.scorer_h2,
                                    1, rng);
    // The no-alignment variant's context sequence has length one, where
    // attention collapses to identity; it keeps no context scorer.
    if (cfg_.variant != Variant::NoStm)
      ctx_scorer_ = diff::make_mlp3(store_, "iem.ctx", iem_in, cfg_.scorer_h1, cfg_.scorer_h2,
                                    1, rng);
  }

  const std::size_t head_in = cfg_.variant == Variant::AvgPoolDnn ? 2 * dm : 3 * dm;
  head_ = diff::make_mlp3(store_, "head", head_in, cfg_.head_h1, cfg_.head_h2, 1, rng);
}

void Tem4Ctr::bind_params() {
  item_table_ = &store_.at("embed.item");
  cat_table_ = &store_.at("embed.cat");
  if (cfg_.dense_dim > 0) dense_proj_ = &store_.at("embed.dense");

  const auto expect = [](const diff::Tensor& t, std::size_t rows, std::size_t cols,
                         const char* name) {
    if (t.rows() != rows || t.cols() != cols)
      throw ShapeError(std::string("checkpoint tensor ") + name + " has shape " +
                       std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                       ", config expects " + std::to_string(rows) + "x" + std::to_string(cols));
  };
  expect(*item_table_, static_cast<std::size_t>(cfg_.num_items), cfg_.d, "embed.item");
  expect(*cat_table_, static_cast<std::size_t>(cfg_.num_cats), cfg_.d, "embed.cat");
  if (dense_proj_) expect(*dense_proj_, cfg_.d, cfg_.dense_dim, "embed.dense");

  if (uses_stm()) stm_scorer_ = diff::find_mlp3(store_, "stm.scorer");
  if (uses_attention()) {
    click_scorer_ = diff::find_mlp3(store_, "iem.click");
    if (cfg_.variant != Variant::NoStm) ctx_scorer_ = diff::find_mlp3(store_, "iem.ctx");
  }
  head_ = diff::find_mlp3(store_, "head");
  const std::size_t head_in = cfg_.variant == Variant::AvgPoolDnn ? 2 * cfg_.d_model()
                                                                  : 3 * cfg_.d_model();
  if (head_.in_dim() != head_in) throw ShapeError("checkpoint head width does not match config");
}

NodeId Tem4Ctr::embed_item(Graph& g, const ItemRecord& item) const {
  if (item.item < 0 || item.item >= cfg_.num_items)
    throw VocabError("item id " + std::to_string(item.item) + " outside vocab [0, " +
                     std::to_string(cfg_.num_items) + ")");
  if (item.category < 0 || item.category >= cfg_.num_cats)
    throw VocabError("category id " + std::to_string(item.category) + " outside vocab [0, " +
                     std::to_string(cfg_.num_cats) + ")");

  NodeId id_part = g.row(*item_table_, static_cast<std::size_t>(item.item));
  NodeId cat_part = g.row(*cat_table_, static_cast<std::size_t>(item.category));
  if (cfg_.dense_dim == 0) return g.concat({id_part, cat_part});

  NodeId dense_part;
  if (item.feature) {
    if (item.feature->size() != cfg_.dense_dim)
      throw ShapeError("dense feature length " + std::to_string(item.feature->size()) +
                       " != configured " + std::to_string(cfg_.dense_dim));
    dense_part = g.matvec(*dense_proj_, g.input(*item.feature));
  } else {
    dense_part = g.zeros(cfg_.d);
  }
  return g.concat({id_part, cat_part, dense_part});
}

NodeId Tem4Ctr::scorer_input(Graph& g, NodeId q, NodeId k) const {
  return cfg_.iem_plain_concat ? g.concat({q, k}) : g.interaction(q, k);
}

NodeId Tem4Ctr::attention(Graph& g, const Mlp3& scorer, NodeId query,
                          std::span<const NodeId> seq) const {
  std::vector<NodeId> logits;
  logits.reserve(seq.size());
  for (NodeId v : seq) logits.push_back(g.mlp3(scorer, scorer_input(g, query, v)));
  const std::vector<std::uint8_t> mask(seq.size(), 1);
  NodeId weights = g.masked_softmax(g.stack(logits), mask);
  return g.weighted_sum(weights, seq);
}

ForwardOutput Tem4Ctr::forward(Graph& g, const TrainingSample& sample) const {
  if (sample.history.empty()) throw IntegrityError("sample has an empty click history");
  if (uses_stm() && sample.contexts.size() != sample.history.size())
    throw IntegrityError("sample is missing exposure contexts for variant " +
                         std::string(to_string(cfg_.variant)));
  if (cfg_.variant == Variant::NoStm && !sample.pooled_context)
    throw IntegrityError("sample is missing the pooled exposure context");

  const std::size_t dm = cfg_.d_model();
  ForwardOutput out;

  NodeId e_tgt = embed_item(g, sample.target);
  std::vector<NodeId> clicks;
  clicks.reserve(sample.history.size());
  for (const auto& item : sample.history) clicks.push_back(embed_item(g, item));

  // Temporally aligned exposure information per click.
  if (uses_stm()) {
    out.context_info.reserve(clicks.size());
    for (std::size_t j = 0; j < clicks.size(); ++j) {
      const ExposureContext& ctx = sample.contexts[j];
      if (ctx.count() == 0) {
        out.context_info.push_back(g.zeros(dm));
        continue;
      }
      std::vector<NodeId> items;
      items.reserve(ctx.count());
      std::vector<NodeId> logits;
      logits.reserve(ctx.count());
      for (const auto& rec : ctx.items) {
        NodeId e_un = embed_item(g, rec);
        items.push_back(e_un);
        logits.push_back(g.mlp3(stm_scorer_, g.interaction(clicks[j], e_un)));
      }
      const std::vector<std::uint8_t> mask(items.size(), 1);
      NodeId weights = g.masked_softmax(g.stack(logits), mask);
      out.context_info.push_back(g.weighted_sum(weights, items));
    }
  } else if (cfg_.variant == Variant::NoStm) {
    // One sequence-level pool stands in for every per-click context.
    const ExposureContext& pool = *sample.pooled_context;
    NodeId shared;
    if (pool.count() == 0) {
      shared = g.zeros(dm);
    } else {
      std::vector<NodeId> items;
      items.reserve(pool.count());
      for (const auto& rec : pool.items) items.push_back(embed_item(g, rec));
      shared = g.mean(items);
    }
    out.context_info.assign(clicks.size(), shared);
  }

  // Projection enhancement of each click from its context information.
  if (cfg_.variant == Variant::NoPem || cfg_.variant == Variant::AvgPoolDnn) {
    out.enhanced = clicks;
  } else {
    out.enhancement.reserve(clicks.size());
    out.enhanced.reserve(clicks.size());
    for (std::size_t j = 0; j < clicks.size(); ++j) {
      NodeId enh = g.project(clicks[j], out.context_info[j]);
      out.enhancement.push_back(enh);
      out.enhanced.push_back(g.add(clicks[j], enh));
    }
  }

  // Interest extraction and prediction.
  NodeId p_logit;
  if (cfg_.variant == Variant::AvgPoolDnn) {
    out.h = g.mean(out.enhanced);
    out.has_h = true;
    p_logit = g.mlp3(head_, g.concat({e_tgt, out.h}));
  } else {
    if (uses_attention()) {
      out.h = attention(g, click_scorer_, e_tgt, out.enhanced);
      out.g = cfg_.variant == Variant::NoStm
                  ? out.context_info.front()
                  : attention(g, ctx_scorer_, e_tgt, out.context_info);
    } else {
      out.h = g.mean(out.enhanced);
      out.g = cfg_.variant == Variant::NoStm ? out.context_info.front()
                                             : g.mean(out.context_info);
    }
    out.has_h = true;
    out.has_g = true;
    p_logit = g.mlp3(head_, g.concat({e_tgt, out.h, out.g}));
  }

  out.p = g.sigmoid(p_logit);
  out.p_value = g.scalar(out.p);
  return out;
}

NodeId Tem4Ctr::loss(Graph& g, std::span<const NodeId> p, std::span<const std::uint8_t> labels,
                     std::size_t denom) {
  if (p.empty()) throw ShapeError("loss: empty batch");
  if (p.size() != labels.size()) throw ShapeError("loss: probability/label count mismatch");
  if (denom == 0) denom = p.size();

  std::vector<NodeId> terms;
  terms.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    NodeId pc = g.clamp_prob(p[i]);
    terms.push_back(labels[i] ? g.log(pc) : g.log1m(pc));
  }
  return g.scale_const(-1.0 / static_cast<double>(denom), g.sum(terms));
}

}  // namespace tem4ctr::model
