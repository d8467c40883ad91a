#include "gvqa/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "gvqa/init.hpp"

namespace gvqa::model {

void StreamConfig::validate() const {
  if (d_model < 1 || heads < 1 || layers < 1 || ff < 1) {
    throw std::invalid_argument("stream dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) + " not divisible by heads " +
                                std::to_string(heads));
  }
  if (layers < 3) throw std::invalid_argument("need at least 3 encoder layers (one per stage)");
  if (stage_split[0] + stage_split[1] + stage_split[2] != layers) {
    throw std::invalid_argument("stage split does not sum to the layer count");
  }
  for (int s : stage_split) {
    if (s < 1) throw std::invalid_argument("every stage needs at least one layer");
  }
  if (n_answers < 2) throw std::invalid_argument("answer vocabulary must have at least two entries");
  if (epsilon <= 0) throw std::invalid_argument("row-normalize epsilon must be positive");
}

Variant variant_from_string(const std::string& name) {
  std::string n = name;
  std::replace(n.begin(), n.end(), '_', '-');
  if (n == "full") return Variant::Full;
  if (n == "no-guidance") return Variant::NoGuidance;
  if (n == "semantic-only") return Variant::SemanticOnly;
  if (n == "visual-only") return Variant::VisualOnly;
  if (n == "one-transformer") return Variant::OneTransformer;
  if (n == "single-loss") return Variant::SingleLoss;
  if (n == "top1") return Variant::Top1;
  if (n == "even-topk") return Variant::EvenTopK;
  std::string valid;
  for (const auto& v : variant_names()) valid += (valid.empty() ? "" : ", ") + v;
  throw std::invalid_argument("unknown variant '" + name + "' (valid: " + valid + ")");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoGuidance: return "no-guidance";
    case Variant::SemanticOnly: return "semantic-only";
    case Variant::VisualOnly: return "visual-only";
    case Variant::OneTransformer: return "one-transformer";
    case Variant::SingleLoss: return "single-loss";
    case Variant::Top1: return "top1";
    case Variant::EvenTopK: return "even-topk";
  }
  return "?";
}

std::vector<std::string> variant_names() {
  return {"full",        "no-guidance", "semantic-only", "visual-only",
          "one-transformer", "single-loss", "top1",          "even-topk"};
}

std::vector<std::string> loss_term_names(Variant v) {
  switch (v) {
    case Variant::SemanticOnly: return {"f_s"};
    case Variant::VisualOnly: return {"f_v"};
    case Variant::OneTransformer: return {"f_f"};
    case Variant::SingleLoss: return {"f_f"};
    default: return {"f_v", "f_s", "f_f"};
  }
}

bool variant_needs_sns(Variant v) {
  switch (v) {
    case Variant::Top1:
    case Variant::EvenTopK:
    case Variant::VisualOnly: return false;
    default: return true;
  }
}

GuidedAttentionResult guided_attention(const ad::Value& q, const ad::Value& k, const ad::Value& v,
                                       const ConstraintGraph& g, double epsilon) {
  const int m = q.rows();
  if (k.rows() != m || v.rows() != m || q.cols() != k.cols()) {
    throw std::invalid_argument("guided_attention shape mismatch: q " + q.val().shape_str() + ", k " +
                                k.val().shape_str() + ", v " + v.val().shape_str());
  }
  if (g.size() != m) {
    throw std::invalid_argument("constraint graph size " + std::to_string(g.size()) +
                                " does not match sequence length " + std::to_string(m));
  }
  ad::Value scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  ad::Value masked = ad::elementwise_mul(ad::softmax_rows(scores), ad::Value::constant(g.g));
  ad::Value weights = ad::row_normalize(masked, epsilon);
  return {ad::matmul(weights, v), weights};
}

EncoderStack::EncoderStack(const StreamConfig& cfg, ad::ParamStore& store, const std::string& prefix,
                           Rng& init_rng)
    : cfg_(cfg) {
  const int d = cfg_.d_model;
  const int dk = cfg_.d_head();
  for (int l = 0; l < cfg_.layers; ++l) {
    Layer layer;
    const std::string lp = prefix + ".l" + std::to_string(l);
    for (int h = 0; h < cfg_.heads; ++h) {
      const std::string hp = lp + ".h" + std::to_string(h);
      Head head;
      head.wq = store.add(hp + ".wq", xavier_uniform(init_rng, d, dk));
      head.bq = store.add(hp + ".bq", Tensor(1, dk));
      head.wk = store.add(hp + ".wk", xavier_uniform(init_rng, d, dk));
      head.bk = store.add(hp + ".bk", Tensor(1, dk));
      head.wv = store.add(hp + ".wv", xavier_uniform(init_rng, d, dk));
      head.bv = store.add(hp + ".bv", Tensor(1, dk));
      layer.heads.push_back(std::move(head));
    }
    layer.wo = store.add(lp + ".wo", xavier_uniform(init_rng, d, d));
    layer.bo = store.add(lp + ".bo", Tensor(1, d));
    layer.ln1_g = store.add(lp + ".ln1.g", Tensor::full(1, d, 1.0));
    layer.ln1_b = store.add(lp + ".ln1.b", Tensor(1, d));
    layer.ff_w1 = store.add(lp + ".ff.w1", xavier_uniform(init_rng, d, cfg_.ff));
    layer.ff_b1 = store.add(lp + ".ff.b1", Tensor(1, cfg_.ff));
    layer.ff_w2 = store.add(lp + ".ff.w2", xavier_uniform(init_rng, cfg_.ff, d));
    layer.ff_b2 = store.add(lp + ".ff.b2", Tensor(1, d));
    layer.ln2_g = store.add(lp + ".ln2.g", Tensor::full(1, d, 1.0));
    layer.ln2_b = store.add(lp + ".ln2.b", Tensor(1, d));
    layers_.push_back(std::move(layer));
  }
}

ad::Value EncoderStack::forward_layer(int l, const ad::Value& x, const ConstraintGraph& g,
                                      LayerAttention* attn) const {
  const Layer& layer = layers_[static_cast<size_t>(l)];
  std::vector<ad::Value> head_outs;
  head_outs.reserve(layer.heads.size());
  for (const Head& h : layer.heads) {
    ad::Value q = ad::add_rowvec(ad::matmul(x, h.wq), h.bq);
    ad::Value k = ad::add_rowvec(ad::matmul(x, h.wk), h.bk);
    ad::Value v = ad::add_rowvec(ad::matmul(x, h.wv), h.bv);
    GuidedAttentionResult res = guided_attention(q, k, v, g, cfg_.epsilon);
    if (attn) attn->push_back(res.weights.val());
    head_outs.push_back(res.output);
  }
  ad::Value concat = ad::concat_cols(head_outs);
  ad::Value projected = ad::add_rowvec(ad::matmul(concat, layer.wo), layer.bo);
  ad::Value h1 = ad::layer_norm_rows(ad::add(x, projected), layer.ln1_g, layer.ln1_b);
  ad::Value ff = ad::add_rowvec(
      ad::matmul(ad::gelu(ad::add_rowvec(ad::matmul(h1, layer.ff_w1), layer.ff_b1)), layer.ff_w2),
      layer.ff_b2);
  return ad::layer_norm_rows(ad::add(h1, ff), layer.ln2_g, layer.ln2_b);
}

ad::Value EncoderStack::forward(const ad::Value& x, const std::vector<ConstraintGraph>& per_layer_g,
                                EncoderTrace* trace) const {
  if (per_layer_g.size() != layers_.size()) {
    throw std::invalid_argument("need one constraint graph per encoder layer");
  }
  ad::Value h = x;
  for (size_t l = 0; l < layers_.size(); ++l) {
    LayerAttention attn;
    h = forward_layer(static_cast<int>(l), h, per_layer_g[l], trace ? &attn : nullptr);
    if (trace) trace->layers.push_back(std::move(attn));
  }
  return h;
}

void ModelConfig::validate() const {
  stream.validate();
  if (enc.d_model != stream.d_model) {
    throw std::invalid_argument("encoder d_model must match the stream d_model");
  }
  if (k < 1) throw std::invalid_argument("supernode size k must be >= 1");
  if (static_cast<int>(answers.size()) != stream.n_answers) {
    throw std::invalid_argument("answer vocabulary size does not match n_answers");
  }
}

DualStreamModel::DualStreamModel(ModelConfig cfg, uint64_t init_seed)
    : cfg_(std::move(cfg)), schedule_(StageSchedule::from_split(cfg_.stream.stage_split)) {
  cfg_.validate();
  provider_ = embed::make_provider(cfg_.provider_spec, cfg_.enc.d_emb, cfg_.provider_seed);
  Rng rng(init_seed);
  encoder_ = std::make_unique<embed::FeatureEncoder>(cfg_.enc, provider_.get(), params_, "embed", rng);
  const int d = cfg_.stream.d_model;
  cls_ = params_.add("cls", normal_init(rng, 1, d, 0.02));
  sep_ = params_.add("sep", normal_init(rng, 1, d, 0.02));
  pos_table_ = params_.add("pos.table", normal_init(rng, cfg_.stream.max_positions, d, 0.02));
  type_table_ = params_.add("type.table", normal_init(rng, 3, d, 0.02));
  stack_v_ = std::make_unique<EncoderStack>(cfg_.stream, params_, "v", rng);
  stack_s_ = std::make_unique<EncoderStack>(cfg_.stream, params_, "s", rng);
  const int a = cfg_.stream.n_answers;
  if (cfg_.variant == Variant::OneTransformer) {
    head_f_w_ = params_.add("head.one.w", xavier_uniform(rng, d, a));
    head_f_b_ = params_.add("head.one.b", Tensor(1, a));
  } else {
    head_v_w_ = params_.add("head.v.w", xavier_uniform(rng, d, a));
    head_v_b_ = params_.add("head.v.b", Tensor(1, a));
    head_s_w_ = params_.add("head.s.w", xavier_uniform(rng, d, a));
    head_s_b_ = params_.add("head.s.b", Tensor(1, a));
    head_f_w_ = params_.add("head.f.w", xavier_uniform(rng, 2 * d, a));
    head_f_b_ = params_.add("head.f.b", Tensor(1, a));
  }
}

int DualStreamModel::answer_index(const std::string& answer) const {
  for (size_t i = 0; i < cfg_.answers.size(); ++i) {
    if (cfg_.answers[i] == answer) return static_cast<int>(i);
  }
  return -1;
}

PreparedInstance DualStreamModel::prepare(const graphs::SceneDescription& scene,
                                          const graphs::QuestionParse& question,
                                          const sns::SnsModel* sns_model) const {
  PreparedInstance inst;
  inst.scene = &scene;
  inst.question = &question;
  inst.semantic_graph = graphs::build_semantic_graph(scene, cfg_.k);
  inst.semantic_sym = graphs::symmetrize_with_self_loops(graphs::graph_to_sequence(inst.semantic_graph).second);
  inst.visual_sym = graphs::symmetrize_with_self_loops(graphs::graph_to_sequence(graphs::build_visual_graph(scene)).second);
  inst.question_sym = graphs::symmetrize_with_self_loops(graphs::graph_to_sequence(graphs::build_question_graph(question)).second);
  if (variant_needs_sns(cfg_.variant)) {
    if (!sns_model) {
      throw std::invalid_argument(std::string("variant ") + to_string(cfg_.variant) +
                                  " requires a pretrained supernode weighting model");
    }
    for (const auto& obj : scene.objects) {
      inst.sns_weights.push_back(sns_model->weight_values(sns::make_supernode(obj, scene.image_id, cfg_.k)));
    }
  }
  if (question.answer) {
    const int idx = answer_index(*question.answer);
    if (idx >= 0) inst.answer_index = idx;
  }
  return inst;
}

ad::Value DualStreamModel::object_feature(const PreparedInstance& inst, int box_index) const {
  const graphs::SceneObject& obj = inst.scene->objects[static_cast<size_t>(box_index)];
  if (inst.use_gt_labels) {
    if (!obj.gt_label) {
      throw std::invalid_argument("ground-truth-graph mode needs gt labels (box " +
                                  std::to_string(obj.box_id) + ")");
    }
    return encoder_->embed_word(*obj.gt_label);
  }
  const int take = std::min<int>(cfg_.k, static_cast<int>(obj.candidates.size()));
  if (cfg_.variant == Variant::Top1 || take == 1) {
    return encoder_->embed_word(obj.candidates[0].label);
  }
  std::vector<ad::Value> feats;
  feats.reserve(take);
  for (int j = 0; j < take; ++j) feats.push_back(encoder_->embed_word(obj.candidates[j].label));
  Tensor w(1, take);
  if (cfg_.variant == Variant::EvenTopK) {
    w.fill(1.0 / take);
  } else {
    if (box_index >= static_cast<int>(inst.sns_weights.size()) ||
        static_cast<int>(inst.sns_weights[box_index].size()) != take) {
      throw std::invalid_argument("prepared supernode weights missing for box " + std::to_string(obj.box_id));
    }
    w.v = inst.sns_weights[static_cast<size_t>(box_index)];
  }
  return ad::matmul(ad::Value::constant(w), ad::concat_rows(feats));
}

std::vector<ad::Value> DualStreamModel::semantic_rows(const PreparedInstance& inst) const {
  std::vector<ad::Value> rows;
  rows.reserve(inst.semantic_graph.nodes.size());
  std::map<int, int> box_index;
  for (size_t i = 0; i < inst.scene->objects.size(); ++i) box_index[inst.scene->objects[i].box_id] = static_cast<int>(i);
  for (const auto& node : inst.semantic_graph.nodes) {
    switch (node.kind) {
      case graphs::NodeKind::Object:
        rows.push_back(object_feature(inst, box_index.at(*node.source_box)));
        break;
      case graphs::NodeKind::CoordinateCorner:
        rows.push_back(encoder_->embed_coord(node.coord[0], node.coord[1]));
        break;
      default:
        rows.push_back(encoder_->embed_word(node.label));
        break;
    }
  }
  return rows;
}

std::vector<ad::Value> DualStreamModel::visual_rows(const PreparedInstance& inst) const {
  std::vector<ad::Value> rows;
  rows.reserve(inst.scene->objects.size());
  for (const auto& obj : inst.scene->objects) rows.push_back(encoder_->embed_visual(obj, inst.scene->image_id));
  return rows;
}

AssembledInput DualStreamModel::assemble(const std::vector<ad::Value>& image_rows,
                                         const std::vector<ad::Value>& question_rows) const {
  if (image_rows.empty() || question_rows.empty()) {
    throw std::invalid_argument("assemble_stream_input needs non-empty image and question sides");
  }
  AssembledInput out;
  out.v_len = static_cast<int>(image_rows.size()) + 1;
  out.q_len = static_cast<int>(question_rows.size()) + 1;
  const int m = out.v_len + out.q_len;
  if (m > cfg_.stream.max_positions) {
    throw std::invalid_argument("sequence length " + std::to_string(m) + " exceeds max_positions " +
                                std::to_string(cfg_.stream.max_positions));
  }
  std::vector<ad::Value> rows;
  rows.reserve(m);
  rows.push_back(cls_);
  for (const auto& r : image_rows) rows.push_back(r);
  rows.push_back(sep_);
  for (const auto& r : question_rows) rows.push_back(r);

  std::vector<int> positions(m), types(m);
  for (int i = 0; i < m; ++i) positions[i] = i;
  for (int i = 0; i < m; ++i) types[i] = (i == 0 || i == out.v_len) ? 0 : (i < out.v_len ? 1 : 2);
  ad::Value x = ad::concat_rows(rows);
  x = ad::add(x, ad::embedding_rows(pos_table_, positions));
  x = ad::add(x, ad::embedding_rows(type_table_, types));
  out.seq = x;
  out.special = {0, out.v_len};
  return out;
}

std::vector<ConstraintGraph> DualStreamModel::layer_constraints(const Tensor& img_block,
                                                                const Tensor& q_block,
                                                                const std::vector<int>& special) const {
  std::vector<ConstraintGraph> gs;
  gs.reserve(schedule_.per_layer.size());
  for (Stage stage : schedule_.per_layer) {
    if (cfg_.variant == Variant::NoGuidance) {
      ConstraintGraph cg;
      cg.v_len = img_block.rows;
      cg.q_len = q_block.rows;
      cg.g = Tensor::full(cg.size(), cg.size(), 1.0);
      gs.push_back(std::move(cg));
    } else {
      gs.push_back(compose_constraint(stage, img_block, q_block, special));
    }
  }
  return gs;
}

namespace {

graphs::AdjacencyMatrix block_diag(const graphs::AdjacencyMatrix& a, const graphs::AdjacencyMatrix& b) {
  graphs::AdjacencyMatrix out(a.size + b.size);
  for (int i = 0; i < a.size; ++i)
    for (int j = 0; j < a.size; ++j) out.set(i, j, a.at(i, j));
  for (int i = 0; i < b.size; ++i)
    for (int j = 0; j < b.size; ++j) out.set(a.size + i, a.size + j, b.at(i, j));
  return out;
}

std::vector<std::string> image_labels(const PreparedInstance& inst, bool semantic) {
  std::vector<std::string> labels{"[CLS]"};
  if (semantic) {
    for (const auto& n : inst.semantic_graph.nodes) labels.push_back(n.payload_str());
  } else {
    for (const auto& o : inst.scene->objects) labels.push_back("box" + std::to_string(o.box_id));
  }
  return labels;
}

std::vector<std::string> question_labels(const PreparedInstance& inst) {
  std::vector<std::string> labels{"[SEP]"};
  for (const auto& t : inst.question->tokens) labels.push_back(t);
  return labels;
}

}  // namespace

ModelOutputs DualStreamModel::forward(const PreparedInstance& inst, bool record_attention) const {
  ModelOutputs out;
  out.col_labels = question_labels(inst);
  std::vector<ad::Value> q_rows;
  for (const auto& tok : inst.question->tokens) q_rows.push_back(encoder_->embed_word(tok));

  const Variant variant = cfg_.variant;
  const bool run_visual = variant != Variant::SemanticOnly && variant != Variant::OneTransformer;
  const bool run_semantic = variant != Variant::VisualOnly && variant != Variant::OneTransformer;

  if (variant == Variant::OneTransformer) {
    // all image nodes in one stream; block-diagonal within-image adjacency
    std::vector<ad::Value> img = visual_rows(inst);
    std::vector<ad::Value> sem = semantic_rows(inst);
    img.insert(img.end(), sem.begin(), sem.end());
    AssembledInput in = assemble(img, q_rows);
    Tensor img_block = lift_with_special(block_diag(inst.visual_sym, inst.semantic_sym));
    Tensor q_block = lift_with_special(inst.question_sym);
    auto gs = layer_constraints(img_block, q_block, in.special);
    EncoderTrace trace;
    ad::Value h = stack_v_->forward(in.seq, gs, record_attention ? &trace : nullptr);
    ad::Value pooled = ad::take_row(h, 0);
    out.pooled_v = pooled;
    out.f_f = ad::add_rowvec(ad::matmul(pooled, head_f_w_), head_f_b_);
    out.trace_v = std::move(trace);
    out.row_labels_v = image_labels(inst, false);
    auto sem_labels = image_labels(inst, true);
    out.row_labels_v.insert(out.row_labels_v.end(), sem_labels.begin() + 1, sem_labels.end());
    return out;
  }

  if (run_visual) {
    AssembledInput in = assemble(visual_rows(inst), q_rows);
    Tensor img_block = lift_with_special(inst.visual_sym);
    Tensor q_block = lift_with_special(inst.question_sym);
    auto gs = layer_constraints(img_block, q_block, in.special);
    EncoderTrace trace;
    ad::Value h = stack_v_->forward(in.seq, gs, record_attention ? &trace : nullptr);
    out.pooled_v = ad::take_row(h, 0);
    out.f_v = ad::add_rowvec(ad::matmul(out.pooled_v, head_v_w_), head_v_b_);
    out.trace_v = std::move(trace);
    out.row_labels_v = image_labels(inst, false);
  }
  if (run_semantic) {
    AssembledInput in = assemble(semantic_rows(inst), q_rows);
    Tensor img_block = lift_with_special(inst.semantic_sym);
    Tensor q_block = lift_with_special(inst.question_sym);
    auto gs = layer_constraints(img_block, q_block, in.special);
    EncoderTrace trace;
    ad::Value h = stack_s_->forward(in.seq, gs, record_attention ? &trace : nullptr);
    out.pooled_s = ad::take_row(h, 0);
    out.f_s = ad::add_rowvec(ad::matmul(out.pooled_s, head_s_w_), head_s_b_);
    out.trace_s = std::move(trace);
    out.row_labels_s = image_labels(inst, true);
  }
  if (run_visual && run_semantic) {
    ad::Value both = ad::concat_cols({out.pooled_v, out.pooled_s});
    out.f_f = ad::add_rowvec(ad::matmul(both, head_f_w_), head_f_b_);
  }
  return out;
}

ad::Value DualStreamModel::loss(const ModelOutputs& out, int answer_index) const {
  std::vector<ad::Value> terms;
  for (const std::string& name : loss_term_names(cfg_.variant)) {
    const ad::Value& logits = name == "f_v" ? out.f_v : name == "f_s" ? out.f_s : out.f_f;
    if (!logits.defined()) throw std::logic_error("loss term " + name + " not produced by forward");
    terms.push_back(ad::cross_entropy(logits, answer_index));
  }
  ad::Value total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return total;
}

std::vector<std::pair<std::string, double>> DualStreamModel::head_losses(const ModelOutputs& out,
                                                                         int answer_index) const {
  std::vector<std::pair<std::string, double>> r;
  if (out.f_v.defined()) r.emplace_back("f_v", ad::cross_entropy(out.f_v, answer_index).item());
  if (out.f_s.defined()) r.emplace_back("f_s", ad::cross_entropy(out.f_s, answer_index).item());
  if (out.f_f.defined()) r.emplace_back("f_f", ad::cross_entropy(out.f_f, answer_index).item());
  return r;
}

int DualStreamModel::predict(const ModelOutputs& out) const {
  const int a = cfg_.stream.n_answers;
  std::vector<double> mean(static_cast<size_t>(a), 0.0);
  int heads = 0;
  for (const ad::Value* logits : {&out.f_v, &out.f_s, &out.f_f}) {
    if (!logits->defined()) continue;
    Tensor p = ad::softmax_rows(*logits).val();
    for (int j = 0; j < a; ++j) mean[static_cast<size_t>(j)] += p.v[static_cast<size_t>(j)];
    ++heads;
  }
  if (heads == 0) throw std::logic_error("prediction with no logits");
  int best = 0;
  for (int j = 1; j < a; ++j) {
    if (mean[static_cast<size_t>(j)] > mean[static_cast<size_t>(best)]) best = j;
  }
  return best;
}

}  // namespace gvqa::model
