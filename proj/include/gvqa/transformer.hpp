#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gvqa/autodiff.hpp"
#include "gvqa/constraint.hpp"
#include "gvqa/embedding.hpp"
#include "gvqa/graph.hpp"
#include "gvqa/params.hpp"
#include "gvqa/sns.hpp"

namespace gvqa::model {

struct StreamConfig {
  int d_model = 64;
  int heads = 4;
  int layers = 6;
  int ff = 128;
  std::array<int, 3> stage_split{2, 2, 2};
  double epsilon = 1e-9;  // row_normalize threshold inside guided attention
  int n_answers = 0;
  int max_positions = 128;

  int d_head() const { return d_model / heads; }
  void validate() const;
};

enum class Variant {
  Full,
  NoGuidance,
  SemanticOnly,
  VisualOnly,
  OneTransformer,
  SingleLoss,
  Top1,
  EvenTopK,
};

Variant variant_from_string(const std::string& name);  // accepts - or _ separators
const char* to_string(Variant v);
std::vector<std::string> variant_names();
// which stream heads contribute cross-entropy terms under a variant
std::vector<std::string> loss_term_names(Variant v);
bool variant_needs_sns(Variant v);

struct GuidedAttentionResult {
  ad::Value output;
  ad::Value weights;
};

// Att(Q,K,V,G) = rownorm(softmax(QK^T/sqrt(d_k)) .* G) V
GuidedAttentionResult guided_attention(const ad::Value& q, const ad::Value& k, const ad::Value& v,
                                       const ConstraintGraph& g, double epsilon);

// one layer's recorded attention: [head] -> (M x M) weights
using LayerAttention = std::vector<Tensor>;

struct EncoderTrace {
  std::vector<LayerAttention> layers;  // empty unless recording
};

// Post-norm transformer encoder stack with graph-guided heads.
class EncoderStack {
 public:
  EncoderStack(const StreamConfig& cfg, ad::ParamStore& store, const std::string& prefix, Rng& init_rng);

  ad::Value forward(const ad::Value& x, const std::vector<ConstraintGraph>& per_layer_g,
                    EncoderTrace* trace) const;
  ad::Value forward_layer(int layer, const ad::Value& x, const ConstraintGraph& g,
                          LayerAttention* attn) const;
  int layers() const { return cfg_.layers; }

 private:
  StreamConfig cfg_;
  struct Head {
    ad::Value wq, bq, wk, bk, wv, bv;
  };
  struct Layer {
    std::vector<Head> heads;
    ad::Value wo, bo;
    ad::Value ln1_g, ln1_b;
    ad::Value ff_w1, ff_b1, ff_w2, ff_b2;
    ad::Value ln2_g, ln2_b;
  };
  std::vector<Layer> layers_;
};

struct AssembledInput {
  ad::Value seq;  // (V+Q) x d_model, positional and type embeddings added
  int v_len = 0;  // image-side length including CLS
  int q_len = 0;  // question-side length including SEP
  std::vector<int> special;  // global positions of CLS and SEP
};

struct ModelOutputs {
  ad::Value f_v, f_s, f_f;  // logits; undefined when a variant omits a head
  ad::Value pooled_v, pooled_s;
  EncoderTrace trace_v, trace_s;
  // image-side row labels and question-side column labels for attention dumps
  std::vector<std::string> row_labels_v, row_labels_s, col_labels;
};

struct ModelConfig {
  StreamConfig stream;
  embed::FeatureEncoderConfig enc;
  int k = 5;
  Variant variant = Variant::Full;
  std::vector<std::string> answers;
  std::string provider_spec = "hash";
  uint64_t provider_seed = 7;

  void validate() const;
};

// One example prepared for the forward pass: graphs, adjacency masks and the
// frozen supernode weights per box (detector-ordered, aligned with
// scene.objects).
struct PreparedInstance {
  const graphs::SceneDescription* scene = nullptr;
  const graphs::QuestionParse* question = nullptr;
  graphs::ModalityGraph semantic_graph;
  graphs::AdjacencyMatrix semantic_sym;
  graphs::AdjacencyMatrix visual_sym;
  graphs::AdjacencyMatrix question_sym;
  std::vector<std::vector<double>> sns_weights;  // per box; empty unless the variant needs them
  std::optional<int> answer_index;
  bool use_gt_labels = false;  // ground-truth-graph mode for the quality sweep
};

class DualStreamModel {
 public:
  DualStreamModel(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const embed::FeatureEncoder& encoder() const { return *encoder_; }
  const StageSchedule& schedule() const { return schedule_; }

  PreparedInstance prepare(const graphs::SceneDescription& scene, const graphs::QuestionParse& question,
                           const sns::SnsModel* sns_model) const;

  ModelOutputs forward(const PreparedInstance& inst, bool record_attention = false) const;
  // the image-side feature of one object node: supernode-weighted top-K
  // candidate embeddings, or the variant's replacement for them
  ad::Value object_feature(const PreparedInstance& inst, int box_index) const;
  ad::Value loss(const ModelOutputs& out, int answer_index) const;
  // cross-entropy of each head that exists, for logging
  std::vector<std::pair<std::string, double>> head_losses(const ModelOutputs& out, int answer_index) const;
  int predict(const ModelOutputs& out) const;  // softmax-averaged argmax
  int answer_index(const std::string& answer) const;  // -1 if unknown

 private:
  AssembledInput assemble(const std::vector<ad::Value>& image_rows, const std::vector<ad::Value>& question_rows) const;
  std::vector<ConstraintGraph> layer_constraints(const Tensor& img_block, const Tensor& q_block,
                                                 const std::vector<int>& special) const;
  std::vector<ad::Value> semantic_rows(const PreparedInstance& inst) const;
  std::vector<ad::Value> visual_rows(const PreparedInstance& inst) const;
  ad::Value object_feature(const PreparedInstance& inst, int box_index) const;

  ModelConfig cfg_;
  StageSchedule schedule_;
  std::unique_ptr<embed::WordVectorProvider> provider_;
  ad::ParamStore params_;
  std::unique_ptr<embed::FeatureEncoder> encoder_;
  std::unique_ptr<EncoderStack> stack_v_;
  std::unique_ptr<EncoderStack> stack_s_;
  ad::Value cls_, sep_;
  ad::Value pos_table_, type_table_;
  ad::Value head_v_w_, head_v_b_, head_s_w_, head_s_b_, head_f_w_, head_f_b_;
};

}  // namespace gvqa::model
