#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gvqa/autodiff.hpp"
#include "gvqa/embedding.hpp"
#include "gvqa/params.hpp"
#include "gvqa/rng.hpp"
#include "gvqa/scene.hpp"

namespace gvqa::sns {

// One bounding box prepared for supernode weighting: its top-K candidate
// labels and where the ground truth sits among them, if anywhere.
struct SuperNode {
  int image_id = 0;
  int box_id = 0;
  std::vector<std::string> candidates;  // top-K labels, detector order
  std::optional<int> gt_index;          // index of the ground truth within candidates
  const graphs::SceneObject* object = nullptr;
};

SuperNode make_supernode(const graphs::SceneObject& obj, int image_id, int k);

// Samples negative labels outside a box's candidate set.
class NegativePool {
 public:
  NegativePool(std::vector<std::string> vocabulary, uint64_t seed);
  std::vector<std::string> sample(const SuperNode& box, int n);
  const std::vector<std::string>& vocabulary() const { return vocab_; }

 private:
  std::vector<std::string> vocab_;  // sorted, distinct
  Rng rng_;
};

// --- score-level pieces (shared by model paths and unit oracles) -------------

ad::Value supernode_weights_from_scores(const ad::Value& scores);  // softmax, 1xK
ad::Value supernode_fuse(const std::vector<ad::Value>& features, const ad::Value& weights);
// -log( sum e^pos / (sum e^pos + sum e^neg) )
ad::Value mil_nce_from_scores(const ad::Value& pos_scores, const ad::Value& neg_scores);
// -log( e^{s_gt} / sum_j e^{s_j} )
ad::Value contrastive_from_scores(const ad::Value& scores, int gt_index);

struct SnsHyper {
  int k = 5;
  int negatives_per_box = 5;
};

// The weighting model: its own word MLP and visual projection, trained with
// the three-term objective, then frozen and queried for w_ij.
class SnsModel {
 public:
  SnsModel(const embed::FeatureEncoderConfig& enc_cfg, SnsHyper hyper, std::string provider_spec,
           uint64_t provider_seed, uint64_t init_seed);

  ad::Value candidate_scores(const SuperNode& box) const;    // 1xK, scores_j = f_j . v_i
  ad::Value supernode_weights(const SuperNode& box) const;   // softmax of scores
  ad::Value supernode_feature(const SuperNode& box) const;   // sum_j w_j f_j
  std::vector<double> weight_values(const SuperNode& box) const;

  ad::Value mil_nce_loss(const std::vector<SuperNode>& batch,
                         const std::vector<std::vector<std::string>>& negatives) const;
  ad::Value contrastive_loss(const std::vector<SuperNode>& batch) const;
  ad::Value fused_distance_term(const std::vector<SuperNode>& batch) const;
  ad::Value total_loss(const std::vector<SuperNode>& batch,
                       const std::vector<std::vector<std::string>>& negatives) const;

  ad::ParamStore& params() { return params_; }
  const embed::FeatureEncoder& encoder() const { return *encoder_; }
  const SnsHyper& hyper() const { return hyper_; }
  const embed::FeatureEncoderConfig& encoder_config() const { return enc_cfg_; }

  void save(const std::string& path) const;
  static std::unique_ptr<SnsModel> load(const std::string& path);

 private:
  embed::FeatureEncoderConfig enc_cfg_;
  SnsHyper hyper_;
  std::string provider_spec_;
  uint64_t provider_seed_;
  std::unique_ptr<embed::WordVectorProvider> provider_;
  ad::ParamStore params_;
  std::unique_ptr<embed::FeatureEncoder> encoder_;
};

struct SnsTrainConfig {
  double lr = 0.02;
  int epochs = 50;
  int batch_boxes = 0;  // 0 = full batch
  bool freeze_visual = false;
  uint64_t seed = 1;
};

struct SnsTrainReport {
  std::vector<double> epoch_losses;  // mean loss per box
  double accuracy = 0.0;             // argmax-weight == ground-truth candidate
  int boxes = 0;
};

// Collects every box of every scene; all must carry an in-candidates ground truth.
SnsTrainReport train_sns(SnsModel& model, const std::vector<graphs::SceneDescription>& scenes,
                         const SnsTrainConfig& cfg);

double sns_argmax_accuracy(const SnsModel& model, const std::vector<graphs::SceneDescription>& scenes);

}  // namespace gvqa::sns
