#include "gvqa/sns.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "gvqa/checkpoint.hpp"
#include "gvqa/optimizer.hpp"

using nlohmann::json;

namespace gvqa::sns {

SuperNode make_supernode(const graphs::SceneObject& obj, int image_id, int k) {
  if (k < 1) throw std::invalid_argument("supernode k must be >= 1");
  SuperNode sn;
  sn.image_id = image_id;
  sn.box_id = obj.box_id;
  sn.object = &obj;
  const int take = std::min<int>(k, static_cast<int>(obj.candidates.size()));
  for (int j = 0; j < take; ++j) sn.candidates.push_back(obj.candidates[j].label);
  if (obj.gt_label) {
    for (int j = 0; j < take; ++j) {
      if (sn.candidates[j] == *obj.gt_label) {
        sn.gt_index = j;
        break;
      }
    }
  }
  return sn;
}

NegativePool::NegativePool(std::vector<std::string> vocabulary, uint64_t seed)
    : vocab_(std::move(vocabulary)), rng_(seed) {
  std::sort(vocab_.begin(), vocab_.end());
  vocab_.erase(std::unique(vocab_.begin(), vocab_.end()), vocab_.end());
  if (vocab_.empty()) throw std::invalid_argument("negative pool vocabulary is empty");
}

std::vector<std::string> NegativePool::sample(const SuperNode& box, int n) {
  const std::set<std::string> banned(box.candidates.begin(), box.candidates.end());
  std::vector<std::string> allowed;
  for (const auto& w : vocab_) {
    if (!banned.count(w)) allowed.push_back(w);
  }
  if (allowed.empty()) {
    throw std::runtime_error("empty negative set: vocabulary has no label outside box " +
                             std::to_string(box.box_id) + "'s candidates");
  }
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(allowed[rng_.uniform_int(static_cast<int>(allowed.size()))]);
  return out;
}

ad::Value supernode_weights_from_scores(const ad::Value& scores) {
  return ad::softmax_rows(scores);
}

ad::Value supernode_fuse(const std::vector<ad::Value>& features, const ad::Value& weights) {
  if (features.empty() || static_cast<int>(features.size()) != weights.val().cols) {
    throw std::invalid_argument("supernode_fuse arity mismatch");
  }
  // weights [1xK] * stacked features [K x d]
  return ad::matmul(weights, ad::concat_rows(features));
}

ad::Value mil_nce_from_scores(const ad::Value& pos_scores, const ad::Value& neg_scores) {
  if (pos_scores.val().cols < 1) throw std::invalid_argument("mil_nce needs at least one positive");
  if (neg_scores.val().cols < 1) throw std::invalid_argument("mil_nce needs a non-empty negative set");
  ad::Value all = ad::concat_cols({pos_scores, neg_scores});
  return ad::sub(ad::logsumexp_row(all), ad::logsumexp_row(pos_scores));
}

ad::Value contrastive_from_scores(const ad::Value& scores, int gt_index) {
  return ad::sub(ad::logsumexp_row(scores), ad::pick(scores, gt_index));
}

SnsModel::SnsModel(const embed::FeatureEncoderConfig& enc_cfg, SnsHyper hyper, std::string provider_spec,
                   uint64_t provider_seed, uint64_t init_seed)
    : enc_cfg_(enc_cfg),
      hyper_(hyper),
      provider_spec_(std::move(provider_spec)),
      provider_seed_(provider_seed) {
  provider_ = embed::make_provider(provider_spec_, enc_cfg_.d_emb, provider_seed_);
  Rng init_rng(init_seed);
  encoder_ = std::make_unique<embed::FeatureEncoder>(enc_cfg_, provider_.get(), params_, "sns", init_rng);
}

ad::Value SnsModel::candidate_scores(const SuperNode& box) const {
  if (box.candidates.empty()) throw std::invalid_argument("supernode with no candidates");
  ad::Value v = encoder_->embed_visual(*box.object, box.image_id);
  std::vector<ad::Value> scores;
  scores.reserve(box.candidates.size());
  for (const auto& label : box.candidates) scores.push_back(ad::dot(encoder_->embed_word(label), v));
  return ad::concat_cols(scores);
}

ad::Value SnsModel::supernode_weights(const SuperNode& box) const {
  return supernode_weights_from_scores(candidate_scores(box));
}

ad::Value SnsModel::supernode_feature(const SuperNode& box) const {
  std::vector<ad::Value> feats;
  feats.reserve(box.candidates.size());
  for (const auto& label : box.candidates) feats.push_back(encoder_->embed_word(label));
  return supernode_fuse(feats, supernode_weights(box));
}

std::vector<double> SnsModel::weight_values(const SuperNode& box) const {
  return supernode_weights(box).val().v;
}

ad::Value SnsModel::mil_nce_loss(const std::vector<SuperNode>& batch,
                                 const std::vector<std::vector<std::string>>& negatives) const {
  if (batch.size() != negatives.size()) {
    throw std::invalid_argument("mil_nce_loss: negatives per box do not align with the batch");
  }
  ad::Value total = ad::Value::constant(Tensor::scalar(0.0));
  for (size_t i = 0; i < batch.size(); ++i) {
    ad::Value v = encoder_->embed_visual(*batch[i].object, batch[i].image_id);
    std::vector<ad::Value> pos, neg;
    for (const auto& label : batch[i].candidates) pos.push_back(ad::dot(encoder_->embed_word(label), v));
    for (const auto& label : negatives[i]) neg.push_back(ad::dot(encoder_->embed_word(label), v));
    if (neg.empty()) throw std::invalid_argument("empty negative set for box " + std::to_string(batch[i].box_id));
    total = ad::add(total, mil_nce_from_scores(ad::concat_cols(pos), ad::concat_cols(neg)));
  }
  return total;
}

ad::Value SnsModel::contrastive_loss(const std::vector<SuperNode>& batch) const {
  ad::Value total = ad::Value::constant(Tensor::scalar(0.0));
  for (const auto& box : batch) {
    if (!box.gt_index) {
      throw std::invalid_argument("contrastive loss needs the ground truth among candidates of box " +
                                  std::to_string(box.box_id));
    }
    total = ad::add(total, contrastive_from_scores(candidate_scores(box), *box.gt_index));
  }
  return total;
}

ad::Value SnsModel::fused_distance_term(const std::vector<SuperNode>& batch) const {
  ad::Value total = ad::Value::constant(Tensor::scalar(0.0));
  for (const auto& box : batch) {
    if (!box.gt_index) {
      throw std::invalid_argument("distance term needs the ground truth among candidates of box " +
                                  std::to_string(box.box_id));
    }
    ad::Value f_gt = encoder_->embed_word(box.candidates[*box.gt_index]);
    total = ad::add(total, ad::l2_distance(f_gt, supernode_feature(box)));
  }
  return total;
}

ad::Value SnsModel::total_loss(const std::vector<SuperNode>& batch,
                               const std::vector<std::vector<std::string>>& negatives) const {
  return ad::add(ad::add(mil_nce_loss(batch, negatives), contrastive_loss(batch)),
                 fused_distance_term(batch));
}

void SnsModel::save(const std::string& path) const {
  json h;
  h["kind"] = "sns";
  h["version"] = 1;
  h["k"] = hyper_.k;
  h["negatives_per_box"] = hyper_.negatives_per_box;
  h["d_emb"] = enc_cfg_.d_emb;
  h["d_model"] = enc_cfg_.d_model;
  h["hidden"] = enc_cfg_.hidden;
  h["d_visual"] = enc_cfg_.d_visual;
  h["sigma"] = enc_cfg_.sigma;
  h["visual_seed"] = enc_cfg_.visual_seed;
  h["provider"] = provider_spec_;
  h["provider_seed"] = provider_seed_;
  io::write_archive_file(path, h.dump(), params_);
}

std::unique_ptr<SnsModel> SnsModel::load(const std::string& path) {
  auto [header, tensors] = io::read_archive_file(path);
  json h = json::parse(header);
  if (h.value("kind", "") != "sns") {
    throw std::runtime_error(path + " is not an sns model file");
  }
  embed::FeatureEncoderConfig ecfg;
  ecfg.d_emb = h.at("d_emb").get<int>();
  ecfg.d_model = h.at("d_model").get<int>();
  ecfg.hidden = h.at("hidden").get<int>();
  ecfg.d_visual = h.at("d_visual").get<int>();
  ecfg.sigma = h.at("sigma").get<double>();
  ecfg.visual_seed = h.at("visual_seed").get<uint64_t>();
  SnsHyper hyper{h.at("k").get<int>(), h.at("negatives_per_box").get<int>()};
  auto model = std::make_unique<SnsModel>(ecfg, hyper, h.at("provider").get<std::string>(),
                                          h.at("provider_seed").get<uint64_t>(), /*init_seed=*/0);
  io::load_into(model->params_, tensors);
  return model;
}

namespace {

std::vector<SuperNode> collect_boxes(const SnsModel& model,
                                     const std::vector<graphs::SceneDescription>& scenes,
                                     bool require_gt) {
  std::vector<SuperNode> boxes;
  for (const auto& scene : scenes) {
    for (const auto& obj : scene.objects) {
      SuperNode sn = make_supernode(obj, scene.image_id, model.hyper().k);
      if (require_gt && !sn.gt_index) {
        throw std::invalid_argument("sns training requires the ground truth among the top-" +
                                    std::to_string(model.hyper().k) + " candidates of box " +
                                    std::to_string(obj.box_id) + " in scene " +
                                    std::to_string(scene.image_id));
      }
      boxes.push_back(std::move(sn));
    }
  }
  return boxes;
}

std::vector<std::string> label_vocabulary(const std::vector<graphs::SceneDescription>& scenes) {
  std::set<std::string> vocab;
  for (const auto& scene : scenes) {
    for (const auto& obj : scene.objects) {
      for (const auto& c : obj.candidates) vocab.insert(c.label);
      if (obj.gt_label) vocab.insert(*obj.gt_label);
    }
  }
  return {vocab.begin(), vocab.end()};
}

}  // namespace

SnsTrainReport train_sns(SnsModel& model, const std::vector<graphs::SceneDescription>& scenes,
                         const SnsTrainConfig& cfg) {
  if (scenes.empty()) throw std::invalid_argument("sns training corpus is empty");
  std::vector<SuperNode> boxes = collect_boxes(model, scenes, /*require_gt=*/true);
  NegativePool pool(label_vocabulary(scenes), cfg.seed);
  Rng shuffle_rng(cfg.seed + 1);
  ad::Adam opt({.lr = cfg.lr});

  SnsTrainReport report;
  report.boxes = static_cast<int>(boxes.size());
  const int batch = cfg.batch_boxes <= 0 ? static_cast<int>(boxes.size()) : cfg.batch_boxes;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(boxes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_int(static_cast<int>(i))]);

    double epoch_loss = 0.0;
    size_t at = 0;
    while (at < order.size()) {
      std::vector<SuperNode> chunk;
      std::vector<std::vector<std::string>> negs;
      for (int b = 0; b < batch && at < order.size(); ++b, ++at) {
        chunk.push_back(boxes[order[at]]);
        negs.push_back(pool.sample(chunk.back(), model.hyper().negatives_per_box));
      }
      model.params().zero_grad();
      ad::Value loss = model.total_loss(chunk, negs);
      ad::backward(loss);
      if (cfg.freeze_visual) {
        model.params().get("sns.vis.w").zero_grad();
        model.params().get("sns.vis.b").zero_grad();
      }
      opt.step(model.params());
      epoch_loss += loss.item();
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(boxes.size()));
  }
  report.accuracy = sns_argmax_accuracy(model, scenes);
  return report;
}

double sns_argmax_accuracy(const SnsModel& model, const std::vector<graphs::SceneDescription>& scenes) {
  int correct = 0, total = 0;
  for (const auto& scene : scenes) {
    for (const auto& obj : scene.objects) {
      SuperNode sn = make_supernode(obj, scene.image_id, model.hyper().k);
      if (!sn.gt_index) continue;
      const std::vector<double> w = model.weight_values(sn);
      const int best = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
      correct += best == *sn.gt_index ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("no boxes with ground truth to score");
  return static_cast<double>(correct) / total;
}

}  // namespace gvqa::sns
