#include "gvqa/embedding.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gvqa/init.hpp"

namespace gvqa::embed {

std::vector<double> HashProvider::lookup(const std::string& word) const {
  Rng rng(stable_hash(word, seed_));
  std::vector<double> v(dim_);
  for (double& e : v) e = rng.uniform(-0.5, 0.5);
  return v;
}

FileProvider::FileProvider(const std::string& path, uint64_t fallback_seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word-vector file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    std::vector<double> vec;
    double x;
    while (ss >> x) vec.push_back(x);
    if (vec.empty()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": no vector components");
    }
    if (dim_ == 0) dim_ = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != dim_) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim_) +
                               " components, got " + std::to_string(vec.size()));
    }
    table_[word] = std::move(vec);
  }
  if (dim_ == 0) throw std::runtime_error("empty word-vector file: " + path);
  fallback_ = std::make_unique<HashProvider>(dim_, fallback_seed);
}

std::vector<double> FileProvider::lookup(const std::string& word) const {
  auto it = table_.find(word);
  if (it != table_.end()) return it->second;
  return fallback_->lookup(word);
}

std::unique_ptr<WordVectorProvider> make_provider(const std::string& spec, int dim, uint64_t seed) {
  if (spec == "hash") return std::make_unique<HashProvider>(dim, seed);
  if (spec.rfind("file:", 0) == 0) return std::make_unique<FileProvider>(spec.substr(5), seed);
  throw std::invalid_argument("unknown embedding provider '" + spec + "' (expected 'hash' or 'file:PATH')");
}

FeatureEncoder::FeatureEncoder(const FeatureEncoderConfig& cfg, const WordVectorProvider* provider,
                               ad::ParamStore& store, const std::string& prefix, Rng& init_rng)
    : cfg_(cfg), provider_(provider) {
  if (provider_ && provider_->dim() != cfg_.d_emb) {
    throw std::invalid_argument("provider dimensionality " + std::to_string(provider_->dim()) +
                                " does not match configured d_emb " + std::to_string(cfg_.d_emb));
  }
  mlp_w1_ = store.add(prefix + ".mlp.w1", xavier_uniform(init_rng, cfg_.d_emb, cfg_.hidden));
  mlp_b1_ = store.add(prefix + ".mlp.b1", Tensor(1, cfg_.hidden));
  mlp_w2_ = store.add(prefix + ".mlp.w2", xavier_uniform(init_rng, cfg_.hidden, cfg_.d_model));
  mlp_b2_ = store.add(prefix + ".mlp.b2", Tensor(1, cfg_.d_model));
  coord_w_ = store.add(prefix + ".coord.w", xavier_uniform(init_rng, 2, cfg_.d_model));
  coord_b_ = store.add(prefix + ".coord.b", Tensor(1, cfg_.d_model));
  vis_w_ = store.add(prefix + ".vis.w", xavier_uniform(init_rng, cfg_.d_visual, cfg_.d_model));
  vis_b_ = store.add(prefix + ".vis.b", Tensor(1, cfg_.d_model));
}

ad::Value FeatureEncoder::word_vector(const std::string& word) const {
  auto it = word_cache_.find(word);
  if (it == word_cache_.end()) {
    it = word_cache_.emplace(word, Tensor::row(provider_->lookup(word))).first;
  }
  return ad::Value::constant(it->second);
}

ad::Value FeatureEncoder::embed_word(const std::string& word) const {
  ad::Value h = ad::gelu(ad::add_rowvec(ad::matmul(word_vector(word), mlp_w1_), mlp_b1_));
  return ad::add_rowvec(ad::matmul(h, mlp_w2_), mlp_b2_);
}

ad::Value FeatureEncoder::embed_coord(double x, double y) const {
  if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) {
    throw std::invalid_argument("coordinate (" + std::to_string(x) + "," + std::to_string(y) +
                                ") outside the unit square");
  }
  Tensor xy(1, 2);
  xy.v = {x, y};
  return ad::add_rowvec(ad::matmul(ad::Value::constant(xy), coord_w_), coord_b_);
}

Tensor FeatureEncoder::raw_visual_feature(const graphs::SceneObject& obj, int image_id) const {
  if (obj.feature) {
    if (static_cast<int>(obj.feature->size()) != cfg_.d_visual) {
      throw std::invalid_argument("visual feature length " + std::to_string(obj.feature->size()) +
                                  " does not match configured d_v " + std::to_string(cfg_.d_visual));
    }
    return Tensor::row(*obj.feature);
  }
  if (!obj.gt_label) {
    throw std::invalid_argument("box " + std::to_string(obj.box_id) +
                                " has neither a visual feature nor a ground-truth label to synthesize one");
  }
  if (cfg_.d_visual != cfg_.d_emb) {
    throw std::invalid_argument("synthesized visual features require d_v == d_emb");
  }
  Tensor raw = Tensor::row(provider_->lookup(*obj.gt_label));
  if (cfg_.sigma > 0.0) {
    Rng rng(hash_combine(hash_combine(cfg_.visual_seed, static_cast<uint64_t>(image_id) + 1),
                         static_cast<uint64_t>(obj.box_id) + 1));
    for (double& e : raw.v) e += cfg_.sigma * rng.normal();
  }
  return raw;
}

ad::Value FeatureEncoder::embed_visual(const graphs::SceneObject& obj, int image_id) const {
  ad::Value raw = ad::Value::constant(raw_visual_feature(obj, image_id));
  return ad::add_rowvec(ad::matmul(raw, vis_w_), vis_b_);
}

}  // namespace gvqa::embed
