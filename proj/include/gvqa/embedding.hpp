#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gvqa/autodiff.hpp"
#include "gvqa/params.hpp"
#include "gvqa/rng.hpp"
#include "gvqa/scene.hpp"

namespace gvqa::embed {

// Word -> fixed vector. Total and deterministic: every string, known or not,
// maps to the same finite vector for the provider's lifetime.
class WordVectorProvider {
 public:
  virtual ~WordVectorProvider() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> lookup(const std::string& word) const = 0;
};

// Seeded random vectors keyed by a stable hash of the word. Hermetic stand-in
// for a real word-vector table.
class HashProvider : public WordVectorProvider {
 public:
  HashProvider(int dim, uint64_t seed) : dim_(dim), seed_(seed) {}
  int dim() const override { return dim_; }
  std::vector<double> lookup(const std::string& word) const override;

 private:
  int dim_;
  uint64_t seed_;
};

// Text table: one line per word, "word v1 ... vd". Unknown words fall back to
// hash vectors so toy vocabularies keep injectivity.
class FileProvider : public WordVectorProvider {
 public:
  FileProvider(const std::string& path, uint64_t fallback_seed);
  int dim() const override { return dim_; }
  std::vector<double> lookup(const std::string& word) const override;

 private:
  int dim_ = 0;
  std::map<std::string, std::vector<double>> table_;
  std::unique_ptr<HashProvider> fallback_;
};

std::unique_ptr<WordVectorProvider> make_provider(const std::string& spec, int dim, uint64_t seed);

struct FeatureEncoderConfig {
  int d_emb = 50;
  int d_model = 64;
  int hidden = 64;       // MLP hidden width
  int d_visual = 50;     // raw visual feature length (defaults to d_emb)
  double sigma = 0.1;    // noise on synthesized visual features
  uint64_t visual_seed = 1;
};

// Word MLP, coordinate projection and visual projection; the parameter set
// behind every node feature.
class FeatureEncoder {
 public:
  FeatureEncoder(const FeatureEncoderConfig& cfg, const WordVectorProvider* provider,
                 ad::ParamStore& store, const std::string& prefix, Rng& init_rng);

  const FeatureEncoderConfig& config() const { return cfg_; }

  // MLP(provider(word)) -> 1 x d_model
  ad::Value embed_word(const std::string& word) const;
  // affine projection of (x, y) in [0,1]^2 -> 1 x d_model
  ad::Value embed_coord(double x, double y) const;
  // projected raw visual feature -> 1 x d_model
  ad::Value embed_visual(const graphs::SceneObject& obj, int image_id) const;
  // the pre-projection feature: supplied by the scene, or synthesized as
  // provider(gt_label) + sigma * seeded noise
  Tensor raw_visual_feature(const graphs::SceneObject& obj, int image_id) const;

  ad::Value word_vector(const std::string& word) const;  // constant 1 x d_emb

 private:
  FeatureEncoderConfig cfg_;
  const WordVectorProvider* provider_;
  ad::Value mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
  ad::Value coord_w_, coord_b_;
  ad::Value vis_w_, vis_b_;
  mutable std::map<std::string, Tensor> word_cache_;
};

}  // namespace gvqa::embed
