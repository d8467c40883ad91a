#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "gvqa/embedding.hpp"
#include "gvqa/gradcheck.hpp"
#include "gvqa/init.hpp"

using namespace gvqa;
using namespace gvqa::embed;

namespace {

struct Fixture {
  HashProvider provider{50, 7};
  ad::ParamStore store;
  Rng rng{99};
  FeatureEncoderConfig cfg{.d_emb = 50, .d_model = 16, .hidden = 16, .d_visual = 50, .sigma = 0.1};
  FeatureEncoder enc{cfg, &provider, store, "embed", rng};
};

}  // namespace

TEST_CASE("hash provider determinism and injectivity") {
  HashProvider p(50, 123);
  CHECK(p.lookup("cube") == p.lookup("cube"));
  CHECK(p.lookup("cube") != p.lookup("ball"));
  // collision-count oracle over a 1000-word sample
  std::set<std::vector<double>> seen;
  for (int i = 0; i < 1000; ++i) {
    auto v = p.lookup("unknown-word-" + std::to_string(i));
    CHECK(static_cast<int>(v.size()) == 50);
    for (double e : v) CHECK(std::isfinite(e));
    seen.insert(std::move(v));
  }
  CHECK(seen.size() == 1000);
  // different seeds give different tables
  HashProvider q(50, 124);
  CHECK(p.lookup("cube") != q.lookup("cube"));
}

TEST_CASE("file provider with hash fallback for unknown words") {
  const std::string path = "test_vectors.txt";
  {
    std::ofstream out(path);
    out << "cube 1 0 0\n";
    out << "ball 0 1 0\n";
    out << "zero 0 0 0\n";
  }
  FileProvider p(path, 5);
  CHECK(p.dim() == 3);
  CHECK(p.lookup("cube") == std::vector<double>{1, 0, 0});
  CHECK(p.lookup("nope") == p.lookup("nope"));
  CHECK(p.lookup("nope") != p.lookup("also-nope"));

  {
    std::ofstream out(path);
    out << "cube 1 0 0\n";
    out << "ball 0 1\n";
  }
  CHECK_THROWS_WITH_AS(FileProvider(path, 5), doctest::Contains("expected 3 components"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("word embedding through the MLP") {
  Fixture fx;
  SUBCASE("deterministic per word") {
    CHECK(fx.enc.embed_word("cube").val() == fx.enc.embed_word("cube").val());
    CHECK(fx.enc.embed_word("cube").val().cols == 16);
    CHECK(fx.enc.embed_word("cube").val().all_finite());
  }
  SUBCASE("zero input with zero biases propagates nonlinearity(0) exactly") {
    const std::string path = "zero_vec.txt";
    {
      std::ofstream out(path);
      out << "zero";
      for (int i = 0; i < 50; ++i) out << " 0";
      out << "\n";
    }
    FileProvider zp(path, 3);
    ad::ParamStore store;
    Rng rng(1);
    FeatureEncoder enc({.d_emb = 50, .d_model = 8, .hidden = 8}, &zp, store, "e", rng);
    // biases are zero-initialized, so MLP(0) = gelu(0) * w2 = 0
    CHECK(enc.embed_word("zero").val() == Tensor::zeros(1, 8));
    std::remove(path.c_str());
  }
  SUBCASE("gradients flow through the MLP") {
    auto f = [&]() {
      ad::Value e = fx.enc.embed_word("cube");
      return ad::dot(e, e);
    };
    std::vector<ad::Value> ps{fx.store.get("embed.mlp.w1"), fx.store.get("embed.mlp.b1"),
                              fx.store.get("embed.mlp.w2"), fx.store.get("embed.mlp.b2")};
    CHECK(ad::finite_difference_check(f, ps, 1e-5).max_rel_error < 1e-6);
  }
}

TEST_CASE("coordinate embedding") {
  Fixture fx;
  SUBCASE("zero coordinate with zero bias gives zero vector") {
    CHECK(fx.enc.embed_coord(0.0, 0.0).val() == Tensor::zeros(1, 16));
  }
  SUBCASE("affine identity when the bias cancels") {
    Tensor a = fx.enc.embed_coord(0.3, 0.2).val();
    Tensor b = fx.enc.embed_coord(0.1, 0.45).val();
    Tensor zero = fx.enc.embed_coord(0.0, 0.0).val();
    Tensor ab = fx.enc.embed_coord(0.4, 0.65).val();
    for (int j = 0; j < 16; ++j) {
      CHECK(a.v[j] + b.v[j] - zero.v[j] == doctest::Approx(ab.v[j]).epsilon(1e-12));
    }
  }
  SUBCASE("two corners of a box embed differently under a full-rank projection") {
    // rank oracle: the 2 x d projection has rank 2 iff its Gram determinant is nonzero
    const Tensor& w = fx.store.get("embed.coord.w").val();
    double g00 = 0, g01 = 0, g11 = 0;
    for (int j = 0; j < w.cols; ++j) {
      g00 += w(0, j) * w(0, j);
      g01 += w(0, j) * w(1, j);
      g11 += w(1, j) * w(1, j);
    }
    REQUIRE(g00 * g11 - g01 * g01 > 1e-9);
    Tensor tl = fx.enc.embed_coord(0.1, 0.1).val();
    Tensor br = fx.enc.embed_coord(0.3, 0.4).val();
    CHECK(max_abs_diff(tl, br) > 1e-9);
  }
  SUBCASE("out-of-range coordinate rejected") {
    CHECK_THROWS_AS(fx.enc.embed_coord(1.2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(fx.enc.embed_coord(0.0, -0.1), std::invalid_argument);
  }
  SUBCASE("gradient flows through the projection") {
    auto f = [&]() {
      ad::Value e = fx.enc.embed_coord(0.25, 0.75);
      return ad::dot(e, e);
    };
    std::vector<ad::Value> ps{fx.store.get("embed.coord.w"), fx.store.get("embed.coord.b")};
    CHECK(ad::finite_difference_check(f, ps, 1e-5).max_rel_error < 1e-6);
  }
}

TEST_CASE("visual embedding") {
  Fixture fx;
  graphs::SceneObject obj;
  obj.box_id = 2;
  obj.gt_label = "red_cube";

  SUBCASE("supplied feature is projected and deterministic") {
    graphs::SceneObject withf = obj;
    withf.feature = std::vector<double>(50, 0.25);
    CHECK(fx.enc.embed_visual(withf, 1).val() == fx.enc.embed_visual(withf, 1).val());
    withf.feature->pop_back();
    CHECK_THROWS_WITH_AS(fx.enc.embed_visual(withf, 1), doctest::Contains("does not match configured d_v"),
                         std::invalid_argument);
  }
  SUBCASE("sigma 0 reproduces the label word vector exactly") {
    ad::ParamStore store;
    Rng rng(4);
    FeatureEncoder clean({.d_emb = 50, .d_model = 16, .hidden = 16, .sigma = 0.0}, &fx.provider, store, "e", rng);
    CHECK(clean.raw_visual_feature(obj, 1).v == fx.provider.lookup("red_cube"));
  }
  SUBCASE("seeded noise is bit-identical across runs") {
    Tensor a = fx.enc.raw_visual_feature(obj, 3);
    Tensor b = fx.enc.raw_visual_feature(obj, 3);
    CHECK(a == b);
    CHECK(max_abs_diff(a, Tensor::row(fx.provider.lookup("red_cube"))) > 0.0);
    // other boxes and images get different noise
    CHECK(fx.enc.raw_visual_feature(obj, 4) != a);
  }
  SUBCASE("gradient flows through the projection") {
    auto f = [&]() {
      ad::Value e = fx.enc.embed_visual(obj, 1);
      return ad::dot(e, e);
    };
    std::vector<ad::Value> ps{fx.store.get("embed.vis.w"), fx.store.get("embed.vis.b")};
    CHECK(ad::finite_difference_check(f, ps, 1e-5).max_rel_error < 1e-6);
  }
}

TEST_CASE("full feature tables are reproducible across encoder instances") {
  HashProvider provider(50, 7);
  auto build = [&]() {
    ad::ParamStore store;
    Rng rng(99);
    FeatureEncoder enc({.d_emb = 50, .d_model = 16, .hidden = 16}, &provider, store, "e", rng);
    std::vector<Tensor> rows;
    for (const char* w : {"red", "cube", "left-of", "what"}) rows.push_back(enc.embed_word(w).val());
    rows.push_back(enc.embed_coord(0.5, 0.25).val());
    return rows;
  };
  auto a = build();
  auto b = build();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
