#include "gvqa/constraint.hpp"

#include <stdexcept>

namespace gvqa::model {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::QuestionOnly: return "question-only";
    case Stage::CrossModality: return "cross-modality";
    case Stage::Full: return "full";
  }
  return "?";
}

StageSchedule StageSchedule::from_split(const std::array<int, 3>& split) {
  for (int n : split) {
    if (n < 1) throw std::invalid_argument("every stage needs at least one encoder layer");
  }
  StageSchedule s;
  for (int i = 0; i < split[0]; ++i) s.per_layer.push_back(Stage::QuestionOnly);
  for (int i = 0; i < split[1]; ++i) s.per_layer.push_back(Stage::CrossModality);
  for (int i = 0; i < split[2]; ++i) s.per_layer.push_back(Stage::Full);
  return s;
}

Tensor ConstraintGraph::region(int which) const {
  const int n = size();
  auto block = [&](int r0, int r1, int c0, int c1) {
    Tensor t(r1 - r0, c1 - c0);
    for (int i = r0; i < r1; ++i)
      for (int j = c0; j < c1; ++j) t(i - r0, j - c0) = g(i, j);
    return t;
  };
  switch (which) {
    case 1: return block(0, v_len, 0, v_len);
    case 2: return block(v_len, n, v_len, n);
    case 3: return block(0, v_len, v_len, n);
    case 4: return block(v_len, n, 0, v_len);
  }
  throw std::invalid_argument("constraint region must be 1..4");
}

Tensor lift_with_special(const graphs::AdjacencyMatrix& sym) {
  const int n = sym.size + 1;
  Tensor t(n, n);
  for (int j = 0; j < n; ++j) {
    t(0, j) = 1.0;
    t(j, 0) = 1.0;
  }
  for (int i = 0; i < sym.size; ++i)
    for (int j = 0; j < sym.size; ++j) t(i + 1, j + 1) = sym.at(i, j);
  return t;
}

ConstraintGraph compose_constraint(Stage stage, const Tensor& img_block, const Tensor& q_block,
                                   const std::vector<int>& special_positions) {
  if (img_block.rows != img_block.cols || q_block.rows != q_block.cols) {
    throw std::invalid_argument("constraint blocks must be square, got " + img_block.shape_str() + " and " +
                                q_block.shape_str());
  }
  ConstraintGraph cg;
  cg.v_len = img_block.rows;
  cg.q_len = q_block.rows;
  const int n = cg.size();
  cg.g = Tensor(n, n);

  switch (stage) {
    case Stage::QuestionOnly:
      for (int i = 0; i < cg.q_len; ++i)
        for (int j = 0; j < cg.q_len; ++j) cg.g(cg.v_len + i, cg.v_len + j) = q_block(i, j);
      break;
    case Stage::CrossModality:
      for (int i = 0; i < cg.v_len; ++i)
        for (int j = 0; j < cg.q_len; ++j) {
          cg.g(i, cg.v_len + j) = 1.0;
          cg.g(cg.v_len + j, i) = 1.0;
        }
      break;
    case Stage::Full:
      for (int i = 0; i < cg.v_len; ++i)
        for (int j = 0; j < cg.v_len; ++j) cg.g(i, j) = img_block(i, j);
      for (int i = 0; i < cg.q_len; ++i)
        for (int j = 0; j < cg.q_len; ++j) cg.g(cg.v_len + i, cg.v_len + j) = q_block(i, j);
      for (int i = 0; i < cg.v_len; ++i)
        for (int j = 0; j < cg.q_len; ++j) {
          cg.g(i, cg.v_len + j) = 1.0;
          cg.g(cg.v_len + j, i) = 1.0;
        }
      break;
  }

  for (int i = 0; i < n; ++i) cg.g(i, i) = 1.0;
  for (int p : special_positions) {
    if (p < 0 || p >= n) throw std::invalid_argument("special position outside the sequence");
    for (int j = 0; j < n; ++j) {
      cg.g(p, j) = 1.0;
      cg.g(j, p) = 1.0;
    }
  }
  return cg;
}

}  // namespace gvqa::model
