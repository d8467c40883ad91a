#pragma once

#include <array>
#include <string>
#include <vector>

#include "gvqa/graph.hpp"
#include "gvqa/tensor.hpp"

namespace gvqa::model {

enum class Stage { QuestionOnly, CrossModality, Full };

// Partition of the encoder layers into the three consecutive stages.
struct StageSchedule {
  std::vector<Stage> per_layer;

  static StageSchedule from_split(const std::array<int, 3>& split);
  int layers() const { return static_cast<int>(per_layer.size()); }
};

// Binary mask over the concatenated image+question sequence.
// Region 1: rows/cols [0, v_len) x [0, v_len)          (within image)
// Region 2: rows/cols [v_len, end) x [v_len, end)      (within question)
// Region 3: rows [0, v_len) x cols [v_len, end)        (image -> question)
// Region 4: rows [v_len, end) x cols [0, v_len)        (question -> image)
struct ConstraintGraph {
  int v_len = 0;
  int q_len = 0;
  Tensor g;

  int size() const { return v_len + q_len; }
  // copy of one region's block, 1-based region index as above
  Tensor region(int which) const;
};

// Embeds a symmetrized adjacency into a block that is one slot larger: slot 0
// belongs to the special token (CLS or SEP) and gets an all-ones row/column.
Tensor lift_with_special(const graphs::AdjacencyMatrix& sym);

// Assembles G for one stage from the lifted blocks. The diagonal is always
// on, and special positions keep all-ones rows/columns in every stage so no
// row ever loses all its mass.
ConstraintGraph compose_constraint(Stage stage, const Tensor& img_block, const Tensor& q_block,
                                   const std::vector<int>& special_positions);

const char* to_string(Stage s);

}  // namespace gvqa::model
