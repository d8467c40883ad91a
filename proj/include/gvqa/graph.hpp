#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gvqa/scene.hpp"

namespace gvqa::graphs {

enum class NodeKind { Object, Attribute, Relation, CoordinateCorner, QuestionToken, Separator };

const char* to_string(NodeKind k);
NodeKind node_kind_from_string(const std::string& s);

struct GraphNode {
  int id = 0;
  NodeKind kind = NodeKind::Object;
  std::string label;                 // word payload for non-coordinate kinds
  std::array<double, 2> coord{0, 0};  // normalized corner for CoordinateCorner
  std::optional<int> source_box;

  std::string payload_str() const;  // label, or "(x,y)" for coordinates
};

enum class Modality { Semantic, Visual, Question };

struct ModalityGraph {
  Modality modality = Modality::Semantic;
  std::vector<GraphNode> nodes;            // ids are 0..N-1 in list order
  std::set<std::pair<int, int>> edges;     // directed, no self-edges

  int node_count() const { return static_cast<int>(nodes.size()); }
  void validate() const;  // modality-specific invariants; throws
};

struct AdjacencyMatrix {
  int size = 0;
  std::vector<uint8_t> a;  // row-major 0/1

  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(int n) : size(n), a(static_cast<size_t>(n) * n, 0) {}

  uint8_t at(int i, int j) const { return a[static_cast<size_t>(i) * size + j]; }
  void set(int i, int j, uint8_t v) { a[static_cast<size_t>(i) * size + j] = v; }
};

bool operator==(const AdjacencyMatrix& x, const AdjacencyMatrix& y);

// scene -> ER-model graph with merged attribute/relation nodes and two
// coordinate-corner nodes per box; object nodes are never merged
ModalityGraph build_semantic_graph(const SceneDescription& scene, int k);
// fully connected graph over detected boxes
ModalityGraph build_visual_graph(const SceneDescription& scene);
// dependency tree, edges parent -> child
ModalityGraph build_question_graph(const QuestionParse& parse);

std::pair<std::vector<GraphNode>, AdjacencyMatrix> graph_to_sequence(const ModalityGraph& g);
std::set<std::pair<int, int>> edges_from_adjacency(const AdjacencyMatrix& m);
AdjacencyMatrix symmetrize_with_self_loops(const AdjacencyMatrix& m);

std::string sequence_to_json(const std::vector<GraphNode>& nodes, const AdjacencyMatrix& m);

}  // namespace gvqa::graphs
