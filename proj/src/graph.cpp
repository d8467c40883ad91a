#include "gvqa/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace gvqa::graphs {

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Object: return "object";
    case NodeKind::Attribute: return "attribute";
    case NodeKind::Relation: return "relation";
    case NodeKind::CoordinateCorner: return "coordinate";
    case NodeKind::QuestionToken: return "token";
    case NodeKind::Separator: return "separator";
  }
  return "?";
}

NodeKind node_kind_from_string(const std::string& s) {
  if (s == "object") return NodeKind::Object;
  if (s == "attribute") return NodeKind::Attribute;
  if (s == "relation") return NodeKind::Relation;
  if (s == "coordinate") return NodeKind::CoordinateCorner;
  if (s == "token") return NodeKind::QuestionToken;
  if (s == "separator") return NodeKind::Separator;
  throw std::invalid_argument("unknown node kind '" + s + "'");
}

std::string GraphNode::payload_str() const {
  if (kind == NodeKind::CoordinateCorner) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "(%.3f,%.3f)", coord[0], coord[1]);
    return buf;
  }
  return label;
}

namespace {

// union-find for the question-tree check
struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

void ModalityGraph::validate() const {
  const int n = node_count();
  for (int i = 0; i < n; ++i) {
    if (nodes[i].id != i) throw std::invalid_argument("graph node ids not 0..N-1 in list order");
    if (nodes[i].kind == NodeKind::Separator) {
      throw std::invalid_argument("separator nodes may not appear inside a modality graph");
    }
    if (nodes[i].kind == NodeKind::CoordinateCorner) {
      for (double c : nodes[i].coord) {
        if (c < 0.0 || c > 1.0) throw std::invalid_argument("coordinate payload outside [0,1]");
      }
    }
    if (nodes[i].kind == NodeKind::Object && !nodes[i].source_box) {
      throw std::invalid_argument("object node without source box");
    }
  }
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= n || v < 0 || v >= n) throw std::invalid_argument("edge endpoint outside graph");
    if (u == v) throw std::invalid_argument("self-edge stored in graph");
  }

  if (modality == Modality::Visual) {
    if (edges.size() != static_cast<size_t>(n) * (n - 1)) {
      throw std::invalid_argument("visual graph is not fully connected");
    }
  } else if (modality == Modality::Question) {
    if (edges.size() != static_cast<size_t>(n - 1)) {
      throw std::invalid_argument("question graph does not have N-1 edges");
    }
    DisjointSet ds(n);
    for (const auto& [u, v] : edges) {
      if (!ds.unite(u, v)) throw std::invalid_argument("question graph contains a cycle");
    }
  } else {
    std::vector<int> in_from_obj(n, 0), out_to_obj(n, 0), in_any(n, 0);
    for (const auto& [u, v] : edges) {
      ++in_any[v];
      if (nodes[u].kind == NodeKind::Object) ++in_from_obj[v];
      if (nodes[v].kind == NodeKind::Object) ++out_to_obj[u];
    }
    for (int i = 0; i < n; ++i) {
      if (nodes[i].kind == NodeKind::Relation && (in_from_obj[i] < 1 || out_to_obj[i] < 1)) {
        throw std::invalid_argument("relation node '" + nodes[i].label + "' lacks object connections");
      }
      if (nodes[i].kind == NodeKind::Attribute && in_any[i] < 1) {
        throw std::invalid_argument("attribute node '" + nodes[i].label + "' has no incoming edge");
      }
    }
  }
}

ModalityGraph build_semantic_graph(const SceneDescription& scene, int k) {
  if (k < 1) throw std::invalid_argument("supernode k must be >= 1");
  if (scene.objects.empty()) {
    throw std::invalid_argument("cannot build semantic graph from empty scene " + std::to_string(scene.image_id));
  }
  scene.validate();

  ModalityGraph g;
  g.modality = Modality::Semantic;

  std::map<int, int> node_of_box;  // box_id -> object node id
  for (const auto& o : scene.objects) {
    GraphNode n;
    n.id = g.node_count();
    n.kind = NodeKind::Object;
    n.label = o.candidates.front().label;
    n.source_box = o.box_id;
    node_of_box[o.box_id] = n.id;
    g.nodes.push_back(std::move(n));
  }
  for (const auto& o : scene.objects) {
    const std::array<std::array<double, 2>, 2> corners = {{
        {o.x / scene.width, o.y / scene.height},
        {(o.x + o.w) / scene.width, (o.y + o.h) / scene.height},
    }};
    for (const auto& c : corners) {
      GraphNode n;
      n.id = g.node_count();
      n.kind = NodeKind::CoordinateCorner;
      n.coord = c;
      n.source_box = o.box_id;
      g.edges.insert({node_of_box[o.box_id], n.id});
      g.nodes.push_back(std::move(n));
    }
  }

  std::map<std::string, std::vector<int>> attr_boxes;  // label -> object node ids
  for (const auto& o : scene.objects) {
    for (const auto& a : o.attributes) attr_boxes[a].push_back(node_of_box[o.box_id]);
  }
  for (const auto& [label, sources] : attr_boxes) {
    GraphNode n;
    n.id = g.node_count();
    n.kind = NodeKind::Attribute;
    n.label = label;
    for (int src : sources) g.edges.insert({src, n.id});
    g.nodes.push_back(std::move(n));
  }

  std::map<std::string, std::vector<std::pair<int, int>>> rel_pairs;  // predicate -> (subj,obj) node ids
  for (const auto& r : scene.relations) {
    rel_pairs[r.predicate].push_back({node_of_box.at(r.subject), node_of_box.at(r.object)});
  }
  for (const auto& [predicate, pairs] : rel_pairs) {
    GraphNode n;
    n.id = g.node_count();
    n.kind = NodeKind::Relation;
    n.label = predicate;
    for (const auto& [s, o] : pairs) {
      g.edges.insert({s, n.id});
      g.edges.insert({n.id, o});
    }
    g.nodes.push_back(std::move(n));
  }

  g.validate();
  return g;
}

ModalityGraph build_visual_graph(const SceneDescription& scene) {
  if (scene.objects.empty()) {
    throw std::invalid_argument("cannot build visual graph from empty scene " + std::to_string(scene.image_id));
  }
  ModalityGraph g;
  g.modality = Modality::Visual;
  for (const auto& o : scene.objects) {
    GraphNode n;
    n.id = g.node_count();
    n.kind = NodeKind::Object;
    n.label = o.candidates.front().label;
    n.source_box = o.box_id;
    g.nodes.push_back(std::move(n));
  }
  const int n = g.node_count();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) g.edges.insert({i, j});
  g.validate();
  return g;
}

ModalityGraph build_question_graph(const QuestionParse& parse) {
  parse.validate();
  ModalityGraph g;
  g.modality = Modality::Question;
  for (size_t i = 0; i < parse.tokens.size(); ++i) {
    GraphNode n;
    n.id = static_cast<int>(i);
    n.kind = NodeKind::QuestionToken;
    n.label = parse.tokens[i];
    g.nodes.push_back(std::move(n));
  }
  for (size_t i = 0; i < parse.heads.size(); ++i) {
    if (parse.heads[i] != -1) g.edges.insert({parse.heads[i], static_cast<int>(i)});
  }
  g.validate();
  return g;
}

std::pair<std::vector<GraphNode>, AdjacencyMatrix> graph_to_sequence(const ModalityGraph& g) {
  AdjacencyMatrix m(g.node_count());
  for (const auto& [u, v] : g.edges) m.set(u, v, 1);
  return {g.nodes, m};
}

std::set<std::pair<int, int>> edges_from_adjacency(const AdjacencyMatrix& m) {
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < m.size; ++i)
    for (int j = 0; j < m.size; ++j)
      if (m.at(i, j)) edges.insert({i, j});
  return edges;
}

AdjacencyMatrix symmetrize_with_self_loops(const AdjacencyMatrix& m) {
  AdjacencyMatrix out(m.size);
  for (int i = 0; i < m.size; ++i) {
    out.set(i, i, 1);
    for (int j = 0; j < m.size; ++j) {
      if (m.at(i, j) || m.at(j, i)) {
        out.set(i, j, 1);
        out.set(j, i, 1);
      }
    }
  }
  return out;
}

bool operator==(const AdjacencyMatrix& x, const AdjacencyMatrix& y) {
  return x.size == y.size && x.a == y.a;
}

std::string sequence_to_json(const std::vector<GraphNode>& nodes, const AdjacencyMatrix& m) {
  json j;
  j["nodes"] = json::array();
  for (const auto& n : nodes) {
    json jn;
    jn["id"] = n.id;
    jn["kind"] = to_string(n.kind);
    if (n.kind == NodeKind::CoordinateCorner) {
      jn["payload"] = {n.coord[0], n.coord[1]};
    } else {
      jn["payload"] = n.label;
    }
    if (n.source_box) {
      jn["source_box"] = *n.source_box;
    } else {
      jn["source_box"] = nullptr;
    }
    j["nodes"].push_back(std::move(jn));
  }
  j["adjacency"] = json::array();
  for (uint8_t e : m.a) j["adjacency"].push_back(static_cast<int>(e));
  return j.dump();
}

}  // namespace gvqa::graphs
