#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gvqa::graphs {

struct LabelCandidate {
  std::string label;
  double score = 0.0;
};

struct SceneObject {
  int box_id = 0;
  double x = 0, y = 0, w = 0, h = 0;  // pixels
  std::vector<LabelCandidate> candidates;  // scores non-increasing
  std::optional<std::string> gt_label;
  std::vector<std::string> attributes;
  std::optional<std::vector<double>> feature;
};

struct SceneRelation {
  int subject = 0;
  std::string predicate;
  int object = 0;
};

struct SceneDescription {
  int image_id = 0;
  double width = 0, height = 0;
  std::vector<SceneObject> objects;  // kept sorted by box_id
  std::vector<SceneRelation> relations;

  const SceneObject* find_object(int box_id) const;
  void validate() const;  // throws std::invalid_argument naming the bad field
};

struct QuestionParse {
  int question_id = 0;
  std::vector<std::string> tokens;
  std::vector<int> heads;  // heads[i] = parent index, -1 for the unique root
  std::optional<std::string> answer;

  void validate() const;
};

SceneDescription scene_from_json(const std::string& json_text);
QuestionParse question_from_json(const std::string& json_text);
std::string scene_to_json(const SceneDescription& s);
std::string question_to_json(const QuestionParse& q);

}  // namespace gvqa::graphs
