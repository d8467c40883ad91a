#include "gvqa/scene.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace gvqa::graphs {

const SceneObject* SceneDescription::find_object(int box_id) const {
  for (const auto& o : objects) {
    if (o.box_id == box_id) return &o;
  }
  return nullptr;
}

void SceneDescription::validate() const {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("scene " + std::to_string(image_id) + ": non-positive image dimensions");
  }
  std::set<int> ids;
  for (const auto& o : objects) {
    const std::string where = "scene " + std::to_string(image_id) + " box " + std::to_string(o.box_id);
    if (!ids.insert(o.box_id).second) throw std::invalid_argument(where + ": duplicate box id");
    if (o.w <= 0 || o.h <= 0) throw std::invalid_argument(where + ": bbox has non-positive extent");
    if (o.x < 0 || o.y < 0 || o.x + o.w > width || o.y + o.h > height) {
      throw std::invalid_argument(where + ": bbox outside image bounds");
    }
    if (o.candidates.empty()) throw std::invalid_argument(where + ": empty candidate list");
    for (size_t i = 1; i < o.candidates.size(); ++i) {
      if (o.candidates[i].score > o.candidates[i - 1].score) {
        throw std::invalid_argument(where + ": candidate scores not descending at rank " + std::to_string(i));
      }
    }
  }
  for (const auto& r : relations) {
    if (!ids.count(r.subject) || !ids.count(r.object)) {
      throw std::invalid_argument("scene " + std::to_string(image_id) + ": relation '" + r.predicate +
                                  "' references missing box " +
                                  std::to_string(ids.count(r.subject) ? r.object : r.subject));
    }
  }
}

void QuestionParse::validate() const {
  const std::string where = "question " + std::to_string(question_id);
  if (tokens.empty()) throw std::invalid_argument(where + ": no tokens");
  if (heads.size() != tokens.size()) {
    throw std::invalid_argument(where + ": heads length " + std::to_string(heads.size()) +
                                " does not match token count " + std::to_string(tokens.size()));
  }
  int roots = 0;
  for (size_t i = 0; i < heads.size(); ++i) {
    const int h = heads[i];
    if (h == -1) {
      ++roots;
      continue;
    }
    if (h < 0 || h >= static_cast<int>(heads.size())) {
      throw std::invalid_argument(where + ": head out of range at token " + std::to_string(i));
    }
    if (h == static_cast<int>(i)) {
      throw std::invalid_argument(where + ": token " + std::to_string(i) + " is its own head");
    }
  }
  if (roots != 1) {
    throw std::invalid_argument(where + ": expected exactly one root, found " + std::to_string(roots));
  }
  // walking up from every token must reach the root without revisits
  for (size_t i = 0; i < heads.size(); ++i) {
    int cur = static_cast<int>(i);
    size_t steps = 0;
    while (heads[cur] != -1) {
      cur = heads[cur];
      if (++steps > heads.size()) {
        throw std::invalid_argument(where + ": cycle in heads involving token " + std::to_string(i));
      }
    }
  }
}

namespace {

json require(const json& j, const char* field, const std::string& where) {
  if (!j.contains(field)) {
    throw std::invalid_argument(where + ": missing field '" + field + "'");
  }
  return j.at(field);
}

}  // namespace

SceneDescription scene_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scene JSON parse error: ") + e.what());
  }
  SceneDescription s;
  s.image_id = require(j, "image_id", "scene").get<int>();
  const std::string where = "scene " + std::to_string(s.image_id);
  s.width = require(j, "width", where).get<double>();
  s.height = require(j, "height", where).get<double>();
  for (const auto& jo : require(j, "objects", where)) {
    SceneObject o;
    o.box_id = require(jo, "box_id", where).get<int>();
    const auto bbox = require(jo, "bbox", where + " box " + std::to_string(o.box_id));
    if (!bbox.is_array() || bbox.size() != 4) {
      throw std::invalid_argument(where + " box " + std::to_string(o.box_id) + ": bbox must be [x,y,w,h]");
    }
    o.x = bbox[0].get<double>();
    o.y = bbox[1].get<double>();
    o.w = bbox[2].get<double>();
    o.h = bbox[3].get<double>();
    for (const auto& jc : require(jo, "candidates", where + " box " + std::to_string(o.box_id))) {
      o.candidates.push_back({require(jc, "label", where + ".candidates").get<std::string>(),
                              require(jc, "score", where + ".candidates").get<double>()});
    }
    if (jo.contains("gt_label") && !jo.at("gt_label").is_null()) {
      o.gt_label = jo.at("gt_label").get<std::string>();
    }
    if (jo.contains("attributes")) {
      for (const auto& ja : jo.at("attributes")) o.attributes.push_back(ja.get<std::string>());
    }
    if (jo.contains("feature") && !jo.at("feature").is_null()) {
      o.feature = jo.at("feature").get<std::vector<double>>();
    }
    s.objects.push_back(std::move(o));
  }
  if (j.contains("relations")) {
    for (const auto& jr : j.at("relations")) {
      s.relations.push_back({require(jr, "subject", where + ".relations").get<int>(),
                             require(jr, "predicate", where + ".relations").get<std::string>(),
                             require(jr, "object", where + ".relations").get<int>()});
    }
  }
  std::sort(s.objects.begin(), s.objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return a.box_id < b.box_id; });
  s.validate();
  return s;
}

QuestionParse question_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("question JSON parse error: ") + e.what());
  }
  QuestionParse q;
  q.question_id = require(j, "question_id", "question").get<int>();
  const std::string where = "question " + std::to_string(q.question_id);
  q.tokens = require(j, "tokens", where).get<std::vector<std::string>>();
  q.heads = require(j, "heads", where).get<std::vector<int>>();
  if (j.contains("answer") && !j.at("answer").is_null()) {
    q.answer = j.at("answer").get<std::string>();
  }
  q.validate();
  return q;
}

std::string scene_to_json(const SceneDescription& s) {
  json j;
  j["image_id"] = s.image_id;
  j["width"] = s.width;
  j["height"] = s.height;
  j["objects"] = json::array();
  for (const auto& o : s.objects) {
    json jo;
    jo["box_id"] = o.box_id;
    jo["bbox"] = {o.x, o.y, o.w, o.h};
    jo["candidates"] = json::array();
    for (const auto& c : o.candidates) jo["candidates"].push_back({{"label", c.label}, {"score", c.score}});
    if (o.gt_label) jo["gt_label"] = *o.gt_label;
    jo["attributes"] = o.attributes;
    if (o.feature) jo["feature"] = *o.feature;
    j["objects"].push_back(std::move(jo));
  }
  j["relations"] = json::array();
  for (const auto& r : s.relations) {
    j["relations"].push_back({{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}});
  }
  return j.dump();
}

std::string question_to_json(const QuestionParse& q) {
  json j;
  j["question_id"] = q.question_id;
  j["tokens"] = q.tokens;
  j["heads"] = q.heads;
  if (q.answer) j["answer"] = *q.answer;
  return j.dump();
}

}  // namespace gvqa::graphs
