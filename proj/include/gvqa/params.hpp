#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gvqa/autodiff.hpp"

namespace gvqa::ad {

struct Parameter {
  std::string name;
  Value value;
};

// Ordered registry of named trainable tensors. Order of insertion is the
// serialization and update order, so it must be deterministic.
class ParamStore {
 public:
  Value add(const std::string& name, Tensor init);
  Value get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<Parameter>& items() const { return items_; }
  std::vector<Parameter>& items() { return items_; }
  size_t count() const { return items_.size(); }
  size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace gvqa::ad
