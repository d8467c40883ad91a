#include "gvqa/params.hpp"

#include <stdexcept>

namespace gvqa::ad {

Value ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Value v = Value::parameter(std::move(init));
  index_[name] = items_.size();
  items_.push_back({name, v});
  return v;
}

Value ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::invalid_argument("unknown parameter: " + name);
  }
  return items_[it->second].value;
}

size_t ParamStore::scalar_count() const {
  size_t n = 0;
  for (const auto& p : items_) n += p.value.val().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : items_) p.value.zero_grad();
}

}  // namespace gvqa::ad
