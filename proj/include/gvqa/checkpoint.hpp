#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gvqa/params.hpp"
#include "gvqa/tensor.hpp"

namespace gvqa::io {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Versioned container: magic, JSON header, then named float64 tensors.
// Writing the same parameters twice produces byte-identical files.
void write_archive(std::ostream& out, const std::string& header_json, const ad::ParamStore& params);
std::pair<std::string, std::vector<NamedTensor>> read_archive(std::istream& in);

void write_archive_file(const std::string& path, const std::string& header_json, const ad::ParamStore& params);
std::pair<std::string, std::vector<NamedTensor>> read_archive_file(const std::string& path);

// strict: every stored tensor must match an existing parameter name and shape,
// and every parameter must be covered
void load_into(ad::ParamStore& params, const std::vector<NamedTensor>& tensors);

}  // namespace gvqa::io
