#include "gvqa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gvqa::io {

namespace {

constexpr char kMagic[8] = {'G', 'V', 'Q', 'A', 'T', 'N', 'S', '1'};

void write_u32(std::ostream& out, uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated archive");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

void read_doubles(std::istream& in, std::vector<double>& v) {
  for (double& d : v) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("truncated archive tensor data");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void write_archive(std::ostream& out, const std::string& header_json, const ad::ParamStore& params) {
  out.write(kMagic, 8);
  write_u32(out, static_cast<uint32_t>(header_json.size()));
  out.write(header_json.data(), static_cast<std::streamsize>(header_json.size()));
  write_u32(out, static_cast<uint32_t>(params.count()));
  for (const auto& p : params.items()) {
    write_u32(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Tensor& t = p.value.val();
    write_u32(out, static_cast<uint32_t>(t.rows));
    write_u32(out, static_cast<uint32_t>(t.cols));
    write_doubles(out, t.v);
  }
}

std::pair<std::string, std::vector<NamedTensor>> read_archive(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a model archive (bad magic)");
  }
  const uint32_t hlen = read_u32(in);
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw std::runtime_error("truncated archive header");
  const uint32_t n = read_u32(in);
  std::vector<NamedTensor> tensors;
  tensors.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t nlen = read_u32(in);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    const int rows = static_cast<int>(read_u32(in));
    const int cols = static_cast<int>(read_u32(in));
    Tensor t(rows, cols);
    read_doubles(in, t.v);
    tensors.push_back({std::move(name), std::move(t)});
  }
  return {std::move(header), std::move(tensors)};
}

void write_archive_file(const std::string& path, const std::string& header_json,
                        const ad::ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_archive(out, header_json, params);
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::pair<std::string, std::vector<NamedTensor>> read_archive_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  return read_archive(in);
}

void load_into(ad::ParamStore& params, const std::vector<NamedTensor>& tensors) {
  std::set<std::string> seen;
  for (const auto& nt : tensors) {
    if (!params.contains(nt.name)) {
      throw std::runtime_error("archive tensor '" + nt.name + "' has no matching parameter");
    }
    ad::Value v = params.get(nt.name);
    if (!v.val().same_shape(nt.tensor)) {
      throw std::runtime_error("archive tensor '" + nt.name + "' shape " + nt.tensor.shape_str() +
                               " does not match parameter shape " + v.val().shape_str());
    }
    v.assign(nt.tensor);
    seen.insert(nt.name);
  }
  for (const auto& p : params.items()) {
    if (!seen.count(p.name)) {
      throw std::runtime_error("archive is missing parameter '" + p.name + "'");
    }
  }
}

}  // namespace gvqa::io
