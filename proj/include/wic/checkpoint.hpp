#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wic/error.hpp"
#include "wic/tensor.hpp"
#include "wic/textio.hpp"

namespace wic::spanhead {

/// Parameter checkpoints: one line per parameter,
///   name TAB shape TAB values
/// with shape written as "2x64" and values in row-major order.
struct NamedTensor {
  std::string name;
  numgrad::Tensor value;
};

inline void write_checkpoint(std::ostream& out, std::span<const NamedTensor> entries) {
  for (const NamedTensor& e : entries) {
    if (e.name.empty() || e.name.find_first_of("\t\n") != std::string::npos) {
      throw FormatError("checkpoint names must be non-empty and free of tabs/newlines");
    }
    out << e.name << '\t' << numgrad::shape_string(e.value.shape()) << '\t'
        << textio::join_doubles(e.value.values()) << '\n';
  }
}

inline void write_checkpoint(std::ostream& out,
                             std::span<const numgrad::Parameter* const> params) {
  std::vector<NamedTensor> entries;
  for (const numgrad::Parameter* p : params) entries.push_back({p->name, p->value});
  write_checkpoint(out, entries);
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& in,
                                                const std::string& source = "<checkpoint>") {
  std::vector<NamedTensor> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto cols = textio::split(line, '\t');
    if (cols.size() != 3) throw FormatError(where + ": expected name, shape, values");
    numgrad::Shape shape;
    for (std::string_view d : textio::split(cols[1], 'x')) shape.push_back(textio::parse_size(d, where));
    std::vector<double> values = textio::parse_doubles(cols[2], where);
    try {
      out.push_back({std::string(cols[0]), numgrad::Tensor(shape, std::move(values))});
    } catch (const DimensionError& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return out;
}

/// Copies checkpoint values into `params` by name; every parameter must be
/// present with a matching shape.
inline void assign_checkpoint(std::span<numgrad::Parameter* const> params,
                              std::span<const NamedTensor> entries) {
  std::map<std::string, const numgrad::Tensor*> by_name;
  for (const NamedTensor& e : entries) by_name[e.name] = &e.value;
  for (numgrad::Parameter* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks parameter '" + p->name + "'");
    if (it->second->shape() != p->value.shape()) {
      throw FormatError("checkpoint parameter '" + p->name + "' has shape " +
                        numgrad::shape_string(it->second->shape()) + ", expected " +
                        numgrad::shape_string(p->value.shape()));
    }
    p->value = *it->second;
    p->zero_grad();
  }
}

inline void save_checkpoint(const std::filesystem::path& path,
                            std::span<const numgrad::Parameter* const> params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkpoint(out, params);
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace wic::spanhead
