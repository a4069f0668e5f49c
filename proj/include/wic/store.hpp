#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wic/encoder.hpp"
#include "wic/error.hpp"
#include "wic/textio.hpp"
#include "wic/types.hpp"

namespace wic::encoder {

struct StoreRecord {
  Tensor matrix;  // T×H
  // Character range of each row in its sentence, when the exporter supplied
  // them. Without offsets the rows must follow the local tokenizer.
  std::optional<std::vector<CharRange>> offsets;

  friend bool operator==(const StoreRecord&, const StoreRecord&) = default;
};

/// Hidden states exported from an external encoder, keyed by
/// "<pair_id>.<side>". The key "null" holds the encoding of the word "null".
///
/// Text format: a header line "H=<int>", then one record per line:
///   key TAB T TAB T×H whitespace-separated doubles (row-major)
/// optionally followed by TAB and T space-separated "start:end" ranges.
class PrecomputedStore {
 public:
  static constexpr const char* kNullKey = "null";

  explicit PrecomputedStore(std::size_t hidden) : hidden_(hidden) {
    if (hidden == 0) throw FormatError("store hidden size must be positive");
  }

  std::size_t hidden() const { return hidden_; }
  std::size_t size() const { return records_.size(); }

  static std::string key(const std::string& pair_id, int side) {
    return pair_id + "." + std::to_string(side);
  }

  void insert(const std::string& key, Tensor matrix,
              std::optional<std::vector<CharRange>> offsets = std::nullopt) {
    if (key.empty() || key.find_first_of("\t\n") != std::string::npos) {
      throw FormatError("store key must be non-empty and free of tabs/newlines");
    }
    if (matrix.rank() != 2 || matrix.cols() != hidden_) {
      throw FormatError("record '" + key + "' has shape " + numgrad::shape_string(matrix.shape()) +
                        ", store declares H=" + std::to_string(hidden_));
    }
    if (offsets && offsets->size() != matrix.rows()) {
      throw FormatError("record '" + key + "' has " + std::to_string(offsets->size()) +
                        " offsets for " + std::to_string(matrix.rows()) + " rows");
    }
    records_[key] = StoreRecord{std::move(matrix), std::move(offsets)};
  }

  const StoreRecord* find(const std::string& key) const {
    const auto it = records_.find(key);
    return it == records_.end() ? nullptr : &it->second;
  }

  /// Absent keys yield nullopt, never a default tensor.
  std::optional<HiddenStates> lookup(const std::string& pair_id, int side) const {
    const StoreRecord* r = find(key(pair_id, side));
    if (!r) return std::nullopt;
    return HiddenStates{r->matrix};
  }

  const std::map<std::string, StoreRecord>& records() const { return records_; }

  void write(std::ostream& out) const {
    out << "H=" << hidden_ << '\n';
    std::string line;
    for (const auto& [k, r] : records_) {
      line.clear();
      line += k;
      line += '\t';
      line += std::to_string(r.matrix.rows());
      line += '\t';
      line += textio::join_doubles(r.matrix.values());
      if (r.offsets) {
        line += '\t';
        for (std::size_t i = 0; i < r.offsets->size(); ++i) {
          if (i) line += ' ';
          line += std::to_string((*r.offsets)[i].start) + ":" + std::to_string((*r.offsets)[i].end);
        }
      }
      out << line << '\n';
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write(out);
  }

  static PrecomputedStore parse(std::istream& in, const std::string& source = "<store>") {
    std::string line;
    if (!std::getline(in, line)) throw FormatError(source + ": empty store file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    PrecomputedStore store(textio::parse_header(line, "H", source + ":1"));
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::string where = source + ":" + std::to_string(line_no);
      const auto cols = textio::split(line, '\t');
      if (cols.size() != 3 && cols.size() != 4) {
        throw FormatError(where + ": expected key, T, values[, offsets]");
      }
      const std::string key(cols[0]);
      const std::size_t t = textio::parse_size(cols[1], where);
      std::vector<double> values = textio::parse_doubles(cols[2], where);
      if (t == 0 || values.size() != t * store.hidden_) {
        throw FormatError(where + ": record '" + key + "' holds " + std::to_string(values.size()) +
                          " values, expected T×H = " + std::to_string(t) + "×" +
                          std::to_string(store.hidden_));
      }
      std::optional<std::vector<CharRange>> offsets;
      if (cols.size() == 4) {
        offsets.emplace();
        for (std::string_view item : textio::split(cols[3], ' ')) {
          if (item.empty()) continue;
          const auto colon = item.find(':');
          if (colon == std::string_view::npos) throw FormatError(where + ": bad offset '" + std::string(item) + "'");
          offsets->push_back({textio::parse_size(item.substr(0, colon), where),
                              textio::parse_size(item.substr(colon + 1), where)});
        }
      }
      if (store.find(key)) throw FormatError(where + ": duplicate key '" + key + "'");
      store.insert(key, Tensor({t, store.hidden_}, std::move(values)), std::move(offsets));
    }
    return store;
  }

  static PrecomputedStore load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open store " + path.string());
    return parse(in, path.string());
  }

 private:
  std::size_t hidden_;
  std::map<std::string, StoreRecord> records_;
};

}  // namespace wic::encoder
