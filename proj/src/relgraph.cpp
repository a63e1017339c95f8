#include "vlmt/relgraph.hpp"

#include <fstream>

#include "json.hpp"

namespace vlmt::relgraph {

using nlohmann::json;

OccurrenceCounts::OccurrenceCounts(size_t n, std::vector<std::string> names)
    : n_classes(n),
      single(n, 0),
      pair(n * n, 0),
      class_names(std::move(names)) {
  if (!class_names.empty() && class_names.size() != n) {
    throw ValidationError("OccurrenceCounts: " +
                          std::to_string(class_names.size()) +
                          " class names for " + std::to_string(n) +
                          " classes");
  }
}

uint64_t OccurrenceCounts::pair_count(size_t c1, size_t c2) const {
  if (c1 >= n_classes || c2 >= n_classes) {
    throw IndexError("pair_count: class id out of range");
  }
  return pair[c1 * n_classes + c2];
}

void observe_frame(OccurrenceCounts& counts, const std::set<int>& classes) {
  for (int c : classes) {
    if (c < 0 || static_cast<size_t>(c) >= counts.n_classes) {
      throw IndexError("observe_frame: class id " + std::to_string(c) +
                       " outside vocabulary of " +
                       std::to_string(counts.n_classes) + " classes");
    }
  }
  counts.frames_seen += 1;
  for (int c : classes) counts.single[static_cast<size_t>(c)] += 1;
  for (auto it1 = classes.begin(); it1 != classes.end(); ++it1) {
    for (auto it2 = std::next(it1); it2 != classes.end(); ++it2) {
      size_t a = static_cast<size_t>(*it1);
      size_t b = static_cast<size_t>(*it2);
      counts.pair[a * counts.n_classes + b] += 1;
      counts.pair[b * counts.n_classes + a] += 1;
    }
  }
}

double weight(const OccurrenceCounts& counts, size_t c1, size_t c2) {
  if (c1 >= counts.n_classes || c2 >= counts.n_classes) {
    throw IndexError("weight: class id out of range");
  }
  if (c1 == c2) return 0.0;
  uint64_t n1 = counts.single[c1];
  uint64_t n2 = counts.single[c2];
  if (n1 == 0 || n2 == 0) return 0.0;
  return static_cast<double>(counts.pair[c1 * counts.n_classes + c2]) /
         (static_cast<double>(n1) * static_cast<double>(n2));
}

RelationMatrix build_matrix(const OccurrenceCounts& counts) {
  if (counts.n_classes == 0) {
    throw ContractError("build_matrix: need at least one class");
  }
  RelationMatrix out;
  out.n = counts.n_classes;
  out.m.assign(out.n * out.n, 0.0);
  for (size_t i = 0; i < out.n; ++i) {
    for (size_t j = i + 1; j < out.n; ++j) {
      double w = weight(counts, i, j);
      out.m[i * out.n + j] = w;
      out.m[j * out.n + i] = w;
    }
  }
  return out;
}

template <typename T>
Tensor<T> encode_relations(const RelationMatrix& m, const Tensor<T>& w,
                           const Tensor<T>& b) {
  if (w.ndim() != 2 || w.shape()[0] != m.n * m.n) {
    throw DimensionError("encode_relations: projection shaped " +
                         shape_str(w.shape()) + " for a " +
                         std::to_string(m.n) + "x" + std::to_string(m.n) +
                         " matrix");
  }
  Tensor<T> flat = m.flatten<T>();
  return add(matmul(flat, w), b);
}

template Tensor<float> encode_relations(const RelationMatrix&,
                                        const Tensor<float>&,
                                        const Tensor<float>&);
template Tensor<double> encode_relations(const RelationMatrix&,
                                         const Tensor<double>&,
                                         const Tensor<double>&);

// --- snapshot file -----------------------------------------------------------

void save_counts(const std::string& path, const OccurrenceCounts& counts) {
  json pair_rows = json::array();
  for (size_t i = 0; i < counts.n_classes; ++i) {
    json row = json::array();
    for (size_t j = 0; j < counts.n_classes; ++j) {
      row.push_back(counts.pair[i * counts.n_classes + j]);
    }
    pair_rows.push_back(std::move(row));
  }
  json doc = {{"n_classes", counts.n_classes},
              {"frames_seen", counts.frames_seen},
              {"single", counts.single},
              {"pair", pair_rows},
              {"class_names", counts.class_names}};
  std::ofstream out(path);
  if (!out) throw ValidationError("save_counts: cannot write " + path);
  out << doc.dump(2) << "\n";
}

OccurrenceCounts load_counts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_counts: cannot read " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("load_counts: " + path + ": " + e.what());
  }
  try {
    size_t n = doc.at("n_classes").get<size_t>();
    std::vector<std::string> names;
    if (doc.contains("class_names")) {
      names = doc.at("class_names").get<std::vector<std::string>>();
    }
    OccurrenceCounts counts(n, std::move(names));
    counts.frames_seen = doc.at("frames_seen").get<uint64_t>();
    counts.single = doc.at("single").get<std::vector<uint64_t>>();
    if (counts.single.size() != n) {
      throw ValidationError("load_counts: single has " +
                            std::to_string(counts.single.size()) +
                            " entries, expected " + std::to_string(n));
    }
    const json& rows = doc.at("pair");
    if (rows.size() != n) {
      throw ValidationError("load_counts: pair has " +
                            std::to_string(rows.size()) + " rows, expected " +
                            std::to_string(n));
    }
    for (size_t i = 0; i < n; ++i) {
      const json& row = rows.at(i);
      if (row.size() != n) {
        throw ValidationError("load_counts: pair row " + std::to_string(i) +
                              " has " + std::to_string(row.size()) +
                              " entries");
      }
      for (size_t j = 0; j < n; ++j) {
        counts.pair[i * n + j] = row.at(j).get<uint64_t>();
      }
    }
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = i + 1; j < n; ++j) {
        if (counts.pair[i * n + j] != counts.pair[j * n + i]) {
          throw ValidationError(
              "load_counts: pair matrix is not symmetric at (" +
              std::to_string(i) + "," + std::to_string(j) + ")");
        }
      }
    }
    return counts;
  } catch (const json::exception& e) {
    throw ValidationError("load_counts: " + path + ": " + e.what());
  }
}

OccurrenceCounts counts_from_frames_file(const std::string& path,
                                         size_t n_classes,
                                         std::vector<std::string> names) {
  std::ifstream in(path);
  if (!in) throw ValidationError("frames: cannot read " + path);
  OccurrenceCounts counts(n_classes, std::move(names));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("frames: line " + std::to_string(line_no) + ": " +
                            e.what());
    }
    std::set<int> classes;
    try {
      for (const auto& v : doc.at("classes_present")) {
        classes.insert(v.get<int>());
      }
    } catch (const json::exception& e) {
      throw ValidationError("frames: line " + std::to_string(line_no) + ": " +
                            e.what());
    }
    try {
      observe_frame(counts, classes);
    } catch (const IndexError& e) {
      throw ValidationError("frames: line " + std::to_string(line_no) + ": " +
                            e.what());
    }
  }
  return counts;
}

}  // namespace vlmt::relgraph
