#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casft/cascade.hpp"
#include "casft/common.hpp"
#include "casft/graphwave.hpp"

namespace casft {

namespace detail {

inline void require_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  if (b != 1) throw CasftError("embedding cache requires a little-endian host");
}

}  // namespace detail

/// Matrix file layout: one JSON header line {"rows":R,"cols":C,"users":[...]}
/// terminated by '\n', followed by R*C little-endian 64-bit floats, row-major.
inline void write_embedding_file(const std::string& path, const NodeEmbeddings& e) {
  detail::require_little_endian();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CasftError("cannot write " + path);
  nlohmann::json header = {{"rows", e.vectors.rows()}, {"cols", e.vectors.cols()}, {"users", e.users}};
  f << header.dump() << "\n";
  for (Eigen::Index i = 0; i < e.vectors.rows(); ++i)
    for (Eigen::Index j = 0; j < e.vectors.cols(); ++j) {
      const double v = e.vectors(i, j);
      f.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

inline NodeEmbeddings read_embedding_file(const std::string& path) {
  detail::require_little_endian();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CasftError("cannot read " + path);
  std::string header_line;
  if (!std::getline(f, header_line)) throw CasftError("truncated embedding file " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw CasftError("bad embedding header in " + path + ": " + e.what());
  }
  NodeEmbeddings emb;
  emb.users = header.at("users").get<std::vector<std::string>>();
  const auto rows = header.at("rows").get<Eigen::Index>();
  const auto cols = header.at("cols").get<Eigen::Index>();
  emb.vectors.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      double v;
      f.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!f) throw CasftError("truncated embedding payload in " + path);
      emb.vectors(i, j) = v;
    }
  return emb;
}

/// Content hash of a graph: node list plus ordered edge list.
inline std::string graph_content_hash(const CascadeGraph& g) {
  std::string acc;
  for (const auto& n : g.nodes) acc += n + "\x01";
  acc += "\x02";
  for (const auto& [s, t] : g.edges) acc += s + "\x03" + t + "\x01";
  return fnv1a_hex(acc);
}

/// Disk cache keyed by (graph content hash, hyperparameter string). An
/// index.json maps keys to matrix files living next to it.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    const auto idx = dir_ + "/index.json";
    if (std::filesystem::exists(idx)) {
      std::ifstream f(idx);
      try {
        f >> index_;
      } catch (const nlohmann::json::exception&) {
        index_ = nlohmann::json::object();  // stale index: start over
      }
    } else {
      index_ = nlohmann::json::object();
    }
  }

  static std::string key(const std::string& graph_hash, const std::string& params) {
    return fnv1a_hex(graph_hash + "|" + params);
  }

  bool contains(const std::string& k) const { return index_.contains(k); }

  NodeEmbeddings load(const std::string& k) const {
    if (!contains(k)) throw CasftError("cache miss for key " + k);
    return read_embedding_file(dir_ + "/" + index_.at(k).at("file").get<std::string>());
  }

  void store(const std::string& k, const NodeEmbeddings& e) {
    const std::string file = k + ".mat";
    write_embedding_file(dir_ + "/" + file, e);
    index_[k] = {{"file", file}, {"rows", e.vectors.rows()}, {"cols", e.vectors.cols()}};
    std::ofstream f(dir_ + "/index.json");
    f << index_.dump(2) << "\n";
  }

 private:
  std::string dir_;
  nlohmann::json index_;
};

}  // namespace casft
