#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ddsc/distribution.hpp"
#include "ddsc/error.hpp"
#include "ddsc/random.hpp"

namespace ddsc {

namespace fs = std::filesystem;

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out.flush()) throw Error(Errc::io_error, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io_error, "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// JSON Lines distribution sets
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const DiscreteDistribution& d) {
  nlohmann::json rec;
  rec["id"] = d.id;
  rec["label"] = d.label ? nlohmann::json(*d.label) : nlohmann::json(nullptr);
  rec["weights"] = std::vector<double>(d.weights.data(), d.weights.data() + d.weights.size());
  auto support = nlohmann::json::array();
  for (Eigen::Index r = 0; r < d.support.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < d.support.cols(); ++c) row.push_back(d.support(r, c));
    support.push_back(std::move(row));
  }
  rec["support"] = std::move(support);
  return rec;
}

/// One record per line. Doubles are printed in shortest round-trip form.
inline std::string to_jsonl(const DistributionSet& set) {
  std::string out;
  for (const auto& d : set.distributions) {
    out += to_json(d).dump();
    out += '\n';
  }
  return out;
}

inline void save_jsonl(const DistributionSet& set, const fs::path& path) { write_file_atomic(path, to_jsonl(set)); }

namespace detail {

inline DiscreteDistribution parse_record(const nlohmann::json& rec, std::size_t line) {
  const std::string where = "line " + std::to_string(line);
  if (!rec.is_object()) throw Error(Errc::schema_error, where + ": record is not an object");
  auto need = [&](const char* field) -> const nlohmann::json& {
    if (!rec.contains(field)) throw Error(Errc::schema_error, where + ": missing field '" + field + "'");
    return rec.at(field);
  };
  DiscreteDistribution d;
  const auto& id = need("id");
  if (!id.is_string()) throw Error(Errc::schema_error, where + ": field 'id' must be a string");
  d.id = id.get<std::string>();
  if (rec.contains("label") && !rec.at("label").is_null()) {
    if (!rec.at("label").is_number_integer()) throw Error(Errc::schema_error, where + ": field 'label' must be an integer or null");
    d.label = rec.at("label").get<int>();
  }
  const auto& weights = need("weights");
  if (!weights.is_array()) throw Error(Errc::schema_error, where + ": field 'weights' must be an array");
  d.weights.resize(static_cast<Eigen::Index>(weights.size()));
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].is_number()) throw Error(Errc::schema_error, where + ": field 'weights' has a non-numeric entry");
    d.weights[static_cast<Eigen::Index>(k)] = weights[k].get<double>();
  }
  const auto& support = need("support");
  if (!support.is_array()) throw Error(Errc::schema_error, where + ": field 'support' must be an array of arrays");
  const std::size_t dim = support.empty() ? 0 : (support[0].is_array() ? support[0].size() : 0);
  d.support.resize(static_cast<Eigen::Index>(support.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < support.size(); ++r) {
    const auto& row = support[r];
    if (!row.is_array()) throw Error(Errc::schema_error, where + ": field 'support' must be an array of arrays");
    if (row.size() != dim) throw Error(Errc::dimension_mismatch, where + ": support rows have differing lengths");
    for (std::size_t c = 0; c < dim; ++c) {
      if (!row[c].is_number()) throw Error(Errc::schema_error, where + ": field 'support' has a non-numeric entry");
      d.support(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
    }
  }
  return d;
}

}  // namespace detail

/// Parses a JSONL set. Each record is validated; all records must share d.
/// Does not require N >= 2 (callers that cluster validate the whole set).
inline DistributionSet parse_jsonl(std::istream& in) {
  DistributionSet set;
  std::string text;
  std::size_t line = 0;
  std::unordered_set<std::string> ids;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::parse_error, "line " + std::to_string(line) + ": " + e.what());
    }
    auto d = detail::parse_record(rec, line);
    if (!set.distributions.empty() && d.dim() != set.dim())
      throw Error(Errc::dimension_mismatch, "line " + std::to_string(line) + ": d=" + std::to_string(d.dim()) + ", expected " +
                                                std::to_string(set.dim()));
    validate(d);
    if (!ids.insert(d.id).second) throw Error(Errc::duplicate_id, "line " + std::to_string(line) + ": id '" + d.id + "' repeated");
    set.distributions.push_back(std::move(d));
  }
  return set;
}

inline DistributionSet load_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  return parse_jsonl(in);
}

// ---------------------------------------------------------------------------
// IDX (MNIST layout) images -> pixel histograms
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& name) {
  if (bytes.size() < offset + 4) throw Error(Errc::truncated_file, name + ": header ends at byte " + std::to_string(bytes.size()));
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v = (v << 8) | static_cast<unsigned char>(bytes[offset + k]);
  return v;
}

}  // namespace detail

struct IdxImages {
  std::uint32_t count = 0, rows = 0, cols = 0;
  std::string pixels;  // count * rows * cols bytes, row-major per image
};

inline IdxImages parse_idx_images(const std::string& bytes, const std::string& name = "images") {
  const auto magic = detail::read_be32(bytes, 0, name);
  if (magic != 0x00000803u) throw Error(Errc::bad_magic, name + ": magic " + std::to_string(magic) + ", expected 0x00000803");
  IdxImages img;
  img.count = detail::read_be32(bytes, 4, name);
  img.rows = detail::read_be32(bytes, 8, name);
  img.cols = detail::read_be32(bytes, 12, name);
  const std::uint64_t need = std::uint64_t{img.count} * img.rows * img.cols;
  if (bytes.size() - 16 < need)
    throw Error(Errc::truncated_file, name + ": " + std::to_string(bytes.size() - 16) + " pixel bytes, expected " + std::to_string(need));
  img.pixels = bytes.substr(16, need);
  return img;
}

inline std::vector<int> parse_idx_labels(const std::string& bytes, const std::string& name = "labels") {
  const auto magic = detail::read_be32(bytes, 0, name);
  if (magic != 0x00000801u) throw Error(Errc::bad_magic, name + ": magic " + std::to_string(magic) + ", expected 0x00000801");
  const auto count = detail::read_be32(bytes, 4, name);
  if (bytes.size() - 8 < count)
    throw Error(Errc::truncated_file, name + ": " + std::to_string(bytes.size() - 8) + " label bytes, expected " + std::to_string(count));
  std::vector<int> labels(count);
  for (std::uint32_t i = 0; i < count; ++i) labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

/// Normalised intensity histogram over lit pixels at (row/H, col/W).
inline DiscreteDistribution image_to_distribution(const IdxImages& img, std::size_t index) {
  const std::size_t area = std::size_t{img.rows} * img.cols;
  const auto* px = reinterpret_cast<const unsigned char*>(img.pixels.data()) + index * area;
  std::vector<std::size_t> lit;
  double total = 0.0;
  for (std::size_t p = 0; p < area; ++p)
    if (px[p] > 0) {
      lit.push_back(p);
      total += px[p];
    }
  if (lit.empty()) throw Error(Errc::empty_support, "image " + std::to_string(index) + " has no lit pixels");
  DiscreteDistribution d;
  d.id = "img_" + std::to_string(index);
  d.support.resize(static_cast<Eigen::Index>(lit.size()), 2);
  d.weights.resize(static_cast<Eigen::Index>(lit.size()));
  for (std::size_t k = 0; k < lit.size(); ++k) {
    const auto e = static_cast<Eigen::Index>(k);
    d.support(e, 0) = static_cast<double>(lit[k] / img.cols) / img.rows;
    d.support(e, 1) = static_cast<double>(lit[k] % img.cols) / img.cols;
    d.weights[e] = px[lit[k]] / total;
  }
  return d;
}

/// Samples `per_class` images per label value (seeded, without replacement).
/// Output is grouped by ascending label, indices ascending within a label.
inline DistributionSet load_idx_images(const fs::path& images_path, const fs::path& labels_path, std::size_t per_class,
                                       std::uint64_t seed) {
  const IdxImages img = parse_idx_images(read_file(images_path), images_path.string());
  const std::vector<int> labels = parse_idx_labels(read_file(labels_path), labels_path.string());
  if (labels.size() != img.count)
    throw Error(Errc::label_count_mismatch, std::to_string(img.count) + " images but " + std::to_string(labels.size()) + " labels");

  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);

  DistributionSet set;
  for (auto& [label, members] : by_label) {
    if (members.size() < per_class)
      throw Error(Errc::too_few_samples, "label " + std::to_string(label) + " has " + std::to_string(members.size()) +
                                             " images, " + std::to_string(per_class) + " requested");
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(label));
    auto pick = sample_without_replacement(members.size(), per_class, rng);
    std::sort(pick.begin(), pick.end());
    for (auto p : pick) {
      auto d = image_to_distribution(img, members[p]);
      d.label = label;
      set.distributions.push_back(std::move(d));
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Labels CSV (header `id,label`)
// ---------------------------------------------------------------------------

inline std::string labels_csv(const std::vector<std::string>& ids, const std::vector<int>& labels) {
  if (ids.size() != labels.size()) throw Error(Errc::length_mismatch, "ids and labels differ in length");
  std::string out = "id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out += ids[i] + "," + std::to_string(labels[i]) + "\n";
  return out;
}

inline std::vector<std::pair<std::string, int>> parse_labels_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<std::string, int>> out;
  if (!std::getline(in, line) || line.rfind("id,label", 0) != 0) throw Error(Errc::parse_error, "labels CSV: missing 'id,label' header");
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw Error(Errc::parse_error, "labels CSV line " + std::to_string(n) + ": no comma");
    try {
      out.emplace_back(line.substr(0, comma), std::stoi(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw Error(Errc::parse_error, "labels CSV line " + std::to_string(n) + ": bad label");
    }
  }
  return out;
}

}  // namespace ddsc
