#include "stigma/featurize/embeddings.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "stigma/common/encoding.hpp"
#include "stigma/common/error.hpp"

namespace stigma::featurize {

namespace {

void check_vector(const std::string& id, const std::vector<float>& v, std::size_t dim) {
  if (v.size() != dim) {
    throw FormatError("embedding '" + id + "': dimension " + std::to_string(v.size()) +
                      " does not match table dimension " + std::to_string(dim));
  }
  for (float x : v) {
    if (!std::isfinite(x)) throw FormatError("embedding '" + id + "': non-finite value");
  }
}

void insert(EmbeddingTable& table, std::string id, std::vector<float> v) {
  check_vector(id, v, table.dim);
  if (table.vectors.contains(id)) throw FormatError("embedding '" + id + "': duplicate id");
  table.vectors.emplace(std::move(id), std::move(v));
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

EmbeddingTable read_embtab(std::istream& in, const std::string& header) {
  std::istringstream hs(header);
  std::string magic, version;
  long long dim = 0, count = -1;
  if (!(hs >> magic >> version >> dim >> count) || magic != kEmbtabMagic) {
    throw FormatError("embedding table: malformed header '" + header + "'");
  }
  if (version != kEmbtabVersion) {
    throw FormatError("embedding table: unsupported version '" + version + "'");
  }
  if (dim <= 0 || count < 0) throw FormatError("embedding table: bad dim or count in header");
  EmbeddingTable table;
  table.dim = static_cast<std::size_t>(dim);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw FormatError("embedding table line " + std::to_string(line_no) +
                        ": expected <id>\\t<base64>");
    }
    std::string id = line.substr(0, tab);
    std::vector<std::uint8_t> bytes;
    try {
      bytes = base64_decode(std::string_view(line).substr(tab + 1));
    } catch (const FormatError&) {
      throw FormatError("embedding '" + id + "': malformed base64 payload");
    }
    if (bytes.size() % 4 != 0) {
      throw FormatError("embedding '" + id + "': payload is not a whole number of float32 values");
    }
    insert(table, std::move(id), unpack_f32le(bytes));
  }
  if (table.vectors.size() != static_cast<std::size_t>(count)) {
    throw FormatError("embedding table: header declares " + std::to_string(count) +
                      " records, found " + std::to_string(table.vectors.size()));
  }
  return table;
}

EmbeddingTable read_jsonl(std::istream& in, std::string first) {
  EmbeddingTable table;
  std::string line = std::move(first);
  std::size_t line_no = 0;
  bool have = true;
  while (have) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (!line.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw FormatError("embedding JSONL line " + std::to_string(line_no) + ": invalid JSON");
      }
      if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("v") ||
          !j["v"].is_array()) {
        throw FormatError("embedding JSONL line " + std::to_string(line_no) +
                          ": expected {\"id\": string, \"v\": [numbers]}");
      }
      std::string id = j["id"].get<std::string>();
      std::vector<float> v;
      v.reserve(j["v"].size());
      for (const auto& x : j["v"]) {
        if (!x.is_number()) throw FormatError("embedding '" + id + "': non-numeric value");
        v.push_back(static_cast<float>(x.get<double>()));
      }
      if (table.dim == 0) {
        if (v.empty()) throw FormatError("embedding '" + id + "': empty vector");
        table.dim = v.size();
      }
      insert(table, std::move(id), std::move(v));
    }
    have = static_cast<bool>(std::getline(in, line));
  }
  return table;
}

}  // namespace

void EmbeddingTable::validate() const {
  if (dim == 0) throw FormatError("embedding table: dimension must be positive");
  for (const auto& [id, v] : vectors) check_vector(id, v, dim);
}

const std::vector<float>& EmbeddingTable::at(const std::string& id) const {
  auto it = vectors.find(id);
  if (it == vectors.end()) throw ArgumentError("no embedding for id '" + id + "'");
  return it->second;
}

EmbeddingTable read_embeddings(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(std::move(line));
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.starts_with(kEmbtabMagic)) return read_embtab(in, line);
    if (line[line.find_first_not_of(" \t")] == '{') return read_jsonl(in, line);
    throw FormatError("embedding file is neither EMBTAB nor JSONL");
  }
  throw FormatError("embedding file is empty");
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file '" + path.string() + "'");
  return read_embeddings(in);
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  table.validate();
  out << kEmbtabMagic << ' ' << kEmbtabVersion << ' ' << table.dim << ' ' << table.vectors.size()
      << '\n';
  for (const auto& [id, v] : table.vectors) {
    if (id.find_first_of("\t\n") != std::string::npos) {
      throw FormatError("embedding id '" + id + "' contains a tab or newline");
    }
    out << id << '\t' << base64_encode(pack_f32le(v)) << '\n';
  }
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ostringstream out;
  write_embeddings(out, table);
  write_text_file(path, out.str());
}

void write_embeddings_jsonl(std::ostream& out, const EmbeddingTable& table) {
  table.validate();
  for (const auto& [id, v] : table.vectors) {
    nlohmann::json j;
    j["id"] = id;
    j["v"] = v;
    out << j.dump() << '\n';
  }
}

}  // namespace stigma::featurize
