#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace stigma::featurize {

inline constexpr const char* kEmbtabMagic = "EMBTAB";
inline constexpr const char* kEmbtabVersion = "v1";

struct EmbeddingTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<float>> vectors;

  // Throws FormatError naming the first offending id.
  void validate() const;
  // Throws ArgumentError when the id is absent.
  const std::vector<float>& at(const std::string& id) const;
  bool contains(const std::string& id) const { return vectors.contains(id); }
};

/// Reads either format. EMBTAB v1: a header line `EMBTAB v1 <dim> <count>`
/// followed by `<id>\t<base64 of dim float32 LE values>` records. JSONL:
/// one `{"id": ..., "v": [...]}` object per line. Wrong dimension,
/// non-finite values, duplicate ids and bad record counts are FormatErrors
/// that name the id.
EmbeddingTable read_embeddings(std::istream& in);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// Writes EMBTAB v1, records in id order.
void write_embeddings(std::ostream& out, const EmbeddingTable& table);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
void write_embeddings_jsonl(std::ostream& out, const EmbeddingTable& table);

}  // namespace stigma::featurize
