#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "actscan/common.hpp"

namespace actscan {

// Closed toy vocabulary. Immutable after construction and safe to share.
struct Vocabulary {
  std::vector<std::string> tokens;
  int pad_id = -1;
  std::unordered_set<int> stopword_ids;

  // token string -> index; rebuilt by finalize().
  std::unordered_map<std::string, int> index;

  void finalize();
  void validate() const;

  int id_of(const std::string& token) const;  // -1 when absent
  bool is_stopword(int id) const { return stopword_ids.count(id) > 0; }
  bool is_maskable(int id) const { return id != pad_id && !is_stopword(id); }
  int size() const { return static_cast<int>(tokens.size()); }
};

// The shipped vocabulary: ~40 English function words as stopwords plus a
// closed set of content words and a couple of rare marker tokens.
Vocabulary builtin_vocabulary();

// Line-oriented file format: one token per line, "*" prefix flags a stopword,
// "!" prefix flags the pad token.
Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

}  // namespace actscan
