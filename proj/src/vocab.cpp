#include "actscan/vocab.hpp"

#include <fstream>

namespace actscan {

void Vocabulary::finalize() {
  index.clear();
  for (size_t i = 0; i < tokens.size(); ++i) {
    index[tokens[i]] = static_cast<int>(i);
  }
  validate();
}

void Vocabulary::validate() const {
  if (tokens.empty()) throw Error("vocabulary: empty");
  if (pad_id < 0 || pad_id >= size()) {
    throw Error("vocabulary: pad_id out of range");
  }
  if (stopword_ids.count(pad_id) > 0) {
    throw Error("vocabulary: pad token must not be a stopword");
  }
  for (int id : stopword_ids) {
    if (id < 0 || id >= size()) throw Error("vocabulary: stopword id out of range");
  }
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens) {
    if (t.empty()) throw Error("vocabulary: empty token string");
    if (!seen.insert(t).second) throw Error("vocabulary: duplicate token '" + t + "'");
  }
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? -1 : it->second;
}

Vocabulary builtin_vocabulary() {
  static const char* kStopwords[] = {
      "a",    "an",   "the",  "of",   "in",   "on",    "at",    "by",
      "for",  "with", "to",   "from", "is",   "are",   "was",   "were",
      "be",   "been", "this", "that", "these", "those", "and",  "or",
      "but",  "not",  "it",   "its",  "as",   "if",    "then",  "than",
      "so",   "too",  "very", "there", "here", "just",  "under", "over",
      "near",
  };
  static const char* kContent[] = {
      // nouns
      "cat", "dog", "car", "boat", "house", "tree", "bird", "moon", "river",
      "mountain", "robot", "garden", "painting", "city", "child", "flower",
      "horse", "book", "bridge", "castle", "lantern", "island",
      // adjectives
      "red", "blue", "green", "golden", "small", "big", "old", "young",
      "shiny", "fluffy", "bright", "dark", "quiet", "happy", "tiny", "wooden",
      // verbs
      "runs", "sits", "jumps", "sleeps", "flies", "swims", "sings", "floats",
      "glows", "waits", "drifts", "wanders",
      // rare marker tokens, usable as toy triggers
      "sks", "blix",
  };

  Vocabulary v;
  v.tokens.emplace_back("<pad>");
  v.pad_id = 0;
  for (const char* w : kStopwords) {
    v.stopword_ids.insert(static_cast<int>(v.tokens.size()));
    v.tokens.emplace_back(w);
  }
  for (const char* w : kContent) {
    v.tokens.emplace_back(w);
  }
  v.finalize();
  return v;
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '!') {
      v.pad_id = static_cast<int>(v.tokens.size());
      v.tokens.push_back(line.substr(1));
    } else if (line[0] == '*') {
      v.stopword_ids.insert(static_cast<int>(v.tokens.size()));
      v.tokens.push_back(line.substr(1));
    } else {
      v.tokens.push_back(line);
    }
  }
  v.finalize();
  return v;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary file: " + path);
  for (int i = 0; i < vocab.size(); ++i) {
    if (i == vocab.pad_id) {
      out << '!';
    } else if (vocab.is_stopword(i)) {
      out << '*';
    }
    out << vocab.tokens[i] << '\n';
  }
}

}  // namespace actscan
