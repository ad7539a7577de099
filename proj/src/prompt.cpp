#include "actscan/prompt.hpp"

#include <sstream>

namespace actscan {

namespace {

std::vector<int> compute_nonstop_positions(const std::vector<int>& ids,
                                           const Vocabulary& vocab) {
  std::vector<int> positions;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (vocab.is_maskable(ids[i])) positions.push_back(static_cast<int>(i));
  }
  return positions;
}

}  // namespace

Prompt tokenize(const std::string& text, const Vocabulary& vocab) {
  Prompt p;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    int id = vocab.id_of(word);
    if (id < 0) throw UnknownTokenError("unknown token '" + word + "'");
    p.token_ids.push_back(id);
  }
  if (p.token_ids.empty()) throw EmptyPromptError("empty prompt");
  p.nonstop_positions = compute_nonstop_positions(p.token_ids, vocab);
  return p;
}

Prompt mask_token(const Prompt& c, int k, const Vocabulary& vocab) {
  if (k < 0 || k >= c.k_count()) {
    throw IndexOutOfRangeError("mask_token: index " + std::to_string(k) +
                               " out of range for K=" + std::to_string(c.k_count()));
  }
  return mask_position(c, c.nonstop_positions[k], vocab);
}

Prompt mask_position(const Prompt& c, int position, const Vocabulary& vocab) {
  if (position < 0 || position >= c.length()) {
    throw IndexOutOfRangeError("mask_position: position out of range");
  }
  Prompt out = c;
  out.token_ids[position] = vocab.pad_id;
  out.nonstop_positions = compute_nonstop_positions(out.token_ids, vocab);
  return out;
}

std::string prompt_text(const Prompt& p, const Vocabulary& vocab) {
  std::string text;
  for (size_t i = 0; i < p.token_ids.size(); ++i) {
    if (i > 0) text += ' ';
    text += vocab.tokens[p.token_ids[i]];
  }
  return text;
}

}  // namespace actscan
