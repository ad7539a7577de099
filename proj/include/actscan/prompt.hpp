#pragma once

#include <string>
#include <vector>

#include "actscan/vocab.hpp"

namespace actscan {

// A tokenized prompt. nonstop_positions lists, in order, the indices of the
// maskable tokens (neither stopword nor pad).
struct Prompt {
  std::vector<int> token_ids;
  std::vector<int> nonstop_positions;

  int length() const { return static_cast<int>(token_ids.size()); }
  int k_count() const { return static_cast<int>(nonstop_positions.size()); }
};

// Whitespace tokenization against a closed vocabulary. Unknown words are a
// hard error; an empty prompt is a hard error.
Prompt tokenize(const std::string& text, const Vocabulary& vocab);

// Returns a copy of c with the k-th maskable token (0-based index into
// nonstop_positions) replaced by the pad token. Length is preserved; the
// result has one fewer maskable token.
Prompt mask_token(const Prompt& c, int k, const Vocabulary& vocab);

// Replaces the token at an absolute position with pad. No-op when the
// position already holds pad.
Prompt mask_position(const Prompt& c, int position, const Vocabulary& vocab);

std::string prompt_text(const Prompt& p, const Vocabulary& vocab);

}  // namespace actscan
