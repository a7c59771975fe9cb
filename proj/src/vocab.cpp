#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "audiodiff/model.hpp"

namespace audiodiff::model {

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  v.tokens = {"<pad>", "<bos>", "<eos>"};
  v.pad_id = 0;
  v.bos_id = 1;
  v.eos_id = 2;
  for (const auto& w : words) {
    bool dup = false;
    for (const auto& t : v.tokens) dup = dup || t == w;
    if (!dup) v.tokens.push_back(w);
  }
  if (v.size() > 128) throw std::invalid_argument("vocabulary exceeds 128 tokens");
  return v;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id out of range");
  return tokens[static_cast<size_t>(id)];
}

int Vocabulary::id_of(const std::string& word) const {
  for (int i = 0; i < size(); ++i)
    if (tokens[static_cast<size_t>(i)] == word) return i;
  throw std::invalid_argument("unknown word: " + word);
}

Caption tokenize(const std::string& text, const Vocabulary& vocab) {
  Caption c;
  c.push_back(vocab.bos_id);
  std::istringstream in(text);
  std::string w;
  while (in >> w) c.push_back(vocab.id_of(w));
  c.push_back(vocab.eos_id);
  return c;
}

std::string detokenize(const Caption& caption, const Vocabulary& vocab) {
  std::string out;
  for (int id : caption) {
    if (vocab.is_special(id)) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

}  // namespace audiodiff::model
