#include "cbxt/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace cbxt {

std::string normalize_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = true;  // trims leading whitespace
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(normalize_text(text));
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

// --- CharVocab ---------------------------------------------------------------

CharVocab CharVocab::build(const std::string& alphabet) {
  CharVocab v;
  v.symbols_.push_back("<unk>");
  auto add = [&v](char c) {
    if (v.id_of_.count(c)) return;
    v.id_of_[c] = static_cast<int>(v.symbols_.size());
    v.symbols_.push_back(std::string(1, c));
  };
  add(' ');
  for (char c : alphabet) add(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return v;
}

int CharVocab::id_of(char c) const {
  auto it = id_of_.find(c);
  return it == id_of_.end() ? unk_id() : it->second;
}

const std::string& CharVocab::symbol(int id) const {
  if (id < 0 || id >= size()) throw ContractError("char id " + std::to_string(id) + " out of range");
  return symbols_[static_cast<size_t>(id)];
}

TokenSequence CharVocab::encode(const std::string& text) const {
  TokenSequence seq;
  seq.level = TokenLevel::character;
  std::string norm = normalize_text(text);
  seq.ids.reserve(norm.size());
  for (char c : norm) seq.ids.push_back(id_of(c));
  return seq;
}

std::string CharVocab::decode(const TokenSequence& seq) const {
  std::string out;
  for (int id : seq.ids) {
    const std::string& s = symbol(id);
    if (s.size() == 1) out += s;  // specials dropped
  }
  return out;
}

void CharVocab::save(std::ostream& os) const {
  for (const auto& s : symbols_) os << (s == " " ? "<space>" : s) << '\n';
}

CharVocab CharVocab::load(std::istream& is) {
  CharVocab v;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::string sym = line == "<space>" ? " " : line;
    if (sym.size() == 1) v.id_of_[sym[0]] = static_cast<int>(v.symbols_.size());
    v.symbols_.push_back(sym);
  }
  if (v.symbols_.empty() || v.symbols_[0] != "<unk>")
    throw LoadError("char vocabulary file missing <unk> at id 0");
  return v;
}

// --- SubwordVocab ---------------------------------------------------------------

namespace {

std::vector<std::string> chars_of(const std::string& word) {
  std::vector<std::string> out;
  out.reserve(word.size());
  for (char c : word) out.emplace_back(1, c);
  return out;
}

// Replace adjacent (left, right) by their concatenation, scanning left to right.
void apply_merge(std::vector<std::string>& symbols, const std::string& left,
                 const std::string& right) {
  size_t w = 0;
  for (size_t r = 0; r < symbols.size();) {
    if (r + 1 < symbols.size() && symbols[r] == left && symbols[r + 1] == right) {
      symbols[w++] = left + right;
      r += 2;
    } else {
      if (w != r) symbols[w] = std::move(symbols[r]);
      ++w;
      ++r;
    }
  }
  symbols.resize(w);
}

}  // namespace

void SubwordVocab::index_pieces() {
  piece_ids_.clear();
  for (size_t i = 0; i < pieces_.size(); ++i) piece_ids_[pieces_[i]] = static_cast<int>(i);
}

SubwordVocab SubwordVocab::train(std::span<const std::string> corpus, int target_size) {
  // Word multiset; ordering of the corpus must not matter.
  std::map<std::string, long> word_count;
  for (const auto& line : corpus) {
    for (const auto& w : split_words(line)) ++word_count[w];
  }
  if (word_count.empty()) throw DomainError("subword training corpus is empty");

  std::set<std::string> base;
  base.insert(std::string(1, kWordMarker));
  for (const auto& [w, c] : word_count) {
    for (char ch : w) base.insert(std::string(1, ch));
  }

  SubwordVocab v;
  v.pieces_ = {kBlank, kBos, kUnk, kNoBias};
  v.pieces_.push_back(std::string(1, kWordMarker));
  for (const auto& b : base) {
    if (b != std::string(1, kWordMarker)) v.pieces_.push_back(b);
  }
  int base_total = static_cast<int>(v.pieces_.size());
  if (target_size < base_total) {
    throw ContractError("subword target size " + std::to_string(target_size) +
                        " below base inventory " + std::to_string(base_total));
  }

  std::vector<std::pair<std::vector<std::string>, long>> words;
  words.reserve(word_count.size());
  for (const auto& [w, c] : word_count) words.emplace_back(chars_of(w), c);

  while (static_cast<int>(v.pieces_.size()) < target_size) {
    std::map<std::pair<std::string, std::string>, long> pair_count;
    for (const auto& [syms, c] : words) {
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        pair_count[{syms[i], syms[i + 1]}] += c;
      }
    }
    if (pair_count.empty()) break;
    long best_count = 0;
    std::pair<std::string, std::string> best;
    std::string best_merged;
    for (const auto& [pr, c] : pair_count) {
      std::string merged = pr.first + pr.second;
      if (c > best_count || (c == best_count && merged < best_merged)) {
        best_count = c;
        best = pr;
        best_merged = merged;
      }
    }
    for (auto& [syms, c] : words) apply_merge(syms, best.first, best.second);
    v.merges_.push_back(best);
    v.pieces_.push_back(best_merged);
  }
  v.index_pieces();
  return v;
}

const std::string& SubwordVocab::piece(int id) const {
  if (id < 0 || id >= size())
    throw ContractError("subword id " + std::to_string(id) + " out of range");
  return pieces_[static_cast<size_t>(id)];
}

int SubwordVocab::piece_id(const std::string& piece) const {
  auto it = piece_ids_.find(piece);
  return it == piece_ids_.end() ? -1 : it->second;
}

std::vector<std::string> SubwordVocab::word_to_pieces(const std::string& word) const {
  std::vector<std::string> syms = chars_of(word);
  for (const auto& [l, r] : merges_) apply_merge(syms, l, r);
  return syms;
}

TokenSequence SubwordVocab::encode(const std::string& text) const {
  TokenSequence seq;
  seq.level = TokenLevel::subword;
  std::vector<std::string> words = split_words(text);
  int marker = piece_id(std::string(1, kWordMarker));
  for (size_t wi = 0; wi < words.size(); ++wi) {
    if (wi > 0) seq.ids.push_back(marker);
    for (const auto& p : word_to_pieces(words[wi])) {
      int id = piece_id(p);
      seq.ids.push_back(id < 0 ? unk_id() : id);
    }
  }
  return seq;
}

std::string SubwordVocab::decode(const TokenSequence& seq) const {
  std::string out;
  for (int id : seq.ids) {
    const std::string& p = piece(id);
    if (p.size() > 1 && p[0] == '<') continue;  // specials dropped
    if (p == std::string(1, kWordMarker)) {
      out += ' ';
    } else {
      out += p;
    }
  }
  return out;
}

void SubwordVocab::save(std::ostream& os) const {
  for (const auto& p : pieces_) os << p << '\n';
  os << "#MERGES\n";
  for (const auto& [l, r] : merges_) os << l << ' ' << r << '\n';
}

SubwordVocab SubwordVocab::load(std::istream& is) {
  SubwordVocab v;
  std::string line;
  bool in_merges = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line == "#MERGES") {
      in_merges = true;
      continue;
    }
    if (!in_merges) {
      v.pieces_.push_back(line);
    } else {
      auto sp = line.find(' ');
      if (sp == std::string::npos) throw LoadError("malformed merge line: " + line);
      v.merges_.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
  }
  if (v.pieces_.size() < 4 || v.pieces_[0] != kBlank) {
    throw LoadError("subword vocabulary file missing <blank> at id 0");
  }
  v.index_pieces();
  return v;
}

std::string decode(const TokenSequence& seq, const CharVocab& vocab) { return vocab.decode(seq); }
std::string decode(const TokenSequence& seq, const SubwordVocab& vocab) { return vocab.decode(seq); }

}  // namespace cbxt
