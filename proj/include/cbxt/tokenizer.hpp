#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cbxt/error.hpp"

namespace cbxt {

enum class TokenLevel { character, subword };

struct TokenSequence {
  std::vector<int> ids;
  TokenLevel level = TokenLevel::subword;

  size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

// Lowercase, collapse whitespace runs, trim ends.
std::string normalize_text(const std::string& text);
std::vector<std::string> split_words(const std::string& text);

// Character inventory: one id per symbol plus `<unk>`.
class CharVocab {
 public:
  CharVocab() = default;
  // alphabet: characters to cover in addition to space. `<unk>` is id 0.
  static CharVocab build(const std::string& alphabet);

  int size() const { return static_cast<int>(symbols_.size()); }
  int unk_id() const { return 0; }
  int id_of(char c) const;
  const std::string& symbol(int id) const;

  TokenSequence encode(const std::string& text) const;
  std::string decode(const TokenSequence& seq) const;

  void save(std::ostream& os) const;
  static CharVocab load(std::istream& is);

 private:
  std::vector<std::string> symbols_;  // index = id; "<unk>" at 0
  std::map<char, int> id_of_;
};

// Byte-pair-encoded subword inventory with a word-initial marker piece.
// Specials: `<blank>` = 0, then `<bos>`, `<unk>`, `<no-bias>`.
class SubwordVocab {
 public:
  static constexpr const char* kBlank = "<blank>";
  static constexpr const char* kBos = "<bos>";
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kNoBias = "<no-bias>";
  static constexpr char kWordMarker = '_';

  SubwordVocab() = default;

  int size() const { return static_cast<int>(pieces_.size()); }
  int blank_id() const { return 0; }
  int bos_id() const { return 1; }
  int unk_id() const { return 2; }
  int no_bias_id() const { return 3; }
  const std::string& piece(int id) const;
  int piece_id(const std::string& piece) const;  // -1 when absent
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  TokenSequence encode(const std::string& text) const;
  std::string decode(const TokenSequence& seq) const;

  void save(std::ostream& os) const;
  static SubwordVocab load(std::istream& is);

  // Greedy highest-pair-frequency merges over the corpus until the piece
  // inventory reaches target_size; frequency ties break toward the
  // lexicographically smaller merged string.
  static SubwordVocab train(std::span<const std::string> corpus, int target_size);

 private:
  std::vector<std::string> pieces_;
  std::map<std::string, int> piece_ids_;
  std::vector<std::pair<std::string, std::string>> merges_;

  void index_pieces();
  std::vector<std::string> word_to_pieces(const std::string& word) const;
};

std::string decode(const TokenSequence& seq, const CharVocab& vocab);
std::string decode(const TokenSequence& seq, const SubwordVocab& vocab);

}  // namespace cbxt
