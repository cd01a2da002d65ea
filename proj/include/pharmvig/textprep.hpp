#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pharmvig::textprep {

enum class BioTag : int8_t { B = 0, I = 1, O = 2 };
constexpr int kNumBioTags = 3;
constexpr int kIgnoreTag = -1;

char to_char(BioTag tag);
BioTag bio_tag_from_char(char c);

struct WordSpan {
  std::string token;
  size_t begin = 0;  // character offsets into the source text
  size_t end = 0;
};

// Whitespace split, then leading/trailing punctuation peeled into their own
// tokens. Interior punctuation ("it's", "drug-induced") stays attached.
std::vector<std::string> word_tokenize(std::string_view text);
std::vector<WordSpan> word_tokenize_with_offsets(std::string_view text);

// WordPiece vocabulary: one subtoken per line, line number = id. Requires the
// special tokens [PAD], [UNK], [CLS], [SEP].
class SubwordVocab {
 public:
  static SubwordVocab load(const std::filesystem::path& path);
  static SubwordVocab from_tokens(std::vector<std::string> tokens);

  int id_of(std::string_view token) const;  // -1 when absent
  const std::string& token(int id) const;
  size_t size() const { return tokens_.size(); }

  int pad_id() const { return pad_id_; }
  int unk_id() const { return unk_id_; }
  int cls_id() const { return cls_id_; }
  int sep_id() const { return sep_id_; }

  void save(const std::filesystem::path& path) const;

 private:
  SubwordVocab() = default;
  void build_index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1;
};

struct TokenizedText {
  std::vector<std::string> words;
  std::vector<int> subtokens;  // [CLS] ... [SEP], length <= max_seq_len
  // (first subtoken index, subtoken count) per word; count 0 means the word
  // was lost to truncation.
  std::vector<std::pair<int, int>> word_to_subtoken;
  std::vector<uint8_t> attention_mask;  // same length as subtokens
  bool truncated = false;
};

TokenizedText subword_tokenize(std::string_view text, const SubwordVocab& vocab, bool cased,
                               int max_seq_len = 128);

// Each word's first subtoken carries the word tag; everything else (specials,
// continuations) is kIgnoreTag. Result length == subtokens length.
std::vector<int> align_bio_to_subtokens(const TokenizedText& t, const std::vector<BioTag>& tags);

// Word tag = tag at its first subtoken; words lost to truncation get O.
std::vector<BioTag> project_subtoken_predictions_to_words(const TokenizedText& t,
                                                          const std::vector<BioTag>& subtoken_tags);

struct NgramVector {
  std::map<std::string, int> counts;
  int lo = 1;
  int hi = 2;
  long total() const;
};

NgramVector ngram_featurize(const std::vector<std::string>& words, int lo = 1, int hi = 2);

struct PaddedEmbeddingMatrix {
  Eigen::MatrixXd matrix;       // max_len x hidden_dim, pad rows first
  Eigen::Index valid_from = 0;  // index of the first non-pad row
};

PaddedEmbeddingMatrix front_pad(const std::vector<Eigen::VectorXd>& token_embeddings,
                                Eigen::Index max_len);

std::string ascii_lower(std::string_view s);

}  // namespace pharmvig::textprep
