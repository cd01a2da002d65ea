#include "pharmvig/textprep.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include "pharmvig/io.hpp"

namespace pharmvig::textprep {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

constexpr size_t kMaxWordpieceChars = 100;

}  // namespace

char to_char(BioTag tag) {
  switch (tag) {
    case BioTag::B: return 'B';
    case BioTag::I: return 'I';
    case BioTag::O: return 'O';
  }
  throw std::invalid_argument("invalid BIO tag");
}

BioTag bio_tag_from_char(char c) {
  switch (c) {
    case 'B': return BioTag::B;
    case 'I': return BioTag::I;
    case 'O': return BioTag::O;
  }
  throw std::invalid_argument(std::string("invalid BIO tag character: ") + c);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<WordSpan> word_tokenize_with_offsets(std::string_view text) {
  std::vector<WordSpan> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    while (i < n && is_space(text[i])) ++i;
    size_t j = i;
    while (j < n && !is_space(text[j])) ++j;
    if (i == j) break;
    const std::string_view tok = text.substr(i, j - i);
    size_t b = 0, e = tok.size();
    while (b < e && is_punct(tok[b])) ++b;
    while (e > b && is_punct(tok[e - 1])) --e;
    if (b == e) {
      // all punctuation: one token per character
      for (size_t k = 0; k < tok.size(); ++k) {
        out.push_back({std::string(1, tok[k]), i + k, i + k + 1});
      }
    } else {
      for (size_t k = 0; k < b; ++k) out.push_back({std::string(1, tok[k]), i + k, i + k + 1});
      out.push_back({std::string(tok.substr(b, e - b)), i + b, i + e});
      for (size_t k = e; k < tok.size(); ++k) out.push_back({std::string(1, tok[k]), i + k, i + k + 1});
    }
    i = j;
  }
  return out;
}

std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& span : word_tokenize_with_offsets(text)) out.push_back(std::move(span.token));
  return out;
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path) {
  return from_tokens(read_lines(path));
}

SubwordVocab SubwordVocab::from_tokens(std::vector<std::string> tokens) {
  SubwordVocab v;
  v.tokens_ = std::move(tokens);
  v.build_index();
  return v;
}

void SubwordVocab::build_index() {
  index_.clear();
  index_.reserve(tokens_.size());
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw std::runtime_error("vocabulary has an empty token at line " + std::to_string(i + 1));
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::runtime_error("duplicate vocabulary token: " + tokens_[i]);
    }
  }
  pad_id_ = id_of("[PAD]");
  unk_id_ = id_of("[UNK]");
  cls_id_ = id_of("[CLS]");
  sep_id_ = id_of("[SEP]");
  if (pad_id_ < 0 || unk_id_ < 0 || cls_id_ < 0 || sep_id_ < 0) {
    throw std::runtime_error("vocabulary is missing one of [PAD], [UNK], [CLS], [SEP]");
  }
}

int SubwordVocab::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

const std::string& SubwordVocab::token(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocabulary id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<size_t>(id)];
}

void SubwordVocab::save(const std::filesystem::path& path) const {
  std::string content;
  for (const auto& t : tokens_) {
    content += t;
    content += '\n';
  }
  atomic_write_file(path, content);
}

namespace {

// Greedy longest-match-first WordPiece; a word with no decomposition maps to
// the single [UNK] id.
std::vector<int> wordpiece(std::string_view word, const SubwordVocab& vocab) {
  if (word.empty() || word.size() > kMaxWordpieceChars) return {vocab.unk_id()};
  std::vector<int> ids;
  size_t start = 0;
  while (start < word.size()) {
    size_t end = word.size();
    int found = -1;
    while (end > start) {
      std::string candidate = start > 0 ? "##" : "";
      candidate += word.substr(start, end - start);
      const int id = vocab.id_of(candidate);
      if (id >= 0) {
        found = id;
        break;
      }
      --end;
    }
    if (found < 0) return {vocab.unk_id()};
    ids.push_back(found);
    start = end;
  }
  return ids;
}

}  // namespace

TokenizedText subword_tokenize(std::string_view text, const SubwordVocab& vocab, bool cased,
                               int max_seq_len) {
  if (max_seq_len < 2) throw std::invalid_argument("max_seq_len must be at least 2");
  std::string lowered;
  std::string_view input = text;
  if (!cased) {
    lowered = ascii_lower(text);
    input = lowered;
  }

  TokenizedText out;
  out.words = word_tokenize(input);
  out.subtokens.push_back(vocab.cls_id());
  const int budget = max_seq_len - 2;  // room for [CLS] and [SEP]

  for (const auto& word : out.words) {
    const auto pieces = wordpiece(word, vocab);
    const int first = static_cast<int>(out.subtokens.size());
    int kept = 0;
    for (const int id : pieces) {
      if (static_cast<int>(out.subtokens.size()) - 1 < budget) {
        out.subtokens.push_back(id);
        ++kept;
      } else {
        out.truncated = true;
      }
    }
    out.word_to_subtoken.emplace_back(kept > 0 ? first : 0, kept);
  }
  out.subtokens.push_back(vocab.sep_id());
  out.attention_mask.assign(out.subtokens.size(), 1);
  return out;
}

std::vector<int> align_bio_to_subtokens(const TokenizedText& t, const std::vector<BioTag>& tags) {
  if (tags.size() != t.words.size()) {
    throw std::invalid_argument("align_bio_to_subtokens: " + std::to_string(tags.size()) +
                                " tags for " + std::to_string(t.words.size()) + " words");
  }
  std::vector<int> out(t.subtokens.size(), kIgnoreTag);
  for (size_t w = 0; w < t.word_to_subtoken.size(); ++w) {
    const auto [first, len] = t.word_to_subtoken[w];
    if (len > 0) out[static_cast<size_t>(first)] = static_cast<int>(tags[w]);
  }
  return out;
}

std::vector<BioTag> project_subtoken_predictions_to_words(const TokenizedText& t,
                                                          const std::vector<BioTag>& subtoken_tags) {
  if (subtoken_tags.size() != t.subtokens.size()) {
    throw std::invalid_argument("project_subtoken_predictions_to_words: prediction length " +
                                std::to_string(subtoken_tags.size()) + " != subtoken count " +
                                std::to_string(t.subtokens.size()));
  }
  std::vector<BioTag> out(t.words.size(), BioTag::O);
  for (size_t w = 0; w < t.word_to_subtoken.size(); ++w) {
    const auto [first, len] = t.word_to_subtoken[w];
    if (len > 0) out[w] = subtoken_tags[static_cast<size_t>(first)];
  }
  return out;
}

long NgramVector::total() const {
  long sum = 0;
  for (const auto& [gram, count] : counts) sum += count;
  return sum;
}

NgramVector ngram_featurize(const std::vector<std::string>& words, int lo, int hi) {
  if (lo < 1 || lo > hi) throw std::invalid_argument("ngram_featurize: need 1 <= lo <= hi");
  NgramVector out;
  out.lo = lo;
  out.hi = hi;
  for (int n = lo; n <= hi; ++n) {
    if (static_cast<size_t>(n) > words.size()) break;
    for (size_t i = 0; i + static_cast<size_t>(n) <= words.size(); ++i) {
      std::string key = words[i];
      for (size_t j = 1; j < static_cast<size_t>(n); ++j) {
        key += ' ';
        key += words[i + j];
      }
      ++out.counts[key];
    }
  }
  return out;
}

PaddedEmbeddingMatrix front_pad(const std::vector<Eigen::VectorXd>& token_embeddings,
                                Eigen::Index max_len) {
  const auto k = static_cast<Eigen::Index>(token_embeddings.size());
  if (k > max_len) {
    throw std::invalid_argument("front_pad: " + std::to_string(k) + " rows exceed max_len " +
                                std::to_string(max_len));
  }
  const Eigen::Index dim = k > 0 ? token_embeddings.front().size() : 0;
  for (const auto& row : token_embeddings) {
    if (row.size() != dim) throw std::invalid_argument("front_pad: inconsistent embedding dims");
  }
  PaddedEmbeddingMatrix out;
  out.matrix = Eigen::MatrixXd::Zero(max_len, dim);
  out.valid_from = max_len - k;
  for (Eigen::Index i = 0; i < k; ++i) {
    out.matrix.row(out.valid_from + i) = token_embeddings[static_cast<size_t>(i)].transpose();
  }
  return out;
}

}  // namespace pharmvig::textprep
