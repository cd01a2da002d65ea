#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pharmvig/textprep.hpp"

namespace pharmvig::corpus {

struct RawReview {
  std::string review_id;
  std::string drug_name;
  std::string condition;  // may be empty
  std::string text;       // HTML entities already unescaped
  int rating = 0;         // 1..10
  std::string date;       // ISO-8601 when the source date is recognizable
  long useful_count = 0;
};

enum class SentimentLabel { Positive, Neutral, Negative };

const char* to_string(SentimentLabel label);
SentimentLabel sentiment_label_from_string(const std::string& s);

struct SentimentExample {
  std::string id;
  std::string text;
  SentimentLabel label = SentimentLabel::Neutral;
  int source_rating = 0;
};

struct TweetRecord {
  std::string tweet_id;
  std::optional<std::string> text;
  bool has_adr = false;
};

struct AdrSpan {
  long begin = 0;  // character offsets, [begin, end)
  long end = 0;
};

struct NerRecord {
  std::string tweet_id;
  std::string text;
  std::vector<AdrSpan> spans;
  std::vector<textprep::BioTag> bio_tags;  // one per word token
};

enum class Task { Sentiment, Presence, Ner };
enum class TrainVariant { Natural, Oversampled, Undersampled };

const char* to_string(Task task);
const char* to_string(TrainVariant v);
Task task_from_string(const std::string& s);
TrainVariant train_variant_from_string(const std::string& s);

template <typename Example>
struct Bundle {
  Task task = Task::Sentiment;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
  TrainVariant variant = TrainVariant::Natural;
  uint64_t seed = 0;
};

using SentimentBundle = Bundle<SentimentExample>;
using PresenceBundle = Bundle<TweetRecord>;
using NerBundle = Bundle<NerRecord>;

// Named entities (quot/amp/apos/lt/gt) plus decimal and hex numeric escapes.
std::string html_unescape(std::string_view s);

// UCI Drugs.com TSV layout:
//   uniqueID  drugName  condition  review  rating  date  usefulCount
std::vector<RawReview> load_drug_reviews(const std::filesystem::path& path);

SentimentLabel map_rating_to_sentiment(int rating);

SentimentExample to_sentiment_example(const RawReview& review);

// dev is a seeded carve-out of the published train file; test is the
// published test file verbatim.
SentimentBundle make_sentiment_bundle(const std::vector<RawReview>& train_file,
                                      const std::vector<RawReview>& test_file,
                                      double dev_fraction = 0.2, uint64_t seed = 13);

class TweetTextResolver {
 public:
  virtual ~TweetTextResolver() = default;
  virtual std::optional<std::string> resolve(const std::string& tweet_id) const = 0;
};

// Backed by a local JSONL file: {"tweet_id": str, "text": str} per line.
class JsonlTweetResolver : public TweetTextResolver {
 public:
  static JsonlTweetResolver load(const std::filesystem::path& path);
  std::optional<std::string> resolve(const std::string& tweet_id) const override;
  size_t size() const { return texts_.size(); }

 private:
  std::map<std::string, std::string> texts_;
};

// GET {base_url}/tweets/{id} with an optional bearer token; expects a JSON
// body {"tweet_id": ..., "text": ...}; any non-200 status is a miss.
class HttpTweetResolver : public TweetTextResolver {
 public:
  HttpTweetResolver(std::string base_url, std::string bearer_token = "");
  std::optional<std::string> resolve(const std::string& tweet_id) const override;

 private:
  std::string base_url_;
  std::string bearer_token_;
};

struct TweetCorpus {
  std::vector<TweetRecord> records;  // includes records with absent text
  size_t skipped = 0;                // resolver misses
  size_t usable() const { return records.size() - skipped; }
};

// Annotation file: JSONL {"tweet_id": str, "label": 0|1}. Resolver misses are
// not errors; the record keeps an absent text and is counted as skipped.
TweetCorpus load_tweet_corpus(const std::filesystem::path& annotation_path,
                              const TweetTextResolver& resolver);

// NER file: JSONL {"tweet_id": str, "text": str, "spans": [[start, end]]}.
// Spans are converted to word-level BIO tags: first covered word B, later
// covered words I, everything else O.
std::vector<NerRecord> load_ner_corpus(const std::filesystem::path& path);

std::vector<textprep::BioTag> spans_to_bio(const std::string& text,
                                           const std::vector<AdrSpan>& spans);

struct RebalanceSpec {
  enum class Mode { OversampleMinorityToBalance, UndersampleMajorityToRatio };
  Mode mode = Mode::OversampleMinorityToBalance;
  double target_minority_fraction = 0.5;  // 0.5 oversample, 1/3 undersample
  uint64_t seed = 0;
};

std::vector<TweetRecord> rebalance(const std::vector<TweetRecord>& train,
                                   const RebalanceSpec& spec);

// Seeded shuffle, then round(test_fraction*N) test, round(dev_fraction*N)
// dev, remainder train. Records without text are dropped first.
PresenceBundle make_presence_bundle(const std::vector<TweetRecord>& records,
                                    double dev_fraction = 0.2, double test_fraction = 0.2,
                                    uint64_t seed = 13);
NerBundle make_ner_bundle(const std::vector<NerRecord>& records, double dev_fraction = 0.2,
                          double test_fraction = 0.2, uint64_t seed = 13);

}  // namespace pharmvig::corpus
