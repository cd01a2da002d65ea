#include "pharmvig/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <stdexcept>

#include "httplib.h"
#include "json.hpp"
#include "pharmvig/io.hpp"
#include "pharmvig/rng.hpp"

namespace pharmvig::corpus {

namespace {

void append_codepoint_utf8(std::string& out, unsigned long cp) {
  if (cp <= 0x7F) {
    out += static_cast<char>(cp);
  } else if (cp <= 0x7FF) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp <= 0xFFFF) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp <= 0x10FFFF) {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

}  // namespace

std::string html_unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '&') {
      out += s[i++];
      continue;
    }
    const size_t semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 10) {
      out += s[i++];
      continue;
    }
    const std::string_view entity = s.substr(i + 1, semi - i - 1);
    if (entity == "quot") {
      out += '"';
    } else if (entity == "amp") {
      out += '&';
    } else if (entity == "apos") {
      out += '\'';
    } else if (entity == "lt") {
      out += '<';
    } else if (entity == "gt") {
      out += '>';
    } else if (entity.size() > 1 && entity[0] == '#') {
      char* end = nullptr;
      const bool hex = entity.size() > 2 && (entity[1] == 'x' || entity[1] == 'X');
      const std::string digits(entity.substr(hex ? 2 : 1));
      const unsigned long cp = std::strtoul(digits.c_str(), &end, hex ? 16 : 10);
      if (end == nullptr || *end != '\0' || digits.empty()) {
        out += s[i++];
        continue;
      }
      append_codepoint_utf8(out, cp);
    } else {
      out += s[i++];
      continue;
    }
    i = semi + 1;
  }
  return out;
}

const char* to_string(SentimentLabel label) {
  switch (label) {
    case SentimentLabel::Positive: return "positive";
    case SentimentLabel::Neutral: return "neutral";
    case SentimentLabel::Negative: return "negative";
  }
  throw std::invalid_argument("invalid sentiment label");
}

SentimentLabel sentiment_label_from_string(const std::string& s) {
  if (s == "positive") return SentimentLabel::Positive;
  if (s == "neutral") return SentimentLabel::Neutral;
  if (s == "negative") return SentimentLabel::Negative;
  throw std::invalid_argument("invalid sentiment label: " + s);
}

const char* to_string(Task task) {
  switch (task) {
    case Task::Sentiment: return "sentiment";
    case Task::Presence: return "presence";
    case Task::Ner: return "ner";
  }
  throw std::invalid_argument("invalid task");
}

Task task_from_string(const std::string& s) {
  if (s == "sentiment") return Task::Sentiment;
  if (s == "presence") return Task::Presence;
  if (s == "ner") return Task::Ner;
  throw std::invalid_argument("invalid task: " + s + " (expected sentiment|presence|ner)");
}

const char* to_string(TrainVariant v) {
  switch (v) {
    case TrainVariant::Natural: return "natural";
    case TrainVariant::Oversampled: return "oversampled";
    case TrainVariant::Undersampled: return "undersampled";
  }
  throw std::invalid_argument("invalid train variant");
}

TrainVariant train_variant_from_string(const std::string& s) {
  if (s == "natural") return TrainVariant::Natural;
  if (s == "oversampled") return TrainVariant::Oversampled;
  if (s == "undersampled") return TrainVariant::Undersampled;
  throw std::invalid_argument("invalid trainset variant: " + s +
                              " (expected natural|oversampled|undersampled)");
}

namespace {

const std::array<std::string, 12> kMonthNames = {"January", "February", "March",     "April",
                                                 "May",     "June",     "July",      "August",
                                                 "September", "October", "November", "December"};

// "May 20, 2009" -> "2009-05-20"; anything unrecognized is kept verbatim.
std::string normalize_date(const std::string& raw) {
  std::istringstream in(raw);
  std::string month_name;
  int day = 0, year = 0;
  char comma = 0;
  if (!(in >> month_name >> day >> comma >> year) || comma != ',') return raw;
  for (size_t m = 0; m < kMonthNames.size(); ++m) {
    if (kMonthNames[m] == month_name || kMonthNames[m].substr(0, 3) == month_name) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%04d-%02zu-%02d", year, m + 1, day);
      return buf;
    }
  }
  return raw;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

int parse_rating(const std::string& raw, size_t row) {
  char* end = nullptr;
  const double value = std::strtod(raw.c_str(), &end);
  if (raw.empty() || end == nullptr || *end != '\0') {
    throw std::runtime_error("row " + std::to_string(row) + ": unparseable rating '" + raw + "'");
  }
  const double rounded = std::nearbyint(value);
  if (rounded != value || rounded < 1.0 || rounded > 10.0) {
    throw std::runtime_error("row " + std::to_string(row) + ": rating " + raw +
                             " outside [1,10]");
  }
  return static_cast<int>(rounded);
}

}  // namespace

std::vector<RawReview> load_drug_reviews(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error(path.string() + ": empty review file");

  const auto header = split_tabs(lines[0]);
  if (header.size() != 7) {
    throw std::runtime_error(path.string() + ": expected 7 tab-separated header columns, got " +
                             std::to_string(header.size()));
  }

  std::vector<RawReview> reviews;
  reviews.reserve(lines.size() - 1);
  std::set<std::string> seen_ids;
  for (size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const auto fields = split_tabs(lines[row]);
    if (fields.size() != 7) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) + " has " +
                               std::to_string(fields.size()) + " fields, expected 7");
    }
    RawReview r;
    r.review_id = fields[0];
    r.drug_name = fields[1];
    r.condition = fields[2];
    r.text = html_unescape(strip_quotes(fields[3]));
    r.rating = parse_rating(fields[4], row);
    r.date = normalize_date(strip_quotes(fields[5]));
    char* end = nullptr;
    r.useful_count = std::strtol(fields[6].c_str(), &end, 10);
    if (fields[6].empty() || *end != '\0' || r.useful_count < 0) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) +
                               ": bad usefulCount '" + fields[6] + "'");
    }
    if (r.text.empty()) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ": empty review text");
    }
    if (!seen_ids.insert(r.review_id).second) {
      throw std::runtime_error(path.string() + ": duplicate review id " + r.review_id);
    }
    reviews.push_back(std::move(r));
  }
  return reviews;
}

SentimentLabel map_rating_to_sentiment(int rating) {
  if (rating < 1 || rating > 10) {
    throw std::invalid_argument("rating " + std::to_string(rating) + " outside [1,10]");
  }
  if (rating >= 8) return SentimentLabel::Positive;
  if (rating <= 3) return SentimentLabel::Negative;
  return SentimentLabel::Neutral;
}

SentimentExample to_sentiment_example(const RawReview& review) {
  return {review.review_id, review.text, map_rating_to_sentiment(review.rating), review.rating};
}

SentimentBundle make_sentiment_bundle(const std::vector<RawReview>& train_file,
                                      const std::vector<RawReview>& test_file,
                                      double dev_fraction, uint64_t seed) {
  if (train_file.empty() || test_file.empty()) {
    throw std::invalid_argument("make_sentiment_bundle: empty input");
  }
  if (dev_fraction < 0.0 || dev_fraction >= 1.0) {
    throw std::invalid_argument("make_sentiment_bundle: dev_fraction must be in [0,1)");
  }

  SentimentBundle bundle;
  bundle.task = Task::Sentiment;
  bundle.seed = seed;

  const size_t n = train_file.size();
  const size_t dev_k = static_cast<size_t>(std::floor(dev_fraction * static_cast<double>(n)));
  Rng rng(seed);
  std::vector<bool> in_dev(n, false);
  for (const size_t idx : rng.sample_without_replacement(n, dev_k)) in_dev[idx] = true;

  for (size_t i = 0; i < n; ++i) {
    (in_dev[i] ? bundle.dev : bundle.train).push_back(to_sentiment_example(train_file[i]));
  }
  for (const auto& review : test_file) bundle.test.push_back(to_sentiment_example(review));
  return bundle;
}

JsonlTweetResolver JsonlTweetResolver::load(const std::filesystem::path& path) {
  JsonlTweetResolver resolver;
  for (const auto& row : read_jsonl(path)) {
    resolver.texts_[row.at("tweet_id").get<std::string>()] = row.at("text").get<std::string>();
  }
  return resolver;
}

std::optional<std::string> JsonlTweetResolver::resolve(const std::string& tweet_id) const {
  auto it = texts_.find(tweet_id);
  if (it == texts_.end()) return std::nullopt;
  return it->second;
}

HttpTweetResolver::HttpTweetResolver(std::string base_url, std::string bearer_token)
    : base_url_(std::move(base_url)), bearer_token_(std::move(bearer_token)) {}

std::optional<std::string> HttpTweetResolver::resolve(const std::string& tweet_id) const {
  httplib::Client client(base_url_);
  client.set_connection_timeout(5);
  client.set_read_timeout(5);
  httplib::Headers headers;
  if (!bearer_token_.empty()) headers.emplace("Authorization", "Bearer " + bearer_token_);
  const auto res = client.Get("/tweets/" + tweet_id, headers);
  if (!res || res->status != 200) return std::nullopt;
  try {
    const auto body = nlohmann::json::parse(res->body);
    return body.at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

TweetCorpus load_tweet_corpus(const std::filesystem::path& annotation_path,
                              const TweetTextResolver& resolver) {
  TweetCorpus corpus;
  std::set<std::string> seen;
  for (const auto& row : read_jsonl(annotation_path)) {
    TweetRecord record;
    record.tweet_id = row.at("tweet_id").get<std::string>();
    const int label = row.at("label").get<int>();
    if (label != 0 && label != 1) {
      throw std::runtime_error("tweet " + record.tweet_id + ": label must be 0 or 1");
    }
    record.has_adr = label == 1;
    if (!seen.insert(record.tweet_id).second) {
      throw std::runtime_error("duplicate tweet id " + record.tweet_id);
    }
    record.text = resolver.resolve(record.tweet_id);
    if (!record.text.has_value()) ++corpus.skipped;
    corpus.records.push_back(std::move(record));
  }
  return corpus;
}

std::vector<textprep::BioTag> spans_to_bio(const std::string& text,
                                           const std::vector<AdrSpan>& spans) {
  auto sorted = spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const AdrSpan& a, const AdrSpan& b) { return a.begin < b.begin; });
  const long text_len = static_cast<long>(text.size());
  for (size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (s.begin >= s.end) {
      throw std::runtime_error("span [" + std::to_string(s.begin) + "," + std::to_string(s.end) +
                               ") is empty or reversed");
    }
    if (s.begin < 0 || s.end > text_len) {
      throw std::runtime_error("span [" + std::to_string(s.begin) + "," + std::to_string(s.end) +
                               ") outside text of length " + std::to_string(text_len));
    }
    if (i > 0 && sorted[i - 1].end > s.begin) {
      throw std::runtime_error("overlapping spans at offset " + std::to_string(s.begin));
    }
  }

  const auto words = textprep::word_tokenize_with_offsets(text);
  std::vector<textprep::BioTag> tags(words.size(), textprep::BioTag::O);
  for (const auto& span : sorted) {
    bool first = true;
    for (size_t w = 0; w < words.size(); ++w) {
      const bool covered = static_cast<long>(words[w].begin) < span.end &&
                           static_cast<long>(words[w].end) > span.begin;
      if (!covered) continue;
      if (tags[w] == textprep::BioTag::O) {
        tags[w] = first ? textprep::BioTag::B : textprep::BioTag::I;
      }
      first = false;
    }
  }
  return tags;
}

std::vector<NerRecord> load_ner_corpus(const std::filesystem::path& path) {
  std::vector<NerRecord> records;
  std::set<std::string> seen;
  for (const auto& row : read_jsonl(path)) {
    NerRecord record;
    record.tweet_id = row.at("tweet_id").get<std::string>();
    record.text = row.at("text").get<std::string>();
    if (!seen.insert(record.tweet_id).second) {
      throw std::runtime_error("duplicate tweet id " + record.tweet_id);
    }
    for (const auto& pair : row.at("spans")) {
      if (!pair.is_array() || pair.size() != 2) {
        throw std::runtime_error("tweet " + record.tweet_id + ": spans must be [start,end] pairs");
      }
      record.spans.push_back({pair[0].get<long>(), pair[1].get<long>()});
    }
    try {
      record.bio_tags = spans_to_bio(record.text, record.spans);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("tweet " + record.tweet_id + ": " + e.what());
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<TweetRecord> rebalance(const std::vector<TweetRecord>& train,
                                   const RebalanceSpec& spec) {
  if (spec.target_minority_fraction <= 0.0 || spec.target_minority_fraction > 0.5) {
    throw std::invalid_argument("target_minority_fraction must be in (0, 0.5]");
  }
  std::vector<size_t> positives, negatives;
  for (size_t i = 0; i < train.size(); ++i) {
    (train[i].has_adr ? positives : negatives).push_back(i);
  }
  if (positives.empty() || negatives.empty()) {
    throw std::invalid_argument("rebalance: training data must contain both classes");
  }
  if (positives.size() > negatives.size()) {
    throw std::invalid_argument("rebalance: expected the positive class to be the minority");
  }

  Rng rng(spec.seed);
  std::vector<TweetRecord> out;

  if (spec.mode == RebalanceSpec::Mode::OversampleMinorityToBalance) {
    out = train;  // every original is kept
    auto order = positives;
    rng.shuffle(order);
    size_t deficit = negatives.size() - positives.size();
    for (size_t k = 0; deficit > 0; ++k, --deficit) {
      out.push_back(train[order[k % order.size()]]);
    }
  } else {
    const double f = spec.target_minority_fraction;
    const auto m = static_cast<double>(positives.size());
    const auto majority_target =
        static_cast<size_t>(std::llround(m * (1.0 - f) / f));
    if (majority_target > negatives.size()) {
      throw std::invalid_argument(
          "rebalance: undersampling target exceeds the available majority class");
    }
    for (const size_t i : positives) out.push_back(train[i]);
    for (const size_t k : rng.sample_without_replacement(negatives.size(), majority_target)) {
      out.push_back(train[negatives[k]]);
    }
  }
  rng.shuffle(out);
  return out;
}

namespace {

template <typename Example, typename IdOf>
Bundle<Example> split_bundle(Task task, const std::vector<Example>& records, double dev_fraction,
                             double test_fraction, uint64_t seed, IdOf id_of) {
  if (records.empty()) throw std::invalid_argument("cannot build a bundle from empty input");
  if (dev_fraction < 0.0 || test_fraction < 0.0 || dev_fraction + test_fraction >= 1.0) {
    throw std::invalid_argument("bundle fractions must be nonnegative and sum below 1");
  }
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(id_of(r)).second) {
      throw std::invalid_argument("duplicate example id " + id_of(r));
    }
  }

  Bundle<Example> bundle;
  bundle.task = task;
  bundle.seed = seed;
  const size_t n = records.size();
  const auto test_k = static_cast<size_t>(std::llround(test_fraction * static_cast<double>(n)));
  const auto dev_k = static_cast<size_t>(std::llround(dev_fraction * static_cast<double>(n)));

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  for (size_t i = 0; i < n; ++i) {
    const auto& r = records[order[i]];
    if (i < test_k) {
      bundle.test.push_back(r);
    } else if (i < test_k + dev_k) {
      bundle.dev.push_back(r);
    } else {
      bundle.train.push_back(r);
    }
  }
  return bundle;
}

}  // namespace

PresenceBundle make_presence_bundle(const std::vector<TweetRecord>& records, double dev_fraction,
                                    double test_fraction, uint64_t seed) {
  std::vector<TweetRecord> usable;
  for (const auto& r : records) {
    if (r.text.has_value()) usable.push_back(r);
  }
  return split_bundle(Task::Presence, usable, dev_fraction, test_fraction, seed,
                      [](const TweetRecord& r) { return r.tweet_id; });
}

NerBundle make_ner_bundle(const std::vector<NerRecord>& records, double dev_fraction,
                          double test_fraction, uint64_t seed) {
  return split_bundle(Task::Ner, records, dev_fraction, test_fraction, seed,
                      [](const NerRecord& r) { return r.tweet_id; });
}

}  // namespace pharmvig::corpus
