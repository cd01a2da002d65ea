#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pharmvig/corpus.hpp"
#include "pharmvig/encoder.hpp"
#include "pharmvig/finetune.hpp"

namespace pharmvig::fixtures {

// Desk-scale stand-ins: miniature randomly initialized encoders behind the
// same checkpoint interface as full-size ones, plus small synthetic corpora
// in the exact on-disk formats the loaders expect. Everything is seeded.

// Covers the synthetic corpora's word pools plus single-character fallbacks
// for every printable ASCII class, so no text maps to [UNK].
textprep::SubwordVocab tiny_vocab();

finetune::EncoderConfig tiny_encoder_config(int vocab_size);

void write_tiny_checkpoint(const std::filesystem::path& dir, uint64_t seed, bool cased);

// Writes 8 miniature variant checkpoints plus registry.json; returns the
// registry path.
std::filesystem::path write_fixture_registry(const std::filesystem::path& dir, uint64_t seed);

// Drugs.com-layout TSVs with roughly the published class mix
// (60% positive / 18% neutral / 22% negative).
void write_sentiment_tsv(const std::filesystem::path& path, int rows, uint64_t seed);

// annotations.jsonl + texts.jsonl; `resolvable` of the `rows` ids get text.
void write_tweet_files(const std::filesystem::path& annotations_path,
                       const std::filesystem::path& texts_path, int rows, int resolvable,
                       double positive_fraction, uint64_t seed);

void write_ner_file(const std::filesystem::path& path, int rows, uint64_t seed);

// Toolkit config wired to freshly generated raw data, checkpoints, and
// registry under `dir`; returns the config path.
std::filesystem::path write_workspace(const std::filesystem::path& dir, uint64_t seed,
                                      int sentiment_train_rows = 240, int sentiment_test_rows = 120,
                                      int tweet_rows = 160, int ner_rows = 60);

// In-memory builders used by tests.
std::vector<corpus::TweetRecord> synthetic_tweets(int positives, int negatives, uint64_t seed);
std::string synthetic_sentiment_text(corpus::SentimentLabel label, Rng& rng);

}  // namespace pharmvig::fixtures
