#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pharmvig/corpus.hpp"
#include "pharmvig/textprep.hpp"

namespace pharmvig::eval {

struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<long>> counts;  // rows = gold, columns = predicted

  long total() const;
  long diagonal() const;
  int index_of(const std::string& label) const;  // -1 when absent
};

ConfusionMatrix confusion(const std::vector<std::string>& golds,
                          const std::vector<std::string>& preds,
                          const std::vector<std::string>& labels);

struct ClassPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  std::map<std::string, ClassPRF> per_class;
  double macro_f = 0.0;  // unweighted mean over every label in the matrix
  std::optional<double> positive_f;
  std::optional<double> mean_loss;
  ConfusionMatrix confusion;
};

// 0/0 precision or recall is 0; f1 is 0 when precision + recall == 0.
EvalReport metrics(const ConfusionMatrix& cm,
                   const std::optional<std::string>& positive_label = std::nullopt);

struct SentimentErrorBreakdown {
  long total_misclassified = 0;
  long neutral_involved = 0;  // either side of the error is neutral
  long false_positive = 0;    // gold negative predicted positive
  long false_negative = 0;    // gold positive predicted negative
  std::vector<std::string> sampled_fp;
  std::vector<std::string> sampled_fn;
};

SentimentErrorBreakdown sentiment_error_breakdown(
    const std::vector<corpus::SentimentLabel>& golds,
    const std::vector<corpus::SentimentLabel>& preds, const std::vector<std::string>& ids,
    int sample_k, uint64_t seed);

struct TokenConfusionReport {
  // descending count, ties alphabetical; keys are case-folded words
  std::vector<std::pair<std::string, long>> fn_word_counts;  // gold B/I predicted O
  std::vector<std::pair<std::string, long>> fp_word_counts;  // gold O predicted B/I
};

TokenConfusionReport token_confusion_report(
    const std::vector<std::vector<textprep::BioTag>>& gold_tag_seqs,
    const std::vector<std::vector<textprep::BioTag>>& pred_tag_seqs,
    const std::vector<std::vector<std::string>>& word_seqs);

struct EpochMetric {
  int epoch = 0;
  double dev_accuracy = 0.0;
  double dev_loss = 0.0;
};

// Validates that epochs 1..E each appear exactly once; returns rows ordered
// by epoch.
std::vector<EpochMetric> epoch_curve(const std::vector<EpochMetric>& records);

std::string to_text_table(const EvalReport& report);
nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace pharmvig::eval
