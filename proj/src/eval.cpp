#include "pharmvig/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pharmvig/rng.hpp"

namespace pharmvig::eval {

long ConfusionMatrix::total() const {
  long sum = 0;
  for (const auto& row : counts) {
    for (const long c : row) sum += c;
  }
  return sum;
}

long ConfusionMatrix::diagonal() const {
  long sum = 0;
  for (size_t i = 0; i < counts.size(); ++i) sum += counts[i][i];
  return sum;
}

int ConfusionMatrix::index_of(const std::string& label) const {
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return static_cast<int>(i);
  }
  return -1;
}

ConfusionMatrix confusion(const std::vector<std::string>& golds,
                          const std::vector<std::string>& preds,
                          const std::vector<std::string>& labels) {
  if (golds.size() != preds.size()) {
    throw std::invalid_argument("confusion: gold/prediction length mismatch");
  }
  ConfusionMatrix cm;
  cm.labels = labels;
  cm.counts.assign(labels.size(), std::vector<long>(labels.size(), 0));
  for (size_t i = 0; i < golds.size(); ++i) {
    const int g = cm.index_of(golds[i]);
    const int p = cm.index_of(preds[i]);
    if (g < 0) throw std::invalid_argument("confusion: unknown gold label '" + golds[i] + "'");
    if (p < 0) throw std::invalid_argument("confusion: unknown predicted label '" + preds[i] + "'");
    ++cm.counts[static_cast<size_t>(g)][static_cast<size_t>(p)];
  }
  return cm;
}

EvalReport metrics(const ConfusionMatrix& cm, const std::optional<std::string>& positive_label) {
  const long total = cm.total();
  if (cm.labels.empty() || total == 0) {
    throw std::invalid_argument("metrics: empty confusion matrix");
  }
  EvalReport report;
  report.confusion = cm;
  report.accuracy = static_cast<double>(cm.diagonal()) / static_cast<double>(total);

  const size_t k = cm.labels.size();
  double f_sum = 0.0;
  for (size_t i = 0; i < k; ++i) {
    long tp = cm.counts[i][i];
    long fp = 0, fn = 0;
    for (size_t r = 0; r < k; ++r) {
      if (r == i) continue;
      fp += cm.counts[r][i];
      fn += cm.counts[i][r];
    }
    ClassPRF prf;
    prf.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    prf.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    prf.f1 = prf.precision + prf.recall == 0.0
                 ? 0.0
                 : 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall);
    report.per_class[cm.labels[i]] = prf;
    f_sum += prf.f1;
  }
  report.macro_f = f_sum / static_cast<double>(k);

  if (positive_label.has_value()) {
    auto it = report.per_class.find(*positive_label);
    if (it == report.per_class.end()) {
      throw std::invalid_argument("metrics: positive label '" + *positive_label +
                                  "' not in the matrix");
    }
    report.positive_f = it->second.f1;
  }
  return report;
}

SentimentErrorBreakdown sentiment_error_breakdown(
    const std::vector<corpus::SentimentLabel>& golds,
    const std::vector<corpus::SentimentLabel>& preds, const std::vector<std::string>& ids,
    int sample_k, uint64_t seed) {
  if (golds.size() != preds.size() || golds.size() != ids.size()) {
    throw std::invalid_argument("sentiment_error_breakdown: input length mismatch");
  }
  using corpus::SentimentLabel;
  SentimentErrorBreakdown out;
  std::vector<std::string> fp_ids, fn_ids;
  for (size_t i = 0; i < golds.size(); ++i) {
    if (golds[i] == preds[i]) continue;
    ++out.total_misclassified;
    if (golds[i] == SentimentLabel::Negative && preds[i] == SentimentLabel::Positive) {
      ++out.false_positive;
      fp_ids.push_back(ids[i]);
    } else if (golds[i] == SentimentLabel::Positive && preds[i] == SentimentLabel::Negative) {
      ++out.false_negative;
      fn_ids.push_back(ids[i]);
    } else {
      ++out.neutral_involved;
    }
  }

  Rng rng(seed);
  auto sample = [&](const std::vector<std::string>& pool) {
    std::vector<std::string> chosen;
    const size_t k = std::min<size_t>(static_cast<size_t>(std::max(sample_k, 0)), pool.size());
    for (const size_t idx : rng.sample_without_replacement(pool.size(), k)) {
      chosen.push_back(pool[idx]);
    }
    return chosen;
  };
  out.sampled_fp = sample(fp_ids);
  out.sampled_fn = sample(fn_ids);
  return out;
}

namespace {

std::vector<std::pair<std::string, long>> sorted_counts(const std::map<std::string, long>& counts) {
  std::vector<std::pair<std::string, long>> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

}  // namespace

TokenConfusionReport token_confusion_report(
    const std::vector<std::vector<textprep::BioTag>>& gold_tag_seqs,
    const std::vector<std::vector<textprep::BioTag>>& pred_tag_seqs,
    const std::vector<std::vector<std::string>>& word_seqs) {
  using textprep::BioTag;
  if (gold_tag_seqs.size() != pred_tag_seqs.size() || gold_tag_seqs.size() != word_seqs.size()) {
    throw std::invalid_argument("token_confusion_report: sequence count mismatch");
  }
  std::map<std::string, long> fn, fp;
  for (size_t s = 0; s < gold_tag_seqs.size(); ++s) {
    const auto& gold = gold_tag_seqs[s];
    const auto& pred = pred_tag_seqs[s];
    const auto& words = word_seqs[s];
    if (gold.size() != pred.size() || gold.size() != words.size()) {
      throw std::invalid_argument("token_confusion_report: sequence " + std::to_string(s) +
                                  " has misaligned tags/words");
    }
    for (size_t i = 0; i < gold.size(); ++i) {
      const std::string word = textprep::ascii_lower(words[i]);
      if (gold[i] != BioTag::O && pred[i] == BioTag::O) ++fn[word];
      if (gold[i] == BioTag::O && pred[i] != BioTag::O) ++fp[word];
    }
  }
  return {sorted_counts(fn), sorted_counts(fp)};
}

std::vector<EpochMetric> epoch_curve(const std::vector<EpochMetric>& records) {
  auto rows = records;
  std::sort(rows.begin(), rows.end(),
            [](const EpochMetric& a, const EpochMetric& b) { return a.epoch < b.epoch; });
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].epoch != static_cast<int>(i) + 1) {
      throw std::runtime_error("epoch_curve: epochs must be exactly 1.." +
                               std::to_string(rows.size()) + ", found epoch " +
                               std::to_string(rows[i].epoch));
    }
  }
  return rows;
}

std::string to_text_table(const EvalReport& report) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "accuracy  %.4f\nmacro_f   %.4f\n", report.accuracy,
                report.macro_f);
  out << buf;
  if (report.positive_f.has_value()) {
    std::snprintf(buf, sizeof(buf), "pos_f     %.4f\n", *report.positive_f);
    out << buf;
  }
  if (report.mean_loss.has_value()) {
    std::snprintf(buf, sizeof(buf), "loss      %.4f\n", *report.mean_loss);
    out << buf;
  }
  out << "\nclass            precision  recall     f1\n";
  for (const auto& [label, prf] : report.per_class) {
    std::snprintf(buf, sizeof(buf), "%-16s %9.4f %7.4f %8.4f\n", label.c_str(), prf.precision,
                  prf.recall, prf.f1);
    out << buf;
  }
  return out.str();
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["macro_f"] = report.macro_f;
  if (report.positive_f.has_value()) j["positive_f"] = *report.positive_f;
  if (report.mean_loss.has_value()) j["mean_loss"] = *report.mean_loss;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [label, prf] : report.per_class) {
    per_class[label] = {{"precision", prf.precision}, {"recall", prf.recall}, {"f1", prf.f1}};
  }
  j["per_class"] = per_class;
  j["confusion"] = {{"labels", report.confusion.labels}, {"counts", report.confusion.counts}};
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport report;
  report.accuracy = j.at("accuracy").get<double>();
  report.macro_f = j.at("macro_f").get<double>();
  if (j.contains("positive_f")) report.positive_f = j.at("positive_f").get<double>();
  if (j.contains("mean_loss")) report.mean_loss = j.at("mean_loss").get<double>();
  for (const auto& [label, prf] : j.at("per_class").items()) {
    report.per_class[label] = {prf.at("precision").get<double>(), prf.at("recall").get<double>(),
                               prf.at("f1").get<double>()};
  }
  report.confusion.labels = j.at("confusion").at("labels").get<std::vector<std::string>>();
  report.confusion.counts =
      j.at("confusion").at("counts").get<std::vector<std::vector<long>>>();
  return report;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "gold\\pred";
  for (const auto& label : cm.labels) out << ',' << label;
  out << '\n';
  for (size_t i = 0; i < cm.labels.size(); ++i) {
    out << cm.labels[i];
    for (size_t j = 0; j < cm.labels.size(); ++j) out << ',' << cm.counts[i][j];
    out << '\n';
  }
  return out.str();
}

}  // namespace pharmvig::eval
