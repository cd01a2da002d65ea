#include "pharmvig/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "pharmvig/io.hpp"

namespace pharmvig::finetune {

std::string to_string(VariantKey key) {
  switch (key) {
    case VariantKey::BC: return "B-C";
    case VariantKey::BU: return "B-U";
    case VariantKey::BB10: return "BB-1.0";
    case VariantKey::BB11: return "BB-1.1";
    case VariantKey::CBA: return "CB-A";
    case VariantKey::CBD: return "CB-D";
    case VariantKey::CBBA: return "CBB-A";
    case VariantKey::CBBD: return "CBB-D";
  }
  throw std::invalid_argument("invalid variant key");
}

std::optional<VariantKey> parse_variant_key(const std::string& s) {
  const std::string upper = [&] {
    std::string u = s;
    for (char& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return u;
  }();
  for (const VariantKey key : kAllVariantKeys) {
    if (to_string(key) == upper) return key;
  }
  return std::nullopt;
}

std::string to_string(TaskHead head) {
  switch (head) {
    case TaskHead::Classify3: return "classify_3";
    case TaskHead::Classify2: return "classify_2";
    case TaskHead::TagBio: return "tag_bio";
  }
  throw std::invalid_argument("invalid task head");
}

TaskHead task_head_from_string(const std::string& s) {
  if (s == "classify_3") return TaskHead::Classify3;
  if (s == "classify_2") return TaskHead::Classify2;
  if (s == "tag_bio") return TaskHead::TagBio;
  throw std::invalid_argument("invalid task head: " + s);
}

nlohmann::json FinetuneConfig::to_json() const {
  return {{"max_seq_len", max_seq_len}, {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"epochs", epochs},
          {"seed", seed}, {"task_head", finetune::to_string(task_head)}};
}

FinetuneConfig FinetuneConfig::from_json(const nlohmann::json& j) {
  FinetuneConfig c;
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.task_head = task_head_from_string(j.at("task_head").get<std::string>());
  return c;
}

std::map<VariantKey, ModelVariant> registry_load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  if (j.contains("elmo") && !j.at("elmo").is_null()) {
    throw std::runtime_error("registry: the ELMo slot is reserved but not implemented");
  }

  std::map<VariantKey, ModelVariant> out;
  for (const auto& entry : j.at("variants")) {
    const auto key_str = entry.at("key").get<std::string>();
    const auto key = parse_variant_key(key_str);
    if (!key) throw std::runtime_error("registry: unknown variant key '" + key_str + "'");
    if (out.count(*key)) {
      throw std::runtime_error("registry: duplicate variant key '" + to_string(*key) + "'");
    }
    std::filesystem::path checkpoint = entry.at("checkpoint").get<std::string>();
    if (checkpoint.is_relative()) checkpoint = path.parent_path() / checkpoint;
    if (!checkpoint_exists(checkpoint)) {
      throw std::runtime_error("registry: checkpoint for " + to_string(*key) + " not found at " +
                               checkpoint.string());
    }
    const bool cased = entry.at("cased").get<bool>();
    const auto ck_config = nlohmann::json::parse(read_file(checkpoint / "config.json"));
    if (ck_config.at("cased").get<bool>() != cased) {
      throw std::runtime_error("registry: cased flag for " + to_string(*key) +
                               " does not match its checkpoint");
    }
    if (*key == VariantKey::BU ? cased : !cased) {
      throw std::runtime_error("registry: " + to_string(*key) +
                               (*key == VariantKey::BU ? " must be uncased" : " must be cased") +
                               " (B-U is the only uncased variant)");
    }
    out[*key] = {*key, checkpoint.string(), cased, ck_config.at("hidden_dim").get<int>()};
  }
  for (const VariantKey key : kAllVariantKeys) {
    if (!out.count(key)) {
      throw std::runtime_error("registry: missing variant key " + to_string(key));
    }
  }
  return out;
}

TrainedModel::TrainedModel(Checkpoint state, ModelVariant variant_in, FinetuneConfig config_in)
    : variant(std::move(variant_in)), config(config_in), state_(std::move(state)) {}

int TrainedModel::effective_seq_len() const {
  return std::min(config.max_seq_len, state_.config.max_position);
}

namespace {

int head_arity(TaskHead head) {
  switch (head) {
    case TaskHead::Classify3: return 3;
    case TaskHead::Classify2: return 2;
    case TaskHead::TagBio: return textprep::kNumBioTags;
  }
  throw std::invalid_argument("invalid task head");
}

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& logits) {
  const double max = logits.maxCoeff();
  Eigen::RowVectorXd exps = (logits.array() - max).exp();
  return exps / exps.sum();
}

double row_cross_entropy(const Eigen::RowVectorXd& logits, int label) {
  const double max = logits.maxCoeff();
  const double lse = max + std::log((logits.array() - max).exp().sum());
  return lse - logits(label);
}

struct TrainLoop {
  // shared between both heads: seeded epochs of Adam over minibatch graphs
  template <typename BatchLoss, typename DevEval>
  static void run(TrainedModel& model, size_t train_size, BatchLoss&& batch_loss,
                  DevEval&& dev_eval, Rng& rng) {
    auto params = model.encoder().parameters();
    params.push_back(model.head_weights);
    params.push_back(model.head_bias);
    nn::Adam adam(model.config.learning_rate);

    std::vector<size_t> order(train_size);
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= model.config.epochs; ++epoch) {
      rng.shuffle(order);
      const auto batch = static_cast<size_t>(model.config.batch_size);
      for (size_t start = 0; start < order.size(); start += batch) {
        const size_t stop = std::min(order.size(), start + batch);
        const auto loss = batch_loss(order, start, stop);
        if (!std::isfinite(loss->value(0, 0))) {
          throw std::runtime_error("fine_tune: non-finite training loss");
        }
        nn::zero_grads(params);
        nn::backward(loss);
        adam.step(params);
      }
      const auto [accuracy, loss] = dev_eval();
      model.epoch_metrics.push_back({epoch, accuracy, loss});
    }
  }
};

}  // namespace

TrainedModel fine_tune_classifier(const Checkpoint& checkpoint, const ModelVariant& variant,
                                  const std::vector<TextClassExample>& train,
                                  const std::vector<TextClassExample>& dev,
                                  const FinetuneConfig& config) {
  if (config.epochs < 1) throw std::invalid_argument("fine_tune: epochs must be >= 1");
  if (config.task_head == TaskHead::TagBio) {
    throw std::invalid_argument("fine_tune_classifier: task head must be a classifier");
  }
  if (train.empty()) throw std::invalid_argument("fine_tune: empty training split");

  TrainedModel model(checkpoint, variant, config);
  {
    std::set<std::string> distinct;
    for (const auto& ex : train) distinct.insert(ex.label);
    model.class_names.assign(distinct.begin(), distinct.end());
  }
  const int arity = head_arity(config.task_head);
  if (static_cast<int>(model.class_names.size()) != arity) {
    throw std::invalid_argument("fine_tune: head expects " + std::to_string(arity) +
                                " classes but the training data has " +
                                std::to_string(model.class_names.size()));
  }

  const int seq_len = model.effective_seq_len();
  auto label_index = [&](const std::string& label) {
    const auto it = std::lower_bound(model.class_names.begin(), model.class_names.end(), label);
    if (it == model.class_names.end() || *it != label) {
      throw std::invalid_argument("fine_tune: label '" + label + "' not seen in training data");
    }
    return static_cast<int>(it - model.class_names.begin());
  };
  auto tokenize = [&](const std::string& text) {
    return textprep::subword_tokenize(text, model.vocab(), model.cased(), seq_len).subtokens;
  };

  std::vector<std::vector<int>> train_ids, dev_ids;
  std::vector<int> train_y, dev_y;
  for (const auto& ex : train) {
    train_ids.push_back(tokenize(ex.text));
    train_y.push_back(label_index(ex.label));
  }
  for (const auto& ex : dev) {
    dev_ids.push_back(tokenize(ex.text));
    dev_y.push_back(label_index(ex.label));
  }

  Rng rng(config.seed);
  model.head_weights =
      nn::parameter(nn::random_normal(rng, checkpoint.config.hidden_dim, arity, 0.02));
  model.head_bias = nn::parameter(nn::Matrix::Zero(1, arity));

  auto batch_loss = [&](const std::vector<size_t>& order, size_t start, size_t stop) {
    std::vector<nn::NodePtr> logits;
    std::vector<int> labels;
    for (size_t i = start; i < stop; ++i) {
      const auto hidden = model.encoder().forward(train_ids[order[i]]);
      const auto cls = nn::rows(hidden, 0, 1);
      logits.push_back(nn::add_rowvec(nn::matmul(cls, model.head_weights), model.head_bias));
      labels.push_back(train_y[order[i]]);
    }
    return nn::cross_entropy_with_logits(nn::concat_rows(logits), labels);
  };
  auto dev_eval = [&]() -> std::pair<double, double> {
    if (dev_ids.empty()) return {0.0, 0.0};
    long correct = 0;
    double loss_sum = 0.0;
    for (size_t i = 0; i < dev_ids.size(); ++i) {
      const Eigen::MatrixXd hidden = model.encoder().forward(dev_ids[i])->value;
      const Eigen::RowVectorXd logits =
          hidden.row(0) * model.head_weights->value + model.head_bias->value.row(0);
      Eigen::Index best = 0;
      logits.maxCoeff(&best);
      if (static_cast<int>(best) == dev_y[i]) ++correct;
      loss_sum += row_cross_entropy(logits, dev_y[i]);
    }
    return {static_cast<double>(correct) / static_cast<double>(dev_ids.size()),
            loss_sum / static_cast<double>(dev_ids.size())};
  };

  TrainLoop::run(model, train.size(), batch_loss, dev_eval, rng);
  return model;
}

TrainedModel fine_tune_tagger(const Checkpoint& checkpoint, const ModelVariant& variant,
                              const std::vector<TokenTagExample>& train,
                              const std::vector<TokenTagExample>& dev,
                              const FinetuneConfig& config) {
  if (config.epochs < 1) throw std::invalid_argument("fine_tune: epochs must be >= 1");
  if (config.task_head != TaskHead::TagBio) {
    throw std::invalid_argument("fine_tune_tagger: task head must be tag_bio");
  }
  if (train.empty()) throw std::invalid_argument("fine_tune: empty training split");

  TrainedModel model(checkpoint, variant, config);
  model.class_names = {"B", "I", "O"};
  const int seq_len = model.effective_seq_len();

  struct Prepared {
    textprep::TokenizedText tokens;
    std::vector<int> aligned;  // per subtoken, kIgnoreTag on specials
    std::vector<textprep::BioTag> word_tags;
  };
  auto prepare = [&](const TokenTagExample& ex) {
    Prepared p;
    p.tokens = textprep::subword_tokenize(ex.text, model.vocab(), model.cased(), seq_len);
    p.aligned = textprep::align_bio_to_subtokens(p.tokens, ex.tags);
    p.word_tags = ex.tags;
    return p;
  };
  std::vector<Prepared> train_prep, dev_prep;
  for (const auto& ex : train) train_prep.push_back(prepare(ex));
  for (const auto& ex : dev) dev_prep.push_back(prepare(ex));

  Rng rng(config.seed);
  model.head_weights = nn::parameter(
      nn::random_normal(rng, checkpoint.config.hidden_dim, textprep::kNumBioTags, 0.02));
  model.head_bias = nn::parameter(nn::Matrix::Zero(1, textprep::kNumBioTags));

  auto batch_loss = [&](const std::vector<size_t>& order, size_t start, size_t stop) {
    std::vector<nn::NodePtr> logits;
    std::vector<int> labels;
    for (size_t i = start; i < stop; ++i) {
      const auto& prep = train_prep[order[i]];
      const auto hidden = model.encoder().forward(prep.tokens.subtokens);
      logits.push_back(nn::add_rowvec(nn::matmul(hidden, model.head_weights), model.head_bias));
      labels.insert(labels.end(), prep.aligned.begin(), prep.aligned.end());
    }
    return nn::cross_entropy_with_logits(nn::concat_rows(logits), labels);
  };
  auto dev_eval = [&]() -> std::pair<double, double> {
    if (dev_prep.empty()) return {0.0, 0.0};
    long words_correct = 0, words_total = 0, positions = 0;
    double loss_sum = 0.0;
    for (const auto& prep : dev_prep) {
      const Eigen::MatrixXd hidden = model.encoder().forward(prep.tokens.subtokens)->value;
      const Eigen::MatrixXd logits =
          (hidden * model.head_weights->value).rowwise() + model.head_bias->value.row(0);
      std::vector<textprep::BioTag> subtoken_tags;
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index best = 0;
        logits.row(r).maxCoeff(&best);
        subtoken_tags.push_back(static_cast<textprep::BioTag>(best));
        const int gold = prep.aligned[static_cast<size_t>(r)];
        if (gold >= 0) {
          loss_sum += row_cross_entropy(logits.row(r), gold);
          ++positions;
        }
      }
      const auto word_pred =
          textprep::project_subtoken_predictions_to_words(prep.tokens, subtoken_tags);
      for (size_t w = 0; w < word_pred.size(); ++w) {
        if (word_pred[w] == prep.word_tags[w]) ++words_correct;
        ++words_total;
      }
    }
    return {words_total == 0 ? 0.0
                             : static_cast<double>(words_correct) / static_cast<double>(words_total),
            positions == 0 ? 0.0 : loss_sum / static_cast<double>(positions)};
  };

  TrainLoop::run(model, train.size(), batch_loss, dev_eval, rng);
  return model;
}

std::vector<TextClassExample> to_class_examples(const corpus::SentimentBundle&,
                                                const std::vector<corpus::SentimentExample>& split) {
  std::vector<TextClassExample> out;
  out.reserve(split.size());
  for (const auto& ex : split) out.push_back({ex.text, corpus::to_string(ex.label)});
  return out;
}

std::vector<TextClassExample> to_class_examples(const std::vector<corpus::TweetRecord>& split) {
  std::vector<TextClassExample> out;
  out.reserve(split.size());
  for (const auto& record : split) {
    if (!record.text.has_value()) {
      throw std::invalid_argument("tweet " + record.tweet_id + " has no text; bundles must not");
    }
    out.push_back({*record.text, record.has_adr ? kAdrLabel : kNoAdrLabel});
  }
  return out;
}

std::vector<TokenTagExample> to_tag_examples(const std::vector<corpus::NerRecord>& split) {
  std::vector<TokenTagExample> out;
  out.reserve(split.size());
  for (const auto& record : split) out.push_back({record.text, record.bio_tags});
  return out;
}

TrainedModel fine_tune(const Checkpoint& checkpoint, const ModelVariant& variant,
                       const corpus::SentimentBundle& bundle, FinetuneConfig config) {
  config.task_head = TaskHead::Classify3;
  return fine_tune_classifier(checkpoint, variant, to_class_examples(bundle, bundle.train),
                              to_class_examples(bundle, bundle.dev), config);
}

TrainedModel fine_tune(const Checkpoint& checkpoint, const ModelVariant& variant,
                       const corpus::PresenceBundle& bundle, FinetuneConfig config) {
  config.task_head = TaskHead::Classify2;
  return fine_tune_classifier(checkpoint, variant, to_class_examples(bundle.train),
                              to_class_examples(bundle.dev), config);
}

TrainedModel fine_tune(const Checkpoint& checkpoint, const ModelVariant& variant,
                       const corpus::NerBundle& bundle, FinetuneConfig config) {
  config.task_head = TaskHead::TagBio;
  return fine_tune_tagger(checkpoint, variant, to_tag_examples(bundle.train),
                          to_tag_examples(bundle.dev), config);
}

ClassifyPrediction predict_classify(const TrainedModel& model,
                                    const std::vector<std::string>& texts) {
  if (model.config.task_head == TaskHead::TagBio) {
    throw std::invalid_argument("predict_classify: model head is a tagger");
  }
  const auto k = static_cast<Eigen::Index>(model.class_names.size());
  ClassifyPrediction out;
  out.probabilities.resize(static_cast<Eigen::Index>(texts.size()), k);
  const int seq_len = model.effective_seq_len();
  for (size_t i = 0; i < texts.size(); ++i) {
    const auto tokens = textprep::subword_tokenize(texts[i], model.vocab(), model.cased(), seq_len);
    const Eigen::MatrixXd hidden = model.encoder().forward(tokens.subtokens)->value;
    const Eigen::RowVectorXd logits =
        hidden.row(0) * model.head_weights->value + model.head_bias->value.row(0);
    const Eigen::RowVectorXd probs = softmax_row(logits);
    out.probabilities.row(static_cast<Eigen::Index>(i)) = probs;
    Eigen::Index best = 0;
    probs.maxCoeff(&best);
    out.labels.push_back(model.class_names[static_cast<size_t>(best)]);
  }
  return out;
}

std::vector<std::vector<textprep::BioTag>> predict_tags(const TrainedModel& model,
                                                        const std::vector<std::string>& texts) {
  if (model.config.task_head != TaskHead::TagBio) {
    throw std::invalid_argument("predict_tags: model head is not tag_bio");
  }
  const int seq_len = model.effective_seq_len();
  std::vector<std::vector<textprep::BioTag>> out;
  for (const auto& text : texts) {
    const auto tokens = textprep::subword_tokenize(text, model.vocab(), model.cased(), seq_len);
    const Eigen::MatrixXd hidden = model.encoder().forward(tokens.subtokens)->value;
    const Eigen::MatrixXd logits =
        (hidden * model.head_weights->value).rowwise() + model.head_bias->value.row(0);
    std::vector<textprep::BioTag> subtoken_tags;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index best = 0;
      logits.row(r).maxCoeff(&best);
      subtoken_tags.push_back(static_cast<textprep::BioTag>(best));
    }
    out.push_back(textprep::project_subtoken_predictions_to_words(tokens, subtoken_tags));
  }
  return out;
}

ExtractedFeatures extract_embeddings(const Encoder& encoder, const textprep::SubwordVocab& vocab,
                                     bool cased, VariantKey key, bool from_finetuned,
                                     const std::vector<std::string>& texts, int max_seq_len) {
  const int seq_len = std::min(max_seq_len, encoder.config().max_position);
  ExtractedFeatures out;
  out.source_variant = key;
  out.from_finetuned = from_finetuned;
  const auto d = static_cast<Eigen::Index>(encoder.config().hidden_dim);
  out.cls_vectors.resize(static_cast<Eigen::Index>(texts.size()), d);

  std::vector<Eigen::MatrixXd> hiddens;
  Eigen::Index batch_max = 0;
  for (size_t i = 0; i < texts.size(); ++i) {
    const auto tokens = textprep::subword_tokenize(texts[i], vocab, cased, seq_len);
    hiddens.push_back(encoder.forward(tokens.subtokens)->value);
    batch_max = std::max(batch_max, hiddens.back().rows());
  }
  for (size_t i = 0; i < hiddens.size(); ++i) {
    const auto& hidden = hiddens[i];
    out.cls_vectors.row(static_cast<Eigen::Index>(i)) = hidden.row(0);
    std::vector<Eigen::VectorXd> rows;
    rows.reserve(static_cast<size_t>(hidden.rows()));
    for (Eigen::Index r = 0; r < hidden.rows(); ++r) rows.push_back(hidden.row(r).transpose());
    out.token_matrices.push_back(textprep::front_pad(rows, batch_max));
  }
  return out;
}

ExtractedFeatures extract_embeddings(const Checkpoint& checkpoint, VariantKey key,
                                     const std::vector<std::string>& texts, int max_seq_len) {
  return extract_embeddings(checkpoint.encoder, checkpoint.vocab, checkpoint.cased, key, false,
                            texts, max_seq_len);
}

ExtractedFeatures extract_embeddings(const TrainedModel& model,
                                     const std::vector<std::string>& texts) {
  return extract_embeddings(model.encoder(), model.vocab(), model.cased(), model.variant.key, true,
                            texts, model.config.max_seq_len);
}

void TrainedModel::save(const std::filesystem::path& dir) const {
  save_checkpoint(dir, state_.encoder, state_.vocab, state_.cased);
  nlohmann::json j;
  j["format"] = "pharmvig.trained_model";
  j["version"] = 1;
  j["variant"] = {{"key", finetune::to_string(variant.key)},
                  {"checkpoint_ref", variant.checkpoint_ref},
                  {"cased", variant.cased},
                  {"hidden_dim", variant.hidden_dim}};
  j["config"] = config.to_json();
  j["class_names"] = class_names;
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& m : epoch_metrics) {
    metrics.push_back(
        {{"epoch", m.epoch}, {"dev_accuracy", m.dev_accuracy}, {"dev_loss", m.dev_loss}});
  }
  j["epoch_metrics"] = metrics;
  const auto& w = head_weights->value;
  j["head_rows"] = w.rows();
  j["head_cols"] = w.cols();
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(w.size()));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
  }
  j["head_weights"] = flat;
  std::vector<double> bias(head_bias->value.data(),
                           head_bias->value.data() + head_bias->value.size());
  j["head_bias"] = bias;
  atomic_write_file(dir / "head.json", j.dump(2) + "\n");
}

TrainedModel TrainedModel::load(const std::filesystem::path& dir) {
  auto checkpoint = load_checkpoint(dir);
  const auto j = nlohmann::json::parse(read_file(dir / "head.json"));
  if (j.at("format") != "pharmvig.trained_model" || j.at("version") != 1) {
    throw std::runtime_error("unrecognized trained model format at " + dir.string());
  }
  ModelVariant variant;
  const auto key = parse_variant_key(j.at("variant").at("key").get<std::string>());
  if (!key) throw std::runtime_error("trained model: bad variant key");
  variant.key = *key;
  variant.checkpoint_ref = j.at("variant").at("checkpoint_ref").get<std::string>();
  variant.cased = j.at("variant").at("cased").get<bool>();
  variant.hidden_dim = j.at("variant").at("hidden_dim").get<int>();

  TrainedModel model(std::move(checkpoint), variant,
                     FinetuneConfig::from_json(j.at("config")));
  model.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const auto& m : j.at("epoch_metrics")) {
    model.epoch_metrics.push_back({m.at("epoch").get<int>(), m.at("dev_accuracy").get<double>(),
                                   m.at("dev_loss").get<double>()});
  }
  const auto rows = j.at("head_rows").get<Eigen::Index>();
  const auto cols = j.at("head_cols").get<Eigen::Index>();
  const auto flat = j.at("head_weights").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw std::runtime_error("trained model: head weight size mismatch");
  }
  nn::Matrix w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = flat[static_cast<size_t>(r * cols + c)];
  }
  model.head_weights = nn::parameter(std::move(w));
  const auto bias = j.at("head_bias").get<std::vector<double>>();
  nn::Matrix b(1, static_cast<Eigen::Index>(bias.size()));
  for (size_t c = 0; c < bias.size(); ++c) b(0, static_cast<Eigen::Index>(c)) = bias[c];
  model.head_bias = nn::parameter(std::move(b));
  return model;
}

}  // namespace pharmvig::finetune
