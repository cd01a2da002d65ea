#include "pharmvig/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "pharmvig/io.hpp"

namespace pharmvig::finetune {

namespace {

constexpr char kWeightsMagic[4] = {'P', 'V', 'W', 'T'};
constexpr uint32_t kWeightsVersion = 1;
constexpr double kInitStddev = 0.02;

void validate(const EncoderConfig& c) {
  if (c.vocab_size < 5 || c.hidden_dim < 1 || c.num_layers < 1 || c.num_heads < 1 ||
      c.ffn_dim < 1 || c.max_position < 2) {
    throw std::invalid_argument("encoder config has out-of-range dimensions");
  }
  if (c.hidden_dim % c.num_heads != 0) {
    throw std::invalid_argument("hidden_dim must be divisible by num_heads");
  }
}

}  // namespace

Encoder::Encoder(const EncoderConfig& config, uint64_t init_seed) : config_(config) {
  validate(config_);
  Rng rng(init_seed);
  const auto d = static_cast<Eigen::Index>(config_.hidden_dim);
  const auto ffn = static_cast<Eigen::Index>(config_.ffn_dim);

  token_embeddings_ = nn::parameter(nn::random_normal(rng, config_.vocab_size, d, kInitStddev));
  position_embeddings_ =
      nn::parameter(nn::random_normal(rng, config_.max_position, d, kInitStddev));
  embedding_ln_gamma_ = nn::parameter(nn::Matrix::Ones(1, d));
  embedding_ln_beta_ = nn::parameter(nn::Matrix::Zero(1, d));

  layers_.resize(static_cast<size_t>(config_.num_layers));
  for (auto& layer : layers_) {
    layer.wq = nn::parameter(nn::random_normal(rng, d, d, kInitStddev));
    layer.bq = nn::parameter(nn::Matrix::Zero(1, d));
    layer.wk = nn::parameter(nn::random_normal(rng, d, d, kInitStddev));
    layer.bk = nn::parameter(nn::Matrix::Zero(1, d));
    layer.wv = nn::parameter(nn::random_normal(rng, d, d, kInitStddev));
    layer.bv = nn::parameter(nn::Matrix::Zero(1, d));
    layer.wo = nn::parameter(nn::random_normal(rng, d, d, kInitStddev));
    layer.bo = nn::parameter(nn::Matrix::Zero(1, d));
    layer.ln1_gamma = nn::parameter(nn::Matrix::Ones(1, d));
    layer.ln1_beta = nn::parameter(nn::Matrix::Zero(1, d));
    layer.w1 = nn::parameter(nn::random_normal(rng, d, ffn, kInitStddev));
    layer.b1 = nn::parameter(nn::Matrix::Zero(1, ffn));
    layer.w2 = nn::parameter(nn::random_normal(rng, ffn, d, kInitStddev));
    layer.b2 = nn::parameter(nn::Matrix::Zero(1, d));
    layer.ln2_gamma = nn::parameter(nn::Matrix::Ones(1, d));
    layer.ln2_beta = nn::parameter(nn::Matrix::Zero(1, d));
  }
}

Encoder::Encoder(const Encoder& other) : Encoder(other.config_, 0) {
  const auto mine = named_parameters();
  const auto theirs = other.named_parameters();
  for (size_t i = 0; i < mine.size(); ++i) mine[i].second->value = theirs[i].second->value;
}

Encoder& Encoder::operator=(const Encoder& other) {
  if (this != &other) {
    Encoder copy(other);
    *this = std::move(copy);
  }
  return *this;
}

nn::NodePtr Encoder::forward(const std::vector<int>& ids) const {
  if (ids.empty()) throw std::invalid_argument("Encoder::forward: empty input");
  if (static_cast<int>(ids.size()) > config_.max_position) {
    throw std::invalid_argument("Encoder::forward: sequence longer than max_position");
  }
  const auto len = static_cast<Eigen::Index>(ids.size());
  const int heads = config_.num_heads;
  const Eigen::Index head_dim = config_.hidden_dim / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  auto x = nn::add(nn::embedding_rows(token_embeddings_, ids),
                   nn::rows(position_embeddings_, 0, len));
  x = nn::layer_norm_rows(x, embedding_ln_gamma_, embedding_ln_beta_);

  for (const auto& layer : layers_) {
    const auto q = nn::add_rowvec(nn::matmul(x, layer.wq), layer.bq);
    const auto k = nn::add_rowvec(nn::matmul(x, layer.wk), layer.bk);
    const auto v = nn::add_rowvec(nn::matmul(x, layer.wv), layer.bv);
    std::vector<nn::NodePtr> head_outputs;
    head_outputs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto qh = nn::cols(q, h * head_dim, head_dim);
      const auto kh = nn::cols(k, h * head_dim, head_dim);
      const auto vh = nn::cols(v, h * head_dim, head_dim);
      const auto attention = nn::softmax_rows(nn::scale(nn::matmul_nt(qh, kh), att_scale));
      head_outputs.push_back(nn::matmul(attention, vh));
    }
    const auto context = nn::concat_cols(head_outputs);
    const auto attended = nn::add_rowvec(nn::matmul(context, layer.wo), layer.bo);
    x = nn::layer_norm_rows(nn::add(x, attended), layer.ln1_gamma, layer.ln1_beta);

    auto ff = nn::gelu(nn::add_rowvec(nn::matmul(x, layer.w1), layer.b1));
    ff = nn::add_rowvec(nn::matmul(ff, layer.w2), layer.b2);
    x = nn::layer_norm_rows(nn::add(x, ff), layer.ln2_gamma, layer.ln2_beta);
  }
  return x;
}

std::vector<std::pair<std::string, nn::NodePtr>> Encoder::named_parameters() const {
  std::vector<std::pair<std::string, nn::NodePtr>> out;
  out.emplace_back("tok_emb", token_embeddings_);
  out.emplace_back("pos_emb", position_embeddings_);
  out.emplace_back("emb_ln_g", embedding_ln_gamma_);
  out.emplace_back("emb_ln_b", embedding_ln_beta_);
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    out.emplace_back(prefix + "wq", l.wq);
    out.emplace_back(prefix + "bq", l.bq);
    out.emplace_back(prefix + "wk", l.wk);
    out.emplace_back(prefix + "bk", l.bk);
    out.emplace_back(prefix + "wv", l.wv);
    out.emplace_back(prefix + "bv", l.bv);
    out.emplace_back(prefix + "wo", l.wo);
    out.emplace_back(prefix + "bo", l.bo);
    out.emplace_back(prefix + "ln1_g", l.ln1_gamma);
    out.emplace_back(prefix + "ln1_b", l.ln1_beta);
    out.emplace_back(prefix + "w1", l.w1);
    out.emplace_back(prefix + "b1", l.b1);
    out.emplace_back(prefix + "w2", l.w2);
    out.emplace_back(prefix + "b2", l.b2);
    out.emplace_back(prefix + "ln2_g", l.ln2_gamma);
    out.emplace_back(prefix + "ln2_b", l.ln2_beta);
  }
  return out;
}

std::vector<nn::NodePtr> Encoder::parameters() const {
  std::vector<nn::NodePtr> out;
  for (auto& [name, node] : named_parameters()) out.push_back(node);
  return out;
}

namespace {

void write_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf += static_cast<char>((v >> (8 * i)) & 0xFF);
}

uint32_t read_u32(const std::string& buf, size_t& pos) {
  if (pos + 4 > buf.size()) throw std::runtime_error("weights file truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
  return v;
}

}  // namespace

void Encoder::save_weights(const std::filesystem::path& path) const {
  std::string buf;
  buf.append(kWeightsMagic, 4);
  write_u32(buf, kWeightsVersion);
  const auto named = named_parameters();
  write_u32(buf, static_cast<uint32_t>(named.size()));
  for (const auto& [name, node] : named) {
    write_u32(buf, static_cast<uint32_t>(name.size()));
    buf += name;
    write_u32(buf, static_cast<uint32_t>(node->value.rows()));
    write_u32(buf, static_cast<uint32_t>(node->value.cols()));
    for (Eigen::Index r = 0; r < node->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < node->value.cols(); ++c) {
        const double v = node->value(r, c);
        char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        buf.append(bytes, sizeof(double));
      }
    }
  }
  atomic_write_file(path, buf);
}

void Encoder::load_weights(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  size_t pos = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kWeightsMagic, 4) != 0) {
    throw std::runtime_error(path.string() + ": not a weights file");
  }
  pos = 4;
  if (read_u32(buf, pos) != kWeightsVersion) {
    throw std::runtime_error(path.string() + ": unsupported weights version");
  }
  const auto named = named_parameters();
  const uint32_t count = read_u32(buf, pos);
  if (count != named.size()) {
    throw std::runtime_error(path.string() + ": tensor count mismatch");
  }
  for (const auto& [name, node] : named) {
    const uint32_t name_len = read_u32(buf, pos);
    if (pos + name_len > buf.size()) throw std::runtime_error("weights file truncated");
    const std::string stored(buf.data() + pos, name_len);
    pos += name_len;
    if (stored != name) {
      throw std::runtime_error(path.string() + ": expected tensor " + name + ", found " + stored);
    }
    const auto rows = static_cast<Eigen::Index>(read_u32(buf, pos));
    const auto cols = static_cast<Eigen::Index>(read_u32(buf, pos));
    if (rows != node->value.rows() || cols != node->value.cols()) {
      throw std::runtime_error(path.string() + ": shape mismatch for tensor " + name);
    }
    if (pos + sizeof(double) * static_cast<size_t>(rows * cols) > buf.size()) {
      throw std::runtime_error("weights file truncated");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v;
        std::memcpy(&v, buf.data() + pos, sizeof(double));
        pos += sizeof(double);
        node->value(r, c) = v;
      }
    }
  }
}

void save_checkpoint(const std::filesystem::path& dir, const Encoder& encoder,
                     const textprep::SubwordVocab& vocab, bool cased) {
  std::filesystem::create_directories(dir);
  const auto& c = encoder.config();
  if (static_cast<size_t>(c.vocab_size) != vocab.size()) {
    throw std::invalid_argument("save_checkpoint: vocabulary size does not match the encoder");
  }
  nlohmann::json config;
  config["vocab_size"] = c.vocab_size;
  config["hidden_dim"] = c.hidden_dim;
  config["num_layers"] = c.num_layers;
  config["num_heads"] = c.num_heads;
  config["ffn_dim"] = c.ffn_dim;
  config["max_position"] = c.max_position;
  config["cased"] = cased;
  atomic_write_file(dir / "config.json", config.dump(2) + "\n");
  vocab.save(dir / "vocab.txt");
  encoder.save_weights(dir / "weights.bin");
}

bool checkpoint_exists(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / "config.json") &&
         std::filesystem::exists(dir / "vocab.txt") &&
         std::filesystem::exists(dir / "weights.bin");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!checkpoint_exists(dir)) {
    throw std::runtime_error("checkpoint not found at " + dir.string() +
                             " (need config.json, vocab.txt, weights.bin)");
  }
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(read_file(dir / "config.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(dir.string() + "/config.json: " + e.what());
  }
  EncoderConfig cfg;
  cfg.vocab_size = config.at("vocab_size").get<int>();
  cfg.hidden_dim = config.at("hidden_dim").get<int>();
  cfg.num_layers = config.at("num_layers").get<int>();
  cfg.num_heads = config.at("num_heads").get<int>();
  cfg.ffn_dim = config.at("ffn_dim").get<int>();
  cfg.max_position = config.at("max_position").get<int>();

  Checkpoint ck{cfg, config.at("cased").get<bool>(),
                textprep::SubwordVocab::load(dir / "vocab.txt"), Encoder(cfg, 0)};
  if (ck.vocab.size() != static_cast<size_t>(cfg.vocab_size)) {
    throw std::runtime_error(dir.string() + ": vocab.txt size does not match config.json");
  }
  ck.encoder.load_weights(dir / "weights.bin");
  return ck;
}

}  // namespace pharmvig::finetune
