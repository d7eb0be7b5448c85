#include "headlab/model.hpp"

#include <cmath>
#include <json.hpp>
#include <string>

#include "headlab/errors.hpp"
#include "headlab/numerics/activations.hpp"

namespace headlab {

using nlohmann::json;

void ModelConfig::validate() const {
  if (heads <= 0 || head_dim <= 0 || hidden <= 0 || input_dim <= 0 || length <= 0)
    throw InvalidInput("model config: h, n, N, d and T must all be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidInput("model config: beta must be positive");
}

std::vector<Matrix*> TransformerParams::tensors() {
  std::vector<Matrix*> out{&enc_w1, &enc_b1, &enc_w2, &enc_b2, &cls};
  for (auto* group : {&w_q, &w_k, &w_v})
    for (auto& m : *group) out.push_back(&m);
  for (auto* m : {&w_o, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2}) out.push_back(m);
  return out;
}

std::vector<const Matrix*> TransformerParams::tensors() const {
  auto mut = const_cast<TransformerParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> TransformerParams::tensor_names() const {
  std::vector<std::string> out{"enc_w1", "enc_b1", "enc_w2", "enc_b2", "cls"};
  for (const char* g : {"w_q", "w_k", "w_v"})
    for (Eigen::Index i = 0; i < config.heads; ++i) out.push_back(std::string(g) + "_" + std::to_string(i));
  for (const char* m : {"w_o", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2"}) out.emplace_back(m);
  return out;
}

namespace {

struct Shape {
  Eigen::Index rows, cols, fan_in;
};

// Shapes in tensors() order, with the fan-in used for initialization.
std::vector<Shape> expected_shapes(const ModelConfig& c) {
  const auto E = c.embed_dim();
  const auto N = c.hidden;
  const auto d = c.input_dim;
  std::vector<Shape> s{{N, d, d}, {1, N, d}, {E, N, N}, {1, E, N}, {1, E, E}};
  for (int g = 0; g < 3; ++g)
    for (Eigen::Index i = 0; i < c.heads; ++i) s.push_back({c.head_dim, E, E});
  s.push_back({E, E, E});
  s.push_back({N, E, E});
  s.push_back({1, N, E});
  s.push_back({1, N, N});
  s.push_back({1, 1, N});
  return s;
}

}  // namespace

void TransformerParams::validate() const {
  config.validate();
  if (static_cast<Eigen::Index>(w_q.size()) != config.heads || w_k.size() != w_q.size() || w_v.size() != w_q.size())
    throw InvalidInput("params: per-head tensor count differs from h");
  const auto shapes = expected_shapes(config);
  const auto ts = tensors();
  const auto names = tensor_names();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ts[i]->rows() != shapes[i].rows || ts[i]->cols() != shapes[i].cols)
      throw InvalidInput("params: tensor " + names[i] + " is " + std::to_string(ts[i]->rows()) + "x" +
                         std::to_string(ts[i]->cols()) + ", expected " + std::to_string(shapes[i].rows) + "x" +
                         std::to_string(shapes[i].cols));
  }
}

TransformerParams init_params(const ModelConfig& config, CounterRng rng) {
  config.validate();
  TransformerParams p;
  p.config = config;
  p.w_q.resize(static_cast<std::size_t>(config.heads));
  p.w_k.resize(p.w_q.size());
  p.w_v.resize(p.w_q.size());
  const auto shapes = expected_shapes(config);
  auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shapes[i].fan_in));
    auto r = rng.split(static_cast<std::uint64_t>(i));
    *ts[i] = r.uniform_matrix(shapes[i].rows, shapes[i].cols, -bound, bound);
  }
  return p;
}

ParameterCount parameter_count(const ModelConfig& c) {
  c.validate();
  const auto d = static_cast<std::size_t>(c.input_dim);
  const auto N = static_cast<std::size_t>(c.hidden);
  const auto E = static_cast<std::size_t>(c.embed_dim());
  const auto n = static_cast<std::size_t>(c.head_dim);
  const auto h = static_cast<std::size_t>(c.heads);
  ParameterCount k;
  k.encoder = d * N + N + N * E + E;
  k.ffn = E * N + N + N + 1;
  k.attention = 3 * h * n * E + E * E + E;
  return k;
}

ParameterCount parameter_count(const TransformerParams& params) {
  params.validate();
  return parameter_count(params.config);
}

namespace {

void check_sequence(const ModelConfig& c, const Sequence& x) {
  if (x.length() != c.length || x.dim() != c.input_dim)
    throw InvalidInput("forward: sequence is " + std::to_string(x.length()) + "x" + std::to_string(x.dim()) +
                       ", model expects " + std::to_string(c.length) + "x" + std::to_string(c.input_dim));
}

Matrix encode(const TransformerParams& p, const Matrix& tokens) {
  Matrix hidden = relu((tokens * p.enc_w1.transpose()).rowwise() + p.enc_b1.row(0));
  Matrix out = hidden * p.enc_w2.transpose();
  out.rowwise() += p.enc_b2.row(0);
  return out;
}

// Everything up to the feed-forward block for one sequence.
Vector attend(const TransformerParams& p, const Matrix& embedded, Matrix* weights) {
  const auto& c = p.config;
  const Vector cls = p.cls.row(0).transpose();
  Vector concat(c.embed_dim());
  for (Eigen::Index i = 0; i < c.heads; ++i) {
    const auto hi = static_cast<std::size_t>(i);
    const Vector query = p.w_q[hi] * cls;
    const Vector key_dir = p.w_k[hi].transpose() * query;
    const Vector scores = embedded * key_dir;
    const Vector attn = softmax_beta(scores, c.beta);
    if (weights) weights->row(i) = attn.transpose();
    const Vector pooled = embedded.transpose() * attn;
    concat.segment(i * c.head_dim, c.head_dim) = p.w_v[hi] * pooled;
  }
  return cls + p.w_o * concat;
}

double feed_forward(const TransformerParams& p, const Vector& z) {
  const RowVector hidden = gelu((z.transpose() * p.ffn_w1.transpose() + p.ffn_b1.row(0)).eval());
  return hidden.dot(p.ffn_w2.row(0)) + p.ffn_b2(0, 0);
}

}  // namespace

Vector post_attention(const TransformerParams& params, const Sequence& x) {
  check_sequence(params.config, x);
  return attend(params, encode(params, x.tokens), nullptr);
}

Matrix attention_weights(const TransformerParams& params, const Sequence& x) {
  check_sequence(params.config, x);
  Matrix w(params.config.heads, params.config.length);
  attend(params, encode(params, x.tokens), &w);
  return w;
}

double forward(const TransformerParams& params, const Sequence& x) {
  return feed_forward(params, post_attention(params, x));
}

Vector forward_batch(const TransformerParams& params, const Matrix& tokens, Eigen::Index batch) {
  const auto& c = params.config;
  if (batch <= 0 || tokens.rows() != batch * c.length || tokens.cols() != c.input_dim)
    throw InvalidInput("forward_batch: tokens must be (batch*T) x d");
  const Matrix embedded = encode(params, tokens);
  Vector out(batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    out(b) = feed_forward(params, attend(params, embedded.middleRows(b * c.length, c.length), nullptr));
  return out;
}

LossGraph build_loss_graph(const TransformerParams& params, const Matrix& tokens, const Vector& targets) {
  const auto& c = params.config;
  const auto B = targets.size();
  if (B <= 0 || tokens.rows() != B * c.length || tokens.cols() != c.input_dim)
    throw InvalidInput("build_loss_graph: tokens must be (B*T) x d with B = targets.size()");
  LossGraph g;
  auto& t = g.tape;
  for (const Matrix* m : params.tensors()) g.params.push_back(t.parameter(*m));
  std::size_t k = 0;
  const auto enc_w1 = g.params[k++], enc_b1 = g.params[k++], enc_w2 = g.params[k++], enc_b2 = g.params[k++];
  const auto cls = g.params[k++];
  const auto h = static_cast<std::size_t>(c.heads);
  const std::size_t q0 = k, k0 = k + h, v0 = k + 2 * h;
  k += 3 * h;
  const auto w_o = g.params[k++], f_w1 = g.params[k++], f_b1 = g.params[k++], f_w2 = g.params[k++],
             f_b2 = g.params[k++];

  const auto x = g.tokens = t.constant(tokens);
  const auto hidden = t.relu(t.add_row(t.matmul_nt(x, enc_w1), enc_b1));
  const auto embedded = t.add_row(t.matmul_nt(hidden, enc_w2), enc_b2);  // (B*T) x E
  std::vector<Tape::Var> heads;
  for (std::size_t i = 0; i < h; ++i) {
    const auto query = t.matmul_nt(cls, g.params[q0 + i]);      // 1 x n
    const auto key_dir = t.matmul(query, g.params[k0 + i]);     // 1 x E
    const auto scores = t.matmul_nt(embedded, key_dir);         // (B*T) x 1
    const auto attn = t.softmax_rows(t.reshape(scores, B, c.length), c.beta);
    const auto pooled = t.segment_weighted_sum(attn, embedded);  // B x E
    heads.push_back(t.matmul_nt(pooled, g.params[v0 + i]));     // B x n
  }
  const auto concat = t.hconcat(heads);
  const auto z = t.add_row(t.matmul_nt(concat, w_o), cls);
  const auto ffn_hidden = t.gelu(t.add_row(t.matmul_nt(z, f_w1), f_b1));
  g.prediction = t.add_row(t.matmul_nt(ffn_hidden, f_w2), f_b2);
  g.targets = t.constant(targets);
  const auto residual = t.sub(g.prediction, g.targets);
  g.loss = t.scale(t.sum(t.hadamard(residual, residual)), 1.0 / static_cast<double>(B));
  return g;
}

void LossGraph::load(const TransformerParams& p, const Matrix& x, const Vector& y) {
  const auto ts = p.tensors();
  if (ts.size() != params.size()) throw InvalidInput("LossGraph::load: parameter layout differs");
  for (std::size_t k = 0; k < ts.size(); ++k) tape.set_value(params[k], *ts[k]);
  tape.set_value(tokens, x);
  tape.set_value(targets, y);
}

Matrix stack_tokens(const std::vector<Record>& records, std::span<const std::size_t> idx) {
  if (idx.empty()) throw InvalidInput("stack_tokens: empty selection");
  const auto T = records.at(idx[0]).x.length();
  const auto d = records.at(idx[0]).x.dim();
  Matrix out(static_cast<Eigen::Index>(idx.size()) * T, d);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& tok = records.at(idx[b]).x.tokens;
    if (tok.rows() != T || tok.cols() != d) throw InvalidInput("stack_tokens: mixed sequence shapes");
    out.middleRows(static_cast<Eigen::Index>(b) * T, T) = tok;
  }
  return out;
}

std::string checkpoint_to_json(const TransformerParams& params) {
  params.validate();
  const auto& c = params.config;
  json j;
  j["config"] = {{"heads", c.heads}, {"head_dim", c.head_dim}, {"hidden", c.hidden},
                 {"input_dim", c.input_dim}, {"length", c.length}, {"beta", c.beta}};
  json tensors = json::object();
  const auto names = params.tensor_names();
  const auto ts = params.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    std::vector<double> data(ts[i]->data(), ts[i]->data() + ts[i]->size());
    tensors[names[i]] = {{"rows", ts[i]->rows()}, {"cols", ts[i]->cols()}, {"data", data}};
  }
  j["tensors"] = std::move(tensors);
  return j.dump();
}

TransformerParams checkpoint_from_json(const std::string& text) {
  const auto j = json::parse(text);
  const auto& jc = j.at("config");
  TransformerParams p;
  p.config.heads = jc.at("heads").get<Eigen::Index>();
  p.config.head_dim = jc.at("head_dim").get<Eigen::Index>();
  p.config.hidden = jc.at("hidden").get<Eigen::Index>();
  p.config.input_dim = jc.at("input_dim").get<Eigen::Index>();
  p.config.length = jc.at("length").get<Eigen::Index>();
  p.config.beta = jc.at("beta").get<double>();
  p.config.validate();
  p.w_q.resize(static_cast<std::size_t>(p.config.heads));
  p.w_k.resize(p.w_q.size());
  p.w_v.resize(p.w_q.size());
  const auto names = p.tensor_names();
  auto ts = p.tensors();
  const auto& jt = j.at("tensors");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& e = jt.at(names[i]);
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    const auto data = e.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw InvalidInput("checkpoint: tensor " + names[i] + " has wrong element count");
    *ts[i] = Eigen::Map<const Matrix>(data.data(), rows, cols);
  }
  p.validate();
  return p;
}

}  // namespace headlab
