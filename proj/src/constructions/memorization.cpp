#include "headlab/constructions/memorization.hpp"

#include <cmath>

#include "headlab/constructions/relu_max.hpp"
#include "headlab/errors.hpp"
#include "headlab/numerics/activations.hpp"

namespace headlab {

namespace {

DenseNet component_net(const RetrievalTask& task, std::size_t i, const MemorizationOptions& options,
                       double& delta) {
  const auto& comp = task.components[i];
  DenseNet net;
  delta = 0.0;
  if (!options.components.empty() && !options.components[i].net.layers.empty()) {
    net = options.components[i].net;
    delta = options.components[i].delta;
    net.validate();
    if (net.depth() != 2 || net.input_dim() != task.dim || net.output_dim() != 1)
      throw InvalidInput("build_memorization_model: component nets must be 2-layer maps R^d -> R");
    if (comp.mode == Extremum::Max) {
      auto& last = net.layers.back();
      last.weight = -last.weight;
      last.bias = Vector::Ones(1) - last.bias;
    }
    return net;
  }
  if (!comp.affine)
    throw ConstructionError("build_memorization_model: component " + std::to_string(i) +
                            " is not affine and no net was supplied");
  AffineMap f = *comp.affine;
  double lo = f.bias, hi = f.bias;
  for (Eigen::Index k = 0; k < f.weights.size(); ++k) {
    lo += std::min(f.weights(k), 0.0);
    hi += std::max(f.weights(k), 0.0);
  }
  if (lo < -1e-12 || hi > 1.0 + 1e-12)
    throw ConstructionError("build_memorization_model: component " + std::to_string(i) +
                            " does not map [0,1]^d into [0,1]");
  if (comp.mode == Extremum::Max) {
    f.weights = -f.weights;
    f.bias = 1.0 - f.bias;
  }
  return exact_affine_net(f);
}

}  // namespace

MemorizationModel build_memorization_model(const RetrievalTask& task, double epsilon,
                                           const MemorizationOptions& options) {
  task.validate();
  if (!(epsilon > 0.0) || epsilon > 1.0) throw InvalidInput("build_memorization_model: eps must lie in (0, 1]");
  const Eigen::Index T = task.length, d = task.dim, D = task.intrinsic_dimension();
  const Eigen::Index n = options.embed_dim == 0 ? T * d : options.embed_dim;
  if (n < T * d)
    throw ConstructionError("build_memorization_model: needs n >= T d = " + std::to_string(T * d) +
                            ", got n = " + std::to_string(n));
  if (!options.components.empty() && static_cast<Eigen::Index>(options.components.size()) != D)
    throw InvalidInput("build_memorization_model: one component net per component required");

  MemorizationModel m;
  m.length = T;
  m.dim = d;
  m.embed = n;
  m.resolution = static_cast<Eigen::Index>(std::ceil(1.0 / epsilon - 1e-12));
  m.cls = Vector::Zero(n);
  m.w_q = Matrix::Zero(n, n);
  m.w_k = Matrix::Zero(n, n);
  m.w_v = Matrix::Identity(n, n);
  m.w_o = Matrix::Identity(n, n);

  // F1: for every (i, t in S_i) a copy of Psi_i reading block t scaled by T.
  std::vector<DenseNet> psi;
  double delta = 0.0;
  Eigen::Index rows_hidden = 0, rows_out = 0;
  for (std::size_t i = 0; i < task.components.size(); ++i) {
    double di = 0.0;
    psi.push_back(component_net(task, i, options, di));
    delta = std::max(delta, di);
    const auto copies = static_cast<Eigen::Index>(task.components[i].index_set.size());
    rows_hidden += copies * psi.back().layers[0].out_dim();
    rows_out += copies;
  }
  DenseLayer h1{Matrix::Zero(rows_hidden, n), Vector(rows_hidden), true};
  DenseLayer o1{Matrix::Zero(rows_out, rows_hidden), Vector(rows_out), false};
  Eigen::Index rh = 0, ro = 0;
  const double scale = static_cast<double>(T);
  for (std::size_t i = 0; i < task.components.size(); ++i) {
    const auto& a = psi[i].layers[0];
    const auto& b = psi[i].layers[1];
    for (auto t : task.components[i].index_set) {
      h1.weight.block(rh, t * d, a.out_dim(), d) = scale * a.weight;
      h1.bias.segment(rh, a.out_dim()) = a.bias;
      o1.weight.block(ro, rh, 1, a.out_dim()) = b.weight;
      o1.bias(ro) = b.bias(0);
      rh += a.out_dim();
      ++ro;
    }
  }
  m.f1.layers = {std::move(h1), std::move(o1)};

  // F2: ReLU min over each index set.
  std::vector<DenseNet> mins;
  for (const auto& comp : task.components)
    mins.push_back(build_relu_min(static_cast<Eigen::Index>(comp.index_set.size()), m.resolution));
  m.f2 = parallel(mins);

  // F3: outer function in reflected coordinates.
  Matrix flip_a = Matrix::Identity(D, D);
  Vector flip_c = Vector::Zero(D);
  for (Eigen::Index i = 0; i < D; ++i)
    if (task.components[static_cast<std::size_t>(i)].mode == Extremum::Max) {
      flip_a(i, i) = -1.0;
      flip_c(i) = 1.0;
    }
  double outer_delta = 0.0;
  if (options.outer) {
    m.f3 = options.outer->net;
    outer_delta = options.outer->delta;
    m.f3.validate();
    if (m.f3.depth() != 2 || m.f3.input_dim() != D || m.f3.output_dim() != 1)
      throw InvalidInput("build_memorization_model: outer net must be a 2-layer map R^D -> R");
  } else if (task.outer_affine) {
    m.f3 = exact_affine_net(*task.outer_affine);
  } else {
    throw ConstructionError("build_memorization_model: outer function is not affine and no net was supplied");
  }
  m.f3 = precompose_affine(m.f3, flip_a, flip_c);

  m.ffn = stack_networks(m.f1, m.f2, m.f3);
  m.achieved_bound = outer_delta + task.outer_lipschitz * (delta + 1.0 / static_cast<double>(m.resolution));
  return m;
}

Matrix MemorizationModel::encode(const Sequence& x) const {
  if (x.length() != length || x.dim() != dim) throw InvalidInput("memorization model: sequence shape mismatch");
  Matrix out = Matrix::Zero(length, embed);
  for (Eigen::Index t = 0; t < length; ++t) out.block(t, t * dim, 1, dim) = x.tokens.row(t);
  return out;
}

Vector MemorizationModel::post_attention(const Sequence& x) const {
  const Matrix enc = encode(x);
  const Vector q = w_q * cls;
  const Vector s = enc * w_k.transpose() * q;
  const Vector p = softmax_beta(s, beta);
  return cls + w_o * (w_v * (enc.transpose() * p));
}

double MemorizationModel::operator()(const Sequence& x) const { return ffn(post_attention(x))(0); }

double MemorizationModel::sequential(const Vector& u) const { return f3(f2(f1(u)))(0); }

}  // namespace headlab
