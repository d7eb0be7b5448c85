#include "headlab/constructions/softmin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "headlab/errors.hpp"
#include "headlab/numerics/activations.hpp"

namespace headlab {

double affine_lipschitz(const AffineMap& f) { return f.weights.cwiseAbs().sum(); }

RetrievalTask restrict_components(const RetrievalTask& task, const std::vector<Eigen::Index>& keep) {
  if (keep.empty()) throw InvalidInput("restrict_components: keep at least one component");
  RetrievalTask out = task;
  out.components.clear();
  for (auto i : keep) {
    if (i < 0 || i >= task.intrinsic_dimension()) throw InvalidInput("restrict_components: index out of range");
    out.components.push_back(task.components[static_cast<std::size_t>(i)]);
  }
  const auto D = static_cast<Eigen::Index>(keep.size());
  out.name = task.name + "-restricted";
  out.outer = [](const Vector& z) { return z.sum(); };
  out.outer_affine = AffineMap{Vector::Ones(D), 0.0};
  out.outer_lipschitz = static_cast<double>(D);
  out.validate();
  return out;
}

double beta_epsilon(Eigen::Index length, double outer_lipschitz, Eigen::Index intrinsic_dim, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidInput("beta_epsilon: eps must be positive");
  const double T = static_cast<double>(length);
  const double c_t = std::max(T / std::numbers::e, T);
  const double k = 4.0 * c_t * outer_lipschitz * static_cast<double>(intrinsic_dim) / epsilon;
  return std::max({1.0, k, std::log(k)});
}

double softmin_bound(Eigen::Index set_size, Eigen::Index length, double beta) {
  return static_cast<double>(set_size - 1) / (std::numbers::e * beta) +
         static_cast<double>(length) * std::exp(-beta);
}

namespace {

/// Range of an affine map over the unit cube.
std::pair<double, double> affine_range(const AffineMap& f) {
  double lo = f.bias, hi = f.bias;
  for (Eigen::Index k = 0; k < f.weights.size(); ++k) {
    lo += std::min(f.weights(k), 0.0);
    hi += std::max(f.weights(k), 0.0);
  }
  return {lo, hi};
}

void check_tokens(const SoftminHeadModel& m, const Sequence& x) {
  if (x.length() != m.length || x.dim() != m.dim) throw InvalidInput("softmin model: sequence shape mismatch");
  if (!x.tokens.allFinite() || x.tokens.minCoeff() < 0.0 || x.tokens.maxCoeff() > 1.0)
    throw InvalidInput("softmin model: tokens must lie in [0,1]");
}

}  // namespace

SoftminHeadModel build_softmin_model(const RetrievalTask& task, double epsilon, const SoftminOptions& options) {
  task.validate();
  if (!(epsilon > 0.0)) throw InvalidInput("build_softmin_model: eps must be positive");
  const Eigen::Index D = task.intrinsic_dimension();
  const Eigen::Index h = options.heads == 0 ? D : options.heads;
  if (h != D)
    throw ConstructionError("build_softmin_model: needs h = D, got h = " + std::to_string(h) +
                            ", D = " + std::to_string(D));
  if (!options.components.empty() && static_cast<Eigen::Index>(options.components.size()) != D)
    throw InvalidInput("build_softmin_model: one component net per component required");

  SoftminHeadModel m;
  m.length = task.length;
  m.dim = task.dim;
  m.heads = h;
  m.epsilon = epsilon;
  m.outer_lipschitz = task.outer_lipschitz;
  const double L0 = task.outer_lipschitz;
  const double delta_max = epsilon / (4.0 * L0 * static_cast<double>(D));

  // Component nets in min orientation.
  for (Eigen::Index i = 0; i < D; ++i) {
    const auto& comp = task.components[static_cast<std::size_t>(i)];
    const bool flip = comp.mode == Extremum::Max;
    ComponentNet cn;
    if (!options.components.empty() && !options.components[static_cast<std::size_t>(i)].net.layers.empty()) {
      cn = options.components[static_cast<std::size_t>(i)];
      cn.net.validate();
      if (cn.net.input_dim() != task.dim || cn.net.output_dim() != 1)
        throw InvalidInput("build_softmin_model: component net must map R^d to R");
      if (flip) {
        auto& last = cn.net.layers.back();
        last.weight = -last.weight;
        last.bias = Vector::Ones(1) - last.bias;
      }
    } else if (comp.affine) {
      AffineMap f = *comp.affine;
      const auto [lo, hi] = affine_range(f);
      if (lo < -1e-12 || hi > 1.0 + 1e-12)
        throw ConstructionError("build_softmin_model: component " + std::to_string(i) +
                                " does not map [0,1]^d into [0,1]");
      if (flip) {
        f.weights = -f.weights;
        f.bias = 1.0 - f.bias;
      }
      cn.net = exact_affine_net(f);
    } else {
      throw ConstructionError("build_softmin_model: component " + std::to_string(i) +
                              " is not affine and no net was supplied");
    }
    if (cn.delta > delta_max)
      throw ConstructionError("build_softmin_model: component " + std::to_string(i) + " has delta " +
                              std::to_string(cn.delta) + " > eps/(4 L0 D) = " + std::to_string(delta_max));
    m.component_delta = std::max(m.component_delta, cn.delta);
    m.psi.push_back(std::move(cn.net));

    std::vector<double> gate(static_cast<std::size_t>(task.length), -1.0);
    for (auto t : comp.index_set) gate[static_cast<std::size_t>(t)] = 0.0;
    m.gates.push_back(std::move(gate));
    m.index_sets.push_back(comp.index_set);
  }

  // beta
  if (options.beta) {
    if (!(*options.beta >= 1.0) || !std::isfinite(*options.beta))
      throw ConstructionError("build_softmin_model: needs beta >= 1, got " + std::to_string(*options.beta));
    m.beta = *options.beta;
  } else {
    m.beta = beta_epsilon(task.length, L0, D, epsilon);
    if (m.beta > options.beta_cap) {
      m.warnings.push_back("beta_eps = " + std::to_string(m.beta) + " clipped to " + std::to_string(options.beta_cap));
      m.beta = options.beta_cap;
    }
  }

  // Attention parameters, every entry in {-1, 0, 1}.
  const Eigen::Index E = m.embed_dim();
  m.cls = Vector::Zero(E);
  for (Eigen::Index i = 0; i < h; ++i) {
    m.cls(2 * i) = 1.0;
    Matrix q = Matrix::Zero(2, E), k = Matrix::Zero(2, E), v = Matrix::Zero(2, E);
    q(0, 2 * i) = 1.0;
    k(0, 2 * i) = -1.0;
    k(0, 2 * i + 1) = 1.0;
    v(0, 2 * i) = 1.0;
    v(1, 2 * i + 1) = 1.0;
    m.w_q.push_back(q);
    m.w_k.push_back(k);
    m.w_v.push_back(v);
  }
  m.w_o = Matrix::Identity(E, E);
  if (m.max_attention_entry() > 1.0) throw ConstructionError("build_softmin_model: attention entry exceeds 1");

  // Outer net Phi in the reflected coordinates, then precomposed with the
  // readout projection u -> (u_{2i} - 1)_i.
  Matrix flip_a = Matrix::Identity(D, D);
  Vector flip_c = Vector::Zero(D);
  for (Eigen::Index i = 0; i < D; ++i)
    if (task.components[static_cast<std::size_t>(i)].mode == Extremum::Max) {
      flip_a(i, i) = -1.0;
      flip_c(i) = 1.0;
    }
  DenseNet phi;
  if (options.outer) {
    phi = options.outer->net;
    phi.validate();
    if (phi.input_dim() != D || phi.output_dim() != 1) throw InvalidInput("build_softmin_model: outer net must map R^D to R");
    m.outer_delta = options.outer->delta;
  } else if (task.outer_affine) {
    phi = exact_affine_net(*task.outer_affine);
  } else {
    throw ConstructionError("build_softmin_model: outer function is not affine and no net was supplied");
  }
  phi = precompose_affine(phi, flip_a, flip_c);
  Matrix select = Matrix::Zero(D, E);
  for (Eigen::Index i = 0; i < D; ++i) select(i, 2 * i) = 1.0;
  m.ffn = precompose_affine(phi, select, -Vector::Ones(D));

  double worst = 0.0;
  for (Eigen::Index i = 0; i < D; ++i) worst = std::max(worst, m.softmin_bound(i));
  m.achieved_bound = m.outer_delta + L0 * (m.component_delta + worst);
  if (options.enforce_epsilon && m.achieved_bound > epsilon)
    throw ConstructionError("build_softmin_model: achieved bound " + std::to_string(m.achieved_bound) +
                            " exceeds eps = " + std::to_string(epsilon));
  return m;
}

double SoftminHeadModel::softmin_bound(Eigen::Index head) const {
  const auto& s = index_sets.at(static_cast<std::size_t>(head));
  return headlab::softmin_bound(static_cast<Eigen::Index>(s.size()), length, beta);
}

double SoftminHeadModel::max_attention_entry() const {
  double m = cls.size() ? cls.cwiseAbs().maxCoeff() : 0.0;
  for (const auto* group : {&w_q, &w_k, &w_v})
    for (const auto& w : *group) m = std::max(m, w.cwiseAbs().maxCoeff());
  if (w_o.size()) m = std::max(m, w_o.cwiseAbs().maxCoeff());
  return m;
}

Matrix SoftminHeadModel::encode(const Sequence& x) const {
  check_tokens(*this, x);
  Matrix out(length, embed_dim());
  for (Eigen::Index i = 0; i < heads; ++i) {
    const Matrix psi_vals = psi[static_cast<std::size_t>(i)].evaluate(x.tokens);
    for (Eigen::Index t = 0; t < length; ++t) {
      out(t, 2 * i) = psi_vals(t, 0);
      out(t, 2 * i + 1) = gates[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
    }
  }
  return out;
}

Matrix SoftminHeadModel::scores(const Sequence& x) const {
  const Matrix enc = encode(x);
  Matrix s(heads, length);
  for (Eigen::Index i = 0; i < heads; ++i) {
    const Vector q = w_q[static_cast<std::size_t>(i)] * cls;
    s.row(i) = (enc * w_k[static_cast<std::size_t>(i)].transpose() * q).transpose();
  }
  return s;
}

Matrix SoftminHeadModel::attention(const Sequence& x) const {
  const Matrix s = scores(x);
  Matrix a(heads, length);
  for (Eigen::Index i = 0; i < heads; ++i) a.row(i) = softmax_beta(s.row(i), beta).transpose();
  return a;
}

Vector SoftminHeadModel::post_attention(const Sequence& x) const {
  const Matrix enc = encode(x);
  Vector concat(embed_dim());
  for (Eigen::Index i = 0; i < heads; ++i) {
    const Vector q = w_q[static_cast<std::size_t>(i)] * cls;
    const Vector s = enc * w_k[static_cast<std::size_t>(i)].transpose() * q;
    const Vector p = softmax_beta(s, beta);
    concat.segment(2 * i, 2) = w_v[static_cast<std::size_t>(i)] * (enc.transpose() * p);
  }
  return cls + w_o * concat;
}

Vector SoftminHeadModel::readouts(const Sequence& x) const {
  const Vector u = post_attention(x) - cls;
  Vector z(heads);
  for (Eigen::Index i = 0; i < heads; ++i) z(i) = u(2 * i);
  return z;
}

double SoftminHeadModel::operator()(const Sequence& x) const { return ffn(post_attention(x))(0); }

SoftminReport verify_softmin_bound(const SoftminHeadModel& model, const std::vector<Sequence>& sequences,
                                   std::size_t max_witnesses) {
  SoftminReport r;
  r.heads = model.heads;
  r.length = model.length;
  r.beta = model.beta;
  r.sequences = sequences.size();
  for (Eigen::Index i = 0; i < model.heads; ++i) r.bounds.push_back(model.softmin_bound(i));
  r.max_observed = -std::numeric_limits<double>::infinity();
  r.min_observed = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const Matrix enc = model.encode(sequences[s]);
    const Matrix att = model.attention(sequences[s]);
    for (Eigen::Index i = 0; i < model.heads; ++i) {
      double lo = std::numeric_limits<double>::infinity();
      for (auto t : model.index_sets[static_cast<std::size_t>(i)]) lo = std::min(lo, enc(t, 2 * i));
      double dev = 0.0;
      for (Eigen::Index t = 0; t < model.length; ++t) dev += att(i, t) * (enc(t, 2 * i) - lo);
      const double bound = r.bounds[static_cast<std::size_t>(i)];
      r.max_observed = std::max(r.max_observed, dev);
      r.min_observed = std::min(r.min_observed, dev);
      r.max_slack_ratio = std::max(r.max_slack_ratio, dev / bound);
      const bool low = dev < 0.0, high = dev > bound;
      if (low) ++r.lower_violations;
      if (high) ++r.upper_violations;
      if ((low || high) && r.witnesses.size() < max_witnesses) r.witnesses.push_back({s, i, dev, bound, sequences[s].tokens});
    }
  }
  if (sequences.empty()) r.max_observed = r.min_observed = 0.0;
  return r;
}

std::string softmin_report_json(const SoftminReport& r) {
  nlohmann::json j;
  j["construction"] = "softmin";
  j["parameters"] = {{"heads", r.heads}, {"T", r.length}, {"beta", r.beta}, {"sequences", r.sequences}};
  j["bound"] = r.bounds;
  j["max_observed"] = r.max_observed;
  j["min_observed"] = r.min_observed;
  j["max_slack_ratio"] = r.max_slack_ratio;
  j["lower_violations"] = r.lower_violations;
  j["upper_violations"] = r.upper_violations;
  j["ok"] = r.ok();
  j["witnesses"] = nlohmann::json::array();
  for (const auto& w : r.witnesses)
    j["witnesses"].push_back({{"sequence", w.sequence}, {"head", w.head}, {"deviation", w.deviation}, {"bound", w.bound},
                              {"tokens", std::vector<double>(w.tokens.data(), w.tokens.data() + w.tokens.size())}});
  return j.dump(2);
}

}  // namespace headlab
