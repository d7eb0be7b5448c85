#include "headlab/constructions/dense_net.hpp"

#include <algorithm>

#include "headlab/errors.hpp"

namespace headlab {

Eigen::Index DenseNet::input_dim() const {
  if (layers.empty()) throw StateError("DenseNet: no layers");
  return layers.front().in_dim();
}

Eigen::Index DenseNet::output_dim() const {
  if (layers.empty()) throw StateError("DenseNet: no layers");
  return layers.back().out_dim();
}

std::vector<Eigen::Index> DenseNet::hidden_widths() const {
  std::vector<Eigen::Index> w;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) w.push_back(layers[i].out_dim());
  return w;
}

double DenseNet::max_abs_entry() const {
  double m = 0.0;
  for (const auto& l : layers) {
    if (l.weight.size()) m = std::max(m, l.weight.cwiseAbs().maxCoeff());
    if (l.bias.size()) m = std::max(m, l.bias.cwiseAbs().maxCoeff());
  }
  return m;
}

void DenseNet::validate() const {
  if (layers.empty()) throw InvalidInput("DenseNet: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.out_dim()) throw InvalidInput("DenseNet: bias length differs from layer width");
    if (i > 0 && l.in_dim() != layers[i - 1].out_dim()) throw InvalidInput("DenseNet: layers do not chain");
  }
}

Vector DenseNet::operator()(const Vector& x) const {
  if (x.size() != input_dim()) throw InvalidInput("DenseNet: input dimension mismatch");
  Vector h = x;
  for (const auto& l : layers) {
    h = l.weight * h + l.bias;
    if (l.relu) h = h.cwiseMax(0.0);
  }
  return h;
}

Matrix DenseNet::evaluate(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) throw InvalidInput("DenseNet: input dimension mismatch");
  Matrix h = inputs;
  for (const auto& l : layers) {
    Matrix next = h * l.weight.transpose();
    next.rowwise() += l.bias.transpose();
    if (l.relu) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

DenseNet exact_affine_net(const AffineMap& f) {
  const auto d = f.weights.size();
  DenseNet net;
  DenseLayer hidden{Matrix(2, d), Vector(2), true};
  hidden.weight.row(0) = f.weights.transpose();
  hidden.weight.row(1) = -f.weights.transpose();
  hidden.bias << f.bias, -f.bias;
  DenseLayer out{Matrix(1, 2), Vector::Zero(1), false};
  out.weight << 1.0, -1.0;
  net.layers = {std::move(hidden), std::move(out)};
  return net;
}

DenseNet parallel(const std::vector<DenseNet>& nets) {
  if (nets.empty()) throw InvalidInput("parallel: no nets");
  const auto depth = nets.front().depth();
  for (const auto& n : nets) {
    n.validate();
    if (n.depth() != depth) throw InvalidInput("parallel: nets differ in depth");
  }
  DenseNet out;
  for (std::size_t l = 0; l < depth; ++l) {
    Eigen::Index rows = 0, cols = 0;
    for (const auto& n : nets) {
      rows += n.layers[l].out_dim();
      cols += n.layers[l].in_dim();
    }
    DenseLayer layer{Matrix::Zero(rows, cols), Vector::Zero(rows), nets.front().layers[l].relu};
    Eigen::Index r = 0, c = 0;
    for (const auto& n : nets) {
      const auto& src = n.layers[l];
      if (src.relu != layer.relu) throw InvalidInput("parallel: activation pattern differs");
      layer.weight.block(r, c, src.out_dim(), src.in_dim()) = src.weight;
      layer.bias.segment(r, src.out_dim()) = src.bias;
      r += src.out_dim();
      c += src.in_dim();
    }
    out.layers.push_back(std::move(layer));
  }
  return out;
}

DenseNet compose(const DenseNet& inner, const DenseNet& outer) {
  inner.validate();
  outer.validate();
  if (inner.output_dim() != outer.input_dim()) throw InvalidInput("compose: dimensions do not chain");
  if (inner.layers.back().relu) throw InvalidInput("compose: inner net must end with a linear layer");
  DenseNet out;
  out.layers.assign(inner.layers.begin(), inner.layers.end() - 1);
  const auto& a = inner.layers.back();
  const auto& b = outer.layers.front();
  out.layers.push_back({b.weight * a.weight, b.weight * a.bias + b.bias, b.relu});
  out.layers.insert(out.layers.end(), outer.layers.begin() + 1, outer.layers.end());
  return out;
}

DenseNet precompose_affine(const DenseNet& net, const Matrix& a, const Vector& c) {
  net.validate();
  if (a.rows() != net.input_dim() || c.size() != a.rows()) throw InvalidInput("precompose_affine: shape mismatch");
  DenseNet out = net;
  auto& first = out.layers.front();
  first.bias = first.weight * c + first.bias;
  first.weight = first.weight * a;
  return out;
}

DenseNet stack_networks(const DenseNet& f1, const DenseNet& f2, const DenseNet& f3) {
  if (f1.depth() != 2 || f2.depth() != 3 || f3.depth() != 2)
    throw InvalidInput("stack_networks: expects 2-, 3- and 2-layer nets");
  return compose(compose(f1, f2), f3);
}

FittedNet fit_two_layer(const std::function<double(const Vector&)>& f, Eigen::Index dim, Eigen::Index width,
                        std::size_t samples, std::size_t check_points, CounterRng rng) {
  if (dim <= 0 || width <= 0 || samples == 0) throw InvalidInput("fit_two_layer: sizes must be positive");
  auto feat_rng = rng.split("features");
  DenseLayer hidden{feat_rng.normal_matrix(width, dim), Vector(width), true};
  // hinge positions spread over the cube
  auto centre_rng = rng.split("centres");
  for (Eigen::Index k = 0; k < width; ++k) {
    const Vector centre = centre_rng.uniform_matrix(dim, 1, 0.0, 1.0);
    hidden.bias(k) = -hidden.weight.row(k).dot(centre);
  }
  auto sample_rng = rng.split("samples");
  const Matrix x = sample_rng.uniform_matrix(static_cast<Eigen::Index>(samples), dim, 0.0, 1.0);
  Matrix feats(x.rows(), width + 1);
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector xi = x.row(i).transpose();
    feats.row(i).head(width) = (hidden.weight * xi + hidden.bias).cwiseMax(0.0).transpose();
    feats(i, width) = 1.0;
    y(i) = f(xi);
  }
  // small ridge keeps the solve well posed when features are nearly collinear
  const Matrix gram = feats.transpose() * feats + 1e-10 * Matrix::Identity(width + 1, width + 1);
  const Vector coef = gram.ldlt().solve(feats.transpose() * y);
  DenseLayer out{coef.head(width).transpose(), Vector::Constant(1, coef(width)), false};

  FittedNet fitted;
  fitted.net.layers = {std::move(hidden), std::move(out)};
  auto check_rng = rng.split("check");
  for (std::size_t i = 0; i < check_points; ++i) {
    const Vector xi = check_rng.uniform_matrix(dim, 1, 0.0, 1.0);
    fitted.sup_error = std::max(fitted.sup_error, std::abs(fitted.net(xi)(0) - f(xi)));
  }
  return fitted;
}

}  // namespace headlab
