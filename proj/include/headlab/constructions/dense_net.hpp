#pragma once

#include <functional>
#include <vector>

#include "headlab/numerics/rng.hpp"
#include "headlab/numerics/types.hpp"
#include "headlab/tasks.hpp"

namespace headlab {

/// y = act(W x + b), W is out x in.
struct DenseLayer {
  Matrix weight;
  Vector bias;
  bool relu = true;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// A plain fully connected ReLU network. "k-layer" counts affine maps, so a
/// 2-layer net has one hidden layer. The last layer is linear.
struct DenseNet {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  std::size_t depth() const { return layers.size(); }
  std::vector<Eigen::Index> hidden_widths() const;
  /// Largest absolute weight or bias.
  double max_abs_entry() const;

  Vector operator()(const Vector& x) const;
  /// One input per row.
  Matrix evaluate(const Matrix& inputs) const;
  /// Throws InvalidInput when consecutive layers do not chain.
  void validate() const;
};

/// A two-layer net reproducing f exactly as ReLU(f) - ReLU(-f).
DenseNet exact_affine_net(const AffineMap& f);

/// Nets run side by side on the concatenation of their inputs; outputs are
/// concatenated. All nets must have the same depth.
DenseNet parallel(const std::vector<DenseNet>& nets);

/// Run `inner` then `outer`, merging the junction affine maps so the depth
/// is depth(inner) + depth(outer) - 1.
DenseNet compose(const DenseNet& inner, const DenseNet& outer);

/// Precompose the first layer with x -> A x + c.
DenseNet precompose_affine(const DenseNet& net, const Matrix& a, const Vector& c);

/// Compose a 2-layer F1, a 3-layer F2 and a 2-layer F3 into one 5-layer net
/// computing F3(F2(F1(x))).
DenseNet stack_networks(const DenseNet& f1, const DenseNet& f2, const DenseNet& f3);

/// A fitted two-layer approximation with its measured sup error.
struct FittedNet {
  DenseNet net;
  double sup_error = 0.0;  // max |net - f| over the check points
};

/// Random ReLU features on [0,1]^dim with a least-squares readout. The sup
/// error is measured on `check_points` fresh uniform points.
FittedNet fit_two_layer(const std::function<double(const Vector&)>& f, Eigen::Index dim, Eigen::Index width,
                        std::size_t samples, std::size_t check_points, CounterRng rng);

}  // namespace headlab
