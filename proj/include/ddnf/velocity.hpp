#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ddnf/autodiff.hpp"
#include "ddnf/linalg.hpp"

namespace ddnf {

/// Offsets of one dense layer inside a flat parameter array. Weights are
/// row-major (out x in) and followed by the out biases.
struct LayerShape {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  /// widths = {input, hidden..., output}.
  explicit ParamLayout(std::span<const int> widths);

  std::size_t size() const { return size_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t weight_index(int layer, int row, int col) const;
  std::size_t bias_index(int layer, int row) const;

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<LayerShape> layers_;
  std::size_t size_ = 0;
};

struct DenseLayer {
  Mat weight;
  Vector bias;
};

struct ParamVector {
  ParamLayout layout;
  Vector values;

  std::vector<DenseLayer> unflatten() const;
  static ParamVector flatten(const ParamLayout& layout, std::span<const DenseLayer> layers);
};

struct VelocitySpec {
  int dim = 2;
  std::vector<int> hidden{2, 2};
  int context_dim = 0;
  double init_scale = 1.0;
  bool zero_init_output = false;

  int input_width() const { return dim + context_dim; }
  ParamLayout layout() const;
  void validate() const;
  bool operator==(const VelocitySpec&) const = default;
};

/// A tanh MLP v: R^(d+c) -> R^d. Immutable after construction.
struct VelocityField {
  VelocitySpec spec;
  ParamVector params;
};

VelocityField init_velocity(const VelocitySpec& spec, std::uint64_t seed);

/// Single linear layer z -> A z + b (no hidden layers).
VelocityField make_affine_field(const Mat& a, std::span<const double> b);
VelocityField make_constant_field(std::span<const double> c);
/// Copy of an unconditioned field taking `context_dim` extra inputs with zero weights.
VelocityField with_context_inputs(const VelocityField& field, int context_dim);

Vector eval(const VelocityField& field, std::span<const double> z,
            std::span<const double> context = {});
Mat jacobian(const VelocityField& field, std::span<const double> z,
             std::span<const double> context = {});
/// Directional derivative of the field by forward-mode dual numbers.
Vector velocity_jvp(const VelocityField& field, std::span<const double> z,
                    std::span<const double> w, std::span<const double> context = {});

/// Throws ConfigError unless dim(z) = d and context is present iff c > 0.
void check_inputs(const VelocitySpec& spec, std::size_t z_size, std::size_t context_size);

namespace detail {

template <class S, class P>
S affine_row(std::span<const P> w, std::span<const S> x, const P& b) {
  if constexpr (std::is_same_v<S, ad::Var> && std::is_same_v<P, ad::Var>) {
    return ad::dot_plus(w, x, b);
  } else {
    S acc = x[0] * w[0] + b;
    for (std::size_t i = 1; i < x.size(); ++i) acc = acc + x[i] * w[i];
    return acc;
  }
}

/// MLP evaluation with state scalar S and parameter scalar P.
template <class S, class P>
std::vector<S> mlp_eval(const VelocitySpec& spec, std::span<const P> params,
                        std::span<const S> z, std::span<const S> context) {
  using std::tanh;
  const ParamLayout layout = spec.layout();
  std::vector<S> x(z.begin(), z.end());
  x.insert(x.end(), context.begin(), context.end());
  const auto& layers = layout.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& ls = layers[l];
    std::vector<S> y;
    y.reserve(ls.out);
    for (int r = 0; r < ls.out; ++r) {
      const std::span<const P> w = params.subspan(ls.weight_offset + r * ls.in, ls.in);
      S pre = affine_row<S, P>(w, std::span<const S>(x), params[ls.bias_offset + r]);
      y.push_back(l + 1 < layers.size() ? tanh(pre) : pre);
    }
    x = std::move(y);
  }
  return x;
}

template <class P>
struct VelocityAndJacobian {
  std::vector<P> velocity;
  Matrix<P> jacobian;  // d x d, derivative with respect to z only
};

/// Velocity plus its exact z-Jacobian by propagating dx/dz through the layers.
template <class P>
VelocityAndJacobian<P> mlp_eval_jacobian(const VelocitySpec& spec, std::span<const P> params,
                                         std::span<const P> z, std::span<const P> context) {
  using std::tanh;
  const ParamLayout layout = spec.layout();
  const std::size_t d = static_cast<std::size_t>(spec.dim);
  std::vector<P> x(z.begin(), z.end());
  x.insert(x.end(), context.begin(), context.end());
  Matrix<P> jx;  // dx/dz, rows = current width
  bool first = true;
  const auto& layers = layout.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& ls = layers[l];
    const bool last = l + 1 == layers.size();
    std::vector<P> y(ls.out);
    Matrix<P> jy(ls.out, d);
    for (int r = 0; r < ls.out; ++r) {
      const std::span<const P> w = params.subspan(ls.weight_offset + r * ls.in, ls.in);
      P pre = affine_row<P, P>(w, std::span<const P>(x), params[ls.bias_offset + r]);
      P scale(1.0);
      if (!last) {
        pre = tanh(pre);
        scale = 1.0 - pre * pre;
      }
      y[r] = pre;
      for (std::size_t c = 0; c < d; ++c) {
        P acc(0.0);
        if (first) {
          acc = w[c];
        } else {
          for (int i = 0; i < ls.in; ++i) acc = acc + w[i] * jx(i, c);
        }
        jy(r, c) = last ? acc : scale * acc;
      }
    }
    x = std::move(y);
    jx = std::move(jy);
    first = false;
  }
  return {std::move(x), std::move(jx)};
}

}  // namespace detail
}  // namespace ddnf
