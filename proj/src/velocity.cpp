#include "ddnf/velocity.hpp"

#include <cmath>
#include <string>

#include "ddnf/rng.hpp"

namespace ddnf {

ParamLayout::ParamLayout(std::span<const int> widths) {
  std::size_t offset = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    LayerShape ls;
    ls.in = widths[i];
    ls.out = widths[i + 1];
    ls.weight_offset = offset;
    offset += static_cast<std::size_t>(ls.in) * ls.out;
    ls.bias_offset = offset;
    offset += ls.out;
    layers_.push_back(ls);
  }
  size_ = offset;
}

std::size_t ParamLayout::weight_index(int layer, int row, int col) const {
  const LayerShape& ls = layers_.at(layer);
  if (row < 0 || row >= ls.out || col < 0 || col >= ls.in) {
    throw ConfigError("weight index out of range");
  }
  return ls.weight_offset + static_cast<std::size_t>(row) * ls.in + col;
}

std::size_t ParamLayout::bias_index(int layer, int row) const {
  const LayerShape& ls = layers_.at(layer);
  if (row < 0 || row >= ls.out) throw ConfigError("bias index out of range");
  return ls.bias_offset + row;
}

std::vector<DenseLayer> ParamVector::unflatten() const {
  std::vector<DenseLayer> out;
  for (const LayerShape& ls : layout.layers()) {
    DenseLayer dl{Mat(ls.out, ls.in), Vector(ls.out)};
    for (int r = 0; r < ls.out; ++r) {
      for (int c = 0; c < ls.in; ++c) dl.weight(r, c) = values[ls.weight_offset + r * ls.in + c];
      dl.bias[r] = values[ls.bias_offset + r];
    }
    out.push_back(std::move(dl));
  }
  return out;
}

ParamVector ParamVector::flatten(const ParamLayout& layout, std::span<const DenseLayer> layers) {
  if (layers.size() != layout.layers().size()) throw ConfigError("layer count mismatch");
  ParamVector pv{layout, Vector(layout.size())};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& ls = layout.layers()[l];
    const DenseLayer& dl = layers[l];
    if (dl.weight.rows != static_cast<std::size_t>(ls.out) ||
        dl.weight.cols != static_cast<std::size_t>(ls.in) ||
        dl.bias.size() != static_cast<std::size_t>(ls.out)) {
      throw ConfigError("layer " + std::to_string(l) + " shape does not match layout");
    }
    for (int r = 0; r < ls.out; ++r) {
      for (int c = 0; c < ls.in; ++c) pv.values[ls.weight_offset + r * ls.in + c] = dl.weight(r, c);
      pv.values[ls.bias_offset + r] = dl.bias[r];
    }
  }
  return pv;
}

ParamLayout VelocitySpec::layout() const {
  std::vector<int> widths;
  widths.push_back(input_width());
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dim);
  return ParamLayout(widths);
}

void VelocitySpec::validate() const {
  if (dim <= 0) throw ConfigError("velocity: dimension must be positive");
  if (context_dim < 0) throw ConfigError("velocity: context dimension must be non-negative");
  for (int w : hidden) {
    if (w <= 0) throw ConfigError("velocity: zero-width hidden layer");
  }
  if (!(init_scale >= 0.0)) throw ConfigError("velocity: init_scale must be >= 0");
}

VelocityField init_velocity(const VelocitySpec& spec, std::uint64_t seed) {
  spec.validate();
  VelocityField f{spec, {spec.layout(), {}}};
  f.params.values.assign(f.params.layout.size(), 0.0);
  Rng rng(seed);
  const auto& layers = f.params.layout.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& ls = layers[l];
    if (l + 1 == layers.size() && spec.zero_init_output) break;
    const double s = spec.init_scale / std::sqrt(static_cast<double>(ls.in));
    for (int i = 0; i < ls.in * ls.out; ++i) {
      f.params.values[ls.weight_offset + i] = s * (2.0 * rng.uniform() - 1.0);
    }
    for (int i = 0; i < ls.out; ++i) f.params.values[ls.bias_offset + i] = s * (2.0 * rng.uniform() - 1.0);
  }
  return f;
}

VelocityField make_affine_field(const Mat& a, std::span<const double> b) {
  if (a.rows != a.cols || b.size() != a.rows) throw ConfigError("affine field: shape mismatch");
  VelocitySpec spec;
  spec.dim = static_cast<int>(a.rows);
  spec.hidden.clear();
  const DenseLayer layer{a, Vector(b.begin(), b.end())};
  return {spec, ParamVector::flatten(spec.layout(), std::span<const DenseLayer>(&layer, 1))};
}

VelocityField make_constant_field(std::span<const double> c) {
  return make_affine_field(Mat(c.size(), c.size()), c);
}

VelocityField with_context_inputs(const VelocityField& field, int context_dim) {
  if (field.spec.context_dim != 0) throw ConfigError("with_context_inputs: field is already conditioned");
  if (context_dim < 0) throw ConfigError("with_context_inputs: context_dim must be >= 0");
  VelocityField out;
  out.spec = field.spec;
  out.spec.context_dim = context_dim;
  std::vector<DenseLayer> layers = field.params.unflatten();
  DenseLayer& first = layers.front();
  Mat wide(first.weight.rows, first.weight.cols + context_dim);
  for (std::size_t r = 0; r < first.weight.rows; ++r)
    for (std::size_t c = 0; c < first.weight.cols; ++c) wide(r, c) = first.weight(r, c);
  first.weight = std::move(wide);
  out.params = ParamVector::flatten(out.spec.layout(), layers);
  return out;
}

void check_inputs(const VelocitySpec& spec, std::size_t z_size, std::size_t context_size) {
  if (z_size != static_cast<std::size_t>(spec.dim)) {
    throw ConfigError("velocity: point has dimension " + std::to_string(z_size) + ", expected " +
                      std::to_string(spec.dim));
  }
  if (spec.context_dim == 0 && context_size != 0) {
    throw ConfigError("velocity: context supplied to an unconditioned field");
  }
  if (spec.context_dim > 0 && context_size != static_cast<std::size_t>(spec.context_dim)) {
    throw ConfigError(context_size == 0
                          ? "velocity: missing context for a context-conditioned field"
                          : "velocity: context has dimension " + std::to_string(context_size) +
                                ", expected " + std::to_string(spec.context_dim));
  }
}

Vector eval(const VelocityField& field, std::span<const double> z,
            std::span<const double> context) {
  check_inputs(field.spec, z.size(), context.size());
  return detail::mlp_eval<double, double>(field.spec, std::span<const double>(field.params.values),
                                          z, context);
}

Mat jacobian(const VelocityField& field, std::span<const double> z,
             std::span<const double> context) {
  check_inputs(field.spec, z.size(), context.size());
  return detail::mlp_eval_jacobian<double>(field.spec,
                                           std::span<const double>(field.params.values), z,
                                           context)
      .jacobian;
}

Vector velocity_jvp(const VelocityField& field, std::span<const double> z,
                    std::span<const double> w, std::span<const double> context) {
  check_inputs(field.spec, z.size(), context.size());
  std::vector<ad::Dual<double>> ctx(context.size());
  for (std::size_t i = 0; i < context.size(); ++i) ctx[i] = {context[i], 0.0};
  return ad::jvp(
      [&](std::span<const ad::Dual<double>> zz) {
        return detail::mlp_eval<ad::Dual<double>, double>(
            field.spec, std::span<const double>(field.params.values), zz,
            std::span<const ad::Dual<double>>(ctx));
      },
      z, w);
}

}  // namespace ddnf
