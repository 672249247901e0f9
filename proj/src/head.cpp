#include "nap/head.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include "nap/error.hpp"
#include "nap/numfmt.hpp"

namespace nap::head {

namespace {

constexpr double kLayerNormEps = 1e-5;

constexpr std::array<Variant, 9> kVariants = {
    Variant::two_tanh,   Variant::two_sm,     Variant::two_ln_exp,
    Variant::two_ln_tanh, Variant::three_relu, Variant::three_tanh,
    Variant::three_ln_exp, Variant::three_ln_tanh, Variant::three_sm,
};

void softmax_inplace(std::span<double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : x) v /= s;
}

// y = W x + b
std::vector<double> affine(const Affine& a, std::span<const double> x) {
  const std::size_t out = a.weight.rows();
  std::vector<double> y(a.bias);
  for (std::size_t o = 0; o < out; ++o) {
    const auto w = a.weight.row(o);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    y[o] += s;
  }
  return y;
}

// Accumulates scale * (g outer x) into dA and returns W^T g.
std::vector<double> affine_backward(const Affine& a, std::span<const double> x,
                                    std::span<const double> g, Affine& dA) {
  std::vector<double> gx(x.size(), 0.0);
  for (std::size_t o = 0; o < g.size(); ++o) {
    const double go = g[o];
    dA.bias[o] += go;
    if (go == 0.0) continue;
    auto dw = dA.weight.row(o);
    const auto w = a.weight.row(o);
    for (std::size_t i = 0; i < x.size(); ++i) {
      dw[i] += go * x[i];
      gx[i] += w[i] * go;
    }
  }
  return gx;
}

std::size_t affine_params(std::size_t in, std::size_t out) { return (in + 1) * out; }

}  // namespace

std::size_t FeatureSequence::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), uint8_t{1}));
}

void FeatureSequence::validate() const {
  require(features.rows() >= 1, "feature sequence is empty");
  require(mask.size() == features.rows(), "mask length does not match features");
  require(valid_count() >= 1, "feature sequence has no valid position");
  for (double v : features.data()) require(std::isfinite(v), "non-finite feature");
}

FeatureSequence FeatureSequence::dense(Matrix features) {
  FeatureSequence fs;
  fs.mask.assign(features.rows(), 1);
  fs.features = std::move(features);
  return fs;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::two_tanh: return "2L-Tanh";
    case Variant::two_sm: return "2L-SM";
    case Variant::two_ln_exp: return "2L-LN-Exp";
    case Variant::two_ln_tanh: return "2L-LN-Tanh";
    case Variant::three_relu: return "3L-ReLU";
    case Variant::three_tanh: return "3L-Tanh";
    case Variant::three_ln_exp: return "3L-LN-Exp";
    case Variant::three_ln_tanh: return "3L-LN-Tanh";
    case Variant::three_sm: return "3L-SM";
  }
  return "?";
}

std::string_view to_string(Pooling p) { return p == Pooling::average ? "average" : "attentive"; }

std::span<const Variant> all_variants() { return kVariants; }

Variant parse_variant(std::string_view name) {
  for (Variant v : kVariants) {
    if (to_string(v) == name) return v;
  }
  std::string valid;
  for (Variant v : kVariants) valid += (valid.empty() ? "" : ", ") + std::string(to_string(v));
  throw UsageError("unknown variant '" + std::string(name) + "' (valid: " + valid + ")");
}

Pooling parse_pooling(std::string_view name) {
  if (name == "average") return Pooling::average;
  if (name == "attentive") return Pooling::attentive;
  throw UsageError("unknown pooling '" + std::string(name) + "' (valid: average, attentive)");
}

int layer_count(Variant v) {
  switch (v) {
    case Variant::two_tanh:
    case Variant::two_sm:
    case Variant::two_ln_exp:
    case Variant::two_ln_tanh: return 2;
    default: return 3;
  }
}

Activation first_activation(Variant v) {
  switch (v) {
    case Variant::two_tanh:
    case Variant::three_tanh: return Activation::tanh;
    case Variant::three_relu: return Activation::relu;
    case Variant::two_sm:
    case Variant::three_sm: return Activation::softmax;
    case Variant::two_ln_exp:
    case Variant::three_ln_exp: return Activation::ln_exp;
    case Variant::two_ln_tanh:
    case Variant::three_ln_tanh: return Activation::ln_tanh;
  }
  return Activation::tanh;
}

std::size_t HeadParams::parameter_count() const {
  std::size_t n = query.size() + ln_gain.size() + ln_bias.size();
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<std::pair<std::string, std::span<double>>> HeadParams::tensors() {
  std::vector<std::pair<std::string, std::span<double>>> out;
  if (!query.empty()) out.emplace_back("query", std::span<double>(query));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back("layer" + std::to_string(i) + ".weight", std::span<double>(layers[i].weight.data()));
    out.emplace_back("layer" + std::to_string(i) + ".bias", std::span<double>(layers[i].bias));
  }
  if (!ln_gain.empty()) {
    out.emplace_back("ln.gain", std::span<double>(ln_gain));
    out.emplace_back("ln.bias", std::span<double>(ln_bias));
  }
  return out;
}

std::vector<std::pair<std::string, std::span<const double>>> HeadParams::tensors() const {
  auto mut = const_cast<HeadParams*>(this)->tensors();
  std::vector<std::pair<std::string, std::span<const double>>> out;
  out.reserve(mut.size());
  for (auto& [name, span] : mut) out.emplace_back(name, span);
  return out;
}

HeadParams HeadParams::zeros_like() const {
  HeadParams z = *this;
  for (auto& [name, span] : z.tensors()) std::fill(span.begin(), span.end(), 0.0);
  return z;
}

std::size_t matched_two_layer_width(Variant two_layer, std::size_t input_dim,
                                    std::size_t three_layer_width) {
  require(layer_count(two_layer) == 2, "expected a two-layer variant");
  const std::size_t d = input_dim;
  const std::size_t h = three_layer_width;
  const std::size_t ln = uses_layer_norm(two_layer) ? 2 : 0;
  // 3L: (d+1)h + (h+1)h + (h+1) + ln*h ; 2L: (d+1)w + (w+1) + ln*w = w(d+2+ln) + 1
  const double p3 = static_cast<double>(affine_params(d, h) + affine_params(h, h) +
                                        affine_params(h, 1) + ln * h);
  const double w = std::round((p3 - 1.0) / static_cast<double>(d + 2 + ln));
  return std::max<std::size_t>(1, static_cast<std::size_t>(w));
}

HeadParams make_head(Variant variant, Pooling pooling, std::size_t input_dim,
                     std::size_t hidden_width, std::uint64_t seed) {
  require(input_dim >= 1, "input dimension must be positive");
  require(hidden_width >= 1, "hidden width must be positive");
  std::mt19937_64 rng(seed);
  auto glorot = [&](std::size_t in, std::size_t out) {
    Affine a{Matrix(out, in), std::vector<double>(out, 0.0)};
    const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-lim, lim);
    for (double& w : a.weight.data()) w = u(rng);
    return a;
  };

  HeadParams p;
  p.variant = variant;
  p.pooling = pooling;
  p.input_dim = input_dim;
  if (pooling == Pooling::attentive) {
    const double lim = 1.0 / std::sqrt(static_cast<double>(input_dim));
    std::uniform_real_distribution<double> u(-lim, lim);
    p.query.resize(input_dim);
    for (double& q : p.query) q = u(rng);
  }
  const std::size_t h = layer_count(variant) == 2
                            ? matched_two_layer_width(variant, input_dim, hidden_width)
                            : hidden_width;
  p.layers.push_back(glorot(input_dim, h));
  if (layer_count(variant) == 3) p.layers.push_back(glorot(h, h));
  p.layers.push_back(glorot(h, 1));
  if (uses_layer_norm(variant)) {
    p.ln_gain.assign(h, 1.0);
    p.ln_bias.assign(h, 0.0);
  }
  return p;
}

std::vector<double> average_pool(const FeatureSequence& fs) {
  const std::size_t d = fs.width();
  std::vector<double> out(d, 0.0);
  std::size_t count = 0;
  for (std::size_t l = 0; l < fs.length(); ++l) {
    if (!fs.mask[l]) continue;
    const auto row = fs.features.row(l);
    for (std::size_t k = 0; k < d; ++k) out[k] += row[k];
    ++count;
  }
  require(count > 0, "feature sequence has no valid position");
  for (double& v : out) v /= static_cast<double>(count);
  return out;
}

AttentionResult attentive_pool(const FeatureSequence& fs, std::span<const double> query) {
  const std::size_t d = fs.width();
  require(query.size() == d, "query width does not match features");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionResult r;
  r.weights.assign(fs.length(), 0.0);
  double mx = -INFINITY;
  for (std::size_t l = 0; l < fs.length(); ++l) {
    if (!fs.mask[l]) continue;
    const auto row = fs.features.row(l);
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += query[k] * row[k];
    r.weights[l] = s * scale;
    mx = std::max(mx, r.weights[l]);
  }
  require(std::isfinite(mx), "feature sequence has no valid position");
  double total = 0.0;
  for (std::size_t l = 0; l < fs.length(); ++l) {
    if (!fs.mask[l]) continue;
    r.weights[l] = std::exp(r.weights[l] - mx);
    total += r.weights[l];
  }
  r.pooled.assign(d, 0.0);
  for (std::size_t l = 0; l < fs.length(); ++l) {
    if (!fs.mask[l]) continue;
    r.weights[l] /= total;
    const auto row = fs.features.row(l);
    for (std::size_t k = 0; k < d; ++k) r.pooled[k] += r.weights[l] * row[k];
  }
  return r;
}

std::vector<double> attentive_pool_query_grad(const FeatureSequence& fs,
                                              const AttentionResult& attention,
                                              std::span<const double> upstream) {
  const std::size_t d = fs.width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  // d pooled / d s_l = w_l (v_l - pooled); d s_l / d q = v_l * scale
  double g_pooled = 0.0;
  for (std::size_t k = 0; k < d; ++k) g_pooled += upstream[k] * attention.pooled[k];
  std::vector<double> gq(d, 0.0);
  for (std::size_t l = 0; l < fs.length(); ++l) {
    if (!fs.mask[l]) continue;
    const auto row = fs.features.row(l);
    double g_row = 0.0;
    for (std::size_t k = 0; k < d; ++k) g_row += upstream[k] * row[k];
    const double gs = attention.weights[l] * (g_row - g_pooled) * scale;
    for (std::size_t k = 0; k < d; ++k) gq[k] += gs * row[k];
  }
  return gq;
}

ForwardResult mlp_forward(std::span<const double> pooled, const HeadParams& params) {
  require(pooled.size() == params.input_dim, "feature width does not match head input");
  ForwardResult r;
  ForwardCache& c = r.cache;
  c.input.assign(pooled.begin(), pooled.end());
  c.z0 = affine(params.layers[0], c.input);

  const Activation act = first_activation(params.variant);
  c.a0 = c.z0;
  if (act == Activation::ln_exp || act == Activation::ln_tanh) {
    const double n = static_cast<double>(c.z0.size());
    double mean = 0.0;
    for (double v : c.z0) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : c.z0) var += (v - mean) * (v - mean);
    var /= n;
    c.ln_scale = 1.0 / std::sqrt(var + kLayerNormEps);
    c.ln_hat.resize(c.z0.size());
    for (std::size_t i = 0; i < c.z0.size(); ++i) {
      c.ln_hat[i] = (c.z0[i] - mean) * c.ln_scale;
      c.a0[i] = params.ln_gain[i] * c.ln_hat[i] + params.ln_bias[i];
    }
  }
  switch (act) {
    case Activation::tanh:
    case Activation::ln_tanh:
      for (double& v : c.a0) v = std::tanh(v);
      break;
    case Activation::relu:
      for (double& v : c.a0) v = std::max(v, 0.0);
      break;
    case Activation::softmax:
      softmax_inplace(c.a0);
      break;
    case Activation::ln_exp:
      for (double& v : c.a0) v = std::exp(v);
      break;
  }

  std::span<const double> last = c.a0;
  if (layer_count(params.variant) == 3) {
    c.a1 = affine(params.layers[1], c.a0);
    for (double& v : c.a1) v = std::tanh(v);
    last = c.a1;
  }
  r.score = affine(params.layers.back(), last)[0];
  return r;
}

ForwardResult head_forward(const FeatureSequence& fs, const HeadParams& params) {
  require(fs.width() == params.input_dim, "feature width does not match head input");
  if (params.pooling == Pooling::average) return mlp_forward(average_pool(fs), params);
  AttentionResult att = attentive_pool(fs, params.query);
  ForwardResult r = mlp_forward(att.pooled, params);
  r.cache.attention = std::move(att);
  r.cache.sequence = fs;
  return r;
}

double head_score(const FeatureSequence& fs, const HeadParams& params) {
  return head_forward(fs, params).score;
}

void accumulate_backward(const HeadParams& params, const ForwardCache& c, double upstream_grad,
                         HeadParams& grad) {
  if (upstream_grad == 0.0) return;
  const bool three = layer_count(params.variant) == 3;
  const std::span<const double> last = three ? std::span<const double>(c.a1) : c.a0;
  const double g_out[1] = {upstream_grad};
  std::vector<double> g_a0;
  {
    std::vector<double> g_last = affine_backward(params.layers.back(), last, g_out, grad.layers.back());
    if (three) {
      for (std::size_t i = 0; i < g_last.size(); ++i) g_last[i] *= 1.0 - c.a1[i] * c.a1[i];
      g_a0 = affine_backward(params.layers[1], c.a0, g_last, grad.layers[1]);
    } else {
      g_a0 = std::move(g_last);
    }
  }

  const std::size_t h = c.a0.size();
  std::vector<double> g_z0(h);
  switch (first_activation(params.variant)) {
    case Activation::tanh:
      for (std::size_t i = 0; i < h; ++i) g_z0[i] = g_a0[i] * (1.0 - c.a0[i] * c.a0[i]);
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < h; ++i) g_z0[i] = c.z0[i] > 0.0 ? g_a0[i] : 0.0;
      break;
    case Activation::softmax: {
      double dot = 0.0;
      for (std::size_t i = 0; i < h; ++i) dot += g_a0[i] * c.a0[i];
      for (std::size_t i = 0; i < h; ++i) g_z0[i] = c.a0[i] * (g_a0[i] - dot);
      break;
    }
    case Activation::ln_exp:
    case Activation::ln_tanh: {
      const bool is_exp = first_activation(params.variant) == Activation::ln_exp;
      std::vector<double> g_hat(h);
      double mean_g = 0.0, mean_gx = 0.0;
      for (std::size_t i = 0; i < h; ++i) {
        const double g_y = is_exp ? g_a0[i] * c.a0[i] : g_a0[i] * (1.0 - c.a0[i] * c.a0[i]);
        grad.ln_gain[i] += g_y * c.ln_hat[i];
        grad.ln_bias[i] += g_y;
        g_hat[i] = g_y * params.ln_gain[i];
        mean_g += g_hat[i];
        mean_gx += g_hat[i] * c.ln_hat[i];
      }
      mean_g /= static_cast<double>(h);
      mean_gx /= static_cast<double>(h);
      for (std::size_t i = 0; i < h; ++i) {
        g_z0[i] = c.ln_scale * (g_hat[i] - mean_g - c.ln_hat[i] * mean_gx);
      }
      break;
    }
  }

  const std::vector<double> g_input = affine_backward(params.layers[0], c.input, g_z0, grad.layers[0]);
  if (params.pooling == Pooling::attentive) {
    const auto gq = attentive_pool_query_grad(c.sequence, c.attention, g_input);
    for (std::size_t k = 0; k < gq.size(); ++k) grad.query[k] += gq[k];
  }
}

HeadParams head_backward(const HeadParams& params, const ForwardCache& cache, double upstream_grad) {
  HeadParams grad = params.zeros_like();
  accumulate_backward(params, cache, upstream_grad, grad);
  return grad;
}

void write_params(std::ostream& os, const HeadParams& params) {
  os << "naphead " << kParamsFormatVersion << '\n';
  os << "variant " << to_string(params.variant) << '\n';
  os << "pooling " << to_string(params.pooling) << '\n';
  os << "input_dim " << params.input_dim << '\n';
  os << "hidden_width " << params.hidden_width() << '\n';
  for (const auto& [name, values] : params.tensors()) {
    os << "tensor " << name << ' ' << values.size() << '\n';
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) os << ' ';
      os << format_double(values[i]);
    }
    os << '\n';
  }
  os << "end\n";
}

HeadParams read_params(std::istream& is) {
  auto expect_key = [&](const std::string& key) {
    std::string k;
    if (!(is >> k) || k != key) throw Error("params: expected '" + key + "'");
  };
  expect_key("naphead");
  int version = 0;
  if (!(is >> version) || version != kParamsFormatVersion) {
    throw Error("params: unsupported format version");
  }
  std::string variant, pooling;
  std::size_t input_dim = 0, hidden = 0;
  expect_key("variant");
  is >> variant;
  expect_key("pooling");
  is >> pooling;
  expect_key("input_dim");
  is >> input_dim;
  expect_key("hidden_width");
  is >> hidden;
  if (!is) throw Error("params: malformed header");

  // Build the shape skeleton, then fill tensors by name.
  const Variant v = parse_variant(variant);
  HeadParams p;
  p.variant = v;
  p.pooling = parse_pooling(pooling);
  p.input_dim = input_dim;
  if (p.pooling == Pooling::attentive) p.query.assign(input_dim, 0.0);
  p.layers.push_back({Matrix(hidden, input_dim), std::vector<double>(hidden, 0.0)});
  if (layer_count(v) == 3) p.layers.push_back({Matrix(hidden, hidden), std::vector<double>(hidden, 0.0)});
  p.layers.push_back({Matrix(1, hidden), std::vector<double>(1, 0.0)});
  if (uses_layer_norm(v)) {
    p.ln_gain.assign(hidden, 0.0);
    p.ln_bias.assign(hidden, 0.0);
  }
  for (auto& [name, values] : p.tensors()) {
    std::string key, got_name;
    std::size_t count = 0;
    if (!(is >> key >> got_name >> count) || key != "tensor" || got_name != name) {
      throw Error("params: expected tensor '" + name + "'");
    }
    if (count != values.size()) throw Error("params: tensor '" + name + "' has wrong size");
    for (double& x : values) {
      std::string tok;
      if (!(is >> tok)) throw Error("params: truncated tensor '" + name + "'");
      x = parse_double(tok);
    }
  }
  expect_key("end");
  return p;
}

void save_params(const std::string& path, const HeadParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path + "'");
  write_params(os, params);
  if (!os) throw Error("failed writing '" + path + "'");
}

HeadParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read '" + path + "'");
  return read_params(is);
}

}  // namespace nap::head
