#pragma once

// Bidirectional LSTM tagging network: embedding + capitalization input layer,
// stacked bidirectional LSTM layers with diagonal peepholes, softmax output,
// cross-entropy loss, exact BPTT gradients and plain SGD.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "blstm/corpus.hpp"
#include "blstm/embedding_table.hpp"
#include "blstm/numerics.hpp"

namespace blstm {

// One direction of one LSTM layer. Peephole weights are diagonal and stored
// as vectors.
struct LstmParams {
  Matrix w_xi, w_xf, w_xc, w_xo;  // hidden x input
  Matrix w_hi, w_hf, w_hc, w_ho;  // hidden x hidden
  Vector w_ci, w_cf, w_co;        // peepholes, dim hidden
  Vector b_i, b_f, b_c, b_o;      // dim hidden

  std::size_t hidden_size() const { return w_hi.rows; }
  std::size_t input_size() const { return w_xi.cols; }
};

struct ModelParams {
  std::size_t embedding_dim = 0;  // d
  std::size_t hidden_size = 0;    // H
  std::size_t num_tags = 0;       // m

  Matrix w1;  // |V| x d, one embedding row per vocabulary word
  Matrix w2;  // d x 3, capitalization feature weights

  struct Layer {
    LstmParams fwd, bwd;
  };
  std::vector<Layer> layers;  // layer 0 reads the input vectors; layer k>0
                              // reads [h_fwd ; h_bwd] of layer k-1

  Matrix w_fy, w_by;  // m x H, forward/backward hidden to output
  Vector b_y;         // m

  std::size_t vocab_size() const { return w1.rows; }
  std::size_t num_layers() const { return layers.size(); }
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 20;
  std::size_t hidden_size = 100;
  std::size_t embedding_dim = 100;
  std::size_t layers = 1;
  std::uint64_t seed = 1;
  bool shuffle = true;
};

namespace detail {

inline LstmParams zero_lstm(std::size_t input, std::size_t hidden) {
  LstmParams p;
  p.w_xi = Matrix(hidden, input);
  p.w_xf = Matrix(hidden, input);
  p.w_xc = Matrix(hidden, input);
  p.w_xo = Matrix(hidden, input);
  p.w_hi = Matrix(hidden, hidden);
  p.w_hf = Matrix(hidden, hidden);
  p.w_hc = Matrix(hidden, hidden);
  p.w_ho = Matrix(hidden, hidden);
  p.w_ci = p.w_cf = p.w_co = Vector(hidden, 0.0);
  p.b_i = p.b_f = p.b_c = p.b_o = Vector(hidden, 0.0);
  return p;
}

inline void fill_uniform(Matrix& m, double r, Rng& rng) {
  for (double& v : m.data) v = rng.uniform(-r, r);
}
inline void fill_uniform(Vector& v, double r, Rng& rng) {
  for (double& t : v) t = rng.uniform(-r, r);
}

inline void fill_lstm_uniform(LstmParams& p, double r, Rng& rng) {
  fill_uniform(p.w_xi, r, rng);
  fill_uniform(p.w_xf, r, rng);
  fill_uniform(p.w_xc, r, rng);
  fill_uniform(p.w_xo, r, rng);
  fill_uniform(p.w_hi, r, rng);
  fill_uniform(p.w_hf, r, rng);
  fill_uniform(p.w_hc, r, rng);
  fill_uniform(p.w_ho, r, rng);
  fill_uniform(p.w_ci, r, rng);
  fill_uniform(p.w_cf, r, rng);
  fill_uniform(p.w_co, r, rng);
  fill_uniform(p.b_i, r, rng);
  fill_uniform(p.b_f, r, rng);
  fill_uniform(p.b_c, r, rng);
  fill_uniform(p.b_o, r, rng);
}

}  // namespace detail

// All shapes allocated, all values zero.
inline ModelParams zero_model(std::size_t vocab, std::size_t embedding_dim,
                              std::size_t hidden, std::size_t layers, std::size_t tags) {
  if (vocab < 1 || embedding_dim < 1 || hidden < 1 || layers < 1 || tags < 1) {
    throw std::invalid_argument("zero_model: all sizes must be >= 1");
  }
  ModelParams m;
  m.embedding_dim = embedding_dim;
  m.hidden_size = hidden;
  m.num_tags = tags;
  m.w1 = Matrix(vocab, embedding_dim);
  m.w2 = Matrix(embedding_dim, 3);
  m.layers.resize(layers);
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = k == 0 ? embedding_dim : 2 * hidden;
    m.layers[k].fwd = detail::zero_lstm(in, hidden);
    m.layers[k].bwd = detail::zero_lstm(in, hidden);
  }
  m.w_fy = Matrix(tags, hidden);
  m.w_by = Matrix(tags, hidden);
  m.b_y = Vector(tags, 0.0);
  return m;
}

// Uniform [-0.1, 0.1) init, drawn in declaration order so a seed pins every bit.
inline ModelParams init_model(std::size_t vocab, std::size_t embedding_dim, std::size_t hidden,
                              std::size_t layers, std::size_t tags, Rng& rng) {
  ModelParams m = zero_model(vocab, embedding_dim, hidden, layers, tags);
  const double r = 0.1;
  detail::fill_uniform(m.w1, r, rng);
  detail::fill_uniform(m.w2, r, rng);
  for (auto& layer : m.layers) {
    detail::fill_lstm_uniform(layer.fwd, r, rng);
    detail::fill_lstm_uniform(layer.bwd, r, rng);
  }
  detail::fill_uniform(m.w_fy, r, rng);
  detail::fill_uniform(m.w_by, r, rng);
  detail::fill_uniform(m.b_y, r, rng);
  return m;
}

// Visits every parameter as (name, Matrix&) or (name, Vector&), in the fixed
// order used by serialization and by the tests' parameter flattening.
template <class Model, class F>
void visit_params(Model& m, F&& f) {
  f("w1", m.w1);
  f("w2", m.w2);
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    auto visit_dir = [&](const char* dir, auto& p) {
      const std::string base = "layer" + std::to_string(k) + "." + dir + ".";
      f(base + "w_xi", p.w_xi);
      f(base + "w_xf", p.w_xf);
      f(base + "w_xc", p.w_xc);
      f(base + "w_xo", p.w_xo);
      f(base + "w_hi", p.w_hi);
      f(base + "w_hf", p.w_hf);
      f(base + "w_hc", p.w_hc);
      f(base + "w_ho", p.w_ho);
      f(base + "w_ci", p.w_ci);
      f(base + "w_cf", p.w_cf);
      f(base + "w_co", p.w_co);
      f(base + "b_i", p.b_i);
      f(base + "b_f", p.b_f);
      f(base + "b_c", p.b_c);
      f(base + "b_o", p.b_o);
    };
    visit_dir("fwd", m.layers[k].fwd);
    visit_dir("bwd", m.layers[k].bwd);
  }
  f("w_fy", m.w_fy);
  f("w_by", m.w_by);
  f("b_y", m.b_y);
}

// Input layer: the word's embedding row plus the capitalization column of w2.
inline Vector input_vector(const ModelParams& model, std::size_t word_index, CapFeature cap) {
  if (word_index >= model.vocab_size()) {
    throw std::invalid_argument("input_vector: word index " + std::to_string(word_index) +
                                " out of range for vocabulary of " +
                                std::to_string(model.vocab_size()));
  }
  Vector v(model.embedding_dim);
  const double* row = model.w1.row(word_index);
  const int cap_col = static_cast<int>(cap);
  for (std::size_t j = 0; j < model.embedding_dim; ++j) {
    v[j] = row[j] + model.w2(j, cap_col);
  }
  return v;
}

// Everything one LSTM step needs for its backward pass.
struct LstmStepCache {
  Vector x, h_prev, c_prev;
  Vector i, f, g, o;  // gate activations; g is the tanh cell candidate
  Vector c, tanh_c, h;
};

// The five-equation composite step, gates in order i, f, c, o, h:
//   i = sigmoid(w_xi x + w_hi h_prev + w_ci . c_prev + b_i)
//   f = sigmoid(w_xf x + w_hf h_prev + w_cf . c_prev + b_f)
//   c = f . c_prev + i . tanh(w_xc x + w_hc h_prev + b_c)
//   o = sigmoid(w_xo x + w_ho h_prev + w_co . c + b_o)
//   h = o . tanh(c)
inline LstmStepCache lstm_cell_forward(const Vector& x, const Vector& h_prev,
                                       const Vector& c_prev, const LstmParams& p) {
  const std::size_t hidden = p.hidden_size();
  if (x.size() != p.input_size() || h_prev.size() != hidden || c_prev.size() != hidden) {
    throw std::invalid_argument("lstm_cell_forward: got x=" + std::to_string(x.size()) +
                                " h_prev=" + std::to_string(h_prev.size()) + " c_prev=" +
                                std::to_string(c_prev.size()) + " for cell with input " +
                                std::to_string(p.input_size()) + ", hidden " +
                                std::to_string(hidden));
  }
  LstmStepCache s;
  s.x = x;
  s.h_prev = h_prev;
  s.c_prev = c_prev;

  Vector a_i = affine(p.w_xi, x, p.b_i);
  Vector a_f = affine(p.w_xf, x, p.b_f);
  Vector a_g = affine(p.w_xc, x, p.b_c);
  Vector a_o = affine(p.w_xo, x, p.b_o);
  for (std::size_t r = 0; r < hidden; ++r) {
    const double* wi = p.w_hi.row(r);
    const double* wf = p.w_hf.row(r);
    const double* wc = p.w_hc.row(r);
    const double* wo = p.w_ho.row(r);
    double si = 0, sf = 0, sc = 0, so = 0;
    for (std::size_t c = 0; c < hidden; ++c) {
      si += wi[c] * h_prev[c];
      sf += wf[c] * h_prev[c];
      sc += wc[c] * h_prev[c];
      so += wo[c] * h_prev[c];
    }
    a_i[r] += si;
    a_f[r] += sf;
    a_g[r] += sc;
    a_o[r] += so;
  }

  s.i.resize(hidden);
  s.f.resize(hidden);
  s.g.resize(hidden);
  s.c.resize(hidden);
  s.tanh_c.resize(hidden);
  s.o.resize(hidden);
  s.h.resize(hidden);
  for (std::size_t r = 0; r < hidden; ++r) {
    s.i[r] = sigmoid_scalar(a_i[r] + p.w_ci[r] * c_prev[r]);
    s.f[r] = sigmoid_scalar(a_f[r] + p.w_cf[r] * c_prev[r]);
    s.g[r] = std::tanh(a_g[r]);
    s.c[r] = s.f[r] * c_prev[r] + s.i[r] * s.g[r];
    s.o[r] = sigmoid_scalar(a_o[r] + p.w_co[r] * s.c[r]);
    s.tanh_c[r] = std::tanh(s.c[r]);
    s.h[r] = s.o[r] * s.tanh_c[r];
  }
  return s;
}

// Full forward state of one sentence; step caches are indexed by token
// position regardless of scan direction.
struct ForwardCache {
  std::vector<std::size_t> words;
  std::vector<CapFeature> caps;
  std::vector<Vector> inputs;  // input-layer vectors I_t

  struct LayerCache {
    std::vector<LstmStepCache> fwd, bwd;
  };
  std::vector<LayerCache> layers;

  Matrix probs;  // n x m, row t = tag distribution of token t
};

// Runs every layer's forward scan left-to-right and backward scan
// right-to-left with zero initial state, then softmaxes the per-token
// combination of the top layer's two hidden sequences.
inline ForwardCache forward(const ModelParams& model, const std::vector<std::size_t>& words,
                            const std::vector<CapFeature>& caps) {
  const std::size_t n = words.size();
  if (n == 0) throw std::invalid_argument("forward: empty sentence");
  if (caps.size() != n) {
    throw std::invalid_argument("forward: " + std::to_string(n) + " words but " +
                                std::to_string(caps.size()) + " capitalization features");
  }
  const std::size_t hidden = model.hidden_size;

  ForwardCache cache;
  cache.words = words;
  cache.caps = caps;
  cache.inputs.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    cache.inputs.push_back(input_vector(model, words[t], caps[t]));
  }

  const Vector zeros(hidden, 0.0);
  std::vector<Vector> layer_in = cache.inputs;
  cache.layers.resize(model.num_layers());
  for (std::size_t k = 0; k < model.num_layers(); ++k) {
    auto& lc = cache.layers[k];
    lc.fwd.resize(n);
    lc.bwd.resize(n);

    const Vector* h = &zeros;
    const Vector* c = &zeros;
    for (std::size_t t = 0; t < n; ++t) {
      lc.fwd[t] = lstm_cell_forward(layer_in[t], *h, *c, model.layers[k].fwd);
      h = &lc.fwd[t].h;
      c = &lc.fwd[t].c;
    }
    h = &zeros;
    c = &zeros;
    for (std::size_t t = n; t-- > 0;) {
      lc.bwd[t] = lstm_cell_forward(layer_in[t], *h, *c, model.layers[k].bwd);
      h = &lc.bwd[t].h;
      c = &lc.bwd[t].c;
    }

    if (k + 1 < model.num_layers()) {
      for (std::size_t t = 0; t < n; ++t) {
        Vector& v = layer_in[t];
        v.resize(2 * hidden);
        for (std::size_t j = 0; j < hidden; ++j) {
          v[j] = lc.fwd[t].h[j];
          v[hidden + j] = lc.bwd[t].h[j];
        }
      }
    }
  }

  const auto& top = cache.layers.back();
  cache.probs = Matrix(n, model.num_tags);
  for (std::size_t t = 0; t < n; ++t) {
    Vector y = affine(model.w_fy, top.fwd[t].h, model.b_y);
    for (std::size_t r = 0; r < model.num_tags; ++r) {
      const double* wr = model.w_by.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < hidden; ++c) acc += wr[c] * top.bwd[t].h[c];
      y[r] += acc;
    }
    Vector p = softmax(y);
    for (std::size_t r = 0; r < model.num_tags; ++r) cache.probs(t, r) = p[r];
  }
  return cache;
}

// Mean token-level cross-entropy of the gold tags.
inline double loss(const Matrix& probs, const std::vector<std::size_t>& gold) {
  if (gold.size() != probs.rows) {
    throw std::invalid_argument("loss: " + std::to_string(probs.rows) + " rows but " +
                                std::to_string(gold.size()) + " gold tags");
  }
  if (probs.rows == 0) throw std::invalid_argument("loss: empty probability matrix");
  double total = 0.0;
  for (std::size_t t = 0; t < probs.rows; ++t) {
    if (gold[t] >= probs.cols) {
      throw std::invalid_argument("loss: gold tag index " + std::to_string(gold[t]) +
                                  " out of range for " + std::to_string(probs.cols) + " tags");
    }
    total += -std::log(probs(t, gold[t]));
  }
  return total / static_cast<double>(probs.rows);
}

// Shadow of ModelParams, same shapes. touched_words lists the w1 rows that
// carry gradient; rows of words absent from the sentence stay exactly zero.
struct Gradients {
  ModelParams shadow;
  std::vector<std::size_t> touched_words;
};

namespace detail {

inline void add_outer(Matrix& g, const Vector& a, const Vector& x) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    double* gr = g.row(r);
    const double ar = a[r];
    for (std::size_t c = 0; c < g.cols; ++c) gr[c] += ar * x[c];
  }
}

inline void add_transpose_mul(const Matrix& w, const Vector& a, Vector& out) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* wr = w.row(r);
    const double ar = a[r];
    for (std::size_t c = 0; c < w.cols; ++c) out[c] += ar * wr[c];
  }
}

// BPTT through one direction of one layer. steps are indexed by token
// position; reverse_scan says the direction processed positions n-1..0, so
// its backward pass walks 0..n-1. dh_acc carries the gradient arriving at
// each h_t from outside the recurrence; dx accumulates input gradients.
inline void backprop_direction(const LstmParams& p, const std::vector<LstmStepCache>& steps,
                               bool reverse_scan, const std::vector<Vector>& dh_acc,
                               LstmParams& gp, std::vector<Vector>& dx) {
  const std::size_t n = steps.size();
  const std::size_t hidden = p.hidden_size();
  Vector dh_rec(hidden, 0.0);  // into h_t from step t+1 (in scan order)
  Vector dc_rec(hidden, 0.0);  // into c_t from step t+1 (in scan order)
  Vector dh(hidden), dc(hidden), da_i(hidden), da_f(hidden), da_g(hidden), da_o(hidden);

  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse_scan ? step : n - 1 - step;
    const LstmStepCache& s = steps[t];

    for (std::size_t r = 0; r < hidden; ++r) {
      dh[r] = dh_acc[t][r] + dh_rec[r];
      // h = o . tanh(c); the output gate also sees c through its peephole.
      da_o[r] = dh[r] * s.tanh_c[r] * s.o[r] * (1.0 - s.o[r]);
      dc[r] = dh[r] * s.o[r] * (1.0 - s.tanh_c[r] * s.tanh_c[r]) + dc_rec[r] +
              da_o[r] * p.w_co[r];
      da_g[r] = dc[r] * s.i[r] * (1.0 - s.g[r] * s.g[r]);
      da_i[r] = dc[r] * s.g[r] * s.i[r] * (1.0 - s.i[r]);
      da_f[r] = dc[r] * s.c_prev[r] * s.f[r] * (1.0 - s.f[r]);
    }

    add_outer(gp.w_xi, da_i, s.x);
    add_outer(gp.w_xf, da_f, s.x);
    add_outer(gp.w_xc, da_g, s.x);
    add_outer(gp.w_xo, da_o, s.x);
    add_outer(gp.w_hi, da_i, s.h_prev);
    add_outer(gp.w_hf, da_f, s.h_prev);
    add_outer(gp.w_hc, da_g, s.h_prev);
    add_outer(gp.w_ho, da_o, s.h_prev);
    for (std::size_t r = 0; r < hidden; ++r) {
      gp.w_ci[r] += da_i[r] * s.c_prev[r];
      gp.w_cf[r] += da_f[r] * s.c_prev[r];
      gp.w_co[r] += da_o[r] * s.c[r];
      gp.b_i[r] += da_i[r];
      gp.b_f[r] += da_f[r];
      gp.b_c[r] += da_g[r];
      gp.b_o[r] += da_o[r];
    }

    add_transpose_mul(p.w_xi, da_i, dx[t]);
    add_transpose_mul(p.w_xf, da_f, dx[t]);
    add_transpose_mul(p.w_xc, da_g, dx[t]);
    add_transpose_mul(p.w_xo, da_o, dx[t]);

    // Recurrent gradients for the step before this one in scan order; the
    // input and forget gates see c_prev through their peepholes.
    std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
    add_transpose_mul(p.w_hi, da_i, dh_rec);
    add_transpose_mul(p.w_hf, da_f, dh_rec);
    add_transpose_mul(p.w_hc, da_g, dh_rec);
    add_transpose_mul(p.w_ho, da_o, dh_rec);
    for (std::size_t r = 0; r < hidden; ++r) {
      dc_rec[r] = dc[r] * s.f[r] + da_i[r] * p.w_ci[r] + da_f[r] * p.w_cf[r];
    }
  }
}

}  // namespace detail

// Exact gradients of loss(forward(model, ...), gold) with respect to every
// parameter, embedding rows included.
inline Gradients backward(const ModelParams& model, const ForwardCache& cache,
                          const std::vector<std::size_t>& gold) {
  const std::size_t n = cache.words.size();
  const std::size_t hidden = model.hidden_size;
  if (n == 0 || cache.layers.size() != model.num_layers() ||
      cache.probs.rows != n || cache.probs.cols != model.num_tags ||
      cache.inputs.size() != n ||
      (n > 0 && cache.layers[0].fwd.size() == n &&
       cache.layers[0].fwd[0].h.size() != hidden)) {
    throw std::invalid_argument("backward: cache does not match the model/sentence");
  }
  if (gold.size() != n) {
    throw std::invalid_argument("backward: " + std::to_string(n) + " tokens but " +
                                std::to_string(gold.size()) + " gold tags");
  }
  for (std::size_t w : cache.words) {
    if (w >= model.vocab_size()) {
      throw std::invalid_argument("backward: cache word index out of range for the model");
    }
  }

  Gradients g;
  g.shadow = zero_model(model.vocab_size(), model.embedding_dim, hidden,
                        model.num_layers(), model.num_tags);

  // Output layer: d loss / d y_t = (p_t - onehot(gold_t)) / n.
  std::vector<Vector> dh_fwd(n, Vector(hidden, 0.0));
  std::vector<Vector> dh_bwd(n, Vector(hidden, 0.0));
  const auto& top = cache.layers.back();
  Vector dy(model.num_tags);
  for (std::size_t t = 0; t < n; ++t) {
    if (gold[t] >= model.num_tags) {
      throw std::invalid_argument("backward: gold tag index out of range");
    }
    for (std::size_t r = 0; r < model.num_tags; ++r) {
      dy[r] = (cache.probs(t, r) - (r == gold[t] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
    detail::add_outer(g.shadow.w_fy, dy, top.fwd[t].h);
    detail::add_outer(g.shadow.w_by, dy, top.bwd[t].h);
    for (std::size_t r = 0; r < model.num_tags; ++r) g.shadow.b_y[r] += dy[r];
    detail::add_transpose_mul(model.w_fy, dy, dh_fwd[t]);
    detail::add_transpose_mul(model.w_by, dy, dh_bwd[t]);
  }

  // Descend through the layers; dx of layer k feeds dh of layer k-1.
  for (std::size_t k = model.num_layers(); k-- > 0;) {
    const std::size_t in_dim = k == 0 ? model.embedding_dim : 2 * hidden;
    std::vector<Vector> dx(n, Vector(in_dim, 0.0));
    detail::backprop_direction(model.layers[k].fwd, cache.layers[k].fwd, false, dh_fwd,
                               g.shadow.layers[k].fwd, dx);
    detail::backprop_direction(model.layers[k].bwd, cache.layers[k].bwd, true, dh_bwd,
                               g.shadow.layers[k].bwd, dx);
    if (k > 0) {
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < hidden; ++j) {
          dh_fwd[t][j] = dx[t][j];
          dh_bwd[t][j] = dx[t][hidden + j];
        }
      }
    } else {
      for (std::size_t t = 0; t < n; ++t) {
        double* row = g.shadow.w1.row(cache.words[t]);
        const int cap_col = static_cast<int>(cache.caps[t]);
        for (std::size_t j = 0; j < model.embedding_dim; ++j) {
          row[j] += dx[t][j];
          g.shadow.w2(j, cap_col) += dx[t][j];
        }
      }
    }
  }

  g.touched_words = cache.words;
  std::sort(g.touched_words.begin(), g.touched_words.end());
  g.touched_words.erase(std::unique(g.touched_words.begin(), g.touched_words.end()),
                        g.touched_words.end());
  return g;
}

namespace detail {

inline void axpy(Matrix& dst, const Matrix& src, double a) {
  if (!dst.same_shape(src)) throw std::invalid_argument("sgd_step: gradient shape mismatch");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += a * src.data[i];
}
inline void axpy(Vector& dst, const Vector& src, double a) {
  if (dst.size() != src.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
}

inline void sgd_lstm(LstmParams& p, const LstmParams& g, double a) {
  axpy(p.w_xi, g.w_xi, a);
  axpy(p.w_xf, g.w_xf, a);
  axpy(p.w_xc, g.w_xc, a);
  axpy(p.w_xo, g.w_xo, a);
  axpy(p.w_hi, g.w_hi, a);
  axpy(p.w_hf, g.w_hf, a);
  axpy(p.w_hc, g.w_hc, a);
  axpy(p.w_ho, g.w_ho, a);
  axpy(p.w_ci, g.w_ci, a);
  axpy(p.w_cf, g.w_cf, a);
  axpy(p.w_co, g.w_co, a);
  axpy(p.b_i, g.b_i, a);
  axpy(p.b_f, g.b_f, a);
  axpy(p.b_c, g.b_c, a);
  axpy(p.b_o, g.b_o, a);
}

}  // namespace detail

// theta <- theta - lr * grad. Only the embedding rows listed as touched are
// visited, so untouched rows keep their exact bits.
inline void sgd_step(ModelParams& model, const Gradients& grads, double learning_rate) {
  if (learning_rate < 0.0) throw std::invalid_argument("sgd_step: negative learning rate");
  const ModelParams& g = grads.shadow;
  if (g.layers.size() != model.layers.size() || !g.w1.same_shape(model.w1)) {
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  }
  const double a = -learning_rate;
  for (std::size_t w : grads.touched_words) {
    double* row = model.w1.row(w);
    const double* gr = g.w1.row(w);
    for (std::size_t j = 0; j < model.embedding_dim; ++j) row[j] += a * gr[j];
  }
  detail::axpy(model.w2, g.w2, a);
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    detail::sgd_lstm(model.layers[k].fwd, g.layers[k].fwd, a);
    detail::sgd_lstm(model.layers[k].bwd, g.layers[k].bwd, a);
  }
  detail::axpy(model.w_fy, g.w_fy, a);
  detail::axpy(model.w_by, g.w_by, a);
  detail::axpy(model.b_y, g.b_y, a);
}

// A sentence ready for the network.
struct EncodedSentence {
  std::vector<std::size_t> words;
  std::vector<CapFeature> caps;
  std::vector<std::size_t> gold;  // empty when untagged
};

inline EncodedSentence encode_sentence(const TaggedSentence& s, const Vocabulary& vocab,
                                       const TagSet* tags) {
  EncodedSentence e;
  e.words.reserve(s.tokens.size());
  e.caps.reserve(s.tokens.size());
  for (const std::string& tok : s.tokens) {
    e.words.push_back(vocab.lookup(tok));
    e.caps.push_back(cap_feature(tok));
  }
  if (tags != nullptr) {
    e.gold.reserve(s.tags.size());
    for (const std::string& t : s.tags) {
      const std::size_t idx = tags->index_of(t);
      if (idx == TagSet::npos) {
        throw std::invalid_argument("encode_sentence: tag '" + t + "' not in tag set");
      }
      e.gold.push_back(idx);
    }
  }
  return e;
}

struct TrainLog {
  std::vector<double> epoch_loss;  // mean per-sentence loss, recorded before
                                   // each sentence's update
};

// Per-sentence SGD over the corpus for cfg.epochs epochs. Deterministic for a
// fixed seed: shuffling uses stream 1 of cfg.seed.
inline TrainLog train(ModelParams& model, const std::vector<TaggedSentence>& corpus,
                      const Vocabulary& vocab, const TagSet& tags, const TrainConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");

  std::vector<EncodedSentence> data;
  data.reserve(corpus.size());
  for (const TaggedSentence& s : corpus) {
    if (!s.has_tags() || s.tags.size() != s.tokens.size()) {
      throw std::invalid_argument("train: sentence without a full gold tag sequence");
    }
    data.push_back(encode_sentence(s, vocab, &tags));  // rejects unknown tags up front
  }

  TrainLog log;
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle(order, shuffle_rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      const EncodedSentence& s = data[idx];
      ForwardCache cache = forward(model, s.words, s.caps);
      total += loss(cache.probs, s.gold);
      Gradients g = backward(model, cache, s.gold);
      sgd_step(model, g, cfg.learning_rate);
    }
    log.epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return log;
}

// Overwrites w1 rows for vocabulary words found in the table; every other row
// is re-initialized uniform [-0.1, 0.1) from rng.
inline void load_embeddings(ModelParams& model, const EmbeddingTable& table,
                            const Vocabulary& vocab, Rng& rng) {
  if (table.dim != model.embedding_dim) {
    throw std::invalid_argument("load_embeddings: table dimension " + std::to_string(table.dim) +
                                " does not match model embedding dimension " +
                                std::to_string(model.embedding_dim));
  }
  if (vocab.size() != model.vocab_size()) {
    throw std::invalid_argument("load_embeddings: vocabulary size " + std::to_string(vocab.size()) +
                                " does not match model vocabulary " +
                                std::to_string(model.vocab_size()));
  }
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    double* row = model.w1.row(i);
    if (const Vector* v = table.find(vocab.entry(i))) {
      std::copy(v->begin(), v->end(), row);
    } else {
      for (std::size_t j = 0; j < model.embedding_dim; ++j) row[j] = rng.uniform(-0.1, 0.1);
    }
  }
}

}  // namespace blstm
