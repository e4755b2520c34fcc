#pragma once

// Small fully-connected encoder with a hand-written backward pass, its
// momentum (EMA) twin, a FIFO memory bank, and a text checkpoint format.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fnc/core_math.hpp"

namespace fnc {

/// Layer l maps sizes[l] -> sizes[l + 1]: y = x W + b, W is (in x out).
/// Hidden layers apply a rectifier; the last layer feeds l2_normalize.
struct MlpParams {
  std::vector<std::size_t> sizes;
  std::vector<Matrix> weights;
  std::vector<Vec> biases;

  std::size_t layers() const { return weights.size(); }
  std::size_t input_dim() const { return sizes.front(); }
  std::size_t output_dim() const { return sizes.back(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += weights[l].data.size() + biases[l].size();
    return n;
  }

  bool same_shape(const MlpParams& o) const {
    if (sizes != o.sizes || layers() != o.layers()) return false;
    for (std::size_t l = 0; l < layers(); ++l)
      if (!weights[l].same_shape(o.weights[l]) || biases[l].size() != o.biases[l].size()) return false;
    return true;
  }

  /// Visit every scalar parameter in checkpoint order (per layer: weights
  /// row-major, then bias).
  template <class F>
  void for_each(F&& f) {
    for (std::size_t l = 0; l < layers(); ++l) {
      for (double& w : weights[l].data) f(w);
      for (double& b : biases[l]) f(b);
    }
  }
  template <class F>
  void for_each(F&& f) const {
    for (std::size_t l = 0; l < layers(); ++l) {
      for (double w : weights[l].data) f(w);
      for (double b : biases[l]) f(b);
    }
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for_each([&](double v) { out.push_back(v); });
    return out;
  }

  static MlpParams zeros_like(const MlpParams& p) {
    MlpParams z;
    z.sizes = p.sizes;
    for (std::size_t l = 0; l < p.layers(); ++l) {
      z.weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
      z.biases.emplace_back(p.biases[l].size(), 0.0);
    }
    return z;
  }
};

inline MlpParams init_params(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  require(sizes.size() >= 2, ErrorKind::config, "encoder needs at least one layer");
  for (std::size_t s : sizes) require(s >= 1, ErrorKind::config, "layer widths must be >= 1");
  MlpParams p;
  p.sizes = sizes;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(sizes[l])));
    Matrix w(sizes[l], sizes[l + 1]);
    for (double& v : w.data) v = dist(rng);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(sizes[l + 1], 0.0);
  }
  return p;
}

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Vec out_norms;               // norm of the final layer output per sample
  std::vector<Vec> embeddings;
};

struct ForwardResult {
  std::vector<Vec> embeddings;
  ForwardCache cache;
};

inline Matrix to_matrix(const std::vector<Vec>& rows, std::size_t cols) {
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols)
      fail(ErrorKind::shape,
           "input dimension " + std::to_string(rows[r].size()) + " does not match " + std::to_string(cols));
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

inline ForwardResult forward(const MlpParams& params, const std::vector<Vec>& inputs) {
  require(params.layers() >= 1, ErrorKind::config, "forward: empty network");
  ForwardResult res;
  auto& cache = res.cache;
  Matrix x = to_matrix(inputs, params.input_dim());
  for (std::size_t l = 0; l < params.layers(); ++l) {
    const Matrix& w = params.weights[l];
    Matrix y(x.rows, w.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
      auto yr = y.row(r);
      std::copy(params.biases[l].begin(), params.biases[l].end(), yr.begin());
      for (std::size_t i = 0; i < w.rows; ++i) {
        const double xi = x(r, i);
        if (xi == 0.0) continue;
        const double* wi = &w.data[i * w.cols];
        for (std::size_t o = 0; o < w.cols; ++o) yr[o] += xi * wi[o];
      }
    }
    cache.inputs.push_back(std::move(x));
    const bool hidden = l + 1 < params.layers();
    cache.pre.push_back(y);
    if (hidden)
      for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    x = std::move(y);
  }
  cache.out_norms.resize(x.rows);
  res.embeddings.resize(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    res.embeddings[r] = l2_normalize(x.row(r));
    cache.out_norms[r] = norm(x.row(r));
  }
  cache.embeddings = res.embeddings;
  return res;
}

/// Encode without keeping the cache.
inline std::vector<Vec> encode(const MlpParams& params, const std::vector<Vec>& inputs) {
  return forward(params, inputs).embeddings;
}

inline MlpParams backward(const MlpParams& params, const ForwardCache& cache,
                          const std::vector<Vec>& embedding_grads) {
  require(cache.pre.size() == params.layers() && cache.inputs.size() == params.layers(),
          ErrorKind::shape, "backward: cache does not match network depth");
  const std::size_t batch = cache.embeddings.size();
  require(embedding_grads.size() == batch, ErrorKind::shape,
          "backward: gradient count does not match cached batch");
  const std::size_t out_dim = params.output_dim();

  // Through the normalization: dL/dy = (g - (g.z) z) / |y|
  Matrix delta(batch, out_dim);
  for (std::size_t r = 0; r < batch; ++r) {
    const Vec& g = embedding_grads[r];
    const Vec& z = cache.embeddings[r];
    require(g.size() == out_dim, ErrorKind::shape, "backward: gradient dimension mismatch");
    const double gz = dot(g, z);
    for (std::size_t c = 0; c < out_dim; ++c) delta(r, c) = (g[c] - gz * z[c]) / cache.out_norms[r];
  }

  MlpParams grad = MlpParams::zeros_like(params);
  for (std::size_t l = params.layers(); l-- > 0;) {
    const Matrix& w = params.weights[l];
    const Matrix& x = cache.inputs[l];
    if (l + 1 < params.layers()) {
      const Matrix& pre = cache.pre[l];
      for (std::size_t k = 0; k < delta.data.size(); ++k)
        if (pre.data[k] <= 0.0) delta.data[k] = 0.0;
    }
    Matrix& gw = grad.weights[l];
    Vec& gb = grad.biases[l];
    for (std::size_t r = 0; r < batch; ++r) {
      const auto dr = delta.row(r);
      for (std::size_t o = 0; o < w.cols; ++o) gb[o] += dr[o];
      for (std::size_t i = 0; i < w.rows; ++i) {
        const double xi = x(r, i);
        if (xi == 0.0) continue;
        double* gwi = &gw.data[i * w.cols];
        for (std::size_t o = 0; o < w.cols; ++o) gwi[o] += xi * dr[o];
      }
    }
    if (l == 0) break;
    Matrix prev(batch, w.rows);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t i = 0; i < w.rows; ++i) {
        const double* wi = &w.data[i * w.cols];
        double s = 0.0;
        for (std::size_t o = 0; o < w.cols; ++o) s += wi[o] * delta(r, o);
        prev(r, i) = s;
      }
    delta = std::move(prev);
  }
  return grad;
}

/// a += scale * b
inline void axpy(MlpParams& a, const MlpParams& b, double scale) {
  require(a.same_shape(b), ErrorKind::shape, "parameter shape mismatch");
  for (std::size_t l = 0; l < a.layers(); ++l) {
    for (std::size_t k = 0; k < a.weights[l].data.size(); ++k)
      a.weights[l].data[k] += scale * b.weights[l].data[k];
    for (std::size_t k = 0; k < a.biases[l].size(); ++k) a.biases[l][k] += scale * b.biases[l][k];
  }
}

inline double param_distance(const MlpParams& a, const MlpParams& b) {
  require(a.same_shape(b), ErrorKind::shape, "parameter shape mismatch");
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  double s = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) s += (fa[k] - fb[k]) * (fa[k] - fb[k]);
  return std::sqrt(s);
}

struct MomentumEncoder {
  MlpParams params;
  double m = 0.99;
};

/// theta_k <- m * theta_k + (1 - m) * theta_q for every parameter.
inline MomentumEncoder momentum_update(MomentumEncoder enc, const MlpParams& main) {
  require(enc.m >= 0.0 && enc.m <= 1.0, ErrorKind::config, "momentum must lie in [0, 1]");
  require(enc.params.same_shape(main), ErrorKind::shape, "momentum encoder shape mismatch");
  const double m = enc.m;
  for (std::size_t l = 0; l < main.layers(); ++l) {
    auto& w = enc.params.weights[l].data;
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = m * w[k] + (1.0 - m) * main.weights[l].data[k];
    auto& b = enc.params.biases[l];
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = m * b[k] + (1.0 - m) * main.biases[l][k];
  }
  return enc;
}

/// Gradient descent with heavy-ball momentum: v <- mu v + g; theta <- theta - lr v.
struct SgdMomentum {
  double lr = 0.1;
  double mu = 0.9;
  MlpParams velocity;

  void step(MlpParams& params, const MlpParams& grad) {
    if (velocity.layers() == 0) velocity = MlpParams::zeros_like(params);
    require(velocity.same_shape(grad) && params.same_shape(grad), ErrorKind::shape,
            "optimizer shape mismatch");
    for (std::size_t l = 0; l < params.layers(); ++l) {
      auto& v = velocity.weights[l].data;
      auto& w = params.weights[l].data;
      const auto& g = grad.weights[l].data;
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = mu * v[k] + g[k];
        w[k] -= lr * v[k];
      }
      auto& vb = velocity.biases[l];
      auto& b = params.biases[l];
      const auto& gb = grad.biases[l];
      for (std::size_t k = 0; k < b.size(); ++k) {
        vb[k] = mu * vb[k] + gb[k];
        b[k] -= lr * vb[k];
      }
    }
  }
};

/// Point-in-time copy of the bank. Sequence numbers are the global insertion
/// order, used by the harness to look up side-band labels.
struct BankSnapshot {
  std::vector<Vec> embeddings;
  std::vector<std::uint64_t> seqs;
};

/// FIFO queue of unit-norm embeddings, oldest evicted first.
class MemoryBank {
 public:
  explicit MemoryBank(std::size_t capacity) : capacity_(capacity) {
    require(capacity >= 1, ErrorKind::config, "memory bank capacity must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t next_seq() const { return next_seq_; }

  /// Appends in order and returns the first assigned sequence number.
  std::uint64_t enqueue(std::span<const Vec> embeddings) {
    for (const auto& e : embeddings)
      require(!e.empty() && is_unit(e), ErrorKind::degenerate_input,
              "memory bank accepts unit-norm embeddings only");
    const std::uint64_t first = next_seq_;
    for (const auto& e : embeddings) {
      entries_.push_back(e);
      seqs_.push_back(next_seq_++);
      if (entries_.size() > capacity_) {
        entries_.pop_front();
        seqs_.pop_front();
      }
    }
    return first;
  }

  BankSnapshot snapshot() const {
    return {{entries_.begin(), entries_.end()}, {seqs_.begin(), seqs_.end()}};
  }

 private:
  std::size_t capacity_;
  std::deque<Vec> entries_;
  std::deque<std::uint64_t> seqs_;
  std::uint64_t next_seq_ = 0;
};

inline MemoryBank bank_enqueue(MemoryBank bank, std::span<const Vec> embeddings) {
  bank.enqueue(embeddings);
  return bank;
}

// Checkpoint layout (text, one token group per line):
//   fnc-checkpoint 1
//   layers <s0> <s1> ... <sL>
//   seed <u64>
//   step <u64>
//   then per layer: <in> lines of <out> weights (row-major), one line of <out> biases
// Values are written with 17 significant digits and round-trip exactly.
struct Checkpoint {
  MlpParams params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot open " + path + " for writing");
  out << "fnc-checkpoint 1\nlayers";
  for (std::size_t s : ck.params.sizes) out << ' ' << s;
  out << "\nseed " << ck.seed << "\nstep " << ck.step << '\n';
  for (std::size_t l = 0; l < ck.params.layers(); ++l) {
    const Matrix& w = ck.params.weights[l];
    for (std::size_t r = 0; r < w.rows; ++r) {
      for (std::size_t c = 0; c < w.cols; ++c) out << (c ? " " : "") << format_double(w(r, c));
      out << '\n';
    }
    const Vec& b = ck.params.biases[l];
    for (std::size_t c = 0; c < b.size(); ++c) out << (c ? " " : "") << format_double(b[c]);
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path);
  auto bad = [&](const std::string& what) { fail(ErrorKind::io, path + ": " + what); };

  std::string line, tag;
  int version = 0;
  if (!std::getline(in, line)) bad("empty file");
  std::istringstream(line) >> tag >> version;
  if (tag != "fnc-checkpoint" || version != 1) bad("not a version-1 checkpoint");

  Checkpoint ck;
  if (!std::getline(in, line)) bad("missing layers line");
  {
    std::istringstream ls(line);
    ls >> tag;
    if (tag != "layers") bad("missing layers line");
    std::size_t s;
    while (ls >> s) ck.params.sizes.push_back(s);
  }
  if (ck.params.sizes.size() < 2) bad("need at least two layer sizes");
  if (!(in >> tag >> ck.seed) || tag != "seed") bad("missing seed");
  if (!(in >> tag >> ck.step) || tag != "step") bad("missing step");

  const auto& sizes = ck.params.sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Matrix w(sizes[l], sizes[l + 1]);
    for (double& v : w.data)
      if (!(in >> v)) bad("truncated weights in layer " + std::to_string(l));
    Vec b(sizes[l + 1]);
    for (double& v : b)
      if (!(in >> v)) bad("truncated biases in layer " + std::to_string(l));
    ck.params.weights.push_back(std::move(w));
    ck.params.biases.push_back(std::move(b));
  }
  if (in >> tag) bad("trailing data");
  return ck;
}

}  // namespace fnc
