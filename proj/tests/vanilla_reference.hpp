#pragma once

// Independent plain-loop reference for the pre-norm transformer block and
// the input stem. Deliberately avoids the tape engine and the kernel
// layer; used to cross-check the model path.

#include <cmath>
#include <string>
#include <vector>

#include "nnf/encoding.hpp"
#include "nnf/model.hpp"

namespace nnf::test {

inline std::vector<double> ref_matmul(const std::vector<double>& a,
                                      const std::vector<double>& b, int m,
                                      int k, int n) {
  std::vector<double> c(size_t(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j)
        c[size_t(i) * n + j] += a[size_t(i) * k + p] * b[size_t(p) * n + j];
  return c;
}

inline void ref_layer_norm(std::vector<double>& x, int m, int n,
                           const std::vector<double>& gamma,
                           const std::vector<double>& beta,
                           double eps = 1e-5) {
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x[size_t(i) * n + j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x[size_t(i) * n + j] - mu;
      var += d * d;
    }
    var /= n;
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j)
      x[size_t(i) * n + j] =
          gamma[size_t(j)] * ((x[size_t(i) * n + j] - mu) * rstd) +
          beta[size_t(j)];
  }
}

/// Standard pre-norm transformer block on H (n x d): unmasked multi-head
/// attention then a plain two-layer ReLU FFN, both with residuals.
inline std::vector<double> vanilla_block(std::vector<double> h, int n,
                                         const Params& params,
                                         const ModelConfig& cfg, int block) {
  const int d = cfg.channels;
  const int hd = cfg.head_dim();
  const std::string pre = "blk" + std::to_string(block) + ".";
  auto w = [&](const std::string& name) -> const std::vector<double>& {
    return params.get(name).value;
  };

  std::vector<double> x = h;
  ref_layer_norm(x, n, d, w(pre + "ln1.gamma"), w(pre + "ln1.beta"));

  std::vector<double> cat(size_t(n) * d, 0.0);
  for (int head = 0; head < cfg.heads; ++head) {
    const std::string hs = std::to_string(head);
    const auto q = ref_matmul(x, w(pre + "attn.q" + hs), n, d, hd);
    const auto k = ref_matmul(x, w(pre + "attn.k" + hs), n, d, hd);
    const auto v = ref_matmul(x, w(pre + "attn.v" + hs), n, d, hd);
    for (int i = 0; i < n; ++i) {
      std::vector<double> logits(static_cast<size_t>(n));
      double mx = -1e300;
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int p = 0; p < hd; ++p)
          s += q[size_t(i) * hd + p] * k[size_t(j) * hd + p];
        logits[size_t(j)] = s / std::sqrt(double(hd));
        mx = std::max(mx, logits[size_t(j)]);
      }
      double z = 0.0;
      for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (int p = 0; p < hd; ++p) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          acc += (logits[size_t(j)] / z) * v[size_t(j) * hd + p];
        cat[size_t(i) * d + head * hd + p] = acc;
      }
    }
  }
  const auto attn_out = ref_matmul(cat, w(pre + "attn.out"), n, d, d);
  for (size_t i = 0; i < h.size(); ++i) h[i] += attn_out[i];

  std::vector<double> x2 = h;
  ref_layer_norm(x2, n, d, w(pre + "ln2.gamma"), w(pre + "ln2.beta"));
  const int hidden = cfg.ffn_hidden();
  auto act = ref_matmul(x2, w(pre + "ffn.w1"), n, d, hidden);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < hidden; ++j) {
      double& v = act[size_t(i) * hidden + j];
      v = std::max(0.0, v + w(pre + "ffn.b1")[size_t(j)]);
    }
  const auto ffn = ref_matmul(act, w(pre + "ffn.w2"), n, hidden, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      h[size_t(i) * d + j] += ffn[size_t(i) * d + j] +
                              w(pre + "ffn.b2")[size_t(j)];
  return h;
}

/// Input stem: Z @ W_in + b_in followed by layer norm.
inline std::vector<double> vanilla_stem(const Dag& dag, const Params& params,
                                        const ModelConfig& cfg) {
  const auto z = encode_graph(dag, cfg.encoding);
  const int n = dag.n, d = cfg.channels, e = cfg.encoding.total_dim();
  std::vector<double> h = ref_matmul(z, params.get("input.w").value, n, e, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      h[size_t(i) * d + j] += params.get("input.b").value[size_t(j)];
  ref_layer_norm(h, n, d, params.get("input.ln.gamma").value,
                 params.get("input.ln.beta").value);
  return h;
}

}  // namespace nnf::test
