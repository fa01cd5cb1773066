#include "ventlab/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ventlab/error.hpp"
#include "ventlab/kernels.hpp"
#include "ventlab/rng.hpp"

namespace ventlab {
namespace {

namespace ks = kernels::serial;
namespace kp = kernels::parallel;

constexpr double kLayerNormEps = 1e-9;

using cspan = std::span<const double>;
using mspan = std::span<double>;

cspan at(cspan p, std::size_t off, std::size_t n) { return p.subspan(off, n); }
mspan at(mspan p, std::size_t off, std::size_t n) { return p.subspan(off, n); }

void add_bias(mspan x, cspan b, int rows, int cols) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) x[static_cast<std::size_t>(i * cols + j)] += b[static_cast<std::size_t>(j)];
}

void col_sum_acc(cspan x, mspan out, int rows, int cols) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(j)] += x[static_cast<std::size_t>(i * cols + j)];
}

void layer_norm(cspan x, cspan g, cspan b, int rows, int cols, std::vector<double>& xhat,
                std::vector<double>& rstd, std::vector<double>& y) {
  xhat.assign(static_cast<std::size_t>(rows * cols), 0.0);
  rstd.assign(static_cast<std::size_t>(rows), 0.0);
  y.assign(static_cast<std::size_t>(rows * cols), 0.0);
  for (int i = 0; i < rows; ++i) {
    const double* r = x.data() + i * cols;
    double mean = 0;
    for (int j = 0; j < cols; ++j) mean += r[j];
    mean /= cols;
    double var = 0;
    for (int j = 0; j < cols; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= cols;
    const double s = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd[static_cast<std::size_t>(i)] = s;
    for (int j = 0; j < cols; ++j) {
      const auto k = static_cast<std::size_t>(i * cols + j);
      xhat[k] = (r[j] - mean) * s;
      y[k] = xhat[k] * g[static_cast<std::size_t>(j)] + b[static_cast<std::size_t>(j)];
    }
  }
}

/// Returns dx; accumulates dg, db.
std::vector<double> layer_norm_backward(cspan dy, cspan xhat, cspan rstd, cspan g, int rows,
                                        int cols, mspan dg, mspan db) {
  std::vector<double> dx(static_cast<std::size_t>(rows * cols));
  std::vector<double> dxhat(static_cast<std::size_t>(cols));
  for (int i = 0; i < rows; ++i) {
    double m1 = 0, m2 = 0;
    for (int j = 0; j < cols; ++j) {
      const auto k = static_cast<std::size_t>(i * cols + j);
      dxhat[static_cast<std::size_t>(j)] = dy[k] * g[static_cast<std::size_t>(j)];
      dg[static_cast<std::size_t>(j)] += dy[k] * xhat[k];
      db[static_cast<std::size_t>(j)] += dy[k];
      m1 += dxhat[static_cast<std::size_t>(j)];
      m2 += dxhat[static_cast<std::size_t>(j)] * xhat[k];
    }
    m1 /= cols;
    m2 /= cols;
    for (int j = 0; j < cols; ++j) {
      const auto k = static_cast<std::size_t>(i * cols + j);
      dx[k] = rstd[static_cast<std::size_t>(i)] * (dxhat[static_cast<std::size_t>(j)] - m1 - xhat[k] * m2);
    }
  }
  return dx;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void positional_encoding(int pos, std::span<double> out) {
  const auto dim = static_cast<double>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double pair = static_cast<double>(i / 2 * 2);
    const double angle = pos / std::pow(10000.0, pair / dim);
    out[i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
}

ActionIndex greedy_index(std::span<const double> q) { return ActionIndex{kernels::argmax(q)}; }

void NetConfig::validate() const {
  if (state_dim < 1 || hidden < 1 || seq_len < 1 || layers < 0 || heads < 1 || ff_hidden < 1 ||
      mlp_hidden < 1 || num_actions < 1)
    throw ConfigError("network dimensions must be positive");
  if (hidden % heads != 0) throw ConfigError("hidden size must be divisible by the head count");
}

std::size_t Network::add(std::string name, int rows, int cols) {
  ParamInfo p{std::move(name), total_, rows, cols};
  total_ += p.size();
  entries_.push_back(p);
  return p.offset;
}

Network::Network(NetConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int h = cfg_.hidden;
  const int f = cfg_.ff_hidden;
  embed_w_ = add("embed.w", cfg_.state_dim, h);
  embed_b_ = add("embed.b", 1, h);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerOffsets o{};
    o.wq = add(p + "attn.wq", h, h);
    o.bq = add(p + "attn.bq", 1, h);
    o.wk = add(p + "attn.wk", h, h);
    o.bk = add(p + "attn.bk", 1, h);
    o.wv = add(p + "attn.wv", h, h);
    o.bv = add(p + "attn.bv", 1, h);
    o.wo = add(p + "attn.wo", h, h);
    o.bo = add(p + "attn.bo", 1, h);
    o.ln1_g = add(p + "ln1.gamma", 1, h);
    o.ln1_b = add(p + "ln1.beta", 1, h);
    o.ff_w1 = add(p + "ff.w1", h, f);
    o.ff_b1 = add(p + "ff.b1", 1, f);
    o.ff_w2 = add(p + "ff.w2", f, h);
    o.ff_b2 = add(p + "ff.b2", 1, h);
    o.ln2_g = add(p + "ln2.gamma", 1, h);
    o.ln2_b = add(p + "ln2.beta", 1, h);
    layers_.push_back(o);
  }
  encoder_end_ = total_;
  unc_w_ = add("uncertainty.w", h, 1);
  unc_b_ = add("uncertainty.b", 1, 1);
  qhead_.w1 = add("qhead.w1", 2 * h, cfg_.mlp_hidden);
  qhead_.b1 = add("qhead.b1", 1, cfg_.mlp_hidden);
  qhead_.w2 = add("qhead.w2", cfg_.mlp_hidden, cfg_.num_actions);
  qhead_.b2 = add("qhead.b2", 1, cfg_.num_actions);
  if (cfg_.behavior_head) {
    bchead_.w1 = add("behavior.w1", 2 * h, cfg_.mlp_hidden);
    bchead_.b1 = add("behavior.b1", 1, cfg_.mlp_hidden);
    bchead_.w2 = add("behavior.w2", cfg_.mlp_hidden, cfg_.num_actions);
    bchead_.b2 = add("behavior.b2", 1, cfg_.num_actions);
  }
}

const ParamInfo& Network::entry(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

std::vector<double> Network::init_params(std::uint64_t seed) const {
  std::vector<double> p(total_, 0.0);
  Rng rng(derive_seed(seed, {0x1417ULL}));
  for (const auto& e : entries_) {
    const bool gain = e.name.ends_with("gamma");
    const bool bias = e.rows == 1 && !gain;
    if (gain) {
      std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size(), 1.0);
      continue;
    }
    if (bias) continue;
    // Output layers of the action heads start small so initial values sit near 0.
    const bool output = e.name.ends_with(".w2") && e.cols == cfg_.num_actions;
    const double bound = (output ? 0.1 : 1.0) / std::sqrt(static_cast<double>(e.rows));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < e.size(); ++i) p[e.offset + i] = dist(rng);
  }
  return p;
}

void Network::encode(cspan params, cspan windows, int batch, int len, EncoderCache& c) const {
  const int d = cfg_.state_dim;
  const int h = cfg_.hidden;
  const int f = cfg_.ff_hidden;
  const int nh = cfg_.heads;
  const int dk = h / nh;
  if (len < 1 || len > cfg_.seq_len) throw ContractError("window length outside [1, seq_len]");
  if (batch < 1) throw ContractError("empty batch");
  if (windows.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(len * d))
    throw ContractError("window shape mismatch");
  if (params.size() != total_) throw ContractError("parameter vector shape mismatch");
  const int rows = batch * len;
  const auto hh = static_cast<std::size_t>(h);
  const auto rh = static_cast<std::size_t>(rows) * hh;

  c.batch = batch;
  c.length = len;
  c.input.assign(windows.begin(), windows.end());
  c.x0.assign(rh, 0.0);
  kp::gemm_nn(windows, at(params, embed_w_, static_cast<std::size_t>(d) * hh), c.x0, rows, d, h, false);
  add_bias(c.x0, at(params, embed_b_, hh), rows, h);
  if (cfg_.positional_encoding) {
    std::vector<double> pe(hh);
    for (int t = 0; t < len; ++t) {
      positional_encoding(t, pe);
      for (int b = 0; b < batch; ++b)
        for (int j = 0; j < h; ++j) c.x0[static_cast<std::size_t>((b * len + t) * h + j)] += pe[static_cast<std::size_t>(j)];
    }
  }

  c.layers.resize(static_cast<std::size_t>(cfg_.layers));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int l = 0; l < cfg_.layers; ++l) {
    const auto& o = layers_[static_cast<std::size_t>(l)];
    auto& L = c.layers[static_cast<std::size_t>(l)];
    const std::vector<double>& x = l == 0 ? c.x0 : c.layers[static_cast<std::size_t>(l - 1)].out;

    for (auto [dst, w, b] : {std::tuple{&L.q, o.wq, o.bq}, std::tuple{&L.k, o.wk, o.bk},
                             std::tuple{&L.v, o.wv, o.bv}}) {
      dst->assign(rh, 0.0);
      kp::gemm_nn(x, at(params, w, hh * hh), *dst, rows, h, h, false);
      add_bias(*dst, at(params, b, hh), rows, h);
    }

    // Attention mixes rows of the same window only.
    L.attn.assign(static_cast<std::size_t>(batch * nh * len * len), 0.0);
    L.ctx.assign(rh, 0.0);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
      const double* q = L.q.data() + static_cast<std::ptrdiff_t>(b) * len * h;
      const double* k = L.k.data() + static_cast<std::ptrdiff_t>(b) * len * h;
      const double* v = L.v.data() + static_cast<std::ptrdiff_t>(b) * len * h;
      double* ctx = L.ctx.data() + static_cast<std::ptrdiff_t>(b) * len * h;
      for (int hd = 0; hd < nh; ++hd) {
        for (int i = 0; i < len; ++i) {
          double* a = L.attn.data() + ((static_cast<std::ptrdiff_t>(b) * nh + hd) * len + i) * len;
          double mx = -INFINITY;
          for (int j = 0; j < len; ++j) {
            double s = 0;
            for (int cc = 0; cc < dk; ++cc) s += q[i * h + hd * dk + cc] * k[j * h + hd * dk + cc];
            a[j] = s * scale;
            mx = std::max(mx, a[j]);
          }
          double z = 0;
          for (int j = 0; j < len; ++j) {
            a[j] = std::exp(a[j] - mx);
            z += a[j];
          }
          for (int j = 0; j < len; ++j) a[j] /= z;
          for (int j = 0; j < len; ++j)
            for (int cc = 0; cc < dk; ++cc) ctx[i * h + hd * dk + cc] += a[j] * v[j * h + hd * dk + cc];
        }
      }
    }

    std::vector<double> r1(x);
    kp::gemm_nn(L.ctx, at(params, o.wo, hh * hh), r1, rows, h, h, true);
    add_bias(r1, at(params, o.bo, hh), rows, h);
    layer_norm(r1, at(params, o.ln1_g, hh), at(params, o.ln1_b, hh), rows, h, L.xhat1, L.rstd1, L.x1);

    const auto rf = static_cast<std::size_t>(rows) * static_cast<std::size_t>(f);
    L.ff_pre.assign(rf, 0.0);
    kp::gemm_nn(L.x1, at(params, o.ff_w1, hh * static_cast<std::size_t>(f)), L.ff_pre, rows, h, f, false);
    add_bias(L.ff_pre, at(params, o.ff_b1, static_cast<std::size_t>(f)), rows, f);
    L.ff_act.resize(rf);
    for (std::size_t i = 0; i < rf; ++i) L.ff_act[i] = gelu(L.ff_pre[i]);
    std::vector<double> r2(L.x1);
    kp::gemm_nn(L.ff_act, at(params, o.ff_w2, static_cast<std::size_t>(f) * hh), r2, rows, f, h, true);
    add_bias(r2, at(params, o.ff_b2, hh), rows, h);
    layer_norm(r2, at(params, o.ln2_g, hh), at(params, o.ln2_b, hh), rows, h, L.xhat2, L.rstd2, L.out);
  }
}

void Network::encode_backward(cspan params, const EncoderCache& c, cspan d_hidden,
                              mspan grad) const {
  const int batch = c.batch;
  const int len = c.length;
  const int rows = batch * len;
  const int d = cfg_.state_dim;
  const int h = cfg_.hidden;
  const int f = cfg_.ff_hidden;
  const int nh = cfg_.heads;
  const int dk = h / nh;
  const auto hh = static_cast<std::size_t>(h);
  const auto ff = static_cast<std::size_t>(f);
  const auto rh = static_cast<std::size_t>(rows) * hh;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<double> dx(d_hidden.begin(), d_hidden.end());
  std::vector<double> tmp(rh);
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const auto& o = layers_[static_cast<std::size_t>(l)];
    const auto& L = c.layers[static_cast<std::size_t>(l)];
    const std::vector<double>& xin = l == 0 ? c.x0 : c.layers[static_cast<std::size_t>(l - 1)].out;

    auto dr2 = layer_norm_backward(dx, L.xhat2, L.rstd2, at(params, o.ln2_g, hh), rows, h,
                                   at(grad, o.ln2_g, hh), at(grad, o.ln2_b, hh));
    std::vector<double> dx1(dr2);
    kp::gemm_tn_acc(L.ff_act, dr2, at(grad, o.ff_w2, ff * hh), rows, f, h);
    col_sum_acc(dr2, at(grad, o.ff_b2, hh), rows, h);
    std::vector<double> dpre(static_cast<std::size_t>(rows) * ff);
    kp::gemm_nt(dr2, at(params, o.ff_w2, ff * hh), dpre, rows, h, f);
    for (std::size_t i = 0; i < dpre.size(); ++i) dpre[i] *= gelu_grad(L.ff_pre[i]);
    kp::gemm_tn_acc(L.x1, dpre, at(grad, o.ff_w1, hh * ff), rows, h, f);
    col_sum_acc(dpre, at(grad, o.ff_b1, ff), rows, f);
    kp::gemm_nt(dpre, at(params, o.ff_w1, hh * ff), tmp, rows, f, h);
    for (std::size_t i = 0; i < rh; ++i) dx1[i] += tmp[i];

    auto dr1 = layer_norm_backward(dx1, L.xhat1, L.rstd1, at(params, o.ln1_g, hh), rows, h,
                                   at(grad, o.ln1_g, hh), at(grad, o.ln1_b, hh));
    std::vector<double> dxin(dr1);
    kp::gemm_tn_acc(L.ctx, dr1, at(grad, o.wo, hh * hh), rows, h, h);
    col_sum_acc(dr1, at(grad, o.bo, hh), rows, h);
    std::vector<double> dctx(rh);
    kp::gemm_nt(dr1, at(params, o.wo, hh * hh), dctx, rows, h, h);

    std::vector<double> dq(rh, 0.0), dkk(rh, 0.0), dv(rh, 0.0);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
      const auto base = static_cast<std::ptrdiff_t>(b) * len * h;
      const double* q = L.q.data() + base;
      const double* k = L.k.data() + base;
      const double* v = L.v.data() + base;
      const double* dc = dctx.data() + base;
      double* gq = dq.data() + base;
      double* gk = dkk.data() + base;
      double* gv = dv.data() + base;
      std::vector<double> da(static_cast<std::size_t>(len));
      for (int hd = 0; hd < nh; ++hd) {
        for (int i = 0; i < len; ++i) {
          const double* a = L.attn.data() + ((static_cast<std::ptrdiff_t>(b) * nh + hd) * len + i) * len;
          double dot = 0;
          for (int j = 0; j < len; ++j) {
            double s = 0;
            for (int cc = 0; cc < dk; ++cc) {
              s += dc[i * h + hd * dk + cc] * v[j * h + hd * dk + cc];
              gv[j * h + hd * dk + cc] += a[j] * dc[i * h + hd * dk + cc];
            }
            da[static_cast<std::size_t>(j)] = s;
            dot += a[j] * s;
          }
          for (int j = 0; j < len; ++j) {
            const double ds = a[j] * (da[static_cast<std::size_t>(j)] - dot) * scale;
            for (int cc = 0; cc < dk; ++cc) {
              gq[i * h + hd * dk + cc] += ds * k[j * h + hd * dk + cc];
              gk[j * h + hd * dk + cc] += ds * q[i * h + hd * dk + cc];
            }
          }
        }
      }
    }
    for (auto [dy, w, b] : {std::tuple{&dq, o.wq, o.bq}, std::tuple{&dkk, o.wk, o.bk},
                            std::tuple{&dv, o.wv, o.bv}}) {
      kp::gemm_tn_acc(xin, *dy, at(grad, w, hh * hh), rows, h, h);
      col_sum_acc(*dy, at(grad, b, hh), rows, h);
      kp::gemm_nt(*dy, at(params, w, hh * hh), tmp, rows, h, h);
      for (std::size_t i = 0; i < rh; ++i) dxin[i] += tmp[i];
    }
    dx = std::move(dxin);
  }
  kp::gemm_tn_acc(c.input, dx, at(grad, embed_w_, static_cast<std::size_t>(d) * hh), rows, d, h);
  col_sum_acc(dx, at(grad, embed_b_, hh), rows, h);
}

void Network::head_forward(cspan params, const HeadOffsets& ho, cspan phi, int batch, bool full,
                           HeadCache& cache) const {
  const int in = 2 * cfg_.hidden;
  const int m = cfg_.mlp_hidden;
  const int A = cfg_.num_actions;
  const auto bm = static_cast<std::size_t>(batch * m);
  cache.pre.assign(bm, 0.0);
  kp::gemm_nn(phi, at(params, ho.w1, static_cast<std::size_t>(in * m)), cache.pre, batch, in, m, false);
  add_bias(cache.pre, at(params, ho.b1, static_cast<std::size_t>(m)), batch, m);
  cache.act.resize(bm);
  for (std::size_t i = 0; i < bm; ++i) cache.act[i] = gelu(cache.pre[i]);
  cache.out.clear();
  if (!full) return;
  cache.out.resize(static_cast<std::size_t>(batch) * static_cast<std::size_t>(A));
  const auto b2 = at(params, ho.b2, static_cast<std::size_t>(A));
  for (int i = 0; i < batch; ++i)
    std::copy(b2.begin(), b2.end(), cache.out.begin() + static_cast<std::ptrdiff_t>(i) * A);
  kp::gemm_nn(cache.act, at(params, ho.w2, static_cast<std::size_t>(m) * static_cast<std::size_t>(A)),
              cache.out, batch, m, A, true);
}

void Network::head_backward(cspan params, const HeadOffsets& ho, cspan phi, int batch,
                            const HeadCache& cache, const HeadGradient& g, mspan grad,
                            mspan dphi) const {
  const int in = 2 * cfg_.hidden;
  const int m = cfg_.mlp_hidden;
  const int A = cfg_.num_actions;
  const auto mA = static_cast<std::size_t>(m) * static_cast<std::size_t>(A);
  const auto w2 = at(params, ho.w2, mA);
  auto dw2 = at(grad, ho.w2, mA);
  auto db2 = at(grad, ho.b2, static_cast<std::size_t>(A));
  std::vector<double> dact(static_cast<std::size_t>(batch * m), 0.0);

  if (!g.dense.empty()) {
    if (g.dense.size() != static_cast<std::size_t>(batch) * static_cast<std::size_t>(A))
      throw ContractError("dense head gradient shape mismatch");
    kp::gemm_nt(g.dense, w2, dact, batch, A, m);
    kp::gemm_tn_acc(cache.act, g.dense, dw2, batch, m, A);
    for (int i = 0; i < batch; ++i) {
      const double* row = g.dense.data() + static_cast<std::ptrdiff_t>(i) * A;
      for (int a = 0; a < A; ++a) db2[static_cast<std::size_t>(a)] += row[a];
    }
  }
  if (!g.sparse.empty()) {
    if (g.sparse.size() != static_cast<std::size_t>(batch) || g.actions.size() != g.sparse.size())
      throw ContractError("sparse head gradient shape mismatch");
    for (int i = 0; i < batch; ++i) {
      const auto a = static_cast<std::size_t>(g.actions[static_cast<std::size_t>(i)]);
      const double gi = g.sparse[static_cast<std::size_t>(i)];
      for (int p = 0; p < m; ++p) {
        const auto wp = static_cast<std::size_t>(p) * static_cast<std::size_t>(A) + a;
        dw2[wp] += cache.act[static_cast<std::size_t>(i * m + p)] * gi;
        dact[static_cast<std::size_t>(i * m + p)] += gi * w2[wp];
      }
      db2[a] += gi;
    }
  }
  for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= gelu_grad(cache.pre[i]);
  ks::gemm_tn_acc(phi, dact, at(grad, ho.w1, static_cast<std::size_t>(in * m)), batch, in, m);
  col_sum_acc(dact, at(grad, ho.b1, static_cast<std::size_t>(m)), batch, m);
  std::vector<double> tmp(static_cast<std::size_t>(batch * in));
  ks::gemm_nt(dact, at(params, ho.w1, static_cast<std::size_t>(in * m)), tmp, batch, m, in);
  for (std::size_t i = 0; i < tmp.size(); ++i) dphi[i] += tmp[i];
}

void Network::fill_output(cspan params, const EncoderCache& c, int b, ForwardOutput& out) const {
  const int h = cfg_.hidden;
  const int len = c.length;
  const auto& all = c.output();
  const auto first = all.begin() + static_cast<std::ptrdiff_t>(b) * len * h;
  out.length = len;
  out.hidden_states.assign(first, first + static_cast<std::ptrdiff_t>(len) * h);
  const auto& H = out.hidden_states;
  out.last.assign(H.end() - h, H.end());
  out.mean.assign(static_cast<std::size_t>(h), 0.0);
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < h; ++j) out.mean[static_cast<std::size_t>(j)] += H[static_cast<std::size_t>(i * h + j)] / len;
  const auto w = at(params, unc_w_, static_cast<std::size_t>(h));
  const double bias = params[unc_b_];
  out.psi.assign(static_cast<std::size_t>(len), bias);
  double mean = 0;
  for (int i = 0; i < len; ++i) {
    for (int j = 0; j < h; ++j) out.psi[static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(j)] * H[static_cast<std::size_t>(i * h + j)];
    mean += out.psi[static_cast<std::size_t>(i)];
  }
  mean /= len;
  double var = 0;
  for (double p : out.psi) var += (p - mean) * (p - mean);
  out.uncertainty = var / len;
}

ForwardOutput Network::forward(cspan params, cspan window, int len) const {
  const auto f = forward_batch(params, window, 1, len);
  ForwardOutput out;
  fill_output(params, f.encoder, 0, out);
  out.q = f.q.out;
  return out;
}

ForwardOutput Network::forward_short(cspan params, cspan window, int len) const {
  if (len < 2) throw ContractError("short forward needs a window of at least 2 steps");
  const auto d = static_cast<std::size_t>(cfg_.state_dim);
  if (window.size() != static_cast<std::size_t>(len) * d) throw ContractError("window shape mismatch");
  return forward(params, window.first(static_cast<std::size_t>(len - 1) * d), len - 1);
}

BatchForward Network::forward_batch(cspan params, cspan windows, int batch, int len,
                                    ForwardMode mode) const {
  const int h = cfg_.hidden;
  if (mode.behavior && !cfg_.behavior_head) throw ContractError("network has no behavior head");
  BatchForward f;
  f.size = batch;
  f.length = len;
  encode(params, windows, batch, len, f.encoder);
  f.phi.assign(static_cast<std::size_t>(batch * 2 * h), 0.0);
  f.uncertainty.assign(static_cast<std::size_t>(batch), 0.0);
  ForwardOutput o;
  for (int i = 0; i < batch; ++i) {
    fill_output(params, f.encoder, i, o);
    std::copy(o.last.begin(), o.last.end(), f.phi.begin() + static_cast<std::ptrdiff_t>(i) * 2 * h);
    std::copy(o.mean.begin(), o.mean.end(), f.phi.begin() + static_cast<std::ptrdiff_t>(i) * 2 * h + h);
    f.uncertainty[static_cast<std::size_t>(i)] = o.uncertainty;
  }
  head_forward(params, qhead_, f.phi, batch, mode.q_full, f.q);
  if (mode.behavior) head_forward(params, bchead_, f.phi, batch, true, f.behavior);
  return f;
}

double Network::q_value(cspan params, const BatchForward& f, int i, int action) const {
  const int m = cfg_.mlp_hidden;
  const int A = cfg_.num_actions;
  if (action < 0 || action >= A || i < 0 || i >= f.size) throw ContractError("q_value index out of range");
  double s = params[qhead_.b2 + static_cast<std::size_t>(action)];
  for (int p = 0; p < m; ++p)
    s += f.q.act[static_cast<std::size_t>(i * m + p)] *
         params[qhead_.w2 + static_cast<std::size_t>(p) * static_cast<std::size_t>(A) + static_cast<std::size_t>(action)];
  return s;
}

void Network::backward_batch(cspan params, const BatchForward& f, const HeadGradient& dq,
                             const HeadGradient& dbehavior, mspan grad) const {
  if (grad.size() != total_) throw ContractError("gradient vector shape mismatch");
  const int h = cfg_.hidden;
  const int B = f.size;
  const int len = f.length;
  std::vector<double> dphi(static_cast<std::size_t>(B * 2 * h), 0.0);
  if (!dq.empty()) head_backward(params, qhead_, f.phi, B, f.q, dq, grad, dphi);
  if (!dbehavior.empty()) {
    if (!cfg_.behavior_head) throw ContractError("network has no behavior head");
    head_backward(params, bchead_, f.phi, B, f.behavior, dbehavior, grad, dphi);
  }
  // phi = [last row || mean row] of each window's hidden states.
  std::vector<double> dH(static_cast<std::size_t>(B * len * h), 0.0);
  for (int i = 0; i < B; ++i) {
    const double* g = dphi.data() + static_cast<std::ptrdiff_t>(i) * 2 * h;
    double* d = dH.data() + static_cast<std::ptrdiff_t>(i) * len * h;
    for (int j = 0; j < h; ++j) {
      d[(len - 1) * h + j] += g[j];
      for (int r = 0; r < len; ++r) d[r * h + j] += g[h + j] / len;
    }
  }
  encode_backward(params, f.encoder, dH, grad);
}

}  // namespace ventlab
