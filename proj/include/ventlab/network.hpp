#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ventlab/action.hpp"
#include "ventlab/patient_state.hpp"

namespace ventlab {

struct NetConfig {
  int state_dim = static_cast<int>(kStateDim);
  int hidden = 64;
  int seq_len = 4;
  int layers = 2;
  int heads = 4;
  int ff_hidden = 128;
  int mlp_hidden = 256;
  int num_actions = kNumActions;
  bool positional_encoding = true;
  bool behavior_head = false;  // discrete-BCQ imitation head

  /// Throws ConfigError on inconsistent shapes.
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

/// Named slice of the flat parameter vector.
struct ParamInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Output of one window through the encoder and heads.
struct ForwardOutput {
  int length = 0;
  std::vector<double> hidden_states;  // length x hidden (H)
  std::vector<double> last;           // z: last row of H
  std::vector<double> mean;           // z_bar: mean row of H
  std::vector<double> q;              // num_actions
  std::vector<double> psi;            // uncertainty head per row
  double uncertainty = 0;             // population variance of psi
};

/// Activations of a batch of windows kept for the backward pass. Row-wise
/// arrays stack the windows: (batch * length) x width.
struct EncoderCache {
  int batch = 0;
  int length = 0;
  std::vector<double> input;  // (batch * length) x state_dim
  std::vector<double> x0;     // embedded input
  struct Layer {
    std::vector<double> q, k, v, attn, ctx, xhat1, rstd1, x1, ff_pre, ff_act, xhat2, rstd2, out;
  };
  std::vector<Layer> layers;
  const std::vector<double>& output() const { return layers.empty() ? x0 : layers.back().out; }
};

struct HeadCache {
  std::vector<double> pre;  // batch x mlp_hidden
  std::vector<double> act;
  std::vector<double> out;  // batch x num_actions, empty when only hidden was computed
};

struct BatchForward {
  int size = 0;
  int length = 0;
  EncoderCache encoder;
  std::vector<double> phi;          // batch x 2*hidden
  std::vector<double> uncertainty;  // batch
  HeadCache q;
  HeadCache behavior;
};

struct ForwardMode {
  bool q_full = true;       // false: only the Q-head hidden layer (sparse reads via q_value)
  bool behavior = false;    // also run the imitation head (full logits)
};

/// Upstream gradient for one head: either a dense batch x num_actions matrix
/// or one entry per row at `actions`.
struct HeadGradient {
  std::span<const double> dense;
  std::span<const int> actions;
  std::span<const double> sparse;
  bool empty() const { return dense.empty() && sparse.empty(); }
};

/// Transformer Q-network: embedding, post-LN encoder blocks, [z || z_bar]
/// feature, MLP Q-head over the action grid, linear uncertainty head on the
/// per-step rows, and an optional imitation head. Stateless apart from the
/// layout; parameters are passed as flat spans.
class Network {
 public:
  explicit Network(NetConfig cfg);

  const NetConfig& config() const { return cfg_; }
  const std::vector<ParamInfo>& entries() const { return entries_; }
  std::size_t num_params() const { return total_; }
  /// Parameters of the encoder (embedding + blocks) occupy [0, encoder_size()).
  std::size_t encoder_size() const { return encoder_end_; }
  const ParamInfo& entry(std::string_view name) const;

  std::vector<double> init_params(std::uint64_t seed) const;

  /// Runs the encoder on `batch` windows of `len` z-scored states
  /// (batch x len x state_dim).
  void encode(std::span<const double> params, std::span<const double> windows, int batch, int len,
              EncoderCache& cache) const;

  /// Full single-window forward. Throws ContractError on shape mismatch.
  ForwardOutput forward(std::span<const double> params, std::span<const double> window,
                        int len) const;
  /// Forward over the first L-1 steps of an L-step window. Throws ContractError for L < 2.
  ForwardOutput forward_short(std::span<const double> params, std::span<const double> window,
                              int len) const;

  /// Batched forward over `batch` windows laid out contiguously
  /// (batch x len x state_dim).
  BatchForward forward_batch(std::span<const double> params, std::span<const double> windows,
                             int batch, int len, ForwardMode mode = {}) const;

  /// Q value of row i for one action from the cached Q-head hidden layer.
  double q_value(std::span<const double> params, const BatchForward& f, int i, int action) const;

  /// Accumulates d(loss)/d(params) into grad. The uncertainty head receives no
  /// gradient (it only feeds the stop-gradient penalty coefficient).
  void backward_batch(std::span<const double> params, const BatchForward& f,
                      const HeadGradient& dq, const HeadGradient& dbehavior,
                      std::span<double> grad) const;

 private:
  struct LayerOffsets {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, ff_w1, ff_b1, ff_w2, ff_b2, ln2_g, ln2_b;
  };
  struct HeadOffsets {
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  };

  std::size_t add(std::string name, int rows, int cols);
  void head_forward(std::span<const double> params, const HeadOffsets& h,
                    std::span<const double> phi, int batch, bool full, HeadCache& cache) const;
  void head_backward(std::span<const double> params, const HeadOffsets& h,
                     std::span<const double> phi, int batch, const HeadCache& cache,
                     const HeadGradient& dout, std::span<double> grad,
                     std::span<double> dphi) const;
  void encode_backward(std::span<const double> params, const EncoderCache& cache,
                       std::span<const double> d_hidden, std::span<double> grad) const;
  /// Summary of window i: z, z_bar, psi rows and their variance.
  void fill_output(std::span<const double> params, const EncoderCache& cache, int i,
                   ForwardOutput& out) const;

  NetConfig cfg_;
  std::vector<ParamInfo> entries_;
  std::size_t total_ = 0;
  std::size_t embed_w_ = 0, embed_b_ = 0;
  std::vector<LayerOffsets> layers_;
  std::size_t unc_w_ = 0, unc_b_ = 0;
  std::size_t encoder_end_ = 0;
  HeadOffsets qhead_;
  HeadOffsets bchead_;
};

/// Sinusoidal positional encoding row for `pos` with `dim` channels.
void positional_encoding(int pos, std::span<double> out);

double gelu(double x);
double gelu_grad(double x);

/// argmax with ties broken by lowest index.
ActionIndex greedy_index(std::span<const double> q);

}  // namespace ventlab
