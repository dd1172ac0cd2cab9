#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "genrec/common.hpp"
#include "genrec/vocab.hpp"

namespace genrec {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct ModelConfig {
  int dim = 64;
  int n_layers = 2;
  int n_heads = 4;
  int p_max = 512;
  bool zero_init_output = false;
  int ff_mult = 4;
};

// Flat parameter layout. Tensor order here is also the checkpoint order.
struct ParamLayout {
  struct Entry {
    std::string name;
    std::size_t offset;
    int rows, cols;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;

  static ParamLayout make(const ModelConfig& cfg, int vocab_size);

  // tensor indices
  static constexpr int kTokEmb = 0;
  static constexpr int kPosEmb = 1;
  static constexpr int kPerLayer = 16;
  // within a layer, in order:
  enum LayerTensor {
    kLn1G = 0, kLn1B, kWq, kBq, kWk, kBk, kWv, kBv,
    kWo, kBo, kLn2G, kLn2B, kW1, kB1, kW2, kB2,
  };
  int layer_tensor(int layer, LayerTensor t) const { return 2 + layer * kPerLayer + t; }
  int lnf_g(int n_layers) const { return 2 + n_layers * kPerLayer; }
  int lnf_b(int n_layers) const { return 2 + n_layers * kPerLayer + 1; }
  int w_out(int n_layers) const { return 2 + n_layers * kPerLayer + 2; }
  int b_out(int n_layers) const { return 2 + n_layers * kPerLayer + 3; }
};

struct PolicyParameters {
  ModelConfig cfg;
  Vocabulary vocab;
  ParamLayout layout;
  std::vector<double> data;

  MatMap tensor(int idx) {
    const auto& e = layout.entries[idx];
    return MatMap(data.data() + e.offset, e.rows, e.cols);
  }
  CMatMap tensor(int idx) const {
    const auto& e = layout.entries[idx];
    return CMatMap(data.data() + e.offset, e.rows, e.cols);
  }
  std::size_t size() const { return data.size(); }
};

struct Gradients {
  std::vector<double> data;
};

struct TrainingExample {
  std::vector<int> tokens;
  std::vector<bool> loss_mask;  // true at supervised target positions
};

PolicyParameters init_policy(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed);

// Full forward pass; row t holds log P(next | tokens[0..t]).
Mat forward_logprobs(const PolicyParameters& p, const std::vector<int>& tokens);

double sequence_logprob(const PolicyParameters& p, const std::vector<int>& context,
                        const std::vector<int>& continuation);

// Mean NLL over unmasked targets plus exact gradients.
std::pair<double, Gradients> backward(const PolicyParameters& p,
                                      const std::vector<TrainingExample>& batch);

// Cached forward for custom objectives: run forward_full, build a gradient
// with respect to the raw logits, then call backward_logits. Gradients
// accumulate into `grads` (zero-initialized or carrying a prior
// accumulation of the same shape).
struct LayerCache {
  Mat x_in;                 // T x d, input to the block
  Mat ln1_out;
  Vec mean1, rstd1;
  Mat q, k, v;              // T x d
  std::vector<Mat> att;     // per head, T x T softmax weights
  Mat ctx;                  // T x d
  Mat x_mid;                // after attention residual
  Mat ln2_out;
  Vec mean2, rstd2;
  Mat h_pre, h_act;         // T x ff
};

struct ForwardCache {
  std::vector<int> tokens;
  std::vector<LayerCache> layers;
  Mat x_final;              // input to the final layernorm
  Mat lnf_out;
  Vec meanf, rstdf;
  Mat logprobs;             // T x V
};

ForwardCache forward_full(const PolicyParameters& p, const std::vector<int>& tokens);
void backward_logits(const PolicyParameters& p, const ForwardCache& cache, const Mat& dlogits,
                     Gradients& grads);

// --- Incremental decoding ----------------------------------------------------

// Per-sequence key/value cache; copyable so beams can fork.
struct DecodeState {
  std::vector<Mat> k_cache, v_cache;  // per layer, len x dim
  int len = 0;
};

// Returns the state after consuming `tokens` plus log P(next | tokens).
std::pair<DecodeState, Vec> prefill(const PolicyParameters& p, const std::vector<int>& tokens);
// Appends one token and returns log P(next | all consumed tokens).
Vec decode_step(const PolicyParameters& p, DecodeState& state, int token);

// --- Optimizer ---------------------------------------------------------------

struct OptimizerState {
  std::vector<double> m, v;
  long step = 0;

  static OptimizerState make(const PolicyParameters& p) {
    return OptimizerState{std::vector<double>(p.size(), 0.0), std::vector<double>(p.size(), 0.0), 0};
  }
};

// Trainable regions of the flat parameter vector.
struct FreezeMask {
  std::vector<std::pair<std::size_t, std::size_t>> trainable;  // [begin, end)

  static FreezeMask all(const PolicyParameters& p) { return FreezeMask{{{0, p.size()}}}; }
  // Token-embedding rows of the itemic ranges only.
  static FreezeMask itemic_embedding_rows(const PolicyParameters& p);
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Gradient-norm clipping over trainable coordinates, then Adam on them.
void apply_update(PolicyParameters& p, const Gradients& g, OptimizerState& st, double lr,
                  double clip_norm, const FreezeMask& mask, const AdamConfig& adam = {});

void save_checkpoint(const PolicyParameters& p, const std::string& path);
PolicyParameters load_checkpoint(const std::string& path);

std::size_t parameter_count(const ModelConfig& cfg, int vocab_size);

}  // namespace genrec
