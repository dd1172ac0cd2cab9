#include "genrec/policy.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace genrec {

namespace {

constexpr char kMagic[] = "GRCKPT01";
constexpr std::uint32_t kVersion = 1;
constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.79788456080286535588;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_grad(double x) {
  double u = kGeluC * (x + kGeluA * x * x * x);
  double t = std::tanh(u);
  double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void layernorm_fwd(const Mat& x, CMatMap g, CMatMap b, Mat& out, Vec& mean, Vec& rstd) {
  const auto T = x.rows();
  const auto d = x.cols();
  out.resize(T, d);
  mean.resize(T);
  rstd.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    double mu = x.row(t).mean();
    double var = (x.row(t).array() - mu).square().mean();
    double rs = 1.0 / std::sqrt(var + kLnEps);
    mean(t) = mu;
    rstd(t) = rs;
    for (Eigen::Index j = 0; j < d; ++j)
      out(t, j) = g(0, j) * (x(t, j) - mu) * rs + b(0, j);
  }
}

// dY -> dX; accumulates parameter gradients into dg/db.
void layernorm_bwd(const Mat& x, const Vec& mean, const Vec& rstd, CMatMap g, const Mat& dy,
                   Mat& dx, MatMap dg, MatMap db) {
  const auto T = x.rows();
  const auto d = x.cols();
  dx.resize(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    double mu = mean(t);
    double rs = rstd(t);
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      double xhat = (x(t, j) - mu) * rs;
      double dxhat = dy(t, j) * g(0, j);
      dg(0, j) += dy(t, j) * xhat;
      db(0, j) += dy(t, j);
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    double inv_d = 1.0 / static_cast<double>(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      double xhat = (x(t, j) - mu) * rs;
      double dxhat = dy(t, j) * g(0, j);
      dx(t, j) = rs * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
    }
  }
}

void log_softmax_rows(Mat& m) {
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    double mx = m.row(t).maxCoeff();
    double lse = std::log((m.row(t).array() - mx).exp().sum()) + mx;
    m.row(t).array() -= lse;
  }
}

void check_tokens(const PolicyParameters& p, const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::runtime_error("policy: empty token sequence");
  if (static_cast<int>(tokens.size()) > p.cfg.p_max)
    throw std::runtime_error("policy: sequence length " + std::to_string(tokens.size()) +
                             " exceeds context limit " + std::to_string(p.cfg.p_max));
  for (int tok : tokens)
    if (tok < 0 || tok >= p.vocab.size())
      throw std::runtime_error("policy: token id out of range: " + std::to_string(tok));
}

}  // namespace

ParamLayout ParamLayout::make(const ModelConfig& cfg, int vocab_size) {
  ParamLayout layout;
  int d = cfg.dim;
  int ff = cfg.ff_mult * d;
  auto add = [&](const std::string& name, int rows, int cols) {
    layout.entries.push_back({name, layout.total, rows, cols});
    layout.total += static_cast<std::size_t>(rows) * cols;
  };
  add("tok_emb", vocab_size, d);
  add("pos_emb", cfg.p_max, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    add(pre + "ln1_g", 1, d);
    add(pre + "ln1_b", 1, d);
    add(pre + "wq", d, d);
    add(pre + "bq", 1, d);
    add(pre + "wk", d, d);
    add(pre + "bk", 1, d);
    add(pre + "wv", d, d);
    add(pre + "bv", 1, d);
    add(pre + "wo", d, d);
    add(pre + "bo", 1, d);
    add(pre + "ln2_g", 1, d);
    add(pre + "ln2_b", 1, d);
    add(pre + "w1", d, ff);
    add(pre + "b1", 1, ff);
    add(pre + "w2", ff, d);
    add(pre + "b2", 1, d);
  }
  add("lnf_g", 1, d);
  add("lnf_b", 1, d);
  add("w_out", d, vocab_size);
  add("b_out", 1, vocab_size);
  return layout;
}

std::size_t parameter_count(const ModelConfig& cfg, int vocab_size) {
  return ParamLayout::make(cfg, vocab_size).total;
}

PolicyParameters init_policy(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed) {
  if (cfg.dim <= 0 || cfg.n_layers <= 0 || cfg.n_heads <= 0 || cfg.p_max <= 0)
    throw std::runtime_error("init_policy: config fields must be positive");
  if (cfg.dim % cfg.n_heads != 0)
    throw std::runtime_error("init_policy: dim must be divisible by n_heads");

  PolicyParameters p;
  p.cfg = cfg;
  p.vocab = vocab;
  p.layout = ParamLayout::make(cfg, vocab.size());
  p.data.assign(p.layout.total, 0.0);

  Rng rng(seed);
  const double std_dev = 0.02;
  for (std::size_t i = 0; i < p.layout.entries.size(); ++i) {
    const auto& e = p.layout.entries[i];
    const std::string& n = e.name;
    bool is_ln_gain = n.size() >= 5 && n.substr(n.size() - 5) == "ln1_g";
    is_ln_gain = is_ln_gain || (n.size() >= 5 && n.substr(n.size() - 5) == "ln2_g") || n == "lnf_g";
    bool is_bias = n.back() == 'b' || (n.size() >= 2 && n[n.size() - 2] == 'b') ||
                   n.find(".b") != std::string::npos || n == "b_out";
    bool is_weight = n == "tok_emb" || n == "pos_emb" || n.find(".w") != std::string::npos ||
                     n == "w_out";
    auto m = p.tensor(static_cast<int>(i));
    if (is_ln_gain) {
      m.setOnes();
    } else if (is_weight) {
      if (n == "w_out" && cfg.zero_init_output) {
        m.setZero();
      } else {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = std_dev * rng.gaussian();
      }
    } else {
      (void)is_bias;  // biases and ln shifts stay zero
      m.setZero();
    }
  }
  return p;
}

ForwardCache forward_full(const PolicyParameters& p, const std::vector<int>& tokens) {
  check_tokens(p, tokens);
  const int T = static_cast<int>(tokens.size());
  const int d = p.cfg.dim;
  const int H = p.cfg.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& L = p.layout;

  ForwardCache cache;
  cache.tokens = tokens;

  Mat x(T, d);
  {
    auto tok_emb = p.tensor(ParamLayout::kTokEmb);
    auto pos_emb = p.tensor(ParamLayout::kPosEmb);
    for (int t = 0; t < T; ++t)
      x.row(t) = tok_emb.row(tokens[t]) + pos_emb.row(t);
  }

  for (int l = 0; l < p.cfg.n_layers; ++l) {
    LayerCache lc;
    lc.x_in = x;
    layernorm_fwd(x, p.tensor(L.layer_tensor(l, ParamLayout::kLn1G)),
                  p.tensor(L.layer_tensor(l, ParamLayout::kLn1B)), lc.ln1_out, lc.mean1, lc.rstd1);
    lc.q = (lc.ln1_out * p.tensor(L.layer_tensor(l, ParamLayout::kWq))).rowwise() +
           p.tensor(L.layer_tensor(l, ParamLayout::kBq)).row(0);
    lc.k = (lc.ln1_out * p.tensor(L.layer_tensor(l, ParamLayout::kWk))).rowwise() +
           p.tensor(L.layer_tensor(l, ParamLayout::kBk)).row(0);
    lc.v = (lc.ln1_out * p.tensor(L.layer_tensor(l, ParamLayout::kWv))).rowwise() +
           p.tensor(L.layer_tensor(l, ParamLayout::kBv)).row(0);

    lc.ctx.resize(T, d);
    lc.att.resize(H);
    for (int h = 0; h < H; ++h) {
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      Mat scores = qh * kh.transpose() * scale;
      Mat& probs = lc.att[h];
      probs = Mat::Zero(T, T);
      for (int t = 0; t < T; ++t) {
        double mx = scores.row(t).head(t + 1).maxCoeff();
        double denom = 0.0;
        for (int j = 0; j <= t; ++j) denom += std::exp(scores(t, j) - mx);
        for (int j = 0; j <= t; ++j) probs(t, j) = std::exp(scores(t, j) - mx) / denom;
      }
      lc.ctx.middleCols(h * dh, dh) = probs * vh;
    }
    Mat attn_out = (lc.ctx * p.tensor(L.layer_tensor(l, ParamLayout::kWo))).rowwise() +
                   p.tensor(L.layer_tensor(l, ParamLayout::kBo)).row(0);
    lc.x_mid = x + attn_out;

    layernorm_fwd(lc.x_mid, p.tensor(L.layer_tensor(l, ParamLayout::kLn2G)),
                  p.tensor(L.layer_tensor(l, ParamLayout::kLn2B)), lc.ln2_out, lc.mean2, lc.rstd2);
    lc.h_pre = (lc.ln2_out * p.tensor(L.layer_tensor(l, ParamLayout::kW1))).rowwise() +
               p.tensor(L.layer_tensor(l, ParamLayout::kB1)).row(0);
    lc.h_act = lc.h_pre.unaryExpr([](double v) { return gelu(v); });
    Mat ff_out = (lc.h_act * p.tensor(L.layer_tensor(l, ParamLayout::kW2))).rowwise() +
                 p.tensor(L.layer_tensor(l, ParamLayout::kB2)).row(0);
    x = lc.x_mid + ff_out;
    cache.layers.push_back(std::move(lc));
  }

  cache.x_final = x;
  layernorm_fwd(x, p.tensor(L.lnf_g(p.cfg.n_layers)), p.tensor(L.lnf_b(p.cfg.n_layers)),
                cache.lnf_out, cache.meanf, cache.rstdf);
  cache.logprobs = (cache.lnf_out * p.tensor(L.w_out(p.cfg.n_layers))).rowwise() +
                   p.tensor(L.b_out(p.cfg.n_layers)).row(0);
  log_softmax_rows(cache.logprobs);
  return cache;
}

Mat forward_logprobs(const PolicyParameters& p, const std::vector<int>& tokens) {
  return forward_full(p, tokens).logprobs;
}

double sequence_logprob(const PolicyParameters& p, const std::vector<int>& context,
                        const std::vector<int>& continuation) {
  if (continuation.empty()) throw std::runtime_error("sequence_logprob: empty continuation");
  // An empty context conditions on bos alone.
  std::vector<int> all = context.empty() ? std::vector<int>{p.vocab.bos()} : context;
  std::size_t ctx_len = all.size();
  all.insert(all.end(), continuation.begin(), continuation.end());
  Mat lp = forward_logprobs(p, all);
  double total = 0.0;
  for (std::size_t j = ctx_len; j < all.size(); ++j)
    total += lp(static_cast<int>(j) - 1, all[j]);
  return total;
}

void backward_logits(const PolicyParameters& p, const ForwardCache& cache, const Mat& dlogits,
                     Gradients& grads) {
  const int T = static_cast<int>(cache.tokens.size());
  const int d = p.cfg.dim;
  const int H = p.cfg.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& L = p.layout;
  if (grads.data.size() != p.size()) grads.data.assign(p.size(), 0.0);

  auto g = [&](int idx) {
    const auto& e = p.layout.entries[idx];
    return MatMap(grads.data.data() + e.offset, e.rows, e.cols);
  };

  // Output head.
  g(L.w_out(p.cfg.n_layers)) += (cache.lnf_out.transpose() * dlogits);
  g(L.b_out(p.cfg.n_layers)).row(0) += dlogits.colwise().sum();
  Mat d_lnf_out = dlogits * p.tensor(L.w_out(p.cfg.n_layers)).transpose();

  Mat dx;
  layernorm_bwd(cache.x_final, cache.meanf, cache.rstdf, p.tensor(L.lnf_g(p.cfg.n_layers)),
                d_lnf_out, dx, g(L.lnf_g(p.cfg.n_layers)), g(L.lnf_b(p.cfg.n_layers)));

  for (int l = p.cfg.n_layers - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[l];

    // Feed-forward branch; dx is the gradient at the block output.
    Mat d_ff = dx;  // residual: gradient also flows straight to x_mid
    Mat d_hact = d_ff * p.tensor(L.layer_tensor(l, ParamLayout::kW2)).transpose();
    g(L.layer_tensor(l, ParamLayout::kW2)) += lc.h_act.transpose() * d_ff;
    g(L.layer_tensor(l, ParamLayout::kB2)).row(0) += d_ff.colwise().sum();
    Mat d_hpre = d_hact.cwiseProduct(lc.h_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    Mat d_ln2_out = d_hpre * p.tensor(L.layer_tensor(l, ParamLayout::kW1)).transpose();
    g(L.layer_tensor(l, ParamLayout::kW1)) += lc.ln2_out.transpose() * d_hpre;
    g(L.layer_tensor(l, ParamLayout::kB1)).row(0) += d_hpre.colwise().sum();
    Mat d_x_mid;
    layernorm_bwd(lc.x_mid, lc.mean2, lc.rstd2, p.tensor(L.layer_tensor(l, ParamLayout::kLn2G)),
                  d_ln2_out, d_x_mid, g(L.layer_tensor(l, ParamLayout::kLn2G)),
                  g(L.layer_tensor(l, ParamLayout::kLn2B)));
    d_x_mid += dx;

    // Attention branch.
    Mat d_attn_out = d_x_mid;
    Mat d_ctx = d_attn_out * p.tensor(L.layer_tensor(l, ParamLayout::kWo)).transpose();
    g(L.layer_tensor(l, ParamLayout::kWo)) += lc.ctx.transpose() * d_attn_out;
    g(L.layer_tensor(l, ParamLayout::kBo)).row(0) += d_attn_out.colwise().sum();

    Mat dq = Mat::Zero(T, d), dk = Mat::Zero(T, d), dv = Mat::Zero(T, d);
    for (int h = 0; h < H; ++h) {
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      const Mat& probs = lc.att[h];
      Mat d_ctx_h = d_ctx.middleCols(h * dh, dh);
      Mat d_probs = d_ctx_h * vh.transpose();
      dv.middleCols(h * dh, dh) += probs.transpose() * d_ctx_h;
      // Softmax backward per causal row.
      Mat d_scores = Mat::Zero(T, T);
      for (int t = 0; t < T; ++t) {
        double dot = 0.0;
        for (int j = 0; j <= t; ++j) dot += d_probs(t, j) * probs(t, j);
        for (int j = 0; j <= t; ++j) d_scores(t, j) = probs(t, j) * (d_probs(t, j) - dot);
      }
      dq.middleCols(h * dh, dh) += d_scores * kh * scale;
      dk.middleCols(h * dh, dh) += d_scores.transpose() * qh * scale;
    }

    Mat d_ln1_out = dq * p.tensor(L.layer_tensor(l, ParamLayout::kWq)).transpose() +
                    dk * p.tensor(L.layer_tensor(l, ParamLayout::kWk)).transpose() +
                    dv * p.tensor(L.layer_tensor(l, ParamLayout::kWv)).transpose();
    g(L.layer_tensor(l, ParamLayout::kWq)) += lc.ln1_out.transpose() * dq;
    g(L.layer_tensor(l, ParamLayout::kBq)).row(0) += dq.colwise().sum();
    g(L.layer_tensor(l, ParamLayout::kWk)) += lc.ln1_out.transpose() * dk;
    g(L.layer_tensor(l, ParamLayout::kBk)).row(0) += dk.colwise().sum();
    g(L.layer_tensor(l, ParamLayout::kWv)) += lc.ln1_out.transpose() * dv;
    g(L.layer_tensor(l, ParamLayout::kBv)).row(0) += dv.colwise().sum();

    Mat d_x_in;
    layernorm_bwd(lc.x_in, lc.mean1, lc.rstd1, p.tensor(L.layer_tensor(l, ParamLayout::kLn1G)),
                  d_ln1_out, d_x_in, g(L.layer_tensor(l, ParamLayout::kLn1G)),
                  g(L.layer_tensor(l, ParamLayout::kLn1B)));
    dx = d_x_in + d_x_mid;
  }

  // Embeddings.
  auto d_tok = g(ParamLayout::kTokEmb);
  auto d_pos = g(ParamLayout::kPosEmb);
  for (int t = 0; t < T; ++t) {
    d_tok.row(cache.tokens[t]) += dx.row(t);
    d_pos.row(t) += dx.row(t);
  }
}

std::pair<double, Gradients> backward(const PolicyParameters& p,
                                      const std::vector<TrainingExample>& batch) {
  long count = 0;
  for (const auto& ex : batch) {
    if (ex.loss_mask.size() != ex.tokens.size())
      throw std::runtime_error("backward: loss_mask length mismatch");
    for (std::size_t j = 1; j < ex.tokens.size(); ++j)
      if (ex.loss_mask[j]) ++count;
  }
  if (count == 0) throw std::runtime_error("backward: batch has no supervised targets");

  Gradients grads;
  grads.data.assign(p.size(), 0.0);
  double loss = 0.0;
  const double inv_count = 1.0 / static_cast<double>(count);
  for (const auto& ex : batch) {
    ForwardCache cache = forward_full(p, ex.tokens);
    const int T = static_cast<int>(ex.tokens.size());
    Mat dlogits = Mat::Zero(T, p.vocab.size());
    for (int j = 1; j < T; ++j) {
      if (!ex.loss_mask[j]) continue;
      loss -= cache.logprobs(j - 1, ex.tokens[j]) * inv_count;
      dlogits.row(j - 1) += cache.logprobs.row(j - 1).array().exp().matrix() * inv_count;
      dlogits(j - 1, ex.tokens[j]) -= inv_count;
    }
    backward_logits(p, cache, dlogits, grads);
  }
  return {loss, std::move(grads)};
}

// --- Incremental decoding ----------------------------------------------------

Vec decode_step(const PolicyParameters& p, DecodeState& state, int token) {
  if (token < 0 || token >= p.vocab.size())
    throw std::runtime_error("decode_step: token id out of range");
  if (state.len >= p.cfg.p_max) throw std::runtime_error("decode_step: context limit reached");
  const int d = p.cfg.dim;
  const int H = p.cfg.n_heads;
  const int dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& L = p.layout;

  if (state.k_cache.empty()) {
    state.k_cache.assign(p.cfg.n_layers, Mat(0, d));
    state.v_cache.assign(p.cfg.n_layers, Mat(0, d));
  }

  int pos = state.len;
  Eigen::RowVectorXd x =
      p.tensor(ParamLayout::kTokEmb).row(token) + p.tensor(ParamLayout::kPosEmb).row(pos);

  auto layernorm_row = [&](const Eigen::RowVectorXd& in, CMatMap gm, CMatMap bm) {
    double mu = in.mean();
    double var = (in.array() - mu).square().mean();
    double rs = 1.0 / std::sqrt(var + kLnEps);
    Eigen::RowVectorXd out(in.size());
    for (Eigen::Index j = 0; j < in.size(); ++j) out(j) = gm(0, j) * (in(j) - mu) * rs + bm(0, j);
    return out;
  };

  for (int l = 0; l < p.cfg.n_layers; ++l) {
    Eigen::RowVectorXd a = layernorm_row(x, p.tensor(L.layer_tensor(l, ParamLayout::kLn1G)),
                                         p.tensor(L.layer_tensor(l, ParamLayout::kLn1B)));
    Eigen::RowVectorXd q = a * p.tensor(L.layer_tensor(l, ParamLayout::kWq)) +
                           p.tensor(L.layer_tensor(l, ParamLayout::kBq)).row(0);
    Eigen::RowVectorXd k = a * p.tensor(L.layer_tensor(l, ParamLayout::kWk)) +
                           p.tensor(L.layer_tensor(l, ParamLayout::kBk)).row(0);
    Eigen::RowVectorXd v = a * p.tensor(L.layer_tensor(l, ParamLayout::kWv)) +
                           p.tensor(L.layer_tensor(l, ParamLayout::kBv)).row(0);
    Mat& kc = state.k_cache[l];
    Mat& vc = state.v_cache[l];
    kc.conservativeResize(pos + 1, d);
    vc.conservativeResize(pos + 1, d);
    kc.row(pos) = k;
    vc.row(pos) = v;

    Eigen::RowVectorXd ctx(d);
    for (int h = 0; h < H; ++h) {
      auto qh = q.segment(h * dh, dh);
      Vec scores(pos + 1);
      for (int j = 0; j <= pos; ++j)
        scores(j) = qh.dot(kc.row(j).segment(h * dh, dh)) * scale;
      double mx = scores.maxCoeff();
      Vec w = (scores.array() - mx).exp();
      w /= w.sum();
      Eigen::RowVectorXd ch = Eigen::RowVectorXd::Zero(dh);
      for (int j = 0; j <= pos; ++j) ch += w(j) * vc.row(j).segment(h * dh, dh);
      ctx.segment(h * dh, dh) = ch;
    }
    Eigen::RowVectorXd attn_out = ctx * p.tensor(L.layer_tensor(l, ParamLayout::kWo)) +
                                  p.tensor(L.layer_tensor(l, ParamLayout::kBo)).row(0);
    x += attn_out;

    Eigen::RowVectorXd b = layernorm_row(x, p.tensor(L.layer_tensor(l, ParamLayout::kLn2G)),
                                         p.tensor(L.layer_tensor(l, ParamLayout::kLn2B)));
    Eigen::RowVectorXd h_pre = b * p.tensor(L.layer_tensor(l, ParamLayout::kW1)) +
                               p.tensor(L.layer_tensor(l, ParamLayout::kB1)).row(0);
    Eigen::RowVectorXd h_act = h_pre.unaryExpr([](double u) { return gelu(u); });
    x += (h_act * p.tensor(L.layer_tensor(l, ParamLayout::kW2)) +
          p.tensor(L.layer_tensor(l, ParamLayout::kB2)).row(0))
             .eval();
  }

  Eigen::RowVectorXd xf = layernorm_row(x, p.tensor(L.lnf_g(p.cfg.n_layers)),
                                        p.tensor(L.lnf_b(p.cfg.n_layers)));
  Eigen::RowVectorXd logits = xf * p.tensor(L.w_out(p.cfg.n_layers)) +
                              p.tensor(L.b_out(p.cfg.n_layers)).row(0);
  double mx = logits.maxCoeff();
  double lse = std::log((logits.array() - mx).exp().sum()) + mx;
  state.len = pos + 1;
  return (logits.array() - lse).matrix().transpose();
}

std::pair<DecodeState, Vec> prefill(const PolicyParameters& p, const std::vector<int>& tokens) {
  check_tokens(p, tokens);
  DecodeState state;
  Vec lp;
  for (int tok : tokens) lp = decode_step(p, state, tok);
  return {std::move(state), std::move(lp)};
}

// --- Optimizer ---------------------------------------------------------------

FreezeMask FreezeMask::itemic_embedding_rows(const PolicyParameters& p) {
  std::size_t row = static_cast<std::size_t>(p.cfg.dim);
  std::size_t begin = p.vocab.itemic_begin() * row;
  std::size_t end = p.vocab.itemic_end() * row;
  return FreezeMask{{{begin, end}}};
}

void apply_update(PolicyParameters& p, const Gradients& g, OptimizerState& st, double lr,
                  double clip_norm, const FreezeMask& mask, const AdamConfig& adam) {
  if (lr <= 0.0) throw std::runtime_error("apply_update: lr must be positive");
  if (g.data.size() != p.size()) throw std::runtime_error("apply_update: gradient shape mismatch");

  for (const auto& e : p.layout.entries) {
    for (std::size_t i = e.offset; i < e.offset + static_cast<std::size_t>(e.rows) * e.cols; ++i)
      if (!std::isfinite(g.data[i]))
        throw std::runtime_error("apply_update: non-finite gradient in tensor " + e.name);
  }

  double norm_sq = 0.0;
  for (const auto& [begin, end] : mask.trainable)
    for (std::size_t i = begin; i < end; ++i) norm_sq += g.data[i] * g.data[i];
  double norm = std::sqrt(norm_sq);
  double scale = 1.0;
  if (std::isfinite(clip_norm) && clip_norm > 0.0 && norm > clip_norm) scale = clip_norm / norm;

  ++st.step;
  double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(st.step));
  for (const auto& [begin, end] : mask.trainable) {
    for (std::size_t i = begin; i < end; ++i) {
      double grad = g.data[i] * scale;
      st.m[i] = adam.beta1 * st.m[i] + (1.0 - adam.beta1) * grad;
      st.v[i] = adam.beta2 * st.v[i] + (1.0 - adam.beta2) * grad * grad;
      double mhat = st.m[i] / bc1;
      double vhat = st.v[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + adam.eps);
    }
  }
}

void save_checkpoint(const PolicyParameters& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint file: " + path);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(p.cfg.dim));
  write_u32(out, static_cast<std::uint32_t>(p.cfg.n_layers));
  write_u32(out, static_cast<std::uint32_t>(p.cfg.n_heads));
  write_u32(out, static_cast<std::uint32_t>(p.cfg.p_max));
  write_u32(out, static_cast<std::uint32_t>(p.cfg.ff_mult));
  write_u32(out, p.cfg.zero_init_output ? 1 : 0);
  write_u32(out, static_cast<std::uint32_t>(p.vocab.n_text));
  write_u32(out, static_cast<std::uint32_t>(p.vocab.levels()));
  for (int k : p.vocab.k_per_level) write_u32(out, static_cast<std::uint32_t>(k));
  write_u64(out, p.data.size());
  for (double v : p.data) write_f64(out, v);
  if (!out) throw std::runtime_error("failed writing checkpoint file: " + path);
}

PolicyParameters load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kMagic)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (read_u32(in) != kVersion) throw std::runtime_error("unsupported checkpoint version");
  ModelConfig cfg;
  cfg.dim = static_cast<int>(read_u32(in));
  cfg.n_layers = static_cast<int>(read_u32(in));
  cfg.n_heads = static_cast<int>(read_u32(in));
  cfg.p_max = static_cast<int>(read_u32(in));
  cfg.ff_mult = static_cast<int>(read_u32(in));
  cfg.zero_init_output = read_u32(in) != 0;
  Vocabulary vocab;
  vocab.n_text = static_cast<int>(read_u32(in));
  int levels = static_cast<int>(read_u32(in));
  for (int l = 0; l < levels; ++l) vocab.k_per_level.push_back(static_cast<int>(read_u32(in)));
  PolicyParameters p;
  p.cfg = cfg;
  p.vocab = vocab;
  p.layout = ParamLayout::make(cfg, vocab.size());
  std::uint64_t n = read_u64(in);
  if (n != p.layout.total) throw std::runtime_error("checkpoint size mismatch");
  p.data.resize(n);
  for (double& v : p.data) v = read_f64(in);
  return p;
}

}  // namespace genrec
