#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "geomlab/params.hpp"
#include "geomlab/rng.hpp"
#include "geomlab/tape.hpp"

namespace geomlab {

// Small conditional UNet: two downsampling conv stages, one cross-attention
// block at the bottleneck over caption-token embeddings (with a learned
// positional table), transposed-conv decoder with additive skips, sinusoidal
// timestep embedding through a two-layer projection.
struct DenoiserConfig {
  int image_size = 32;  // divisible by 4
  int base_ch = 8;
  int emb_dim = 32;   // token embedding width and attention dim
  int time_dim = 32;  // sinusoid size
  int max_len = 64;   // caption length after padding
  int vocab_rows = 0;

  int bottleneck() const { return image_size / 4; }

  void validate() const {
    if (image_size < 8 || image_size % 4 != 0)
      throw ConfigError("denoiser: image_size must be a multiple of 4, >= 8");
    if (vocab_rows < 2) throw ConfigError("denoiser: vocab_rows must cover PAD/EMPTY");
    if (time_dim % 2 != 0) throw ConfigError("denoiser: time_dim must be even");
  }
};

template <typename T>
struct Denoiser {
  DenoiserConfig cfg;
  ParamSet<T> params;
  int ext_rows = 0;  // appended vocabulary rows (tok_emb_ext)

  static Denoiser init(const DenoiserConfig& cfg, uint64_t seed) {
    cfg.validate();
    Denoiser d;
    d.cfg = cfg;
    Rng rng(seed);
    const int C = cfg.base_ch, E = cfg.emb_dim;

    auto conv = [&](const std::string& name, int co, int ci, bool zero = false) {
      const double std = zero ? 0.0 : std::sqrt(2.0 / (ci * 9));
      d.params.add(name + ".w", zero ? Tensor<T>({co, ci, 3, 3})
                                     : Tensor<T>::randn({co, ci, 3, 3}, rng, std));
      d.params.add(name + ".b", Tensor<T>({co}));
    };
    auto linear = [&](const std::string& name, int in, int out) {
      d.params.add(name + ".w", Tensor<T>::randn({in, out}, rng, std::sqrt(1.0 / in)));
      d.params.add(name + ".b", Tensor<T>({1, out}));
    };

    conv("enc_in", C, 1);
    conv("down1", 2 * C, C);
    conv("down1b", 2 * C, 2 * C);
    conv("down2", 4 * C, 2 * C);
    conv("down2b", 4 * C, 4 * C);
    linear("time1", cfg.time_dim, 2 * cfg.time_dim);
    linear("time_head1", 2 * cfg.time_dim, 2 * C);
    linear("time_head2", 2 * cfg.time_dim, 4 * C);
    d.params.add("attn.wq", Tensor<T>::randn({4 * C, E}, rng, std::sqrt(1.0 / (4 * C))));
    d.params.add("attn.wk", Tensor<T>::randn({E, E}, rng, std::sqrt(1.0 / E)));
    d.params.add("attn.wv", Tensor<T>::randn({E, E}, rng, std::sqrt(1.0 / E)));
    d.params.add("attn.wo", Tensor<T>::randn({E, 4 * C}, rng, std::sqrt(1.0 / E)));
    d.params.add("tok_emb", Tensor<T>::randn({cfg.vocab_rows, E}, rng, 0.02));
    d.params.add("pos_emb", Tensor<T>::randn({cfg.max_len, E}, rng, 0.02));
    conv("up1", 2 * C, 4 * C);
    conv("up1b", 2 * C, 2 * C);
    conv("up2", C, 2 * C);
    conv("up2b", C, C);
    conv("out", 1, C, /*zero=*/true);  // zero init: untrained net predicts 0
    return d;
  }

  int vocab_capacity() const { return cfg.vocab_rows + ext_rows; }

  // Appends embedding rows for new tokens without touching existing rows.
  void extend_vocab(int new_rows, uint64_t seed) {
    if (new_rows <= 0) throw ConfigError("extend_vocab: need a positive row count");
    if (ext_rows > 0) throw ConfigError("extend_vocab: already extended");
    Rng rng(Rng(seed).fork("tok_emb_ext").next_u64());
    params.add("tok_emb_ext", Tensor<T>::randn({new_rows, cfg.emb_dim}, rng, 0.02));
    ext_rows = new_rows;
  }

  // Trainable masks for the two removal settings.
  void set_all_trainable() {
    for (auto& e : params.entries()) e.trainable = true;
  }
  void set_tokens_only_trainable() {
    if (ext_rows == 0) throw ConfigError("tokens-only training requires an extended vocabulary");
    for (auto& e : params.entries()) e.trainable = (e.name == "tok_emb_ext");
  }

  Tensor<T> time_embedding(int t) const {
    const int half = cfg.time_dim / 2;
    Tensor<T> s({1, cfg.time_dim});
    for (int k = 0; k < half; ++k) {
      const double f = std::exp(-std::log(10000.0) * (half == 1 ? 0.0 : static_cast<double>(k) / (half - 1)));
      s.data[static_cast<size_t>(k)] = static_cast<T>(std::sin(t * f));
      s.data[static_cast<size_t>(half + k)] = static_cast<T>(std::cos(t * f));
    }
    return s;
  }

  struct Built {
    typename Tape<T>::Id eps;   // [1, S, S]
    typename Tape<T>::Id attn;  // [bottleneck^2, max_len]
  };

  // Appends the forward graph for one sample to the tape.
  Built build(Tape<T>& tape, typename Tape<T>::Id z_t, int t, std::vector<int> tokens) {
    if (static_cast<int>(tokens.size()) != cfg.max_len)
      throw ShapeError(strformat("denoiser: expected %d tokens, got %zu", cfg.max_len,
                                 tokens.size()));
    const int C = cfg.base_ch;
    using Id = typename Tape<T>::Id;

    auto P = [&](const std::string& n) { return tape.param(params, n); };
    auto linear = [&](Id x, const std::string& n) {
      return tape.add(tape.matmul(x, P(n + ".w")), P(n + ".b"));
    };

    // timestep embedding trunk + per-stage heads
    Id tsin = tape.input(time_embedding(t));
    Id tvec = tape.silu(linear(tsin, "time1"));
    Id th1 = tape.reshape(linear(tvec, "time_head1"), {2 * C});
    Id th2 = tape.reshape(linear(tvec, "time_head2"), {4 * C});

    // encoder
    Id h0 = tape.silu(tape.conv2d(z_t, P("enc_in.w"), P("enc_in.b"), 1));
    Id d1 = tape.conv2d(h0, P("down1.w"), P("down1.b"), 2);
    d1 = tape.silu(tape.bias_add_channel(d1, th1));
    Id d1b = tape.silu(tape.conv2d(d1, P("down1b.w"), P("down1b.b"), 1));
    Id d2 = tape.conv2d(d1b, P("down2.w"), P("down2.b"), 2);
    d2 = tape.silu(tape.bias_add_channel(d2, th2));
    Id d2b = tape.silu(tape.conv2d(d2, P("down2b.w"), P("down2b.b"), 1));

    // caption conditioning
    for (int id : tokens)
      if (id < 0 || id >= vocab_capacity())
        throw ShapeError(strformat("denoiser: token id %d outside embedding capacity %d", id,
                                   vocab_capacity()));
    Id emb = ext_rows > 0
                 ? tape.embedding2(P("tok_emb"), P("tok_emb_ext"), tokens, cfg.vocab_rows)
                 : tape.embedding(P("tok_emb"), tokens);
    Id cond = tape.add(emb, P("pos_emb"));

    // bottleneck cross-attention, spatial queries over token keys/values
    const int B = cfg.bottleneck();
    Id q_in = tape.transpose(tape.reshape(d2b, {4 * C, B * B}));
    Id q = tape.matmul(q_in, P("attn.wq"));
    Id k = tape.matmul(cond, P("attn.wk"));
    Id v = tape.matmul(cond, P("attn.wv"));
    auto att = tape.sdpa(q, k, v);
    Id o = tape.matmul(att.out, P("attn.wo"));
    Id mid = tape.add(d2b, tape.reshape(tape.transpose(o), {4 * C, B, B}));

    // decoder with additive skips
    Id u1 = tape.silu(tape.conv_transpose2d(mid, P("up1.w"), P("up1.b")));
    u1 = tape.add(u1, d1b);
    Id u1b = tape.silu(tape.conv2d(u1, P("up1b.w"), P("up1b.b"), 1));
    Id u2 = tape.silu(tape.conv_transpose2d(u1b, P("up2.w"), P("up2.b")));
    u2 = tape.add(u2, h0);
    Id u2b = tape.silu(tape.conv2d(u2, P("up2b.w"), P("up2b.b"), 1));
    Id eps = tape.conv2d(u2b, P("out.w"), P("out.b"), 1);

    return {eps, att.attn};
  }

  // Forward-only convenience (fresh tape per call).
  Tensor<T> forward_eps(const Tensor<T>& z_t, int t, const std::vector<int>& tokens) {
    Tape<T> tape;
    auto built = build(tape, tape.input(z_t), t, tokens);
    return tape.val(built.eps);
  }

  template <typename U>
  Denoiser<U> cast() const {
    Denoiser<U> out;
    out.cfg = cfg;
    out.ext_rows = ext_rows;
    out.params = params.template cast<U>();
    return out;
  }
};

inline std::vector<int> pad_tokens(std::vector<int> ids, int max_len, int pad_id = 0) {
  if (static_cast<int>(ids.size()) > max_len) ids.resize(static_cast<size_t>(max_len));
  while (static_cast<int>(ids.size()) < max_len) ids.push_back(pad_id);
  return ids;
}

}  // namespace geomlab
