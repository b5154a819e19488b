#pragma once

#include <memory>
#include <string>
#include <vector>

#include "geomlab/denoiser.hpp"
#include "geomlab/image.hpp"
#include "geomlab/optimizer.hpp"
#include "geomlab/schedule.hpp"
#include "geomlab/threadpool.hpp"
#include "geomlab/vocab.hpp"

namespace geomlab {

// One prepared training example: image plus padded caption ids plus an
// optional per-bin weight map (empty means unit weights).
struct TrainItem {
  Image image;
  std::vector<int> tokens;
  std::vector<double> wbins;  // row-major gh x gw
  int gw = 0, gh = 0;
};

template <typename T>
Tensor<T> image_to_z0(const Image& img) {
  Tensor<T> z({1, img.h, img.w});
  for (size_t i = 0; i < img.px.size(); ++i)
    z.data[i] = static_cast<T>(2.0f * img.px[i] - 1.0f);
  return z;
}

inline Image z_to_image(const Tensor<float>& z) {
  Image img(z.dim(2), z.dim(1));
  for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = 0.5f * (z.data[i] + 1.0f);
  img.clamp01();
  return img;
}

// Nearest-neighbor upsample of bin weights to pixel resolution.
template <typename T>
Tensor<T> weights_to_pixels(const std::vector<double>& wbins, int gw, int gh, int size) {
  Tensor<T> w({1, size, size});
  if (wbins.empty()) {
    std::fill(w.data.begin(), w.data.end(), T(1));
    return w;
  }
  const int bw = size / gw, bh = size / gh;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      w.data[static_cast<size_t>(y) * size + x] =
          static_cast<T>(wbins[static_cast<size_t>(y / bh) * gw + x / bw]);
  return w;
}

// One optimizer step over a batch. Per-sample graphs run on worker threads
// against a read-only parameter snapshot; gradients are accumulated in batch
// order so results do not depend on the thread count. Returns the batch loss
// (mean of per-sample weighted MSEs).
template <typename T>
double diffusion_train_step(Denoiser<T>& model, Adam<T>& opt, const NoiseSchedule& sched,
                            const std::vector<TrainItem>& data, const std::vector<int>& batch,
                            Rng& step_rng, int threads) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw Error("train_step: empty batch");
  std::vector<std::unique_ptr<Tape<T>>> tapes(static_cast<size_t>(B));
  std::vector<double> losses(static_cast<size_t>(B), 0.0);
  std::vector<Rng> rngs;
  rngs.reserve(static_cast<size_t>(B));
  for (int s = 0; s < B; ++s) rngs.push_back(step_rng.fork(static_cast<uint64_t>(s)));

  parallel_for(B, threads, [&](int s) {
    const TrainItem& item = data[static_cast<size_t>(batch[static_cast<size_t>(s)])];
    Rng& rng = rngs[static_cast<size_t>(s)];
    const int t = static_cast<int>(rng.uniform_int(1, sched.steps));
    Tensor<T> z0 = image_to_z0<T>(item.image);
    Tensor<T> eps(z0.shape);
    for (auto& v : eps.data) v = static_cast<T>(rng.normal());
    Tensor<T> zt = forward_noise(z0, t, eps, sched);

    auto tape = std::make_unique<Tape<T>>();
    auto built = model.build(*tape, tape->input(std::move(zt)), t, item.tokens);
    typename Tape<T>::Id loss;
    if (item.wbins.empty()) {
      loss = tape->mean_sq(built.eps, tape->input(std::move(eps)));
    } else {
      loss = tape->mean_sq_weighted(
          built.eps, tape->input(std::move(eps)),
          tape->input(weights_to_pixels<T>(item.wbins, item.gw, item.gh, item.image.w)));
    }
    losses[static_cast<size_t>(s)] = static_cast<double>(tape->val(loss).data[0]);
    typename Tape<T>::Id scaled = tape->scale(loss, 1.0 / B);
    tape->backward(scaled, /*into_params=*/false);
    tapes[static_cast<size_t>(s)] = std::move(tape);
  });

  for (auto& tape : tapes) tape->accumulate_param_grads();
  opt.step(model.params);
  model.params.zero_grads();

  double mean = 0.0;
  for (double l : losses) mean += l;
  return mean / B;
}

struct TrainLoopConfig {
  int steps = 2500;
  int batch = 8;
  double lr = 2e-3;
  uint64_t seed = 1;
  int threads = 0;  // 0 = default_threads()
  int log_every = 250;
  std::vector<int> snapshot_steps;                          // sorted, optional
  std::function<void(int, Denoiser<float>&)> on_snapshot;  // mid-training eval hook
};

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
};

// Full training loop; batches are drawn iid per step from `data`.
std::vector<TrainLogRow> train_model(Denoiser<float>& model, const NoiseSchedule& sched,
                                     const std::vector<TrainItem>& data,
                                     const TrainLoopConfig& cfg);

struct SampleRequest {
  std::vector<int> pos_tokens;  // padded to max_len
  std::vector<int> neg_tokens;  // padded; empty vector = no negative branch
  double guidance = 1.0;        // s: eps = eps_neg + s (eps_pos - eps_neg)
  int sampler_steps = 0;        // 0 = full schedule; otherwise strided ancestral
  uint64_t seed = 0;
};

// Ancestral DDPM sampling with negative-prompt guidance. Deterministic given
// the seed; final image clamped to [0,1].
Image diffusion_sample(Denoiser<float>& model, const NoiseSchedule& sched,
                       const SampleRequest& req);

struct AttentionMapResult {
  int gw = 0, gh = 0;
  std::vector<double> raw;         // per spatial cell, attention to the token
  std::vector<double> normalized;  // min-max scaled to [0,1]
  double total_mass = 0.0;
};

// Cross-attention map from every spatial query to one caption position.
AttentionMapResult attention_map(Denoiser<float>& model, const Tensor<float>& z_t, int t,
                                 const std::vector<int>& tokens, int token_pos);

// Checkpoint plus sidecar metadata (architecture, schedule, vocab).
void save_model(const Denoiser<float>& model, const NoiseSchedule& sched, const Vocab& vocab,
                const std::string& path_base);

struct LoadedModel {
  Denoiser<float> model;
  NoiseSchedule sched;
  Vocab vocab;
};
LoadedModel load_model(const std::string& path_base);

}  // namespace geomlab
