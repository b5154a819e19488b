#include "geomlab/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "geomlab/checkpoint.hpp"
#include "json.hpp"

namespace geomlab {

std::vector<TrainLogRow> train_model(Denoiser<float>& model, const NoiseSchedule& sched,
                                     const std::vector<TrainItem>& data,
                                     const TrainLoopConfig& cfg) {
  if (data.empty()) throw Error("train_model: no training data");
  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();
  Adam<float> opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Rng root(cfg.seed);
  Rng batch_rng = root.fork("batch");
  Rng noise_rng = root.fork("noise");

  std::vector<TrainLogRow> log;
  double running = 0.0;
  int running_n = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<int> batch(static_cast<size_t>(cfg.batch));
    for (auto& b : batch)
      b = static_cast<int>(batch_rng.below(static_cast<uint64_t>(data.size())));
    Rng step_rng = noise_rng.fork(static_cast<uint64_t>(step));
    double loss;
    try {
      loss = diffusion_train_step(model, opt, sched, data, batch, step_rng, threads);
    } catch (const NumericError& e) {
      std::string ids;
      for (int b : batch) ids += std::to_string(b) + " ";
      throw NumericError(strformat("train aborted at step %d (lr=%g, batch ids: %s): %s", step,
                                   cfg.lr, ids.c_str(), e.what()));
    }
    running += loss;
    ++running_n;
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps)) {
      log.push_back({step, running / running_n});
      running = 0.0;
      running_n = 0;
    }
    if (cfg.on_snapshot &&
        std::find(cfg.snapshot_steps.begin(), cfg.snapshot_steps.end(), step) !=
            cfg.snapshot_steps.end())
      cfg.on_snapshot(step, model);
  }
  return log;
}

namespace {

std::vector<int> sampler_timesteps(const NoiseSchedule& sched, int requested) {
  const int n = requested <= 0 ? sched.steps : std::min(requested, sched.steps);
  std::vector<int> ts;
  ts.reserve(static_cast<size_t>(n));
  // evenly spaced, descending, always ending at 1
  for (int i = n; i >= 1; --i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(i) * sched.steps / n));
    ts.push_back(std::max(1, t));
  }
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

}  // namespace

Image diffusion_sample(Denoiser<float>& model, const NoiseSchedule& sched,
                       const SampleRequest& req) {
  const int S = model.cfg.image_size;
  Rng rng(req.seed);
  Rng init_rng = rng.fork("init");
  Rng step_rng = rng.fork("steps");

  Tensor<float> z({1, S, S});
  for (auto& v : z.data) v = static_cast<float>(init_rng.normal());

  const bool use_neg = !req.neg_tokens.empty() && req.guidance != 1.0;
  const auto ts = sampler_timesteps(sched, req.sampler_steps);

  for (size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    Tensor<float> eps = model.forward_eps(z, t, req.pos_tokens);
    if (use_neg) {
      Tensor<float> eps_neg = model.forward_eps(z, t, req.neg_tokens);
      const float s = static_cast<float>(req.guidance);
      for (size_t j = 0; j < eps.data.size(); ++j)
        eps.data[j] = eps_neg.data[j] + s * (eps.data[j] - eps_neg.data[j]);
    }
    const double ab_t = sched.abar(t);
    const double ab_prev = sched.abar(t_prev);
    const double a_hat = ab_t / ab_prev;  // effective alpha across the stride
    const double inv_sqrt_a = 1.0 / std::sqrt(a_hat);
    const double coef = (1.0 - a_hat) / std::sqrt(1.0 - ab_t);
    for (size_t j = 0; j < z.data.size(); ++j)
      z.data[j] = static_cast<float>(inv_sqrt_a * (z.data[j] - coef * eps.data[j]));
    if (t_prev > 0) {
      const double var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - a_hat);
      const double sigma = std::sqrt(std::max(0.0, var));
      for (auto& v : z.data) v += static_cast<float>(sigma * step_rng.normal());
    }
  }
  return z_to_image(z);
}

AttentionMapResult attention_map(Denoiser<float>& model, const Tensor<float>& z_t, int t,
                                 const std::vector<int>& tokens, int token_pos) {
  if (token_pos < 0 || token_pos >= static_cast<int>(tokens.size()))
    throw Error(strformat("attention_map: position %d outside caption of %zu tokens", token_pos,
                          tokens.size()));
  Tape<float> tape;
  auto built = model.build(tape, tape.input(z_t), t, tokens);
  const Tensor<float>& attn = tape.val(built.attn);  // [HW, L]
  const int hw = attn.dim(0), L = attn.dim(1);
  AttentionMapResult out;
  out.gw = model.cfg.bottleneck();
  out.gh = model.cfg.bottleneck();
  out.raw.resize(static_cast<size_t>(hw));
  for (int i = 0; i < hw; ++i) {
    out.raw[static_cast<size_t>(i)] =
        static_cast<double>(attn.data[static_cast<size_t>(i) * L + token_pos]);
    out.total_mass += out.raw[static_cast<size_t>(i)];
  }
  double lo = out.raw[0], hi = out.raw[0];
  for (double v : out.raw) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  out.normalized.resize(out.raw.size());
  for (size_t i = 0; i < out.raw.size(); ++i)
    out.normalized[i] = hi > lo ? (out.raw[i] - lo) / (hi - lo) : 0.0;
  return out;
}

void save_model(const Denoiser<float>& model, const NoiseSchedule& sched, const Vocab& vocab,
                const std::string& path_base) {
  ckpt::save(model.params, path_base + ".gelb");
  vocab.save(path_base + ".vocab.tsv");
  nlohmann::ordered_json meta;
  meta["image_size"] = model.cfg.image_size;
  meta["base_ch"] = model.cfg.base_ch;
  meta["emb_dim"] = model.cfg.emb_dim;
  meta["time_dim"] = model.cfg.time_dim;
  meta["max_len"] = model.cfg.max_len;
  meta["vocab_rows"] = model.cfg.vocab_rows;
  meta["ext_rows"] = model.ext_rows;
  meta["schedule_steps"] = sched.steps;
  std::ofstream os(path_base + ".meta.json");
  if (!os) throw IOError("save_model: cannot write meta for " + path_base);
  os << meta.dump(2) << "\n";
}

LoadedModel load_model(const std::string& path_base) {
  std::ifstream is(path_base + ".meta.json");
  if (!is) throw IOError("load_model: missing meta " + path_base + ".meta.json");
  auto meta = nlohmann::ordered_json::parse(is);
  LoadedModel out;
  out.model.cfg.image_size = meta.at("image_size").get<int>();
  out.model.cfg.base_ch = meta.at("base_ch").get<int>();
  out.model.cfg.emb_dim = meta.at("emb_dim").get<int>();
  out.model.cfg.time_dim = meta.at("time_dim").get<int>();
  out.model.cfg.max_len = meta.at("max_len").get<int>();
  out.model.cfg.vocab_rows = meta.at("vocab_rows").get<int>();
  out.model.ext_rows = meta.at("ext_rows").get<int>();
  out.model.params = ckpt::load<float>(path_base + ".gelb");
  out.sched = NoiseSchedule::linear(meta.at("schedule_steps").get<int>());
  out.vocab = Vocab::load(path_base + ".vocab.tsv");
  return out;
}

}  // namespace geomlab
