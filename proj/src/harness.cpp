#include "avse/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "avse/metrics.hpp"
#include "avse/wav_io.hpp"

namespace avse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const char* where) {
  require(j.is_object(), ErrorCode::InvalidArgument,
          std::string("config section '") + where + "' must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) known = true;
    require(known, ErrorCode::InvalidArgument,
            "unknown config key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidArgument,
         std::string("config key '") + key + "' in " + where + " has the wrong type");
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  require(!in.bad(), ErrorCode::IoError, "read failed on '" + path + "'");
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    require(!ec, ErrorCode::IoError, "cannot create directory '" + p.parent_path().string() + "'");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  require(out.good(), ErrorCode::IoError, "write failed on '" + path + "'");
}

std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

std::string fmt_signed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%+.6f", x);
  return buf;
}

std::string scene_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", id);
  return buf;
}

json record_to_json(const SceneRecord& r) {
  json j;
  j["id"] = r.id;
  j["seed"] = r.seed;
  j["split"] = r.split;
  j["snr_db"] = r.snr_db;
  j["noise_kind"] = r.noise_kind;
  j["f0_hz"] = r.f0_hz;
  j["duration_s"] = r.duration_s;
  j["sample_rate"] = r.sample_rate;
  j["measured_snr_db"] = r.measured_snr_db;
  j["clean_path"] = r.clean_path;
  j["noise_path"] = r.noise_path;
  j["noisy_path"] = r.noisy_path;
  return j;
}

SceneRecord record_from_json(const json& j) {
  check_keys(j,
             {"id", "seed", "split", "snr_db", "noise_kind", "f0_hz", "duration_s",
              "sample_rate", "measured_snr_db", "clean_path", "noise_path", "noisy_path"},
             "manifest record");
  SceneRecord r;
  read_field(j, "id", r.id, "manifest record");
  read_field(j, "seed", r.seed, "manifest record");
  read_field(j, "split", r.split, "manifest record");
  read_field(j, "snr_db", r.snr_db, "manifest record");
  read_field(j, "noise_kind", r.noise_kind, "manifest record");
  read_field(j, "f0_hz", r.f0_hz, "manifest record");
  read_field(j, "duration_s", r.duration_s, "manifest record");
  read_field(j, "sample_rate", r.sample_rate, "manifest record");
  read_field(j, "measured_snr_db", r.measured_snr_db, "manifest record");
  read_field(j, "clean_path", r.clean_path, "manifest record");
  read_field(j, "noise_path", r.noise_path, "manifest record");
  read_field(j, "noisy_path", r.noisy_path, "manifest record");
  require(r.split == "train" || r.split == "held_out", ErrorCode::FormatError,
          "manifest record has unknown split '" + r.split + "'");
  return r;
}

// Plain mixture SNR from stored files: energy of ref against energy of
// (noisy - ref). Unlike si_snr this has no projection, so it reproduces the
// mixing ratio exactly up to 16-bit quantization.
double mixture_snr_db(const Waveform& ref, const Waveform& noisy) {
  require(ref.size() == noisy.size(), ErrorCode::InvalidArgument,
          "mixture SNR needs equal-length signals");
  double sr = 0.0, sd = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double d = noisy.samples[i] - ref.samples[i];
    sr += ref.samples[i] * ref.samples[i];
    sd += d * d;
  }
  return 10.0 * std::log10((sr + kEps) / (sd + kEps));
}

json scene_eval_json(int scene_id, const std::string& method, const MetricReport& rep,
                     double sentiment, const std::string& description) {
  json j;
  j["scene_id"] = scene_id;
  j["method"] = method;
  j["si_snr_db"] = rep.si_snr_db;
  j["stoi"] = rep.stoi;
  j["seg_snr_db"] = rep.seg_snr_db;
  j["sentiment"] = sentiment;
  j["description"] = description;
  return j;
}

std::vector<Tensor> collect_grads(const Tape& tape, const ModelBinding& binding) {
  std::vector<Tensor> grads;
  grads.reserve(binding.leaves.size());
  for (const DiffTensor& leaf : binding.leaves) {
    const Tensor& g = tape.grad(leaf);
    require(g.all_finite(), ErrorCode::NumericalFailure,
            "non-finite gradient during pretraining");
    grads.push_back(g);
  }
  return grads;
}

}  // namespace

void ExperimentConfig::validate() const {
  require(scene_count > 0 && scene_count <= 100000, ErrorCode::InvalidArgument,
          "scene_count must be in [1, 100000]");
  require(duration_s >= 0.1 && duration_s <= 60.0, ErrorCode::InvalidArgument,
          "duration_s must be in [0.1, 60]");
  require(sample_rate >= 8000 && sample_rate <= 48000, ErrorCode::InvalidArgument,
          "sample_rate must be in [8000, 48000]");
  require(visual_frame_rate > 0.0, ErrorCode::InvalidArgument,
          "visual_frame_rate must be positive");
  require(!snr_grid.empty(), ErrorCode::InvalidArgument, "snr_grid must not be empty");
  for (double s : snr_grid)
    require(s >= -60.0 && s <= 60.0, ErrorCode::InvalidArgument,
            "snr_grid entries must be in [-60, 60] dB");
  require(!noise_kinds.empty(), ErrorCode::InvalidArgument, "noise_kinds must not be empty");
  for (const std::string& k : noise_kinds) noise_kind_from_string(k);
  model.validate();
  ppo.validate();
  require(reward == "interpretable" || reward == "mos_proxy", ErrorCode::InvalidArgument,
          "reward must be 'interpretable' or 'mos_proxy'");
  require(!out_dir.empty(), ErrorCode::InvalidArgument, "out_dir must not be empty");
  require(pretrain_steps >= 1, ErrorCode::InvalidArgument, "pretrain_steps must be >= 1");
  require(pretrain_lr > 0.0, ErrorCode::InvalidArgument, "pretrain_lr must be positive");
  require(checkpoint_every >= 0, ErrorCode::InvalidArgument,
          "checkpoint_every must be >= 0");
  // Scenes must be long enough for at least one encoder frame and two visual
  // frames, or every downstream command fails later with a worse message.
  const int t = int(duration_s * sample_rate);
  require(model.latent_frames(t) >= 1, ErrorCode::InvalidArgument,
          "duration_s too short for the encoder kernel");
  require(int(std::ceil(duration_s * visual_frame_rate)) >= 2, ErrorCode::InvalidArgument,
          "duration_s too short for two visual frames");
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"scene_count", "duration_s", "sample_rate", "visual_frame_rate", "snr_grid",
              "noise_kinds", "model", "ppo", "reward", "out_dir", "master_seed",
              "pretrain_steps", "pretrain_lr", "checkpoint_every"},
             "config");
  ExperimentConfig cfg;
  read_field(j, "scene_count", cfg.scene_count, "config");
  read_field(j, "duration_s", cfg.duration_s, "config");
  read_field(j, "sample_rate", cfg.sample_rate, "config");
  read_field(j, "visual_frame_rate", cfg.visual_frame_rate, "config");
  read_field(j, "snr_grid", cfg.snr_grid, "config");
  read_field(j, "noise_kinds", cfg.noise_kinds, "config");
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"n", "kernel", "stride", "tcn_blocks", "tcn_channels", "d_v"}, "model");
    read_field(m, "n", cfg.model.n, "model");
    read_field(m, "kernel", cfg.model.kernel, "model");
    read_field(m, "stride", cfg.model.stride, "model");
    read_field(m, "tcn_blocks", cfg.model.tcn_blocks, "model");
    read_field(m, "tcn_channels", cfg.model.tcn_channels, "model");
    read_field(m, "d_v", cfg.model.d_v, "model");
  }
  if (j.contains("ppo")) {
    const json& p = j.at("ppo");
    check_keys(p, {"sigma", "epsilon", "beta", "gamma", "lr", "epochs", "seed"}, "ppo");
    read_field(p, "sigma", cfg.ppo.sigma, "ppo");
    read_field(p, "epsilon", cfg.ppo.epsilon, "ppo");
    read_field(p, "beta", cfg.ppo.beta, "ppo");
    read_field(p, "gamma", cfg.ppo.gamma, "ppo");
    read_field(p, "lr", cfg.ppo.lr, "ppo");
    read_field(p, "epochs", cfg.ppo.epochs, "ppo");
    read_field(p, "seed", cfg.ppo.seed, "ppo");
  }
  read_field(j, "reward", cfg.reward, "config");
  read_field(j, "out_dir", cfg.out_dir, "config");
  read_field(j, "master_seed", cfg.master_seed, "config");
  read_field(j, "pretrain_steps", cfg.pretrain_steps, "config");
  read_field(j, "pretrain_lr", cfg.pretrain_lr, "config");
  read_field(j, "checkpoint_every", cfg.checkpoint_every, "config");
  cfg.validate();
  return cfg;
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json j;
  j["scene_count"] = cfg.scene_count;
  j["duration_s"] = cfg.duration_s;
  j["sample_rate"] = cfg.sample_rate;
  j["visual_frame_rate"] = cfg.visual_frame_rate;
  j["snr_grid"] = cfg.snr_grid;
  j["noise_kinds"] = cfg.noise_kinds;
  j["model"] = {{"n", cfg.model.n},
                {"kernel", cfg.model.kernel},
                {"stride", cfg.model.stride},
                {"tcn_blocks", cfg.model.tcn_blocks},
                {"tcn_channels", cfg.model.tcn_channels},
                {"d_v", cfg.model.d_v}};
  j["ppo"] = {{"sigma", cfg.ppo.sigma}, {"epsilon", cfg.ppo.epsilon},
              {"beta", cfg.ppo.beta},   {"gamma", cfg.ppo.gamma},
              {"lr", cfg.ppo.lr},       {"epochs", cfg.ppo.epochs},
              {"seed", cfg.ppo.seed}};
  j["reward"] = cfg.reward;
  j["out_dir"] = cfg.out_dir;
  j["master_seed"] = cfg.master_seed;
  j["pretrain_steps"] = cfg.pretrain_steps;
  j["pretrain_lr"] = cfg.pretrain_lr;
  j["checkpoint_every"] = cfg.checkpoint_every;
  return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json_text(read_text_file(path));
}

std::vector<SceneRecord> load_manifest(const std::string& out_dir) {
  const std::string text = read_text_file(out_dir + "/manifest.jsonl");
  std::vector<SceneRecord> records;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::FormatError,
           "manifest line " + std::to_string(lineno) + " is not valid JSON: " + e.what());
    }
    records.push_back(record_from_json(j));
  }
  require(!records.empty(), ErrorCode::FormatError, "manifest is empty");
  return records;
}

Scene load_scene(const std::string& out_dir, const SceneRecord& rec, int d_v,
                 double visual_frame_rate) {
  Scene s;
  s.clean = read_wav(out_dir + "/" + rec.clean_path);
  s.noise = read_wav(out_dir + "/" + rec.noise_path);
  s.noisy = read_wav(out_dir + "/" + rec.noisy_path);
  require(s.clean.size() == s.noisy.size() && s.clean.size() == s.noise.size(),
          ErrorCode::FormatError,
          "scene " + std::to_string(rec.id) + " has mismatched track lengths");
  s.visual = visual_features(s.clean, visual_frame_rate, d_v,
                             derive_seed(rec.seed, seed_stream::kVisual));
  s.snr_db = rec.snr_db;
  s.seed = rec.seed;
  s.id = rec.id;
  return s;
}

OutDirLock::OutDirLock(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorCode::IoError, "cannot create out_dir '" + out_dir + "'");
  path_ = out_dir + "/.lock";
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  require(f != nullptr, ErrorCode::IoError,
          "out_dir '" + out_dir + "' is locked by another command (" + path_ +
              " exists; remove it if that command is gone)");
  std::fputs("locked\n", f);
  std::fclose(f);
}

OutDirLock::~OutDirLock() { std::remove(path_.c_str()); }

std::string EvalTable::to_csv() const {
  std::string out = "method,si_snr_db,stoi,sentiment,seg_snr_db\n";
  for (const EvalRow& r : rows) {
    out += r.method;
    if (r.present) {
      out += "," + fmt6(r.si_snr_db) + "," + fmt6(r.stoi) + "," + fmt6(r.sentiment) + "," +
             fmt6(r.seg_snr_db);
    } else {
      // Empty cells, not a placeholder word: CSV consumers read them as NaN.
      out += ",,,,";
    }
    out += "\n";
  }
  return out;
}

std::string EvalTable::to_markdown() const {
  std::string out = "| method | si_snr_db | stoi | sentiment | seg_snr_db |\n";
  out += "| --- | --- | --- | --- | --- |\n";
  for (const EvalRow& r : rows) {
    if (r.present) {
      out += "| " + r.method + " | " + fmt6(r.si_snr_db) + " | " + fmt6(r.stoi) + " | " +
             fmt6(r.sentiment) + " | " + fmt6(r.seg_snr_db) + " |\n";
    } else {
      out += "| " + r.method + " | absent | absent | absent | absent |\n";
    }
  }
  return out;
}

std::vector<SceneRecord> cmd_gen_scenes(const ExperimentConfig& cfg) {
  cfg.validate();
  OutDirLock lock(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(cfg.out_dir + "/scenes", ec);
  require(!ec, ErrorCode::IoError, "cannot create scenes directory under '" + cfg.out_dir + "'");

  std::vector<SceneRecord> records;
  records.reserve(size_t(cfg.scene_count));
  std::string manifest_text;

  for (int i = 0; i < cfg.scene_count; ++i) {
    // Every fifth scene is held out; the split is encoded in the scene seed's
    // parity so a record is self-describing even without the split field.
    const bool held_out = (i % 5 == 4);
    uint64_t seed = derive_seed(cfg.master_seed, seed_stream::kScene, uint64_t(i));
    seed = (seed & ~1ull) | (held_out ? 1ull : 0ull);

    Rng pick(derive_seed(seed, seed_stream::kScene));
    const double f0 = pick.uniform(95.0, 230.0);
    const double snr = cfg.snr_grid[size_t(pick.next_u64() % cfg.snr_grid.size())];
    const NoiseKind kind = noise_kind_from_string(
        cfg.noise_kinds[size_t(pick.next_u64() % cfg.noise_kinds.size())]);

    const Waveform clean = generate_clean(cfg.duration_s, f0, seed, cfg.sample_rate);
    const Waveform noise = generate_noise(kind, cfg.duration_s, seed, cfg.sample_rate);
    Scene scene = mix_scene(clean, noise, snr, seed, cfg.visual_frame_rate, cfg.model.d_v);
    scene.id = i;

    SceneRecord rec;
    rec.id = i;
    rec.seed = seed;
    rec.split = held_out ? "held_out" : "train";
    rec.snr_db = snr;
    rec.noise_kind = noise_kind_name(kind);
    rec.f0_hz = f0;
    rec.duration_s = cfg.duration_s;
    rec.sample_rate = cfg.sample_rate;
    const std::string stem = "scenes/" + scene_stem(i);
    rec.clean_path = stem + "_clean.wav";
    rec.noise_path = stem + "_noise.wav";
    rec.noisy_path = stem + "_noisy.wav";

    write_wav(cfg.out_dir + "/" + rec.clean_path, scene.clean);
    write_wav(cfg.out_dir + "/" + rec.noise_path, scene.noise);
    write_wav(cfg.out_dir + "/" + rec.noisy_path, scene.noisy);

    // Self-check against the stored bytes, not the in-memory floats.
    const Waveform rc = read_wav(cfg.out_dir + "/" + rec.clean_path);
    const Waveform rn = read_wav(cfg.out_dir + "/" + rec.noisy_path);
    rec.measured_snr_db = mixture_snr_db(rc, rn);
    require(std::abs(rec.measured_snr_db - snr) <= 0.01, ErrorCode::NumericalFailure,
            "scene " + std::to_string(i) + " stored SNR " + fmt6(rec.measured_snr_db) +
                " dB deviates from requested " + fmt6(snr) + " dB by more than 0.01 dB");

    manifest_text += record_to_json(rec).dump() + "\n";
    records.push_back(std::move(rec));
  }

  write_text_file(cfg.out_dir + "/manifest.jsonl", manifest_text);
  write_text_file(cfg.out_dir + "/config.json", config_to_json_text(cfg));
  return records;
}

PretrainSummary cmd_pretrain(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<SceneRecord> records = load_manifest(cfg.out_dir);
  OutDirLock lock(cfg.out_dir);

  std::vector<Scene> train;
  for (const SceneRecord& rec : records)
    if (rec.split == "train")
      train.push_back(load_scene(cfg.out_dir, rec, cfg.model.d_v, cfg.visual_frame_rate));
  require(!train.empty(), ErrorCode::InvalidArgument, "manifest has no training scenes");

  AvseModel model(cfg.model, cfg.master_seed);
  AdamState adam;
  AvseModel last_good = model.snapshot();
  AdamState last_good_adam = adam;
  int last_good_steps = 0;

  const std::string ckpt_path = cfg.out_dir + "/pretrained.ckpt";
  PretrainSummary summary;
  summary.checkpoint_path = ckpt_path;

  int steps_done = 0;
  try {
    while (steps_done < cfg.pretrain_steps) {
      double loss_sum = 0.0;
      int loss_count = 0;
      for (const Scene& scene : train) {
        if (steps_done >= cfg.pretrain_steps) break;
        Tape tape;
        ForwardTrace tr = model.forward(tape, scene.noisy, scene.visual);
        DiffTensor loss = si_snr_loss(tape, scene.clean, tr.enhanced);
        const double lv = tape.scalar(loss);
        require(std::isfinite(lv), ErrorCode::NumericalFailure,
                "non-finite pretraining loss at step " + std::to_string(steps_done));
        tape.backward(loss);
        const std::vector<Tensor> grads = collect_grads(tape, tr.binding);
        adam_step(model.params(), grads, adam, cfg.pretrain_lr);
        loss_sum += lv;
        ++loss_count;
        ++steps_done;
      }
      summary.epoch_mean_loss.push_back(loss_sum / loss_count);
      last_good = model.snapshot();
      last_good_adam = adam;
      last_good_steps = steps_done;
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NumericalFailure) {
      // Keep the last epoch that finished cleanly so the run is resumable.
      save_checkpoint(ckpt_path, last_good, last_good_adam, 0, last_good_steps, 0);
      fail(ErrorCode::NumericalFailure,
           std::string(e.what()) + "; wrote last good checkpoint (" +
               std::to_string(last_good_steps) + " steps) to " + ckpt_path);
    }
    throw;
  }

  save_checkpoint(ckpt_path, model, adam, 0, steps_done, 0);
  summary.steps = steps_done;

  json curve = json::array();
  for (size_t e = 0; e < summary.epoch_mean_loss.size(); ++e)
    curve.push_back({{"epoch", int(e)}, {"mean_loss", summary.epoch_mean_loss[e]}});
  write_text_file(cfg.out_dir + "/pretrain_curve.json", curve.dump(2) + "\n");
  return summary;
}

FinetuneSummary cmd_finetune(const ExperimentConfig& cfg, const std::string& init_checkpoint) {
  cfg.validate();
  const std::vector<SceneRecord> records = load_manifest(cfg.out_dir);
  OutDirLock lock(cfg.out_dir);

  std::vector<Scene> train;
  for (const SceneRecord& rec : records)
    if (rec.split == "train")
      train.push_back(load_scene(cfg.out_dir, rec, cfg.model.d_v, cfg.visual_frame_rate));
  require(!train.empty(), ErrorCode::InvalidArgument, "manifest has no training scenes");

  const std::string init_path =
      init_checkpoint.empty() ? cfg.out_dir + "/pretrained.ckpt" : init_checkpoint;
  const Checkpoint ckpt = load_checkpoint(init_path);
  require(ckpt.config == cfg.model, ErrorCode::InvalidArgument,
          "checkpoint '" + init_path + "' was trained with a different model shape");
  AvseModel policy = model_from_checkpoint(ckpt);

  const std::unique_ptr<RewardModelInterface> reward = make_reward_model(cfg.reward);
  PpoConfig ppo = cfg.ppo;
  if (ppo.seed == 0) ppo.seed = derive_seed(cfg.master_seed, seed_stream::kAction);

  const std::string log_path = cfg.out_dir + "/finetune_" + cfg.reward + "_log.jsonl";
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  require(log.good(), ErrorCode::IoError, "cannot open '" + log_path + "' for writing");

  const auto log_sink = [&log](const SceneLog& s) {
    json j;
    j["epoch"] = s.epoch;
    j["scene_id"] = s.scene_id;
    j["reward_R"] = s.reward_R;
    j["kl"] = s.kl;
    j["kl_per_element"] = s.kl_per_element;
    j["ratio"] = s.ratio;
    j["clip_active"] = s.clip_active;
    j["sentiment_rl"] = s.sentiment_rl;
    j["sentiment_base"] = s.sentiment_base;
    j["si_snr_rl"] = s.si_snr_rl;
    j["total_loss"] = s.total_loss;
    j["description"] = s.description_rl;
    log << j.dump() << "\n";
  };

  AdamState adam;
  const auto epoch_sink = [&](int epoch, const AvseModel& m) {
    if (cfg.checkpoint_every <= 0) return;
    if ((epoch + 1) % cfg.checkpoint_every != 0) return;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "/finetune_%s_epoch_%04d.ckpt", cfg.reward.c_str(),
                  epoch);
    save_checkpoint(cfg.out_dir + buf, m, adam, ppo.seed, ckpt.pretrain_steps, epoch + 1);
  };

  const FinetuneResult result =
      run_finetune(policy, train, *reward, ppo, adam, log_sink, epoch_sink);
  log.flush();
  require(log.good(), ErrorCode::IoError, "write failed on '" + log_path + "'");

  FinetuneSummary summary;
  summary.epochs = int(result.epochs.size());
  summary.checkpoint_path = cfg.out_dir + "/finetuned_" + cfg.reward + ".ckpt";
  summary.log_path = log_path;
  if (!result.epochs.empty()) {
    summary.final_mean_sentiment = result.epochs.back().mean_sentiment;
    summary.first_epoch_first_ratio = result.epochs.front().first_ratio;
  }
  save_checkpoint(summary.checkpoint_path, policy, adam, ppo.seed, ckpt.pretrain_steps,
                  summary.epochs);
  return summary;
}

EvalTable cmd_evaluate(const ExperimentConfig& cfg, const EvalPaths& paths) {
  cfg.validate();
  const std::vector<SceneRecord> records = load_manifest(cfg.out_dir);
  OutDirLock lock(cfg.out_dir);

  std::vector<SceneRecord> held;
  for (const SceneRecord& rec : records)
    if (rec.split == "held_out") held.push_back(rec);
  require(!held.empty(), ErrorCode::InvalidArgument, "manifest has no held-out scenes");

  std::vector<Scene> scenes;
  scenes.reserve(held.size());
  for (const SceneRecord& rec : held)
    scenes.push_back(load_scene(cfg.out_dir, rec, cfg.model.d_v, cfg.visual_frame_rate));

  const auto resolve = [&](const std::optional<std::string>& given,
                           const std::string& fallback) -> std::optional<std::string> {
    if (given.has_value()) {
      require(fs::exists(*given), ErrorCode::IoError, "checkpoint '" + *given + "' not found");
      return given;
    }
    if (fs::exists(fallback)) return fallback;
    return std::nullopt;
  };
  const auto baseline_path = resolve(paths.baseline, cfg.out_dir + "/pretrained.ckpt");
  const auto scalar_path = resolve(paths.rl_scalar, cfg.out_dir + "/finetuned_mos_proxy.ckpt");
  const auto interp_path =
      resolve(paths.rl_interpretable, cfg.out_dir + "/finetuned_interpretable.ckpt");

  const InterpretableReward sentiment_scorer;
  json per_scene = json::array();

  // Metrics are computed from stored bytes so `score` on the same files
  // reproduces every table entry exactly.
  const auto eval_method = [&](const std::string& method,
                               const std::optional<std::string>& ckpt_path) -> EvalRow {
    EvalRow row;
    row.method = method;
    if (method != "noisy" && !ckpt_path.has_value()) return row;

    std::optional<AvseModel> model;
    if (ckpt_path.has_value()) {
      const Checkpoint ck = load_checkpoint(*ckpt_path);
      require(ck.config == cfg.model, ErrorCode::InvalidArgument,
              "checkpoint '" + *ckpt_path + "' was trained with a different model shape");
      model.emplace(model_from_checkpoint(ck));
    }

    double si = 0.0, st = 0.0, se = 0.0, sg = 0.0;
    for (size_t k = 0; k < scenes.size(); ++k) {
      const Scene& scene = scenes[k];
      Waveform est;
      if (model.has_value()) {
        const Waveform enhanced = model->enhance(scene.noisy, scene.visual);
        const std::string rel = "eval/" + method + "/" + scene_stem(scene.id) + ".wav";
        const std::string abs_path = cfg.out_dir + "/" + rel;
        std::error_code dir_ec;
        fs::create_directories(fs::path(abs_path).parent_path(), dir_ec);
        require(!dir_ec, ErrorCode::IoError, "cannot create eval directory for '" + rel + "'");
        write_wav(abs_path, enhanced);
        est = read_wav(abs_path);
      } else {
        est = scene.noisy;
      }
      const MetricReport rep = metric_report(scene.clean, est);
      const RewardRecord rec =
          sentiment_scorer.score(est, RewardContext{scene.clean, scene.noisy});
      si += rep.si_snr_db;
      st += rep.stoi;
      se += rec.sentiment;
      sg += rep.seg_snr_db;
      per_scene.push_back(scene_eval_json(scene.id, method, rep, rec.sentiment,
                                          rec.description));
    }
    row.present = true;
    const double n = double(scenes.size());
    row.si_snr_db = si / n;
    row.stoi = st / n;
    row.sentiment = se / n;
    row.seg_snr_db = sg / n;
    return row;
  };

  EvalTable table;
  table.rows.push_back(eval_method("noisy", std::nullopt));
  table.rows.push_back(eval_method("baseline", baseline_path));
  table.rows.push_back(eval_method("rl_scalar", scalar_path));
  table.rows.push_back(eval_method("rl_interpretable", interp_path));

  write_text_file(cfg.out_dir + "/eval_table.csv", table.to_csv());
  write_text_file(cfg.out_dir + "/eval_table.md", table.to_markdown());
  write_text_file(cfg.out_dir + "/eval_scenes.json", per_scene.dump(2) + "\n");
  return table;
}

ExplainReport cmd_explain(const ExperimentConfig& cfg, int scene_id,
                          const std::string& checkpoint_path) {
  cfg.validate();
  const std::vector<SceneRecord> records = load_manifest(cfg.out_dir);
  const SceneRecord* rec = nullptr;
  for (const SceneRecord& r : records)
    if (r.id == scene_id) rec = &r;
  require(rec != nullptr, ErrorCode::InvalidArgument,
          "scene " + std::to_string(scene_id) + " is not in the manifest");
  const Scene scene = load_scene(cfg.out_dir, *rec, cfg.model.d_v, cfg.visual_frame_rate);

  const std::string ckpt_path = checkpoint_path.empty()
                                    ? cfg.out_dir + "/finetuned_interpretable.ckpt"
                                    : checkpoint_path;
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  require(ckpt.config == cfg.model, ErrorCode::InvalidArgument,
          "checkpoint '" + ckpt_path + "' was trained with a different model shape");
  const AvseModel model = model_from_checkpoint(ckpt);

  const Waveform est = model.enhance(scene.noisy, scene.visual);
  const RewardContext ctx{scene.clean, scene.noisy};
  const InterpretableReward scorer;
  const RewardRecord before = scorer.score(scene.noisy, ctx);
  const RewardRecord after = scorer.score(est, ctx);

  ExplainReport rep;
  rep.scene_id = scene_id;
  rep.before_description = before.description;
  rep.after_description = after.description;
  rep.delta_reward = after.sentiment - before.sentiment;
  rep.delta_si_snr_db = si_snr(scene.clean, est) - si_snr(scene.clean, scene.noisy);
  rep.delta_stoi = stoi(scene.clean, est) - stoi(scene.clean, scene.noisy);

  std::string text = scene_stem(scene_id) + " (snr_db=" + fmt6(rec->snr_db) +
                     ", noise=" + rec->noise_kind + ", split=" + rec->split + ")\n";
  text += "before: " + rep.before_description + "\n";
  text += "after:  " + rep.after_description + "\n";
  text += "delta_sentiment: " + fmt_signed6(rep.delta_reward) + "\n";
  text += "delta_si_snr_db: " + fmt_signed6(rep.delta_si_snr_db) + "\n";
  text += "delta_stoi: " + fmt_signed6(rep.delta_stoi) + "\n";
  rep.text = text;
  return rep;
}

std::string cmd_score_json(const std::string& ref_path, const std::string& est_path,
                           const std::optional<std::string>& noisy_path) {
  const Waveform ref = read_wav(ref_path);
  const Waveform est = read_wav(est_path);
  const MetricReport rep = metric_report(ref, est);
  json j;
  j["si_snr_db"] = rep.si_snr_db;
  j["stoi"] = rep.stoi;
  j["seg_snr_db"] = rep.seg_snr_db;
  if (noisy_path.has_value()) {
    const Waveform noisy = read_wav(*noisy_path);
    const AcousticFeatures f = acoustic_features(ref, est, noisy);
    j["features"] = {{"residual_noise_db", f.residual_noise_db},
                     {"distortion_index", f.distortion_index},
                     {"intelligibility_proxy", f.intelligibility_proxy},
                     {"loudness_db", f.loudness_db},
                     {"improvement_db", f.improvement_db}};
    j["mixture_snr_db"] = mixture_snr_db(ref, noisy);
  }
  return j.dump();
}

}  // namespace avse
