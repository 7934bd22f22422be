#pragma once

#include <memory>
#include <string>
#include <vector>

#include "avse/metrics.hpp"
#include "avse/waveform.hpp"

namespace avse {

// Prompt recorded in every RewardRecord for audit parity with the intended
// deployment of a speech-language scorer.
inline constexpr const char* kRewardPrompt =
    "Give me an assessment of the quality of this speech sample";

struct RewardContext {
  Waveform clean;
  Waveform noisy;
};

struct RewardRecord {
  std::string description;  // empty for the scalar model
  double sentiment = 0.0;   // in [1, 5]
  AcousticFeatures features;
  std::string model_id;
  std::string prompt = kRewardPrompt;
};

struct LexiconEntry {
  std::string phrase;  // stored lowercase
  double weight = 0.0;
};

// Embedded v1 phrase/weight table.
const std::vector<LexiconEntry>& default_lexicon();
// Reads {"version": ..., "entries": [{"phrase","weight"},...]}; phrases lowercased.
std::vector<LexiconEntry> load_lexicon_json(const std::string& path);
const char* default_lexicon_version();

// Threshold-band template: clarity from intelligibility_proxy, noise from
// residual_noise_db, distortion from distortion_index, plus a summary clause.
std::string describe(const AcousticFeatures& features);

// Longest-match, case-insensitive, non-overlapping lexicon sum, affinely
// mapped from [-3, 3] to [1, 5] and clamped.
double sentiment_score(const std::string& description);
double sentiment_score(const std::string& description,
                       const std::vector<LexiconEntry>& lexicon);

class RewardModelInterface {
 public:
  virtual ~RewardModelInterface() = default;
  virtual RewardRecord score(const Waveform& est, const RewardContext& ctx) const = 0;
  virtual std::string model_id() const = 0;
};

// features -> describe -> sentiment, with the text kept on the record.
class InterpretableReward : public RewardModelInterface {
 public:
  InterpretableReward() : lexicon_(default_lexicon()) {}
  explicit InterpretableReward(std::vector<LexiconEntry> lexicon)
      : lexicon_(std::move(lexicon)) {}
  RewardRecord score(const Waveform& est, const RewardContext& ctx) const override;
  std::string model_id() const override { return "interpretable-v1"; }

 private:
  std::vector<LexiconEntry> lexicon_;
};

// Fixed smooth map of features to [1, 5]; no text.
class MosProxyReward : public RewardModelInterface {
 public:
  RewardRecord score(const Waveform& est, const RewardContext& ctx) const override;
  std::string model_id() const override { return "mosproxy-v1"; }
};

RewardRecord reward_interpretable(const Waveform& est, const RewardContext& ctx);
RewardRecord reward_scalar_mosproxy(const Waveform& est, const RewardContext& ctx);

// R = r_rl.sentiment - r_base.sentiment; both records must share a model.
double relative_reward(const RewardRecord& r_rl, const RewardRecord& r_base);

std::unique_ptr<RewardModelInterface> make_reward_model(const std::string& name);

}  // namespace avse
