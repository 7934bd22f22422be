#include "avse/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace avse {

namespace {

constexpr const char* kLexiconVersion = "v1";

enum Band { kBest = 0, kMid = 1, kWorst = 2 };

Band clarity_band(double intelligibility) {
  if (intelligibility >= 0.75) return kBest;
  if (intelligibility >= 0.45) return kMid;
  return kWorst;
}

Band noise_band(double residual_db) {
  if (residual_db <= -25.0) return kBest;
  if (residual_db <= -10.0) return kMid;
  return kWorst;
}

Band distortion_band(double index) {
  if (index < 0.1) return kBest;
  if (index <= 0.3) return kMid;
  return kWorst;
}

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return out;
}

}  // namespace

const std::vector<LexiconEntry>& default_lexicon() {
  static const std::vector<LexiconEntry> table = {
      {"clear and easy to understand", 1.0},
      {"no noticeable background noise", 1.0},
      {"good speech sample", 1.0},
      {"somewhat muffled", -0.3},
      {"some background noises", -0.3},
      {"a slight sense of distortion", -0.3},
      {"distorted and muffled", -1.0},
      {"a lot of background noise", -1.0},
      {"strong distortion", -1.0},
      {"difficult to understand", -1.0},
  };
  return table;
}

const char* default_lexicon_version() { return kLexiconVersion; }

std::vector<LexiconEntry> load_lexicon_json(const std::string& path) {
  std::ifstream f(path);
  require(bool(f), ErrorCode::IoError, "cannot open lexicon file " + path);
  nlohmann::json doc;
  try {
    f >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, std::string("lexicon JSON parse error: ") + e.what());
  }
  require(doc.contains("entries") && doc["entries"].is_array(), ErrorCode::FormatError,
          "lexicon JSON missing entries array");
  std::vector<LexiconEntry> out;
  for (const auto& e : doc["entries"]) {
    require(e.contains("phrase") && e.contains("weight"), ErrorCode::FormatError,
            "lexicon entry needs phrase and weight");
    LexiconEntry entry;
    entry.phrase = lower(e["phrase"].get<std::string>());
    entry.weight = e["weight"].get<double>();
    require(!entry.phrase.empty(), ErrorCode::FormatError, "empty lexicon phrase");
    out.push_back(std::move(entry));
  }
  require(!out.empty(), ErrorCode::FormatError, "lexicon has no entries");
  return out;
}

std::string describe(const AcousticFeatures& f) {
  static const char* clarity[] = {
      "clear and easy to understand",
      "somewhat muffled",
      "distorted and muffled, difficult to understand",
  };
  static const char* noise[] = {
      "no noticeable background noise",
      "some background noises",
      "a lot of background noise",
  };

  const Band c = clarity_band(f.intelligibility_proxy);
  const Band n = noise_band(f.residual_noise_db);
  const Band d = distortion_band(f.distortion_index);

  std::string text = "The speech is ";
  text += clarity[c];
  text += ", with ";
  text += noise[n];
  text += ".";
  if (d == kMid) {
    text += " There is a slight sense of distortion.";
  } else if (d == kWorst) {
    text += " There is strong distortion.";
  }
  const bool good = c != kWorst && n != kWorst && d != kWorst;
  text += good ? " Overall, this is a good speech sample."
               : " Overall, the quality needs improvement.";
  return text;
}

double sentiment_score(const std::string& description,
                       const std::vector<LexiconEntry>& lexicon) {
  require(!description.empty(), ErrorCode::InvalidArgument, "empty description");

  std::vector<const LexiconEntry*> by_length;
  for (const LexiconEntry& e : lexicon) by_length.push_back(&e);
  std::sort(by_length.begin(), by_length.end(),
            [](const LexiconEntry* a, const LexiconEntry* b) {
              if (a->phrase.size() != b->phrase.size())
                return a->phrase.size() > b->phrase.size();
              return a->phrase < b->phrase;
            });

  const std::string text = lower(description);
  double raw = 0.0;
  size_t pos = 0;
  while (pos < text.size()) {
    const LexiconEntry* hit = nullptr;
    for (const LexiconEntry* e : by_length) {
      if (text.compare(pos, e->phrase.size(), e->phrase) == 0) {
        hit = e;
        break;
      }
    }
    if (hit) {
      raw += hit->weight;
      pos += hit->phrase.size();
    } else {
      ++pos;
    }
  }
  return std::clamp(3.0 + raw * (2.0 / 3.0), 1.0, 5.0);
}

double sentiment_score(const std::string& description) {
  return sentiment_score(description, default_lexicon());
}

RewardRecord InterpretableReward::score(const Waveform& est, const RewardContext& ctx) const {
  RewardRecord rec;
  rec.features = acoustic_features(ctx.clean, est, ctx.noisy);
  rec.description = describe(rec.features);
  rec.sentiment = sentiment_score(rec.description, lexicon_);
  rec.model_id = model_id();
  return rec;
}

RewardRecord MosProxyReward::score(const Waveform& est, const RewardContext& ctx) const {
  RewardRecord rec;
  rec.features = acoustic_features(ctx.clean, est, ctx.noisy);
  const double z = 0.30 * rec.features.improvement_db +
                   2.0 * (rec.features.intelligibility_proxy - 0.5) -
                   1.5 * rec.features.distortion_index;
  rec.sentiment = std::clamp(1.0 + 4.0 / (1.0 + std::exp(-z)), 1.0, 5.0);
  rec.model_id = model_id();
  return rec;
}

RewardRecord reward_interpretable(const Waveform& est, const RewardContext& ctx) {
  return InterpretableReward().score(est, ctx);
}

RewardRecord reward_scalar_mosproxy(const Waveform& est, const RewardContext& ctx) {
  return MosProxyReward().score(est, ctx);
}

double relative_reward(const RewardRecord& r_rl, const RewardRecord& r_base) {
  require(r_rl.model_id == r_base.model_id, ErrorCode::RewardModelMismatch,
          "relative reward across different reward models: " + r_rl.model_id + " vs " +
              r_base.model_id);
  return r_rl.sentiment - r_base.sentiment;
}

std::unique_ptr<RewardModelInterface> make_reward_model(const std::string& name) {
  if (name == "interpretable") return std::make_unique<InterpretableReward>();
  if (name == "mos_proxy") return std::make_unique<MosProxyReward>();
  fail(ErrorCode::InvalidArgument, "unknown reward model: " + name);
}

}  // namespace avse
