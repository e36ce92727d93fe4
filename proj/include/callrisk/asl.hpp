#pragma once

#include <array>
#include <string>
#include <string_view>

#include "callrisk/common.hpp"

namespace callrisk::asl {

// Discrete emotion vocabulary. Enumerator order doubles as the tie-break
// index for argmax decisions downstream.
enum class Emotion : int {
  happiness = 0,
  surprise,
  neutral,
  sadness,
  fear,
  anger,
  disgust,
};

inline constexpr int kEmotionCount = 7;

inline constexpr std::array<Emotion, kEmotionCount> kAllEmotions = {
    Emotion::happiness, Emotion::surprise, Emotion::neutral, Emotion::sadness,
    Emotion::fear,      Emotion::anger,    Emotion::disgust};

// One point in the affect space: tension, stability, arousal, each in [-1, 1].
struct AslVector {
  double tension = 0.0;
  double stability = 0.0;
  double arousal = 0.0;

  bool operator==(const AslVector&) const = default;

  double component(int dim) const {
    return dim == 0 ? tension : dim == 1 ? stability : arousal;
  }
  bool in_range() const {
    return tension >= -1.0 && tension <= 1.0 && stability >= -1.0 &&
           stability <= 1.0 && arousal >= -1.0 && arousal <= 1.0;
  }
};

class UnknownEmotion : public Error {
 public:
  explicit UnknownEmotion(std::string_view text)
      : Error("unknown emotion label: '" + std::string(text) + "'") {}
  UnknownEmotion(std::string_view text, int line_no)
      : Error("line " + std::to_string(line_no) + ": unknown emotion label: '" +
              std::string(text) + "'") {}
};

// Fixed label -> coordinate mapping, compiled in as constants.
AslVector map_emotion(Emotion label) noexcept;

std::string_view to_string(Emotion label) noexcept;

// Case-insensitive, whitespace-trimmed. Throws UnknownEmotion otherwise.
Emotion parse_emotion(std::string_view text);

// The full 7-row coordinate table. The built-in rows are the validated
// mapping; replacing them is reserved for sensitivity experiments and gated
// behind an explicit unsafe flag at the CLI.
struct AslTable {
  std::array<AslVector, kEmotionCount> rows;

  const AslVector& operator[](Emotion e) const {
    return rows[static_cast<int>(e)];
  }
  static const AslTable& builtin();
};

// Loads a replacement table from JSON ({"fear": [t, s, a], ...}); every label
// must be present and every component in [-1, 1].
AslTable load_asl_override(const std::string& path);

}  // namespace callrisk::asl
