#include "callrisk/asl.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

namespace callrisk::asl {

AslVector map_emotion(Emotion label) noexcept {
  switch (label) {
    case Emotion::happiness: return {-0.5, 1.0, 0.6};
    case Emotion::surprise:  return {0.2, 0.2, 0.9};
    case Emotion::neutral:   return {0.0, 0.5, 0.0};
    case Emotion::sadness:   return {0.6, -0.8, -0.5};
    case Emotion::fear:      return {1.0, -1.0, 0.8};
    case Emotion::anger:     return {0.9, -0.7, 0.7};
    case Emotion::disgust:   return {0.8, -0.9, 0.4};
  }
  return {};  // unreachable for valid enum values
}

std::string_view to_string(Emotion label) noexcept {
  switch (label) {
    case Emotion::happiness: return "happiness";
    case Emotion::surprise:  return "surprise";
    case Emotion::neutral:   return "neutral";
    case Emotion::sadness:   return "sadness";
    case Emotion::fear:      return "fear";
    case Emotion::anger:     return "anger";
    case Emotion::disgust:   return "disgust";
  }
  return "?";
}

Emotion parse_emotion(std::string_view text) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);

  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (Emotion e : kAllEmotions) {
    if (lower == to_string(e)) return e;
  }
  throw UnknownEmotion(text);
}

const AslTable& AslTable::builtin() {
  static const AslTable table = [] {
    AslTable t;
    for (Emotion e : kAllEmotions) t.rows[static_cast<int>(e)] = map_emotion(e);
    return t;
  }();
  return table;
}

AslTable load_asl_override(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ASL override file: " + path);
  nlohmann::json doc;
  in >> doc;

  AslTable table;
  for (Emotion e : kAllEmotions) {
    const std::string key(to_string(e));
    if (!doc.contains(key)) throw Error("ASL override missing label: " + key);
    const auto& row = doc.at(key);
    if (!row.is_array() || row.size() != 3) {
      throw Error("ASL override row for " + key + " must be [tension, stability, arousal]");
    }
    AslVector v{row[0].get<double>(), row[1].get<double>(), row[2].get<double>()};
    if (!v.in_range()) throw Error("ASL override row for " + key + " is outside [-1, 1]");
    table.rows[static_cast<int>(e)] = v;
  }
  return table;
}

}  // namespace callrisk::asl
