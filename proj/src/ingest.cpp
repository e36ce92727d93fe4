#include "callrisk/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include <json.hpp>

namespace callrisk::ingest {

using nlohmann::json;

std::string_view role_tag(Role r) noexcept {
  switch (r) {
    case Role::ceo: return "CEO";
    case Role::cfo: return "CFO";
    case Role::cxo: return "CXO";
  }
  return "?";
}

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::ceo: return "ceo";
    case Role::cfo: return "cfo";
    case Role::cxo: return "cxo";
  }
  return "?";
}

std::string_view to_string(Section s) noexcept {
  return s == Section::presentation ? "presentation" : "qa";
}

std::string_view to_string(IssueKind kind) noexcept {
  switch (kind) {
    case IssueKind::missing_role: return "missing_role";
    case IssueKind::empty_section: return "empty_section";
    case IssueKind::missing_targets: return "missing_targets";
    case IssueKind::non_monotone_order: return "non_monotone_order";
  }
  return "?";
}

namespace {

std::string lower_copy(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Speakers that carry no feature in the pipeline; dropped at ingestion.
bool is_non_executive(const std::string& lowered) {
  static const std::unordered_set<std::string> kDrop = {
      "operator", "analyst", "moderator", "host"};
  return kDrop.contains(lowered);
}

}  // namespace

Role parse_role(std::string_view text) {
  const std::string s = lower_copy(text);
  if (s == "ceo") return Role::ceo;
  if (s == "cfo") return Role::cfo;
  if (s == "cxo") return Role::cxo;
  throw InvalidRole(text);
}

Section parse_section(std::string_view text) {
  const std::string s = lower_copy(text);
  if (s == "presentation") return Section::presentation;
  if (s == "qa") return Section::qa;
  throw InvalidSection(text);
}

SegmentResult segment_sections(std::span<const std::string> transcripts,
                               std::span<const std::string> markers) {
  if (markers.empty()) throw Error("segment_sections: marker set must be non-empty");

  std::vector<std::string> lowered_markers;
  lowered_markers.reserve(markers.size());
  for (const auto& m : markers) lowered_markers.push_back(lower_copy(m));

  SegmentResult result;
  result.sections.assign(transcripts.size(), Section::presentation);

  std::size_t boundary = transcripts.size();
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const std::string text = lower_copy(transcripts[i]);
    const bool hit = std::any_of(
        lowered_markers.begin(), lowered_markers.end(),
        [&](const std::string& m) { return text.find(m) != std::string::npos; });
    if (hit) {
      boundary = i;
      break;
    }
  }
  if (boundary == transcripts.size()) {
    result.no_qa_detected = !transcripts.empty();
    return result;
  }
  for (std::size_t i = boundary; i < transcripts.size(); ++i) {
    result.sections[i] = Section::qa;
  }
  return result;
}

namespace {

struct UtteranceDraft {
  Utterance utt;
  bool has_section = false;
};

UtteranceDraft parse_utterance(const json& j, int line_no, ParseResult& result,
                               bool& dropped) {
  dropped = false;
  if (!j.is_object()) throw MalformedLine(line_no, "utterance must be an object");

  static const std::set<std::string> known = {"role",         "section",
                                              "transcript",   "order",
                                              "text_emotion", "acoustic_emotion"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.contains(key)) ++result.unknown_field_warnings;
  }

  if (!j.contains("role") || !j.at("role").is_string()) {
    throw MalformedLine(line_no, "utterance missing string 'role'");
  }
  const std::string role_text = j.at("role").get<std::string>();
  if (is_non_executive(lower_copy(role_text))) {
    dropped = true;
    ++result.dropped_non_executive;
    return {};
  }

  UtteranceDraft draft;
  try {
    draft.utt.role = parse_role(role_text);
  } catch (const InvalidRole&) {
    throw InvalidRole(role_text, line_no);
  }

  if (!j.contains("order") || !j.at("order").is_number_integer()) {
    throw MalformedLine(line_no, "utterance missing integer 'order'");
  }
  draft.utt.order_index = j.at("order").get<int>();
  if (draft.utt.order_index < 0) {
    throw MalformedLine(line_no, "utterance 'order' must be nonnegative");
  }

  if (j.contains("section")) {
    const std::string section_text = j.at("section").get<std::string>();
    try {
      draft.utt.section = parse_section(section_text);
    } catch (const InvalidSection&) {
      throw InvalidSection(section_text, line_no);
    }
    draft.has_section = true;
  }
  if (j.contains("transcript")) {
    draft.utt.transcript = j.at("transcript").get<std::string>();
  }

  for (const char* key : {"text_emotion", "acoustic_emotion"}) {
    if (!j.contains(key)) continue;
    const std::string text = j.at(key).get<std::string>();
    asl::Emotion e{};
    try {
      e = asl::parse_emotion(text);
    } catch (const asl::UnknownEmotion&) {
      throw asl::UnknownEmotion(text, line_no);
    }
    if (std::string_view(key) == "text_emotion") {
      draft.utt.text_emotion = e;
    } else {
      draft.utt.acoustic_emotion = e;
    }
  }
  if (!draft.utt.text_emotion && !draft.utt.acoustic_emotion) {
    throw MalformedLine(line_no, "utterance carries neither text nor acoustic emotion");
  }
  return draft;
}

CallRecord parse_call_line(const json& j, int line_no, ParseResult& result) {
  static const std::set<std::string> known = {"call_id", "firm_id", "hist_vol_30d",
                                              "utterances", "targets"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.contains(key)) ++result.unknown_field_warnings;
  }
  for (const char* key : {"call_id", "firm_id", "hist_vol_30d", "utterances", "targets"}) {
    if (!j.contains(key)) {
      throw MalformedLine(line_no, std::string("missing required key '") + key + "'");
    }
  }

  CallRecord call;
  call.call_id = j.at("call_id").get<std::string>();
  call.firm_id = j.at("firm_id").get<std::string>();
  if (!j.at("hist_vol_30d").is_number()) {
    throw MalformedLine(line_no, "hist_vol_30d must be a number");
  }
  call.hist_vol_30d = j.at("hist_vol_30d").get<double>();
  if (call.hist_vol_30d < 0.0) {
    throw MalformedLine(line_no, "hist_vol_30d must be nonnegative");
  }

  const auto& targets = j.at("targets");
  if (!targets.is_object()) throw MalformedLine(line_no, "targets must be an object");
  for (const auto& [key, cell] : targets.items()) {
    int horizon = 0;
    if (key == "1") horizon = 1;
    else if (key == "7") horizon = 7;
    else if (key == "30") horizon = 30;
    else throw MalformedLine(line_no, "unsupported target horizon '" + key + "'");

    if (!cell.is_object() || !cell.contains("car") || !cell.contains("realized_vol")) {
      throw MalformedLine(line_no, "targets." + key + " must carry car and realized_vol");
    }
    Targets t;
    t.car = cell.at("car").get<double>();
    t.realized_vol = cell.at("realized_vol").get<double>();
    if (t.realized_vol < 0.0) {
      throw MalformedLine(line_no, "targets." + key + ".realized_vol must be nonnegative");
    }
    for (const auto& [cell_key, v] : cell.items()) {
      (void)v;
      if (cell_key != "car" && cell_key != "realized_vol") ++result.unknown_field_warnings;
    }
    call.targets[horizon] = t;
  }

  const auto& utterances = j.at("utterances");
  if (!utterances.is_array()) throw MalformedLine(line_no, "utterances must be an array");

  std::vector<UtteranceDraft> drafts;
  for (const auto& u : utterances) {
    bool dropped = false;
    UtteranceDraft draft = parse_utterance(u, line_no, result, dropped);
    if (!dropped) drafts.push_back(std::move(draft));
  }

  const bool all_explicit = std::all_of(drafts.begin(), drafts.end(),
                                        [](const auto& d) { return d.has_section; });
  if (!all_explicit) {
    const bool all_transcribed =
        std::all_of(drafts.begin(), drafts.end(),
                    [](const auto& d) { return d.utt.transcript.has_value(); });
    if (!all_transcribed) {
      throw MalformedLine(line_no,
                          "utterances must either all carry 'section' or all carry "
                          "'transcript' for segmentation");
    }
    std::vector<std::string> transcripts;
    transcripts.reserve(drafts.size());
    for (const auto& d : drafts) transcripts.push_back(*d.utt.transcript);
    const SegmentResult seg = segment_sections(transcripts, default_qa_markers());
    for (std::size_t i = 0; i < drafts.size(); ++i) {
      drafts[i].utt.section = seg.sections[i];
    }
  }

  call.utterances.reserve(drafts.size());
  for (auto& d : drafts) call.utterances.push_back(std::move(d.utt));
  return call;
}

}  // namespace

ParseResult parse_corpus(std::istream& in) {
  ParseResult result;
  std::unordered_set<std::string> seen_ids;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedLine(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw MalformedLine(line_no, "line must be a JSON object");

    CallRecord call = parse_call_line(j, line_no, result);
    if (!seen_ids.insert(call.call_id).second) throw DuplicateCallId(call.call_id);
    result.calls.push_back(std::move(call));
  }
  return result;
}

void write_corpus(std::ostream& out, std::span<const CallRecord> calls) {
  for (const CallRecord& call : calls) {
    json utterances = json::array();
    for (const Utterance& u : call.utterances) {
      json ju{{"role", std::string(to_string(u.role))},
              {"section", std::string(to_string(u.section))},
              {"order", u.order_index}};
      if (u.text_emotion) ju["text_emotion"] = std::string(asl::to_string(*u.text_emotion));
      if (u.acoustic_emotion) {
        ju["acoustic_emotion"] = std::string(asl::to_string(*u.acoustic_emotion));
      }
      if (u.transcript) ju["transcript"] = *u.transcript;
      utterances.push_back(std::move(ju));
    }

    json targets = json::object();
    for (const auto& [horizon, t] : call.targets) {
      targets[std::to_string(horizon)] = {{"car", t.car}, {"realized_vol", t.realized_vol}};
    }

    const json j{{"call_id", call.call_id},
                 {"firm_id", call.firm_id},
                 {"hist_vol_30d", call.hist_vol_30d},
                 {"utterances", std::move(utterances)},
                 {"targets", std::move(targets)}};
    out << j.dump() << '\n';
  }
}

std::vector<Issue> validate_call(const CallRecord& call) {
  std::vector<Issue> issues;

  for (Role role : kAllRoles) {
    const bool present = std::any_of(call.utterances.begin(), call.utterances.end(),
                                     [&](const Utterance& u) { return u.role == role; });
    if (!present) {
      issues.push_back({IssueKind::missing_role, std::string(role_tag(role))});
    }
  }

  for (Section section : {Section::presentation, Section::qa}) {
    const bool present =
        std::any_of(call.utterances.begin(), call.utterances.end(),
                    [&](const Utterance& u) { return u.section == section; });
    if (!present) {
      issues.push_back({IssueKind::empty_section, std::string(to_string(section))});
    }
  }

  for (int horizon : kHorizons) {
    if (!call.targets.contains(horizon)) {
      issues.push_back({IssueKind::missing_targets, std::to_string(horizon)});
    }
  }

  for (std::size_t i = 1; i < call.utterances.size(); ++i) {
    if (call.utterances[i].order_index <= call.utterances[i - 1].order_index) {
      issues.push_back({IssueKind::non_monotone_order,
                        "order_index not strictly increasing at position " +
                            std::to_string(i)});
      break;
    }
  }

  // Presentation must precede Q&A in order_index.
  int last_presentation = -1;
  int first_qa = -1;
  for (const Utterance& u : call.utterances) {
    if (u.section == Section::presentation) {
      last_presentation = std::max(last_presentation, u.order_index);
    } else if (first_qa < 0 || u.order_index < first_qa) {
      first_qa = u.order_index;
    }
  }
  if (last_presentation >= 0 && first_qa >= 0 && first_qa < last_presentation) {
    issues.push_back({IssueKind::non_monotone_order, "qa precedes presentation"});
  }

  return issues;
}

}  // namespace callrisk::ingest
