#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "callrisk/asl.hpp"

namespace callrisk::ingest {

enum class Role : int { ceo = 0, cfo, cxo };
enum class Section : int { presentation = 0, qa };

inline constexpr std::array<Role, 3> kAllRoles = {Role::ceo, Role::cfo, Role::cxo};
inline constexpr std::array<int, 3> kHorizons = {1, 7, 30};

// Uppercase spelling, used in feature names.
std::string_view role_tag(Role r) noexcept;
// Lowercase spelling, used in corpus files.
std::string_view to_string(Role r) noexcept;
std::string_view to_string(Section s) noexcept;

class InvalidRole : public Error {
 public:
  explicit InvalidRole(std::string_view text)
      : Error("invalid speaker role: '" + std::string(text) + "'") {}
  InvalidRole(std::string_view text, int line_no)
      : Error("line " + std::to_string(line_no) + ": invalid speaker role: '" +
              std::string(text) + "'") {}
};
class InvalidSection : public Error {
 public:
  explicit InvalidSection(std::string_view text)
      : Error("invalid section: '" + std::string(text) + "'") {}
  InvalidSection(std::string_view text, int line_no)
      : Error("line " + std::to_string(line_no) + ": invalid section: '" +
              std::string(text) + "'") {}
};
class MalformedLine : public Error {
 public:
  MalformedLine(int line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line_no(line_no) {}
  int line_no;
};
class DuplicateCallId : public Error {
 public:
  explicit DuplicateCallId(const std::string& id)
      : Error("duplicate call_id: " + id) {}
};

Role parse_role(std::string_view text);        // case-insensitive
Section parse_section(std::string_view text);  // "presentation" | "qa"

struct Utterance {
  Role role{};
  Section section{};
  int order_index = 0;
  std::optional<asl::Emotion> text_emotion;
  std::optional<asl::Emotion> acoustic_emotion;
  std::optional<std::string> transcript;
};

struct Targets {
  double car = 0.0;
  double realized_vol = 0.0;
};

struct CallRecord {
  std::string call_id;
  std::string firm_id;
  std::vector<Utterance> utterances;  // file order; validate_call checks monotonicity
  double hist_vol_30d = 0.0;
  std::map<int, Targets> targets;  // keyed by horizon in {1, 7, 30}
};

struct ParseResult {
  std::vector<CallRecord> calls;
  int unknown_field_warnings = 0;
  int dropped_non_executive = 0;  // operator/analyst/moderator utterances
};

// One JSON object per line; see the corpus format in the README. Utterances
// without an explicit section are segmented from transcripts using the
// default Q&A markers.
ParseResult parse_corpus(std::istream& in);

// Canonical serialization; parse_corpus(write_corpus(x)) == x on valid data.
void write_corpus(std::ostream& out, std::span<const CallRecord> calls);

inline const std::vector<std::string>& default_qa_markers() {
  static const std::vector<std::string> markers = {
      "question-and-answer session",
      "q&a session",
      "first question",
      "open the line for questions",
  };
  return markers;
}

struct SegmentResult {
  std::vector<Section> sections;  // one per transcript, in order
  bool no_qa_detected = false;
};

// Everything before the first transcript containing any marker
// (case-insensitive substring) is presentation; that transcript and all after
// are Q&A. If no marker fires, everything is presentation and the flag is set.
SegmentResult segment_sections(std::span<const std::string> transcripts,
                               std::span<const std::string> markers);

enum class IssueKind {
  missing_role,
  empty_section,
  missing_targets,
  non_monotone_order,
};

struct Issue {
  IssueKind kind;
  std::string detail;
  bool operator==(const Issue&) const = default;
};

std::string_view to_string(IssueKind kind) noexcept;

// Structural checks; an empty result means the call is clean. Section-order
// violations (Q&A before presentation) are reported as non_monotone_order.
std::vector<Issue> validate_call(const CallRecord& call);

}  // namespace callrisk::ingest
