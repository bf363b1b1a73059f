#pragma once

// Intent inference types: structured model output and its wire format,
// multimodal input, the pre-prompt and prompt construction, the bounded
// exchange history, and the decision step that turns an inference outcome
// into a safe motion command.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hiaer/affect.hpp"
#include "hiaer/error.hpp"

namespace hiaer::intent {

enum class IntentCategory { Aggression, Celebration, CalmGreeting, Disappointment, Neutral, Ambiguous };

inline constexpr IntentCategory kAllCategories[] = {
    IntentCategory::Aggression, IntentCategory::Celebration, IntentCategory::CalmGreeting,
    IntentCategory::Disappointment, IntentCategory::Neutral, IntentCategory::Ambiguous};

std::string_view to_string(IntentCategory c);
/// Exact (normalized) category name or a known synonym; nullopt otherwise.
std::optional<IntentCategory> category_from_string(std::string_view s);

struct Intent {
  IntentCategory category = IntentCategory::Ambiguous;
  std::string free_text;
  bool operator==(const Intent&) const = default;
};

/// The six structured fields plus the full transcript they came from.
struct StructuredOutput {
  std::string description;
  Intent intent;
  double confidence = 0.0;
  affect::VAState va;
  std::string primitive_token;
  std::string raw;

  /// Field-wise equality ignoring `raw`.
  bool same_fields(const StructuredOutput& o) const {
    return description == o.description && intent == o.intent && confidence == o.confidence &&
           va == o.va && primitive_token == o.primitive_token;
  }
};

void to_json(nlohmann::json& j, const StructuredOutput& o);
void from_json(const nlohmann::json& j, StructuredOutput& o);

// --- wire format -------------------------------------------------------------

enum class ParseErrorKind { NoStructuredBlock, MissingField, ValueOutOfRange, MalformedValue };

std::string_view to_string(ParseErrorKind k);

class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, std::string field, const std::string& message)
      : Error(std::string(to_string(kind)), message), kind_(kind), field_(std::move(field)) {}

  ParseErrorKind kind() const { return kind_; }
  /// Offending field label ("Confidence", ...); empty for NoStructuredBlock.
  const std::string& field() const { return field_; }

 private:
  ParseErrorKind kind_;
  std::string field_;
};

/// Field labels in their canonical order.
inline constexpr std::string_view kFieldLabels[] = {"Description", "Intent",  "Confidence",
                                                    "Valence",     "Arousal", "Motion"};

/// Extracts the fenced key-value block (last fenced block holding a field
/// label), or else scans labeled lines anywhere. Later duplicates win.
StructuredOutput parse_output(std::string_view raw);

/// Canonical transcript: a reasoning line followed by the fenced block.
std::string render_output(const StructuredOutput& o, std::string_view reasoning = {});

/// Only the fenced block of render_output.
std::string render_fields(const StructuredOutput& o);

// --- input -------------------------------------------------------------------

struct ImageFrame {
  std::string bytes;
  std::string encoding = "png";  // png | jpeg
  double timestamp = 0.0;        // capture time, seconds
  bool operator==(const ImageFrame&) const = default;
};

struct MultimodalInput {
  std::vector<ImageFrame> frames;
  std::optional<std::string> utterance;

  bool has_frames() const { return !frames.empty(); }
  bool has_text() const { return utterance.has_value() && !utterance->empty(); }
  double newest_timestamp() const;

  /// Throws EmptyInputError / ConfigError on invariant violations.
  void validate(std::size_t max_frames) const;
};

enum class Modality { PromptOnly, ImageOnly, Combined };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Projects the input onto one modality; EmptyInputError if nothing remains.
MultimodalInput select_modality(const MultimodalInput& input, Modality mode);

// --- prompt ------------------------------------------------------------------

struct FewShotExample {
  std::string scene_text;
  std::optional<std::filesystem::path> image_ref;
  std::optional<ImageFrame> image;  // loaded from image_ref
  std::string reasoning;
  StructuredOutput expected_output;
};

struct PrePrompt {
  std::string persona_and_task;
  std::string output_spec_with_cot;
  std::string va_mapping_table;
  std::string safety_rules;
  std::vector<FewShotExample> few_shot;

  std::string system_text() const;
  /// Throws ConfigError when a section is empty or an example is invalid.
  void validate(const affect::Vocabulary& vocab) const;
};

/// Loads the four template files from `prompt_dir`, fills their named slots
/// from the vocabulary and affect config, and loads the few-shot document.
PrePrompt load_preprompt(const std::filesystem::path& prompt_dir,
                         const std::filesystem::path& few_shot_file,
                         const affect::Vocabulary& vocab, const affect::AffectConfig& cfg);

/// Replaces {{name}} slots; throws ConfigError on an unfilled slot.
std::string fill_template(std::string_view tmpl,
                          const std::vector<std::pair<std::string, std::string>>& slots);

/// Text table: one line per quadrant with V/A ranges and gesture ids.
std::string render_va_mapping(const affect::Vocabulary& vocab, const affect::AffectConfig& cfg);

enum class Role { System, User, Assistant };
std::string_view to_string(Role r);

struct ContentPart {
  enum class Kind { Text, Image } kind = Kind::Text;
  std::string text;
  ImageFrame image;

  static ContentPart make_text(std::string t) { return {Kind::Text, std::move(t), {}}; }
  static ContentPart make_image(ImageFrame f) { return {Kind::Image, {}, std::move(f)}; }
  bool operator==(const ContentPart&) const = default;
};

struct Message {
  Role role = Role::User;
  std::vector<ContentPart> parts;
  bool operator==(const Message&) const = default;
};

using MessageSequence = std::vector<Message>;

struct HistoryEntry {
  std::string input_summary;
  StructuredOutput output;
};

/// Ring of the last K exchanges, oldest evicted first.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity = 6) : capacity_(capacity) {}

  void push(HistoryEntry e);
  const std::deque<HistoryEntry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t total_seen() const { return total_seen_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::size_t capacity_;
  std::deque<HistoryEntry> entries_;
  std::size_t total_seen_ = 0;
};

/// Text-only summary of an input, stored in history.
std::string summarize_input(const MultimodalInput& input);

/// System, few-shot pairs, history pairs oldest-first, then the user turn.
MessageSequence build_prompt(const PrePrompt& pre, const MultimodalInput& input,
                             const HistoryBuffer& history);

/// Chat-completions style JSON: [{"role":..,"content":[{type:text|image_url}..]}].
nlohmann::json to_chat_json(const MessageSequence& messages);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);
std::string_view mime_type(std::string_view encoding);

/// FNV-1a 64-bit digest in hex; used for prompt and payload digests.
std::string digest_hex(std::string_view bytes);
std::string digest(const MessageSequence& messages);

// --- decision ----------------------------------------------------------------

enum class FallbackReason { None, LowConfidence, UnknownPrimitive, Prohibited, ParseFailure, Timeout, Transport, Override };

std::string_view to_string(FallbackReason r);

struct FinalDecision {
  StructuredOutput output;
  affect::MotionPrimitive primitive;
  affect::StyleParams style;
  bool fell_back = false;
  FallbackReason reason = FallbackReason::None;
  bool operator_forced = false;
};

void to_json(nlohmann::json& j, const FinalDecision& d);

/// Structured output synthesized when no usable inference exists.
StructuredOutput synthesized_fallback_output(const affect::AffectConfig& cfg, std::string why);

struct IntentConfig {
  std::size_t history_capacity = 6;
  std::size_t frames_per_inference = 3;
  double timeout_s = 3.0;
};

void from_json(const nlohmann::json& j, IntentConfig& c);
void to_json(nlohmann::json& j, const IntentConfig& c);

}  // namespace hiaer::intent
