#include "hiaer/intent_engine.hpp"

namespace hiaer::intent {

std::string_view to_string(FallbackReason r) {
  switch (r) {
    case FallbackReason::None: return "none";
    case FallbackReason::LowConfidence: return "low_confidence";
    case FallbackReason::UnknownPrimitive: return "unknown_primitive";
    case FallbackReason::Prohibited: return "prohibited";
    case FallbackReason::ParseFailure: return "parse_failure";
    case FallbackReason::Timeout: return "timeout";
    case FallbackReason::Transport: return "transport";
    case FallbackReason::Override: return "override";
  }
  return "none";
}

StructuredOutput synthesized_fallback_output(const affect::AffectConfig& cfg, std::string why) {
  StructuredOutput o;
  o.description = "no usable inference (" + why + ")";
  o.intent = {IntentCategory::Ambiguous, why};
  o.confidence = 0.0;
  o.va = affect::neutral_va();
  o.primitive_token = cfg.fallback_primitive_id;
  return o;
}

namespace {

FinalDecision fallback(const affect::Vocabulary& vocab, const affect::AffectConfig& cfg,
                       StructuredOutput output, FallbackReason reason) {
  FinalDecision d;
  d.output = std::move(output);
  d.primitive = affect::select_fallback(vocab, 0.0, nullptr, cfg);
  d.style = affect::modulate_style(vocab, d.primitive, affect::neutral_va());
  d.fell_back = true;
  d.reason = reason;
  return d;
}

}  // namespace

FinalDecision decide(const InferOutcome& outcome, const affect::Vocabulary& vocab,
                     const affect::AffectConfig& cfg) {
  if (const auto* ok = std::get_if<InferSuccess>(&outcome)) {
    const StructuredOutput& o = ok->output;
    const affect::MotionPrimitive* candidate = nullptr;
    try {
      candidate = &vocab.resolve(o.primitive_token);
    } catch (const affect::UnknownPrimitiveError&) {
      return fallback(vocab, cfg, o, FallbackReason::UnknownPrimitive);
    }
    const auto& chosen = affect::select_fallback(vocab, o.confidence, candidate, cfg);
    // A low-confidence reply that names the fallback primitive still falls back.
    if (candidate->safety_class == affect::SafetyClass::Prohibited) {
      return fallback(vocab, cfg, o, FallbackReason::Prohibited);
    }
    if (!(o.confidence >= cfg.confidence_threshold)) {
      return fallback(vocab, cfg, o, FallbackReason::LowConfidence);
    }
    FinalDecision d;
    d.output = o;
    d.primitive = chosen;
    d.style = affect::modulate_style(vocab, chosen, o.va);
    return d;
  }
  if (const auto* t = std::get_if<TimeoutExpired>(&outcome)) {
    (void)t;
    return fallback(vocab, cfg, synthesized_fallback_output(cfg, "timeout"), FallbackReason::Timeout);
  }
  if (const auto* p = std::get_if<ParseFailed>(&outcome)) {
    auto o = synthesized_fallback_output(cfg, "parse failure: " + p->code);
    o.raw = p->raw;
    return fallback(vocab, cfg, std::move(o), FallbackReason::ParseFailure);
  }
  const auto& tr = std::get<TransportFailed>(outcome);
  return fallback(vocab, cfg, synthesized_fallback_output(cfg, "transport: " + tr.message),
                  FallbackReason::Transport);
}

void to_json(nlohmann::json& j, const FinalDecision& d) {
  j = {{"output", d.output},
       {"primitive", d.primitive.id},
       {"display_text", d.primitive.display_text},
       {"style", d.style},
       {"fell_back", d.fell_back},
       {"reason", to_string(d.reason)},
       {"operator_forced", d.operator_forced}};
}

}  // namespace hiaer::intent
