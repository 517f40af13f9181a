#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chronolens/core/error.hpp"

namespace chronolens::vlm {

enum class Stage { descriptor, editor };

inline std::string to_string(Stage s) { return s == Stage::descriptor ? "descriptor" : "editor"; }

inline Stage stage_from_string(const std::string& s) {
  if (s == "descriptor") return Stage::descriptor;
  if (s == "editor") return Stage::editor;
  throw UsageError("unknown stage '" + s + "' (expected descriptor or editor)");
}

/// Text template with `{delay_s}`, `{trace_summary}` and `{description}`
/// placeholders. Ladder templates carry their level (1..4); the base pipeline
/// prompts and the ablation baselines have none.
struct PromptTemplate {
  std::string id;
  Stage stage = Stage::descriptor;
  std::optional<int> ladder_level;
  std::string body;
  bool uses_thermal_image = false;

  bool references(std::string_view placeholder) const {
    return body.find("{" + std::string(placeholder) + "}") != std::string::npos;
  }
};

namespace text {

inline constexpr const char* kPreamble =
    "Follow strictly the step-by-step methodology below and do not skip or shorten any step before giving the "
    "final one-sentence answer.";
inline constexpr const char* kAttached = "An RGB image and a thermal image of the same scene are attached.";
inline constexpr const char* kStep1 =
    "1. Analyze the thermal image and list all objects or furniture that show any heat traces, starting with the "
    "one with the highest heat concentration (primary). Do not omit any object that shows heat, even if the trace "
    "is faint, small, or low intensity. Explicitly state when an object shows no heat.";
inline constexpr const char* kStep2 =
    "2. Identify and describe all secondary heat traces (for example, on books, chairs, walls, desks, or other "
    "surfaces). Mention each one individually and describe its approximate intensity (strong, moderate, faint).";
inline constexpr const char* kStep3 =
    "3. Cross-check with the RGB image and locate every object with heat traces. For each object, provide:\n"
    "Object type, Object color, Position (left, center, right), Interaction with the person (touching, sitting, "
    "holding, near, none), Direction relative to the scene (front, back, left, right, corner)";
inline constexpr const char* kStep4 =
    "4. Before making the final inference, double-check that no object with visible heat traces has been left out "
    "of your analysis.";
// The "5 seconds" here is kept as transcribed even though the final-output
// line carries the parameterized delay.
inline constexpr const char* kStep5 =
    "5. Based on both the primary and secondary heat traces, infer the most likely past action of the person 5 "
    "seconds ago. If multiple objects have heat traces, combine them into one concise sentence that mentions all "
    "relevant actions.";
inline constexpr const char* kFinal =
    "Final output: Provide only one short, direct sentence in past tense that precisely describes the person’s "
    "position and action {delay_s} seconds ago according to the heat traces. The answer must be concise and "
    "direct. Output only that sentence, nothing else.";
inline constexpr const char* kFinalComma =
    "Final output: Provide only one short, direct sentence in past tense that precisely describes the person’s "
    "position and action {delay_s} seconds ago, according to the heat traces. The answer must be concise and "
    "direct. Output only that sentence, nothing else.";

inline constexpr const char* kPreserve = "preserving environment, lighting, angle, zoom, and colors";
inline constexpr const char* kTemporal = "Keep the edit temporally consistent with the heat traces in the thermal image.";
inline constexpr const char* kOnePerson = "Only one person must appear in the scene.";
inline constexpr const char* kReplace =
    "Remove the person from the current position and render the person only in the past position and action.";

}  // namespace text

/// Appended to descriptor prompts when measured trace evidence is supplied.
inline constexpr const char* kEvidenceSuffix = "\n\nThermal evidence measured on the thermal image:\n{trace_summary}";

inline const std::vector<PromptTemplate>& builtin_templates() {
  using namespace text;
  static const std::vector<PromptTemplate> all = [] {
    const std::string pre = std::string(kPreamble);
    const std::string att = kAttached;
    const std::string edit_desc = "Edit the RGB image using the description \"{description}\" to depict the scene a few seconds earlier";
    std::vector<PromptTemplate> t;
    t.push_back({"p_desc", Stage::descriptor, std::nullopt,
                 "Identify the thermographic traces on the thermal image.\n"
                 "In the RGB image, describe the scene.\n"
                 "Output one concise past-tense sentence describing what happened some seconds or minutes ago, "
                 "including all these details.",
                 true});
    t.push_back({"p_desc1", Stage::descriptor, 1, pre + att + " " + kFinal, true});
    t.push_back({"p_desc2", Stage::descriptor, 2,
                 pre + "\n" + att + "\n" + kStep1 + "\n" + kStep2 + "\n" + kFinalComma, true});
    t.push_back({"p_desc3", Stage::descriptor, 3,
                 pre + "\n" + att + "\n" + kStep1 + "\n" + kStep2 + "\n" + kStep3 + "\n" + kFinal, true});
    t.push_back({"p_desc4", Stage::descriptor, 4,
                 pre + "\n" + att + "\n" + kStep1 + "\n" + kStep2 + "\n" + kStep3 + "\n" + kStep4 + "\n" + kStep5 +
                     "\n" + kFinal,
                 true});
    t.push_back({"p_gen_rgb", Stage::editor, std::nullopt,
                 std::string("Edit the RGB image to depict the scene a few seconds earlier, ") + kPreserve + ".",
                 false});
    t.push_back({"p_gen_thermal", Stage::editor, std::nullopt,
                 std::string("Edit the RGB image using the thermal image to depict the scene a few seconds earlier, ") +
                     kPreserve + ".",
                 true});
    t.push_back({"p_gen", Stage::editor, std::nullopt, edit_desc + ", " + kPreserve + ".", false});
    t.push_back({"p_edit1", Stage::editor, 1, edit_desc + ", " + kPreserve + ". " + kTemporal, true});
    t.push_back({"p_edit2", Stage::editor, 2,
                 edit_desc + ", " + kPreserve + ". " + kTemporal + " " + kOnePerson, true});
    t.push_back({"p_edit3", Stage::editor, 3,
                 edit_desc + ". " + kTemporal + " " + kOnePerson + " " + kReplace, true});
    t.push_back({"p_edit4", Stage::editor, 4,
                 edit_desc + ", " + kPreserve + ". " + kTemporal + " " + kOnePerson + " " + kReplace, true});
    return t;
  }();
  return all;
}

inline const PromptTemplate& find_template(const std::string& id) {
  for (const auto& t : builtin_templates()) {
    if (t.id == id) return t;
  }
  throw UsageError("unknown prompt template '" + id + "'");
}

inline const PromptTemplate& ladder_template(Stage stage, int level) {
  if (level < 1 || level > 4) throw UsageError("ladder level must be in 1..4, got " + std::to_string(level));
  return find_template((stage == Stage::descriptor ? "p_desc" : "p_edit") + std::to_string(level));
}

/// Substitutes `{name}` placeholders found in `body`. Substituted text is not
/// rescanned. Any placeholder without a value is an error.
inline std::string substitute(const std::string& body, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(body.size() + 64);
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && (std::islower(static_cast<unsigned char>(body[j])) || body[j] == '_')) ++j;
      if (j < body.size() && body[j] == '}' && j > i + 1) {
        const std::string name = body.substr(i + 1, j - i - 1);
        auto it = values.find(name);
        if (it == values.end()) throw UsageError("unresolved placeholder {" + name + "}");
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(body[i++]);
  }
  return out;
}

inline std::string render_descriptor_prompt(const PromptTemplate& tmpl, double delay_s,
                                            const std::optional<std::string>& trace_summary = std::nullopt) {
  if (tmpl.stage != Stage::descriptor) {
    throw UsageError("render_descriptor_prompt: template '" + tmpl.id + "' is not a descriptor template");
  }
  std::map<std::string, std::string> values{{"delay_s", std::to_string(std::lround(delay_s))}};
  std::string body = tmpl.body;
  if (trace_summary) {
    values["trace_summary"] = *trace_summary;
    if (!tmpl.references("trace_summary")) body += kEvidenceSuffix;
  }
  return substitute(body, values);
}

inline std::string render_edit_prompt(const PromptTemplate& tmpl, const std::optional<std::string>& description) {
  if (tmpl.stage != Stage::editor) {
    throw UsageError("render_edit_prompt: template '" + tmpl.id + "' is not an editor template");
  }
  const bool wants = tmpl.references("description");
  if (wants && !description) {
    throw UsageError("render_edit_prompt: template '" + tmpl.id + "' requires a description");
  }
  if (!wants && description) {
    throw UsageError("render_edit_prompt: template '" + tmpl.id + "' takes no description");
  }
  std::map<std::string, std::string> values;
  if (description) values["description"] = *description;
  return substitute(tmpl.body, values);
}

}  // namespace chronolens::vlm
