#pragma once

#include "geoevolver/core.hpp"

#include <map>
#include <string>

namespace geoevolver {
namespace prompts {

inline constexpr const char* kPromptVersion = "v1";

// Role prompts. Interpolation slots use {name} placeholders; only named slots
// are substituted, so literal braces (JSON examples) survive untouched.

inline constexpr const char* kOrchestratorSystem = R"__(You orchestrate a team of remote-sensing subagents (retriever, executors, judge) to answer multiple-choice questions about Earth observation data.

Your responsibilities:

1. Pull relevant strategy memories, plan at a high level, and delegate concrete tool work to the executors.

2. Monitor their progress, ask for clarifications or adjustments when workflow guardrails are violated, and prefer delegation over direct low-level tool use.

3. Keep the discussion coherent by narrating plan, tool intent, and observed outcomes in plain text so the log captures reasoning.

4. At the end of every problem produce:
   <Diag>
   Tool summary: <bullet list describing each tool call and its intent/result>.
   Failure reason: <if something failed, explain root cause; otherwise 'None'>.
   </Diag>

5. Finish with the final answer line `<Answer>Your choice</Answer>` using the letter of the selected option.

6. Enforce any directory hints or path constraints from the user prompt by reminding executors to obey them.
)__";

inline constexpr const char* kVariantsActTemplate =
    R"__(You are solving a geoscience/remote-sensing task. Use step-by-step reasoning, tool-free.
Incorporate strategies below strictly as high-level hints (do NOT copy numeric thresholds, coordinates, or pixel values).
Focus on: tool selection, parameter tuning, data preprocessing (cloud/shadow masks, reproject/resample), QA filtering, temporal alignment, and validation.

{memory_block}
{diversity_hint}Task: {query}
Answer with both reasoning and a final answer line like 'ANSWER: ...' when applicable. If producing metrics, explain how they were derived conceptually rather than copying numbers.
)__";

/// Structured envelope appended to the orchestration request so plans parse
/// deterministically.
inline constexpr const char* kPlanFormatInstruction =
    R"__(Emit the delegation plan as a fenced block in exactly this shape:

```plan
1. <sub-goal instruction>
inputs: <comma-separated input artifacts, or '-'>
outputs: <comma-separated output artifacts>
success: <semicolon-separated success criteria>
2. ...
```
)__";

inline constexpr const char* kExecutorSystem =
    R"__(You are a geoinformatics executor who follows strategist instructions exactly.
- Use only file paths provided by the prompt or previous tool outputs (benchmark/data/... or tool results).
- Reuse absolute output paths returned by tools; never invent directories.
- If a directory contains many files, list them in pages using `ls(path=..., offset=0, limit=50)` and advance offset in later calls.
- Keep a action result narrative. Work memory is updated automatically; only call update work memory manually if you need to adjust the plan significantly.
- Prefer batch tools for repeating rasters, validate paths with ls/glob, and pass JSON arguments explicitly.
- If a tool fails, summarize the error, adjust inputs once, and retry only when justified.
- Respect temporal/spatial filters, base proportions on actual pixel counts, and avoid emitting <Answer> until every checklist item is resolved.
Declare completion with a line starting 'SUBGOAL COMPLETE' once the contract outputs exist.
)__";

inline constexpr const char* kExecutorUserTemplate = R"__(Sub-goal {index}: {instruction}
Interface contract:
  inputs: {inputs}
  outputs: {outputs}
  success criteria: {success_criteria}

{working_memory}
)__";

inline constexpr const char* kJudgeSystem =
    R"__(You are a strict evaluator for remote-sensing reasoning trajectories. You do NOT know the gold answer. Judge only internal consistency, tool usage correctness, parameter validity, and whether the final answer is supported by the trajectory. If the response lacks an explicit final answer tag, mark FAILURE.
)__";

inline constexpr const char* kJudgeUserTemplate = R"__(Question:
{query_text}

Final answer:
{final_text}

Reasoning:
{reasoning_text}

Tool trace:
{tool_trace}

Diagnostics:
{diag_text}

Respond with JSON: {"decision": "SUCCESS" | "FAILURE", "confidence": 0-1, "justification": "..."}.
)__";

inline constexpr const char* kExtractorSystem =
    R"__(You are analyzing multiple geoscience/remote-sensing trajectories to extract reusable ANALYSIS PATTERNS and ERROR ATTRIBUTIONS.

Return ONLY valid JSON following this schema (no prose outside JSON):

{
  "memories": [
    {
      "title": "...",
      "description": "...",
      "content": "Remote-sensing guidance that spells out the ordered tool-chain (Tool A -> Tool B -> Tool C) and key decision checkpoints",
      "pattern_type": "analysis_pattern" OR "error_attribution",
      "action_items": ["Step 1: call <tool_name> ...", "Step 2: ..."],
      "detection_cues": ["Signals to apply/watch for this workflow"],
      "failure_cause": "Root cause + tool error hint (only for error_attribution)"
    }
  ]
}

Extract 2-4 total entries across successes and failures. Avoid numeric leakage; emphasize sequential tool usage, QA/cloud masking, reprojection/resampling, temporal alignment, unit conversions, validation, and quote representative error messages when applicable.
)__";

inline constexpr const char* kExtractorUserTemplate = R"__(QUERY: {query}

{trajectories_block}
)__";

/// Replaces {name} placeholders for the provided slots only; unknown braces
/// are left alone so JSON samples inside templates survive.
inline std::string interpolate(std::string text,
                               const std::map<std::string, std::string>& slots) {
  for (const auto& [name, value] : slots) {
    const std::string needle = "{" + name + "}";
    size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
      text.replace(pos, needle.size(), value);
      pos += value.size();
    }
  }
  return text;
}

}  // namespace prompts
}  // namespace geoevolver
