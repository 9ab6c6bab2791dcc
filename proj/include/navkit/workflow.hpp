#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "navkit/dom.hpp"
#include "navkit/tokenizer.hpp"

namespace navkit {

enum class OpKind { MouseClick, KeyboardSequence, KeyboardCombination };

/// Wire names: mouse_click_action, keyboard_sequence_action,
/// keyboard_combination_action.
const std::string& op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);

struct Step {
    std::string url;
    std::string raw_html;
    std::string description;
    OpKind op = OpKind::MouseClick;
    std::string selector;
    std::optional<std::string> text_input;  // required iff op == KeyboardSequence
    std::optional<std::string> key_combo;   // required iff op == KeyboardCombination
};

struct Workflow {
    std::string id;
    std::string objective;
    std::string domain;
    std::string subdomain;
    std::vector<Step> steps;
};

/// One history entry / model output in the five-line format.
struct Action {
    int index = 1;  // position in history + 1
    std::string description;
    OpKind op = OpKind::MouseClick;
    int node = 0;
    std::string target;  // serialized opening tag carrying node="<node>"
};

struct RejectedRecord {
    int line = 0;  // 1-based line in the JSONL file
    std::string id;
    std::string reason;
};

struct LoadResult {
    std::vector<Workflow> workflows;
    std::vector<RejectedRecord> rejects;
};

/// Reads one workflow per JSONL line. Malformed lines land in `rejects`
/// with a reason; only an unreadable file throws.
LoadResult load_workflows(const std::string& path);

struct StepFailure {
    int step_index = 0;  // 1-based
    std::string reason;
};

struct ValidationResult {
    bool valid = false;
    std::vector<StepFailure> failures;

    std::string summary() const;  // "step 2: selector ... matches no element; ..."
};

/// A workflow is valid iff every step's selector resolves to exactly one
/// element in that step's pruned DOM and op payloads match the op kind.
ValidationResult validate_workflow(const Workflow& w,
                                   const PruneConfig& config = default_prune_config());

/// Renders the five-line block; every line newline-terminated, no blank line:
///   1.
///   Description: ...
///   Action: mouse_click_action
///   Node: 832
///   Target: <svg ... node="832" ...>
std::string format_action(const Action& a);

/// Tolerant inverse of format_action: surrounding whitespace and a missing
/// index line are accepted; labels are case-sensitive. A missing Action or
/// Node line → ParseError naming what is absent.
Action parse_action(const std::string& text);

/// The operation payload: typed text / key combo recovered as the first
/// double-quoted span of the description for keyboard ops, "" for clicks.
std::string action_payload(const Action& a);

/// Prompt layout (sections in this order, each line newline-terminated):
///   Objective: ...
///   URL: ...
///   Observation: ...
///   Step-by-step guide:
///   <history blocks>
/// The prompt ends after the last history block (the model is expected to
/// continue with the next index line).
std::string build_prompt(const std::string& objective, const std::string& url,
                         const std::string& serialized_dom,
                         const std::vector<Action>& history);

/// Builds the five-line Action for a recorded step: resolves the selector to
/// the unique target, serializes its opening tag, and renders the description
/// (keyboard ops use the versioned templates so the payload stays recoverable).
Action step_action(const Step& step, int index, const PrunedDom& dom,
                   const PruneConfig& config = default_prune_config());

struct TrainingExample {
    std::string prompt;
    std::string label;
    std::string workflow_id;
    int step_index = 0;  // 1-based
    bool uninformative_description = false;  // description shorter than 3 words
};

struct SkippedStep {
    std::string workflow_id;
    int step_index = 0;
    std::string reason;
};

struct EmitResult {
    std::vector<TrainingExample> examples;
    std::vector<SkippedStep> skips;
};

/// One (prompt, label) per step: the prompt's Observation is the earliest
/// chunk containing that step's target; the label is the step's five-line
/// block. `budget` is the model context window; the chunk budget is
/// budget − prompt overhead − 512 generation reserve, floored at 64.
EmitResult emit_training_examples(const Workflow& w, const TokenizerProfile& tok,
                                  int budget,
                                  const PruneConfig& config = default_prune_config());

/// Workflow-level accept/reject hook (the non-English filter slot).
/// Null accepts everything.
using WorkflowFilter = std::function<bool(const Workflow&)>;

struct RejectedWorkflow {
    std::string id;
    std::string reason;
};

struct DatasetResult {
    std::vector<TrainingExample> examples;
    std::vector<RejectedWorkflow> rejected;
    std::vector<SkippedStep> skips;
    int workflows_accepted = 0;
    int steps_accepted = 0;
};

/// Validate → filter → emit over a batch of workflows.
DatasetResult build_dataset(const std::vector<Workflow>& workflows,
                            const TokenizerProfile& tok, int budget,
                            const PruneConfig& config = default_prune_config(),
                            const WorkflowFilter& filter = nullptr);

} // namespace navkit
