#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "navkit/dom.hpp"
#include "navkit/workflow.hpp"

namespace navkit {

/// Strict compares node IDs only. Refined additionally accepts descendants of
/// the gold node down to grandchildren, elements matching the gold's tag and
/// visible text, and treats a predicted click on a textarea/input as a type.
enum class EvalMode { Strict, Refined };

struct StepJudgment {
    bool element_correct = false;
    bool op_correct = false;
    double action_f1 = 0.0;  // in [0, 1]
    bool solvable = true;    // target present in the observation chunk
};

struct TaskJudgments {
    std::string task_id;
    std::vector<StepJudgment> steps;
};

struct EvalReport {
    double em = 0.0;
    std::optional<double> cem;  // undefined (not 0) when no step is solvable
    double element_accuracy = 0.0;
    double mean_action_f1 = 0.0;
    double step_sr = 0.0;
    double task_sr = 0.0;
    int steps_total = 0;
    int steps_solvable = 0;
    int tasks_total = 0;
};

/// Token-level F1 between two whitespace-tokenized strings (multiset
/// overlap); two empty strings score 1.
double token_f1(std::string_view a, std::string_view b);

/// Judges one step. element_correct is clamped to false on unsolvable steps
/// (the target was absent from what the model saw), which keeps cem ≥ em.
/// op_correct needs the same op kind and, for keyboard ops, the same payload.
/// action_f1 is 0 across op kinds and the payload-token F1 otherwise.
/// Refined mode requires the step's DOM.
StepJudgment judge_step(const Action& pred, const Action& gold, bool solvable,
                        EvalMode mode = EvalMode::Strict, const PrunedDom* dom = nullptr);

/// Folds per-task judgments into one report. Zero steps → EmptyInput.
EvalReport aggregate(const std::vector<TaskJudgments>& tasks);

/// {gold} ∪ children ∪ grandchildren (descendants of depth ≤ 2).
/// Unknown node → NotFound.
std::set<int> relax_labels(int gold_node, const PrunedDom& dom);

/// Same tag name and same whitespace-collapsed visible text (case preserved).
/// Unknown node → NotFound.
bool attribute_match(int pred_node, int gold_node, const PrunedDom& dom);

/// A click on a textarea/input element becomes a type (empty payload);
/// anything else passes through unchanged.
Action adjust_click_to_type(const Action& pred, const PrunedDom& dom);

/// First element of `ranked` that the generated node equals or descends
/// from replaces the prediction; no hit leaves it unchanged.
int multistage_remap(int generated_node, const std::vector<int>& ranked,
                     const PrunedDom& dom);

std::string render_report_json(const EvalReport& report);
std::string render_report_text(const EvalReport& report);

// --- wire formats -----------------------------------------------------------

struct PredRecord {
    std::string workflow_id;
    int step_index = 0;
    std::string action_text;  // five-line block
};

struct GoldRecord {
    std::string workflow_id;
    int step_index = 0;
    std::string action_text;
    bool solvable = true;
    std::string html;  // processed page, needed for refined mode / remapping
};

/// JSONL: {workflow_id, step_index, action_text}.
std::vector<PredRecord> load_predictions(const std::string& path);

/// JSONL: gold schema plus optional {solvable, html}.
std::vector<GoldRecord> load_gold(const std::string& path);

/// JSONL: {workflow_id, step_index, ranked: [node ids]}.
std::map<std::pair<std::string, int>, std::vector<int>> load_ranking(const std::string& path);

/// Joins predictions to gold on (workflow_id, step_index), applies optional
/// remapping, judges each pair, and aggregates. Predictions without a gold
/// row are errors; gold rows without a prediction judge as all-wrong.
EvalReport evaluate_predictions(
    const std::vector<PredRecord>& preds, const std::vector<GoldRecord>& gold,
    EvalMode mode,
    const std::map<std::pair<std::string, int>, std::vector<int>>* ranking = nullptr,
    const PruneConfig& config = default_prune_config());

} // namespace navkit
