#include "navkit/workflow.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "navkit/chunking.hpp"
#include "navkit/errors.hpp"
#include "navkit/selector.hpp"
#include "navkit/util.hpp"

namespace navkit {

const std::string& op_name(OpKind op) {
    static const std::string click = "mouse_click_action";
    static const std::string sequence = "keyboard_sequence_action";
    static const std::string combination = "keyboard_combination_action";
    switch (op) {
        case OpKind::MouseClick: return click;
        case OpKind::KeyboardSequence: return sequence;
        case OpKind::KeyboardCombination: return combination;
    }
    return click;
}

std::optional<OpKind> op_from_name(std::string_view name) {
    if (name == "mouse_click_action") return OpKind::MouseClick;
    if (name == "keyboard_sequence_action") return OpKind::KeyboardSequence;
    if (name == "keyboard_combination_action") return OpKind::KeyboardCombination;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace {

std::string require_string(const nlohmann::json& obj, const char* key) {
    if (!obj.contains(key) || !obj[key].is_string())
        throw Error(Errc::ParseError, std::string("missing string field \"") + key + "\"");
    return obj[key].get<std::string>();
}

Workflow workflow_from_json(const nlohmann::json& obj) {
    if (!obj.is_object()) throw Error(Errc::ParseError, "record is not a JSON object");
    Workflow w;
    w.id = require_string(obj, "id");
    w.objective = require_string(obj, "objective");
    if (w.objective.empty()) throw Error(Errc::ParseError, "empty objective");
    if (obj.contains("domain") && obj["domain"].is_string())
        w.domain = obj["domain"].get<std::string>();
    if (obj.contains("subdomain") && obj["subdomain"].is_string())
        w.subdomain = obj["subdomain"].get<std::string>();
    if (!obj.contains("steps") || !obj["steps"].is_array() || obj["steps"].empty())
        throw Error(Errc::ParseError, "missing or empty \"steps\" array");
    int idx = 1;
    for (const auto& s : obj["steps"]) {
        Step step;
        try {
            step.url = require_string(s, "url");
            step.raw_html = require_string(s, "raw_html");
            step.description = require_string(s, "description");
            step.selector = require_string(s, "selector");
            std::string op = require_string(s, "op");
            auto kind = op_from_name(op);
            if (!kind) throw Error(Errc::ParseError, "unknown op \"" + op + "\"");
            step.op = *kind;
            if (s.contains("text_input") && s["text_input"].is_string())
                step.text_input = s["text_input"].get<std::string>();
            if (s.contains("key_combo") && s["key_combo"].is_string())
                step.key_combo = s["key_combo"].get<std::string>();
        } catch (const Error& e) {
            throw Error(Errc::ParseError, "step " + std::to_string(idx) + ": " + e.what());
        }
        w.steps.push_back(std::move(step));
        ++idx;
    }
    return w;
}

}  // namespace

LoadResult load_workflows(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::LoadError, "cannot open " + path);
    LoadResult result;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string trimmed = collapse_whitespace(line);
        if (trimmed.empty()) continue;
        RejectedRecord reject;
        reject.line = lineno;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            reject.reason = std::string("invalid JSON: ") + e.what();
            result.rejects.push_back(std::move(reject));
            continue;
        }
        if (obj.is_object() && obj.contains("id") && obj["id"].is_string())
            reject.id = obj["id"].get<std::string>();
        try {
            result.workflows.push_back(workflow_from_json(obj));
        } catch (const Error& e) {
            reject.reason = e.what();
            result.rejects.push_back(std::move(reject));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::string ValidationResult::summary() const {
    std::string out;
    for (const auto& f : failures) {
        if (!out.empty()) out += "; ";
        out += "step " + std::to_string(f.step_index) + ": " + f.reason;
    }
    return out;
}

ValidationResult validate_workflow(const Workflow& w, const PruneConfig& config) {
    ValidationResult result;
    int idx = 0;
    for (const Step& step : w.steps) {
        ++idx;
        bool payload_ok = true;
        switch (step.op) {
            case OpKind::MouseClick: payload_ok = !step.text_input && !step.key_combo; break;
            case OpKind::KeyboardSequence: payload_ok = step.text_input && !step.key_combo; break;
            case OpKind::KeyboardCombination: payload_ok = step.key_combo && !step.text_input; break;
        }
        if (!payload_ok) {
            result.failures.push_back(
                {idx, op_name(step.op) + " with mismatched payload fields"});
            continue;
        }
        try {
            Selector sel = parse_selector(step.selector);
            PrunedDom dom = assign_node_ids(prune(parse_html(step.raw_html), config));
            resolve_unique(sel, dom.tree);
        } catch (const Error& e) {
            result.failures.push_back({idx, e.what()});
        }
    }
    result.valid = result.failures.empty();
    return result;
}

// ---------------------------------------------------------------------------
// Five-line format
// ---------------------------------------------------------------------------

std::string format_action(const Action& a) {
    std::string out;
    out += std::to_string(a.index) + ".\n";
    out += "Description: " + a.description + "\n";
    out += "Action: " + op_name(a.op) + "\n";
    out += "Node: " + std::to_string(a.node) + "\n";
    out += "Target: " + a.target + "\n";
    return out;
}

namespace {

std::string rtrim(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
    return s;
}

bool is_index_line(const std::string& line, int& index) {
    if (line.size() < 2 || line.back() != '.') return false;
    long value = 0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        if (line[i] < '0' || line[i] > '9') return false;
        value = value * 10 + (line[i] - '0');
        if (value > 1000000) return false;
    }
    index = static_cast<int>(value);
    return true;
}

// Returns the remainder after "Label:" (with one optional following space).
std::optional<std::string> labeled(const std::string& line, const char* label) {
    std::size_t n = std::char_traits<char>::length(label);
    if (line.compare(0, n, label) != 0) return std::nullopt;
    if (line.size() == n) return std::string();
    if (line[n] != ' ') return std::nullopt;
    return line.substr(n + 1);
}

std::string first_quoted_span(const std::string& s) {
    std::size_t open = s.find('"');
    if (open == std::string::npos) return "";
    std::size_t close = s.find('"', open + 1);
    if (close == std::string::npos) return "";
    return s.substr(open + 1, close - open - 1);
}

}  // namespace

Action parse_action(const std::string& text) {
    Action a;
    std::istringstream in(text);
    std::string raw;
    bool saw_index = false, saw_any = false;
    std::optional<std::string> description, op, node, target;
    while (std::getline(in, raw)) {
        std::string line = rtrim(raw);
        if (line.empty()) continue;
        // strip leading whitespace too: model output may be indented
        std::size_t lead = line.find_first_not_of(" \t");
        line = line.substr(lead);
        if (!saw_any) {
            saw_any = true;
            int index = 0;
            if (is_index_line(line, index)) {
                a.index = index;
                saw_index = true;
                continue;
            }
        }
        if (!description) {
            if (auto v = labeled(line, "Description:")) { description = *v; continue; }
        }
        if (!op) {
            if (auto v = labeled(line, "Action:")) { op = *v; continue; }
        }
        if (!node) {
            if (auto v = labeled(line, "Node:")) { node = *v; continue; }
        }
        if (!target) {
            if (auto v = labeled(line, "Target:")) { target = *v; continue; }
        }
    }
    (void)saw_index;
    if (!op) throw Error(Errc::ParseError, "action text has no \"Action:\" line");
    if (!node) throw Error(Errc::ParseError, "action text has no \"Node:\" line");
    auto kind = op_from_name(rtrim(*op));
    if (!kind) throw Error(Errc::ParseError, "unknown operation \"" + *op + "\"");
    a.op = *kind;
    std::string node_text = rtrim(*node);
    if (node_text.empty() || node_text.find_first_not_of("0123456789") != std::string::npos)
        throw Error(Errc::ParseError, "node id \"" + *node + "\" is not a number");
    try {
        a.node = std::stoi(node_text);
    } catch (const std::exception&) {
        throw Error(Errc::ParseError, "node id \"" + node_text + "\" out of range");
    }
    if (description) a.description = *description;
    if (target) a.target = *target;
    return a;
}

std::string action_payload(const Action& a) {
    if (a.op == OpKind::MouseClick) return "";
    return first_quoted_span(a.description);
}

std::string build_prompt(const std::string& objective, const std::string& url,
                         const std::string& serialized_dom,
                         const std::vector<Action>& history) {
    std::string out;
    out += "Objective: " + objective + "\n";
    out += "URL: " + url + "\n";
    out += "Observation: " + serialized_dom + "\n";
    out += "Step-by-step guide:\n";
    for (const Action& a : history) out += format_action(a);
    return out;
}

// ---------------------------------------------------------------------------
// Step → Action
// ---------------------------------------------------------------------------

Action step_action(const Step& step, int index, const PrunedDom& dom,
                   const PruneConfig& config) {
    Selector sel = parse_selector(step.selector);
    const DomNode* target = resolve_unique(sel, dom.tree);
    if (!target->node_id)
        throw Error(Errc::NotFound, "target element has no node id; pass an identified DOM");

    Action a;
    a.index = index;
    a.op = step.op;
    a.node = *target->node_id;
    a.target = serialize_opening_tag(*target, config);

    // Keyboard descriptions must carry the payload as their first quoted
    // span so it stays recoverable from the five-line text; recordings that
    // already satisfy that are kept, anything else gets the template.
    switch (step.op) {
        case OpKind::MouseClick:
            a.description = step.description;
            break;
        case OpKind::KeyboardSequence: {
            const std::string& text = step.text_input ? *step.text_input : std::string();
            if (first_quoted_span(step.description) == text && !step.description.empty())
                a.description = step.description;
            else
                a.description = "Type \"" + text + "\" into the target element";
            break;
        }
        case OpKind::KeyboardCombination: {
            const std::string& combo = step.key_combo ? *step.key_combo : std::string();
            if (first_quoted_span(step.description) == combo && !step.description.empty())
                a.description = step.description;
            else
                a.description = "Press \"" + combo + "\"";
            break;
        }
    }
    return a;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

EmitResult emit_training_examples(const Workflow& w, const TokenizerProfile& tok,
                                  int budget, const PruneConfig& config) {
    EmitResult result;
    std::vector<Action> history;
    int idx = 0;
    for (const Step& step : w.steps) {
        ++idx;
        PrunedDom dom;
        Action action;
        try {
            dom = assign_node_ids(prune(parse_html(step.raw_html), config));
            action = step_action(step, idx, dom, config);
        } catch (const Error& e) {
            result.skips.push_back({w.id, idx, e.what()});
            continue;
        }

        std::string serialized = serialize(dom, config);
        int overhead =
            static_cast<int>(tok.token_count(build_prompt(w.objective, step.url, "", history)));
        int chunk_budget = std::max(64, budget - overhead - 512);

        try {
            std::vector<Chunk> chunks = chunk_dom(serialized, tok, chunk_budget);
            const Chunk& chunk = select_training_chunk(chunks, action.node);
            TrainingExample ex;
            ex.prompt = build_prompt(w.objective, step.url, chunk.text, history);
            ex.label = format_action(action);
            ex.workflow_id = w.id;
            ex.step_index = idx;
            ex.uninformative_description = split_whitespace(step.description).size() < 3;
            result.examples.push_back(std::move(ex));
        } catch (const Error& e) {
            result.skips.push_back({w.id, idx, e.what()});
        }
        history.push_back(std::move(action));
    }
    return result;
}

DatasetResult build_dataset(const std::vector<Workflow>& workflows,
                            const TokenizerProfile& tok, int budget,
                            const PruneConfig& config, const WorkflowFilter& filter) {
    DatasetResult result;
    for (const Workflow& w : workflows) {
        if (filter && !filter(w)) {
            result.rejected.push_back({w.id, "rejected by workflow filter"});
            continue;
        }
        ValidationResult v = validate_workflow(w, config);
        if (!v.valid) {
            result.rejected.push_back({w.id, v.summary()});
            continue;
        }
        ++result.workflows_accepted;
        result.steps_accepted += static_cast<int>(w.steps.size());
        EmitResult emitted = emit_training_examples(w, tok, budget, config);
        for (auto& e : emitted.examples) result.examples.push_back(std::move(e));
        for (auto& s : emitted.skips) result.skips.push_back(std::move(s));
    }
    return result;
}

} // namespace navkit
