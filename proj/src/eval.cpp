#include "navkit/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "navkit/errors.hpp"
#include "navkit/util.hpp"

namespace navkit {

double token_f1(std::string_view a, std::string_view b) {
    std::vector<std::string> ta = split_whitespace(a);
    std::vector<std::string> tb = split_whitespace(b);
    if (ta.empty() && tb.empty()) return 1.0;
    if (ta.empty() || tb.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& t : tb) ++counts[t];
    int overlap = 0;
    for (const auto& t : ta) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    double precision = static_cast<double>(overlap) / ta.size();
    double recall = static_cast<double>(overlap) / tb.size();
    return 2.0 * precision * recall / (precision + recall);
}

namespace {

bool is_typeable(const DomNode* n) {
    return n && n->is_element() && (n->tag == "textarea" || n->tag == "input");
}

}  // namespace

std::set<int> relax_labels(int gold_node, const PrunedDom& dom) {
    const DomNode* gold = dom.find(gold_node);
    if (!gold) throw Error(Errc::NotFound, "node " + std::to_string(gold_node) + " not in DOM");
    std::set<int> out{gold_node};
    for (const DomNode& child : gold->children) {
        if (child.is_element() && child.node_id) out.insert(*child.node_id);
        for (const DomNode& grandchild : child.children)
            if (grandchild.is_element() && grandchild.node_id) out.insert(*grandchild.node_id);
    }
    return out;
}

bool attribute_match(int pred_node, int gold_node, const PrunedDom& dom) {
    const DomNode* pred = dom.find(pred_node);
    const DomNode* gold = dom.find(gold_node);
    if (!pred) throw Error(Errc::NotFound, "node " + std::to_string(pred_node) + " not in DOM");
    if (!gold) throw Error(Errc::NotFound, "node " + std::to_string(gold_node) + " not in DOM");
    if (pred->tag != gold->tag) return false;
    return collapse_whitespace(inner_text(*pred)) == collapse_whitespace(inner_text(*gold));
}

Action adjust_click_to_type(const Action& pred, const PrunedDom& dom) {
    if (pred.op != OpKind::MouseClick) return pred;
    if (!is_typeable(dom.find(pred.node))) return pred;
    Action out = pred;
    out.op = OpKind::KeyboardSequence;
    out.description = "Type \"\" into the target element";
    return out;
}

int multistage_remap(int generated_node, const std::vector<int>& ranked,
                     const PrunedDom& dom) {
    for (int candidate : ranked) {
        if (candidate == generated_node) return candidate;
        if (dom.find(candidate) && dom.find(generated_node) &&
            dom.is_descendant_of(generated_node, candidate))
            return candidate;
    }
    return generated_node;
}

StepJudgment judge_step(const Action& pred_in, const Action& gold, bool solvable,
                        EvalMode mode, const PrunedDom* dom) {
    if (mode == EvalMode::Refined && !dom)
        throw Error(Errc::BadConfig, "refined evaluation needs the step's DOM");

    Action pred = pred_in;
    if (mode == EvalMode::Refined) pred = adjust_click_to_type(pred, *dom);

    StepJudgment j;
    j.solvable = solvable;

    if (mode == EvalMode::Strict) {
        j.element_correct = pred.node == gold.node;
    } else {
        bool relaxed = false;
        if (dom->find(gold.node))
            relaxed = relax_labels(gold.node, *dom).count(pred.node) > 0;
        bool attr = false;
        if (!relaxed && dom->find(pred.node) && dom->find(gold.node))
            attr = attribute_match(pred.node, gold.node, *dom);
        j.element_correct = relaxed || attr;
    }
    if (!solvable) j.element_correct = false;  // keeps cem ≥ em

    std::string pred_payload = action_payload(pred);
    std::string gold_payload = action_payload(gold);
    if (pred.op != gold.op) {
        j.op_correct = false;
        j.action_f1 = 0.0;
    } else {
        j.op_correct = pred.op == OpKind::MouseClick || pred_payload == gold_payload;
        j.action_f1 = token_f1(pred_payload, gold_payload);
    }
    return j;
}

EvalReport aggregate(const std::vector<TaskJudgments>& tasks) {
    EvalReport r;
    int correct = 0, correct_solvable = 0, steps_ok = 0, tasks_ok = 0;
    double f1_sum = 0.0;
    for (const TaskJudgments& task : tasks) {
        if (task.steps.empty()) continue;
        ++r.tasks_total;
        bool all_ok = true;
        for (const StepJudgment& s : task.steps) {
            ++r.steps_total;
            if (s.solvable) ++r.steps_solvable;
            if (s.element_correct) {
                ++correct;
                if (s.solvable) ++correct_solvable;
            }
            bool ok = s.element_correct && s.op_correct;
            if (ok) ++steps_ok;
            all_ok = all_ok && ok;
            f1_sum += s.action_f1;
        }
        if (all_ok) ++tasks_ok;
    }
    if (r.steps_total == 0) throw Error(Errc::EmptyInput, "no step judgments to aggregate");
    r.em = static_cast<double>(correct) / r.steps_total;
    r.element_accuracy = r.em;
    if (r.steps_solvable > 0)
        r.cem = static_cast<double>(correct_solvable) / r.steps_solvable;
    r.mean_action_f1 = f1_sum / r.steps_total;
    r.step_sr = static_cast<double>(steps_ok) / r.steps_total;
    r.task_sr = static_cast<double>(tasks_ok) / r.tasks_total;
    return r;
}

std::string render_report_json(const EvalReport& report) {
    nlohmann::json j{
        {"em", report.em},
        {"element_accuracy", report.element_accuracy},
        {"mean_action_f1", report.mean_action_f1},
        {"step_sr", report.step_sr},
        {"task_sr", report.task_sr},
        {"steps_total", report.steps_total},
        {"steps_solvable", report.steps_solvable},
        {"tasks_total", report.tasks_total},
    };
    if (report.cem)
        j["cem"] = *report.cem;
    else
        j["cem"] = nullptr;
    return j.dump(2) + "\n";
}

std::string render_report_text(const EvalReport& report) {
    char buf[64];
    auto pct = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%6.2f%%", v * 100.0);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "metric            value\n";
    out << "----------------  -------\n";
    out << "em                " << pct(report.em) << "\n";
    out << "cem               " << (report.cem ? pct(*report.cem) : "   n/a ") << "\n";
    out << "element accuracy  " << pct(report.element_accuracy) << "\n";
    out << "mean action f1    " << pct(report.mean_action_f1) << "\n";
    out << "step sr           " << pct(report.step_sr) << "\n";
    out << "task sr           " << pct(report.task_sr) << "\n";
    out << "steps             " << report.steps_total << " (" << report.steps_solvable
        << " solvable)\n";
    out << "tasks             " << report.tasks_total << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Wire formats
// ---------------------------------------------------------------------------

namespace {

nlohmann::json parse_jsonl_line(const std::string& path, int lineno, const std::string& line) {
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::LoadError,
                    path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::LoadError, "cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (collapse_whitespace(line).empty()) continue;
        fn(parse_jsonl_line(path, lineno, line), lineno);
    }
}

std::string want_string(const nlohmann::json& obj, const char* key, const std::string& path,
                        int lineno) {
    if (!obj.contains(key) || !obj[key].is_string())
        throw Error(Errc::LoadError, path + ":" + std::to_string(lineno) +
                                         ": missing string field \"" + key + "\"");
    return obj[key].get<std::string>();
}

int want_int(const nlohmann::json& obj, const char* key, const std::string& path, int lineno) {
    if (!obj.contains(key) || !obj[key].is_number_integer())
        throw Error(Errc::LoadError, path + ":" + std::to_string(lineno) +
                                         ": missing integer field \"" + key + "\"");
    return obj[key].get<int>();
}

}  // namespace

std::vector<PredRecord> load_predictions(const std::string& path) {
    std::vector<PredRecord> out;
    for_each_jsonl(path, [&](const nlohmann::json& obj, int lineno) {
        PredRecord r;
        r.workflow_id = want_string(obj, "workflow_id", path, lineno);
        r.step_index = want_int(obj, "step_index", path, lineno);
        r.action_text = want_string(obj, "action_text", path, lineno);
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<GoldRecord> load_gold(const std::string& path) {
    std::vector<GoldRecord> out;
    for_each_jsonl(path, [&](const nlohmann::json& obj, int lineno) {
        GoldRecord r;
        r.workflow_id = want_string(obj, "workflow_id", path, lineno);
        r.step_index = want_int(obj, "step_index", path, lineno);
        r.action_text = want_string(obj, "action_text", path, lineno);
        if (obj.contains("solvable")) {
            if (!obj["solvable"].is_boolean())
                throw Error(Errc::LoadError,
                            path + ":" + std::to_string(lineno) + ": \"solvable\" must be bool");
            r.solvable = obj["solvable"].get<bool>();
        }
        if (obj.contains("html") && obj["html"].is_string())
            r.html = obj["html"].get<std::string>();
        out.push_back(std::move(r));
    });
    return out;
}

std::map<std::pair<std::string, int>, std::vector<int>> load_ranking(const std::string& path) {
    std::map<std::pair<std::string, int>, std::vector<int>> out;
    for_each_jsonl(path, [&](const nlohmann::json& obj, int lineno) {
        std::string id = want_string(obj, "workflow_id", path, lineno);
        int step = want_int(obj, "step_index", path, lineno);
        if (!obj.contains("ranked") || !obj["ranked"].is_array())
            throw Error(Errc::LoadError, path + ":" + std::to_string(lineno) +
                                             ": missing array field \"ranked\"");
        std::vector<int> ranked;
        for (const auto& v : obj["ranked"]) {
            if (!v.is_number_integer())
                throw Error(Errc::LoadError, path + ":" + std::to_string(lineno) +
                                                 ": \"ranked\" holds a non-integer");
            ranked.push_back(v.get<int>());
        }
        out[{std::move(id), step}] = std::move(ranked);
    });
    return out;
}

EvalReport evaluate_predictions(
    const std::vector<PredRecord>& preds, const std::vector<GoldRecord>& gold, EvalMode mode,
    const std::map<std::pair<std::string, int>, std::vector<int>>* ranking,
    const PruneConfig& config) {
    std::map<std::pair<std::string, int>, const GoldRecord*> gold_index;
    for (const GoldRecord& g : gold) gold_index[{g.workflow_id, g.step_index}] = &g;

    std::map<std::pair<std::string, int>, const PredRecord*> pred_index;
    for (const PredRecord& p : preds) {
        auto key = std::make_pair(p.workflow_id, p.step_index);
        if (!gold_index.count(key))
            throw Error(Errc::NotFound, "prediction for " + p.workflow_id + " step " +
                                            std::to_string(p.step_index) + " has no gold row");
        pred_index[key] = &p;
    }

    std::map<std::string, TaskJudgments> by_task;
    for (const GoldRecord& g : gold) {
        Action gold_action = parse_action(g.action_text);
        StepJudgment judgment;  // defaults: all wrong
        judgment.solvable = g.solvable;

        auto it = pred_index.find({g.workflow_id, g.step_index});
        if (it != pred_index.end()) {
            Action pred = parse_action(it->second->action_text);
            PrunedDom dom;
            bool have_dom = !g.html.empty();
            if (have_dom) dom = assign_node_ids(prune(parse_html(g.html), config));
            if (ranking) {
                auto rit = ranking->find({g.workflow_id, g.step_index});
                if (rit != ranking->end() && have_dom)
                    pred.node = multistage_remap(pred.node, rit->second, dom);
            }
            if (mode == EvalMode::Refined && !have_dom)
                throw Error(Errc::BadConfig, "refined evaluation needs gold rows with html (" +
                                                 g.workflow_id + " step " +
                                                 std::to_string(g.step_index) + ")");
            judgment = judge_step(pred, gold_action, g.solvable, mode,
                                  have_dom ? &dom : nullptr);
        }
        TaskJudgments& task = by_task[g.workflow_id];
        task.task_id = g.workflow_id;
        task.steps.push_back(judgment);
    }

    std::vector<TaskJudgments> tasks;
    tasks.reserve(by_task.size());
    for (auto& [id, t] : by_task) tasks.push_back(std::move(t));
    return aggregate(tasks);
}

} // namespace navkit
