#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "helpers.hpp"
#include "navkit/dom.hpp"
#include "navkit/errors.hpp"
#include "navkit/eval.hpp"
#include "navkit/util.hpp"
#include "navkit/workflow.hpp"

using namespace navkit;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / ("navkit_test_" + name);
    std::ofstream out(path);
    out << content;
    out.close();
    return path.string();
}

Action make_action(int node, OpKind op, const std::string& description = "Click it") {
    Action a;
    a.index = 1;
    a.node = node;
    a.op = op;
    a.description = description;
    a.target = "<div node=\"" + std::to_string(node) + "\">";
    return a;
}

}  // namespace

TEST_CASE("token_f1") {
    CHECK(token_f1("new york", "new york city") == doctest::Approx(0.8));
    CHECK(token_f1("new york city", "new york") == doctest::Approx(0.8));
    CHECK(token_f1("", "") == doctest::Approx(1.0));
    CHECK(token_f1("a", "") == doctest::Approx(0.0));
    CHECK(token_f1("", "a") == doctest::Approx(0.0));
    CHECK(token_f1("alpha beta", "alpha beta") == doctest::Approx(1.0));
    CHECK(token_f1("alpha", "beta") == doctest::Approx(0.0));
    // multiset semantics: repeated tokens only match as often as they appear
    CHECK(token_f1("a a b", "a b b") == doctest::Approx(2.0 / 3.0));
    // whitespace runs and kinds are immaterial
    CHECK(token_f1("  new\tyork ", "new york") == doctest::Approx(1.0));
}

TEST_CASE("judge_step strict") {
    SUBCASE("identical clicks") {
        Action a = make_action(5, OpKind::MouseClick);
        StepJudgment j = judge_step(a, a, true);
        CHECK(j.element_correct);
        CHECK(j.op_correct);
        CHECK(j.action_f1 == doctest::Approx(1.0));
        CHECK(j.solvable);
    }
    SUBCASE("clicks ignore descriptions") {
        StepJudgment j = judge_step(make_action(5, OpKind::MouseClick, "Click \"A\""),
                                    make_action(5, OpKind::MouseClick, "Click \"B\""), true);
        CHECK(j.op_correct);
        CHECK(j.action_f1 == doctest::Approx(1.0));
    }
    SUBCASE("right node, wrong op") {
        StepJudgment j = judge_step(
            make_action(5, OpKind::MouseClick),
            make_action(5, OpKind::KeyboardSequence, "Type \"x\" into the target element"),
            true);
        CHECK(j.element_correct);
        CHECK_FALSE(j.op_correct);
        CHECK(j.action_f1 == doctest::Approx(0.0));  // zero across op kinds
    }
    SUBCASE("wrong node, right action") {
        StepJudgment j = judge_step(make_action(4, OpKind::MouseClick),
                                    make_action(5, OpKind::MouseClick), true);
        CHECK_FALSE(j.element_correct);
        CHECK(j.op_correct);
        CHECK(j.action_f1 == doctest::Approx(1.0));
    }
    SUBCASE("same op, partially overlapping payload") {
        StepJudgment j = judge_step(
            make_action(5, OpKind::KeyboardSequence, "Type \"new york\" into the target element"),
            make_action(5, OpKind::KeyboardSequence,
                        "Type \"new york city\" into the target element"),
            true);
        CHECK(j.element_correct);
        CHECK_FALSE(j.op_correct);  // keyboard ops need the exact payload
        CHECK(j.action_f1 == doctest::Approx(0.8));
    }
    SUBCASE("matching key combos") {
        StepJudgment j = judge_step(
            make_action(5, OpKind::KeyboardCombination, "Press \"Ctrl+C\""),
            make_action(5, OpKind::KeyboardCombination, "Press \"Ctrl+C\""), true);
        CHECK(j.op_correct);
        CHECK(j.action_f1 == doctest::Approx(1.0));
    }
    SUBCASE("unsolvable steps clamp element_correct") {
        Action a = make_action(5, OpKind::MouseClick);
        StepJudgment j = judge_step(a, a, false);
        CHECK_FALSE(j.element_correct);
        CHECK(j.op_correct);  // the action itself is still judged
        CHECK_FALSE(j.solvable);
    }
}

TEST_CASE("relax_labels") {
    SUBCASE("chain keeps children and grandchildren only") {
        // post-order: p=0, i=1, span=2, div=3
        PrunedDom dom = process_html("<div><span><i><p>x</p></i></span></div>");
        CHECK(relax_labels(3, dom) == std::set<int>{3, 2, 1});
        CHECK(relax_labels(2, dom) == std::set<int>{2, 1, 0});
        CHECK(relax_labels(1, dom) == std::set<int>{1, 0});
        CHECK(relax_labels(0, dom) == std::set<int>{0});
    }
    SUBCASE("three children with two children each") {
        PrunedDom dom = process_html(
            "<div>"
            "<span><i>a</i><i>b</i></span>"
            "<span><i>c</i><i>d</i></span>"
            "<span><i>e</i><i>f</i></span>"
            "</div>");
        std::set<int> got = relax_labels(9, dom);
        CHECK(got.size() == 10);
        CHECK(got == std::set<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    }
    SUBCASE("text children are skipped") {
        PrunedDom dom = process_html("<div>hello <span>x</span> world</div>");
        CHECK(relax_labels(1, dom) == std::set<int>{1, 0});
    }
    SUBCASE("unknown node") {
        PrunedDom dom = process_html("<div></div>");
        CHECK_THROWS_AS(relax_labels(42, dom), Error);
    }
}

namespace {

void collect_depth2(const DomNode& n, int depth, std::set<int>& out) {
    if (n.is_element() && n.node_id) out.insert(*n.node_id);
    if (depth == 2) return;
    for (const auto& c : n.children)
        if (c.is_element()) collect_depth2(c, depth + 1, out);
}

const DomNode* find_walk(const std::vector<DomNode>& nodes, int id) {
    for (const auto& n : nodes) {
        if (n.is_element() && n.node_id && *n.node_id == id) return &n;
        if (const DomNode* hit = find_walk(n.children, id)) return hit;
    }
    return nullptr;
}

}  // namespace

TEST_CASE("relax_labels matches a brute-force depth walk on fixture pages") {
    for (int page = 1; page <= 5; ++page) {
        char name[32];
        std::snprintf(name, sizeof(name), "corpus/page%02d.html", page);
        PrunedDom dom = process_html(read_file(fixture_path(name)));
        for (const auto& [id, path] : dom.id_index) {
            const DomNode* n = find_walk(dom.tree.roots, id);
            REQUIRE(n != nullptr);
            std::set<int> want;
            collect_depth2(*n, 0, want);
            CHECK(relax_labels(id, dom) == want);
        }
    }
}

TEST_CASE("attribute_match") {
    // two buttons with the same collapsed text, one span with the same text
    PrunedDom dom = process_html(
        "<div><button><span>Add </span> to   Cart</button></div>"
        "<footer><button>Add to Cart</button></footer>"
        "<p>Add to Cart</p>");
    // post-order: span=0, button=1, div=2, button=3, footer=4, p=5
    CHECK(attribute_match(3, 1, dom));       // same tag, same text
    CHECK(attribute_match(1, 3, dom));       // symmetric
    CHECK_FALSE(attribute_match(5, 1, dom)); // p vs button: tag differs
    CHECK_FALSE(attribute_match(0, 1, dom)); // span: tag and text both differ
    CHECK_THROWS_AS(attribute_match(99, 1, dom), Error);
    CHECK_THROWS_AS(attribute_match(1, 99, dom), Error);
}

TEST_CASE("adjust_click_to_type") {
    // post-order: input=0, textarea=1, div=2
    PrunedDom dom = process_html("<div><input type=\"text\"><textarea></textarea></div>");

    SUBCASE("click on an input becomes an empty type") {
        Action out = adjust_click_to_type(make_action(0, OpKind::MouseClick), dom);
        CHECK(out.op == OpKind::KeyboardSequence);
        CHECK(out.description == "Type \"\" into the target element");
        CHECK(action_payload(out).empty());
        CHECK(out.node == 0);
    }
    SUBCASE("click on a textarea too") {
        CHECK(adjust_click_to_type(make_action(1, OpKind::MouseClick), dom).op ==
              OpKind::KeyboardSequence);
    }
    SUBCASE("click elsewhere is untouched") {
        Action in = make_action(2, OpKind::MouseClick, "Click the box");
        Action out = adjust_click_to_type(in, dom);
        CHECK(out.op == OpKind::MouseClick);
        CHECK(out.description == in.description);
    }
    SUBCASE("non-clicks and unknown nodes pass through") {
        Action typed = make_action(0, OpKind::KeyboardSequence, "Type \"x\" in");
        CHECK(adjust_click_to_type(typed, dom).description == typed.description);
        Action stray = make_action(77, OpKind::MouseClick);
        CHECK(adjust_click_to_type(stray, dom).op == OpKind::MouseClick);
    }
}

TEST_CASE("judge_step refined") {
    // post-order: p=0, i=1, span=2, button=3; p=4, i=5, span=6, button=7, footer=8
    PrunedDom dom = process_html(
        "<button><span><i><p>deep</p></i></span></button>"
        "<footer><button><span><i><p>deep</p></i></span></button></footer>");

    SUBCASE("refined mode requires a DOM") {
        Action a = make_action(3, OpKind::MouseClick);
        CHECK_THROWS_AS(judge_step(a, a, true, EvalMode::Refined, nullptr), Error);
    }
    SUBCASE("grandchild of the gold node counts") {
        StepJudgment strict = judge_step(make_action(1, OpKind::MouseClick),
                                         make_action(3, OpKind::MouseClick), true);
        CHECK_FALSE(strict.element_correct);
        StepJudgment refined = judge_step(make_action(1, OpKind::MouseClick),
                                          make_action(3, OpKind::MouseClick), true,
                                          EvalMode::Refined, &dom);
        CHECK(refined.element_correct);
    }
    SUBCASE("great-grandchild does not count by depth, but attributes can save it") {
        // node 0 is depth 3 below gold 3; tag p != button, so no match either way
        StepJudgment j = judge_step(make_action(0, OpKind::MouseClick),
                                    make_action(3, OpKind::MouseClick), true,
                                    EvalMode::Refined, &dom);
        CHECK_FALSE(j.element_correct);
    }
    SUBCASE("same tag and text elsewhere in the page matches") {
        // button 7 is unrelated to button 3 but renders identically
        StepJudgment j = judge_step(make_action(7, OpKind::MouseClick),
                                    make_action(3, OpKind::MouseClick), true,
                                    EvalMode::Refined, &dom);
        CHECK(j.element_correct);
    }
    SUBCASE("clicking the input when the gold types into it") {
        // post-order: input=0, form=1
        PrunedDom form = process_html("<form><input type=\"text\"></form>");
        Action pred = make_action(0, OpKind::MouseClick);
        Action gold = make_action(0, OpKind::KeyboardSequence,
                                  "Type \"\" into the target element");
        StepJudgment strict = judge_step(pred, gold, true);
        CHECK_FALSE(strict.op_correct);
        StepJudgment refined = judge_step(pred, gold, true, EvalMode::Refined, &form);
        CHECK(refined.element_correct);
        CHECK(refined.op_correct);  // adjusted to an empty type, payloads agree
        CHECK(refined.action_f1 == doctest::Approx(1.0));
    }
    SUBCASE("only the prediction is adjusted, not the gold") {
        PrunedDom form = process_html("<form><input type=\"text\"></form>");
        Action pred = make_action(0, OpKind::KeyboardSequence,
                                  "Type \"hello\" into the target element");
        Action gold = make_action(0, OpKind::MouseClick);  // gold stays a click
        StepJudgment refined = judge_step(pred, gold, true, EvalMode::Refined, &form);
        CHECK(refined.element_correct);
        CHECK_FALSE(refined.op_correct);
    }
}

TEST_CASE("multistage_remap") {
    // post-order: li=0, li=1, ul=2, p=3, div=4
    PrunedDom dom = process_html("<div><ul><li>a</li><li>b</li></ul><p>c</p></div>");

    CHECK(multistage_remap(0, {3, 2}, dom) == 2);   // first ancestor hit wins
    CHECK(multistage_remap(0, {0, 2}, dom) == 0);   // exact match first
    CHECK(multistage_remap(0, {3}, dom) == 0);      // unrelated: unchanged
    CHECK(multistage_remap(0, {99, 2}, dom) == 2);  // unknown candidates skipped
    CHECK(multistage_remap(0, {}, dom) == 0);
    CHECK(multistage_remap(0, {4, 2}, dom) == 4);   // rank order, not proximity
    CHECK(multistage_remap(3, {2}, dom) == 3);      // p is not inside ul
    CHECK(multistage_remap(42, {2}, dom) == 42);    // unknown generated node
}

TEST_CASE("aggregate") {
    SUBCASE("three steps, two solvable, one correct") {
        TaskJudgments t;
        t.task_id = "t1";
        t.steps = {
            {true, true, 1.0, true},
            {false, false, 0.0, true},
            {false, false, 0.5, false},  // clamped unsolvable step
        };
        EvalReport r = aggregate({t});
        CHECK(r.steps_total == 3);
        CHECK(r.steps_solvable == 2);
        CHECK(r.tasks_total == 1);
        CHECK(r.em == doctest::Approx(1.0 / 3.0));
        REQUIRE(r.cem.has_value());
        CHECK(*r.cem == doctest::Approx(0.5));
        CHECK(r.element_accuracy == doctest::Approx(r.em));
        CHECK(r.mean_action_f1 == doctest::Approx(0.5));
        CHECK(r.step_sr == doctest::Approx(1.0 / 3.0));
        CHECK(r.task_sr == doctest::Approx(0.0));
    }
    SUBCASE("task success needs every step") {
        TaskJudgments good{"g", {{true, true, 1.0, true}, {true, true, 1.0, true}}};
        TaskJudgments bad{"b", {{true, true, 1.0, true}, {true, false, 0.0, true}}};
        EvalReport r = aggregate({good, bad});
        CHECK(r.tasks_total == 2);
        CHECK(r.task_sr == doctest::Approx(0.5));
        CHECK(r.step_sr == doctest::Approx(0.75));
    }
    SUBCASE("empty tasks are skipped") {
        TaskJudgments empty{"e", {}};
        TaskJudgments one{"o", {{true, true, 1.0, true}}};
        EvalReport r = aggregate({empty, one});
        CHECK(r.tasks_total == 1);
        CHECK(r.steps_total == 1);
    }
    SUBCASE("nothing to aggregate") {
        CHECK_THROWS_AS(aggregate({}), Error);
        CHECK_THROWS_AS(aggregate({TaskJudgments{"e", {}}}), Error);
    }
    SUBCASE("cem is undefined without solvable steps") {
        TaskJudgments t{"t", {{false, true, 0.0, false}, {false, false, 0.0, false}}};
        EvalReport r = aggregate({t});
        CHECK_FALSE(r.cem.has_value());
        CHECK(r.em == doctest::Approx(0.0));
    }
    SUBCASE("cem never falls below em on clamped judgments") {
        std::mt19937 rng(7);
        std::bernoulli_distribution coin(0.5);
        for (int trial = 0; trial < 1000; ++trial) {
            TaskJudgments t;
            t.task_id = "t";
            int n = 1 + static_cast<int>(rng() % 8);
            for (int i = 0; i < n; ++i) {
                StepJudgment s;
                s.solvable = coin(rng);
                s.element_correct = coin(rng) && s.solvable;  // judge_step's clamp
                s.op_correct = coin(rng);
                s.action_f1 = coin(rng) ? 1.0 : 0.0;
                t.steps.push_back(s);
            }
            EvalReport r = aggregate({t});
            if (r.cem) CHECK(*r.cem >= r.em - 1e-12);
        }
    }
}

TEST_CASE("report rendering") {
    TaskJudgments t{"t", {{true, true, 1.0, true}, {false, false, 0.5, false}}};
    EvalReport r = aggregate({t});

    SUBCASE("json") {
        nlohmann::json j = nlohmann::json::parse(render_report_json(r));
        CHECK(j["em"].get<double>() == doctest::Approx(0.5));
        CHECK(j["cem"].get<double>() == doctest::Approx(1.0));
        CHECK(j["steps_total"].get<int>() == 2);
        CHECK(j["steps_solvable"].get<int>() == 1);
        CHECK(j["tasks_total"].get<int>() == 1);
        CHECK(j["mean_action_f1"].get<double>() == doctest::Approx(0.75));
    }
    SUBCASE("json renders an undefined cem as null") {
        TaskJudgments u{"u", {{false, false, 0.0, false}}};
        nlohmann::json j = nlohmann::json::parse(render_report_json(aggregate({u})));
        CHECK(j["cem"].is_null());
    }
    SUBCASE("text") {
        std::string text = render_report_text(r);
        CHECK(text.find("em") != std::string::npos);
        CHECK(text.find("cem") != std::string::npos);
        CHECK(text.find("task sr") != std::string::npos);
        CHECK(text.find("50.00%") != std::string::npos);
        TaskJudgments u{"u", {{false, false, 0.0, false}}};
        CHECK(render_report_text(aggregate({u})).find("n/a") != std::string::npos);
    }
}

// ---------------------------------------------------------------------------
// Wire formats
// ---------------------------------------------------------------------------

namespace {

std::string five_line(int index, const std::string& desc, const std::string& op, int node) {
    return std::to_string(index) + ".\\nDescription: " + desc + "\\nAction: " + op +
           "\\nNode: " + std::to_string(node) + "\\nTarget: <div node=\\\"" +
           std::to_string(node) + "\\\">\\n";
}

}  // namespace

TEST_CASE("prediction and gold files") {
    std::string gold_jsonl =
        R"({"workflow_id":"wf-a","step_index":1,"action_text":")" +
        five_line(1, "Click \\\"Go\\\"", "mouse_click_action", 5) + R"("})" "\n" +
        R"({"workflow_id":"wf-a","step_index":2,"action_text":")" +
        five_line(2, "Click \\\"Next\\\"", "mouse_click_action", 9) + R"("})" "\n" +
        R"({"workflow_id":"wf-b","step_index":1,"action_text":")" +
        five_line(1, "Click \\\"Open\\\"", "mouse_click_action", 2) +
        R"(","solvable":false})" "\n";
    std::string gold_path = write_temp("gold.jsonl", gold_jsonl);

    SUBCASE("load_gold") {
        auto gold = load_gold(gold_path);
        REQUIRE(gold.size() == 3);
        CHECK(gold[0].workflow_id == "wf-a");
        CHECK(gold[0].step_index == 1);
        CHECK(gold[0].solvable);
        CHECK(gold[0].html.empty());
        CHECK_FALSE(gold[2].solvable);
        Action a = parse_action(gold[0].action_text);
        CHECK(a.node == 5);
    }
    SUBCASE("load errors carry path and line") {
        std::string bad = write_temp("bad_gold.jsonl",
                                     R"({"workflow_id":"x","step_index":1,"action_text":"a"})"
                                     "\nnot json\n");
        try {
            load_gold(bad);
            FAIL("expected LoadError");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find(":2:") != std::string::npos);
        }
        std::string missing = write_temp("missing_field.jsonl",
                                         R"({"workflow_id":"x","step_index":1})" "\n");
        CHECK_THROWS_WITH_AS(load_gold(missing), doctest::Contains("action_text"), Error);
    }
    SUBCASE("evaluate_predictions joins on workflow and step") {
        // wf-a step 1: exact; wf-a step 2: wrong node; wf-b step 1: no prediction
        std::string pred_jsonl =
            R"({"workflow_id":"wf-a","step_index":1,"action_text":")" +
            five_line(1, "Click \\\"Go\\\"", "mouse_click_action", 5) + R"("})" "\n" +
            R"({"workflow_id":"wf-a","step_index":2,"action_text":")" +
            five_line(2, "Click \\\"Next\\\"", "mouse_click_action", 4) + R"("})" "\n";
        auto preds = load_predictions(write_temp("pred.jsonl", pred_jsonl));
        auto gold = load_gold(gold_path);
        EvalReport r = evaluate_predictions(preds, gold, EvalMode::Strict);
        CHECK(r.steps_total == 3);
        CHECK(r.steps_solvable == 2);
        CHECK(r.tasks_total == 2);
        CHECK(r.em == doctest::Approx(1.0 / 3.0));
        REQUIRE(r.cem.has_value());
        CHECK(*r.cem == doctest::Approx(0.5));
        CHECK(r.task_sr == doctest::Approx(0.0));
    }
    SUBCASE("a prediction without a gold row is an error") {
        std::string pred_jsonl =
            R"({"workflow_id":"wf-z","step_index":9,"action_text":")" +
            five_line(1, "x", "mouse_click_action", 1) + R"("})" "\n";
        auto preds = load_predictions(write_temp("stray_pred.jsonl", pred_jsonl));
        auto gold = load_gold(gold_path);
        CHECK_THROWS_AS(evaluate_predictions(preds, gold, EvalMode::Strict), Error);
    }
}

TEST_CASE("evaluate_predictions with html, ranking, and refined mode") {
    // page: post-order li=0, li=1, ul=2, p=3, div=4; gold targets ul (node 2)
    const std::string html = "<div><ul><li>a</li><li>b</li></ul><p>c</p></div>";
    std::string gold_jsonl =
        R"({"workflow_id":"wf-r","step_index":1,"action_text":")" +
        five_line(1, "Click the list", "mouse_click_action", 2) +
        R"(","html":")" + html + R"("})" "\n";
    // the prediction clicked a list item inside the gold element
    std::string pred_jsonl =
        R"({"workflow_id":"wf-r","step_index":1,"action_text":")" +
        five_line(1, "Click the item", "mouse_click_action", 0) + R"("})" "\n";
    auto gold = load_gold(write_temp("gold_html.jsonl", gold_jsonl));
    auto preds = load_predictions(write_temp("pred_html.jsonl", pred_jsonl));
    REQUIRE(gold.size() == 1);
    CHECK(gold[0].html == html);

    SUBCASE("strict without ranking: miss") {
        EvalReport r = evaluate_predictions(preds, gold, EvalMode::Strict);
        CHECK(r.em == doctest::Approx(0.0));
    }
    SUBCASE("ranking remaps the node onto its ranked ancestor") {
        std::string rank_jsonl = R"({"workflow_id":"wf-r","step_index":1,"ranked":[2,3]})" "\n";
        auto ranking = load_ranking(write_temp("rank.jsonl", rank_jsonl));
        REQUIRE(ranking.size() == 1);
        EvalReport r = evaluate_predictions(preds, gold, EvalMode::Strict, &ranking);
        CHECK(r.em == doctest::Approx(1.0));
    }
    SUBCASE("refined mode accepts the child without any ranking") {
        EvalReport r = evaluate_predictions(preds, gold, EvalMode::Refined);
        CHECK(r.em == doctest::Approx(1.0));
    }
    SUBCASE("refined mode demands html on the gold rows") {
        std::string bare =
            R"({"workflow_id":"wf-r","step_index":1,"action_text":")" +
            five_line(1, "Click the list", "mouse_click_action", 2) + R"("})" "\n";
        auto gold2 = load_gold(write_temp("gold_bare.jsonl", bare));
        CHECK_THROWS_AS(evaluate_predictions(preds, gold2, EvalMode::Refined), Error);
    }
    SUBCASE("load_ranking validates its rows") {
        CHECK_THROWS_WITH_AS(
            load_ranking(write_temp("bad_rank.jsonl",
                                    R"({"workflow_id":"w","step_index":1})" "\n")),
            doctest::Contains("ranked"), Error);
        CHECK_THROWS_AS(
            load_ranking(write_temp(
                "bad_rank2.jsonl",
                R"({"workflow_id":"w","step_index":1,"ranked":[1,"x"]})" "\n")),
            Error);
    }
}
