#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "navkit/dom.hpp"
#include "navkit/errors.hpp"
#include "navkit/selector.hpp"

using namespace navkit;

TEST_CASE("parse_selector grammar") {
    SUBCASE("compound with child combinator") {
        Selector s = parse_selector("div.foo > a[href=\"x\"]");
        REQUIRE(s.parts.size() == 2);
        REQUIRE(s.combinators.size() == 1);
        CHECK(s.combinators[0] == Combinator::Child);
        CHECK(s.parts[0].tag == "div");
        REQUIRE(s.parts[0].classes.size() == 1);
        CHECK(s.parts[0].classes[0] == "foo");
        CHECK(s.parts[1].tag == "a");
        REQUIRE(s.parts[1].attrs.size() == 1);
        CHECK(s.parts[1].attrs[0].first == "href");
        CHECK(s.parts[1].attrs[0].second == "x");
        CHECK(s.text == "div.foo > a[href=\"x\"]");
    }
    SUBCASE("bare id") {
        Selector s = parse_selector("#main");
        REQUIRE(s.parts.size() == 1);
        CHECK(s.parts[0].id == "main");
        CHECK(s.parts[0].tag.empty());
    }
    SUBCASE("descendant combinator and stacked classes") {
        Selector s = parse_selector("ul li.item.active");
        REQUIRE(s.parts.size() == 2);
        CHECK(s.combinators[0] == Combinator::Descendant);
        CHECK(s.parts[1].classes == std::vector<std::string>{"item", "active"});
    }
    SUBCASE("single-quoted and unquoted attribute values") {
        CHECK(parse_selector("input[name='q']").parts[0].attrs[0].second == "q");
        CHECK(parse_selector("input[name=q]").parts[0].attrs[0].second == "q");
    }
    SUBCASE("interior control whitespace acts as a descendant combinator") {
        Selector s = parse_selector("div\t\np");
        REQUIRE(s.parts.size() == 2);
        CHECK(s.combinators[0] == Combinator::Descendant);
    }
    SUBCASE("unsupported features are named") {
        CHECK_THROWS_WITH_AS(parse_selector("a:hover"), doctest::Contains(":hover"),
                             Error);
        CHECK_THROWS_AS(parse_selector("*"), Error);
        CHECK_THROWS_AS(parse_selector("a + b"), Error);
        CHECK_THROWS_AS(parse_selector("a ~ b"), Error);
        CHECK_THROWS_AS(parse_selector("a, b"), Error);
        try {
            parse_selector("a:hover");
            FAIL("expected UnsupportedSelector");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::UnsupportedSelector);
        }
    }
    SUBCASE("malformed input raises InvalidSelector") {
        for (const char* bad : {"", "   ", ">", "div >", "> div", ".", "#",
                                "a[href", "a[]", "a[href=\"x]", "div..x", "a##b"}) {
            CAPTURE(bad);
            try {
                parse_selector(bad);
                FAIL_CHECK("no throw for: " << bad);
            } catch (const Error& e) {
                CHECK(e.code() == Errc::InvalidSelector);
            }
        }
    }
}

TEST_CASE("matches_compound") {
    DomTree t = parse_html(
        "<a id=\"top\" class=\"btn primary wide\" href=\"/x\" role=\"button\">go</a>");
    const DomNode& a = t.roots[0];
    auto part = [](const std::string& text) { return parse_selector(text).parts[0]; };
    CHECK(matches_compound(a, part("a")));
    CHECK(matches_compound(a, part("#top")));
    CHECK(matches_compound(a, part(".btn")));
    CHECK(matches_compound(a, part(".primary.wide")));
    CHECK(matches_compound(a, part("a.btn#top[href=\"/x\"][role=button]")));
    CHECK_FALSE(matches_compound(a, part("div")));
    CHECK_FALSE(matches_compound(a, part("#other")));
    CHECK_FALSE(matches_compound(a, part(".prim")));          // no substring matching
    CHECK_FALSE(matches_compound(a, part("[href=\"/y\"]")));
    CHECK_FALSE(matches_compound(a, part("[data-x=\"1\"]")));  // absent attribute
}

TEST_CASE("resolve basics") {
    DomTree t = parse_html(
        "<div id=\"main\"><ul><li class=\"item\">a</li><li class=\"item last\">b</li>"
        "</ul><p class=\"item\">c</p></div><div><p>d</p></div>");

    SUBCASE("document order, all matches") {
        auto r = resolve(parse_selector(".item"), t);
        REQUIRE(r.size() == 3);
        CHECK(inner_text(*r[0]) == "a");
        CHECK(inner_text(*r[1]) == "b");
        CHECK(inner_text(*r[2]) == "c");
    }
    SUBCASE("descendant vs child") {
        CHECK(resolve(parse_selector("div p"), t).size() == 2);
        CHECK(resolve(parse_selector("div > p"), t).size() == 2);
        CHECK(resolve(parse_selector("div li"), t).size() == 2);
        CHECK(resolve(parse_selector("div > li"), t).empty());
        CHECK(resolve(parse_selector("#main > ul > li.last"), t).size() == 1);
    }
    SUBCASE("three-level chain backtracks across candidate anchors") {
        // the inner div also matches "div", so "div div p" must try both
        DomTree t2 = parse_html("<div><div><section><p>x</p></section></div></div>");
        CHECK(resolve(parse_selector("div div p"), t2).size() == 1);
        CHECK(resolve(parse_selector("div > div > p"), t2).empty());
    }
    SUBCASE("no duplicates when multiple ancestors match") {
        DomTree t3 = parse_html("<div><div><p>x</p></div></div>");
        CHECK(resolve(parse_selector("div p"), t3).size() == 1);
    }
    SUBCASE("resolve_unique") {
        const DomNode* n = resolve_unique(parse_selector("#main > ul > li.last"), t);
        REQUIRE(n != nullptr);
        CHECK(inner_text(*n) == "b");
        try {
            resolve_unique(parse_selector(".missing"), t);
            FAIL("expected InvalidSelector");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::InvalidSelector);
        }
        try {
            resolve_unique(parse_selector(".item"), t);
            FAIL("expected AmbiguousSelector");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::AmbiguousSelector);
            CHECK(std::string(e.what()).find("3") != std::string::npos);
        }
    }
}

// ---------------------------------------------------------------------------
// Randomized equivalence against an independent forward set-propagation oracle
// ---------------------------------------------------------------------------

namespace {

struct FlatTree {
    std::vector<const DomNode*> nodes;  // document order (preorder)
    std::vector<int> parent;            // index into nodes, -1 for roots
};

void flatten(const DomNode& n, int parent, FlatTree& out) {
    if (!n.is_element()) return;
    int self = static_cast<int>(out.nodes.size());
    out.nodes.push_back(&n);
    out.parent.push_back(parent);
    for (const auto& c : n.children) flatten(c, self, out);
}

FlatTree flatten(const DomTree& t) {
    FlatTree out;
    for (const auto& r : t.roots) flatten(r, -1, out);
    return out;
}

// Matches parts left to right: sets of node indices that can end each prefix.
std::vector<const DomNode*> oracle_resolve(const Selector& sel, const FlatTree& flat) {
    std::vector<std::set<int>> reach(sel.parts.size());
    for (std::size_t p = 0; p < sel.parts.size(); ++p) {
        for (int i = 0; i < static_cast<int>(flat.nodes.size()); ++i) {
            if (!matches_compound(*flat.nodes[i], sel.parts[p])) continue;
            if (p == 0) {
                reach[0].insert(i);
                continue;
            }
            bool ok = false;
            if (sel.combinators[p - 1] == Combinator::Child) {
                ok = flat.parent[i] >= 0 && reach[p - 1].count(flat.parent[i]) > 0;
            } else {
                for (int anc = flat.parent[i]; anc >= 0 && !ok; anc = flat.parent[anc])
                    ok = reach[p - 1].count(anc) > 0;
            }
            if (ok) reach[p].insert(i);
        }
    }
    std::vector<const DomNode*> out;
    for (int i : reach.back()) out.push_back(flat.nodes[i]);  // set is doc order
    return out;
}

struct RandomDom {
    std::mt19937 rng;
    std::vector<std::string> tags = {"div", "span", "ul", "li", "a", "p"};
    std::vector<std::string> class_pool = {"x", "y", "z", "item"};

    explicit RandomDom(unsigned seed) : rng(seed) {}

    int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

    void grow(std::string& html, int& budget, int depth) {
        while (budget > 0 && pick(depth + 2) == 0) {
            --budget;
            const std::string& tag = tags[static_cast<std::size_t>(pick(6))];
            html += "<" + tag;
            if (pick(3) == 0) html += " id=\"i" + std::to_string(pick(8)) + "\"";
            if (pick(2) == 0) {
                html += " class=\"";
                int k = 1 + pick(2);
                for (int c = 0; c < k; ++c) {
                    if (c) html += " ";
                    html += class_pool[static_cast<std::size_t>(pick(4))];
                }
                html += "\"";
            }
            if (pick(4) == 0) html += " role=\"r" + std::to_string(pick(3)) + "\"";
            html += ">";
            grow(html, budget, depth + 1);
            html += "</" + tag + ">";
        }
    }

    DomTree tree(int max_nodes) {
        std::string html;
        int budget = 1 + pick(max_nodes);
        while (budget > 0) grow(html, budget, 0);
        return parse_html(html);
    }

    std::string compound() {
        std::string out;
        int form = pick(6);
        if (form < 3) out += tags[static_cast<std::size_t>(pick(6))];
        if (form == 1 || form == 3) out += "#i" + std::to_string(pick(8));
        if (form == 2 || form == 4) out += "." + class_pool[static_cast<std::size_t>(pick(4))];
        if (form == 5) out += "[role=\"r" + std::to_string(pick(3)) + "\"]";
        if (out.empty()) out = tags[static_cast<std::size_t>(pick(6))];
        return out;
    }

    std::string selector() {
        std::string out = compound();
        int extra = pick(3);
        for (int i = 0; i < extra; ++i)
            out += (pick(2) == 0 ? " > " : " ") + compound();
        return out;
    }
};

}  // namespace

TEST_CASE("resolve agrees with the set-propagation oracle on random trees") {
    RandomDom gen(20240817);
    int nonempty = 0;
    for (int t = 0; t < 500; ++t) {
        DomTree tree = gen.tree(200);
        FlatTree flat = flatten(tree);
        for (int q = 0; q < 50; ++q) {
            Selector sel = parse_selector(gen.selector());
            auto got = resolve(sel, tree);
            auto want = oracle_resolve(sel, flat);
            REQUIRE_MESSAGE(got == want,
                            "selector \"" << sel.text << "\" on tree " << t);
            if (!got.empty()) ++nonempty;
        }
    }
    CHECK(nonempty > 1000);  // the generator produces plenty of real matches
}
