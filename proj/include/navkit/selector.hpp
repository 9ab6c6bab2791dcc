#pragma once

#include <string>
#include <utility>
#include <vector>

#include "navkit/dom.hpp"

namespace navkit {

/// One compound step: every present constraint must hold on the same element.
struct SimpleSelector {
    std::string tag;                                            // empty = any element
    std::string id;                                             // empty = no id test
    std::vector<std::string> classes;                           // each must appear in class=""
    std::vector<std::pair<std::string, std::string>> attrs;     // exact equality tests

    bool has_constraint() const {
        return !tag.empty() || !id.empty() || !classes.empty() || !attrs.empty();
    }
};

enum class Combinator { Descendant, Child };

/// parts.size() == combinators.size() + 1; combinators[i] sits between
/// parts[i] and parts[i+1].
struct Selector {
    std::vector<SimpleSelector> parts;
    std::vector<Combinator> combinators;
    std::string text;  // original source, kept for diagnostics
};

/// Grammar: `tag`, `#id`, `.class`, `[attr="v"]` compounds joined by ` ` or `>`.
/// Pseudo-classes, sibling combinators, `*`, and selector lists are recognized
/// and rejected with UnsupportedSelector naming the token; malformed input
/// (including the empty string) raises InvalidSelector.
Selector parse_selector(const std::string& text);

/// True when the single element satisfies every constraint of the compound.
bool matches_compound(const DomNode& element, const SimpleSelector& part);

/// All matching elements in document order, duplicate-free.
std::vector<const DomNode*> resolve(const Selector& sel, const DomTree& dom);

/// The unique match. Zero matches → InvalidSelector, several → AmbiguousSelector;
/// either outcome marks the surrounding workflow invalid.
const DomNode* resolve_unique(const Selector& sel, const DomTree& dom);

} // namespace navkit
