#include "navkit/selector.hpp"

#include <cctype>

#include "navkit/errors.hpp"
#include "navkit/util.hpp"

namespace navkit {

namespace {

bool ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '_';
}

struct SelectorParser {
    const std::string& src;
    std::size_t pos = 0;

    explicit SelectorParser(const std::string& s) : src(s) {}

    bool eof() const { return pos >= src.size(); }
    char peek() const { return src[pos]; }

    [[noreturn]] void invalid(const std::string& what) const {
        throw Error(Errc::InvalidSelector,
                    "invalid selector \"" + src + "\": " + what + " at offset " +
                        std::to_string(pos));
    }
    [[noreturn]] void unsupported(const std::string& token) const {
        throw Error(Errc::UnsupportedSelector,
                    "unsupported selector feature \"" + token + "\" in \"" + src + "\"");
    }

    std::string ident(const char* role) {
        std::size_t start = pos;
        while (!eof() && ident_char(peek())) ++pos;
        if (pos == start) invalid(std::string("expected ") + role);
        return src.substr(start, pos - start);
    }

    SimpleSelector compound() {
        SimpleSelector part;
        if (!eof() && ident_char(peek())) part.tag = ident("tag name");
        while (!eof()) {
            char c = peek();
            if (c == '#') {
                ++pos;
                if (!part.id.empty()) invalid("second #id in one compound");
                part.id = ident("id");
            } else if (c == '.') {
                ++pos;
                part.classes.push_back(ident("class name"));
            } else if (c == '[') {
                ++pos;
                std::string name = ident("attribute name");
                if (eof() || peek() != '=') invalid("expected '=' in attribute test");
                ++pos;
                std::string value;
                if (!eof() && (peek() == '"' || peek() == '\'')) {
                    char quote = peek();
                    ++pos;
                    std::size_t end = src.find(quote, pos);
                    if (end == std::string::npos) invalid("unterminated attribute value");
                    value = src.substr(pos, end - pos);
                    pos = end + 1;
                } else {
                    std::size_t start = pos;
                    while (!eof() && peek() != ']') ++pos;
                    value = src.substr(start, pos - start);
                }
                if (eof() || peek() != ']') invalid("expected ']'");
                ++pos;
                part.attrs.emplace_back(std::move(name), std::move(value));
            } else if (c == ':') {
                std::size_t start = pos;
                while (pos < src.size() && (src[pos] == ':' || ident_char(src[pos]))) ++pos;
                unsupported(src.substr(start, pos - start));
            } else if (c == '*') {
                unsupported("*");
            } else {
                break;
            }
        }
        if (!part.has_constraint()) invalid("expected a compound selector");
        return part;
    }

    Selector run() {
        Selector sel;
        sel.text = src;
        while (true) {
            while (!eof() && peek() == ' ') ++pos;
            if (eof()) break;
            if (sel.parts.empty()) {
                sel.parts.push_back(compound());
                continue;
            }
            Combinator comb = Combinator::Descendant;
            if (peek() == '>') {
                comb = Combinator::Child;
                ++pos;
                while (!eof() && peek() == ' ') ++pos;
            }
            if (eof()) invalid("dangling combinator");
            if (peek() == '+' || peek() == '~' || peek() == ',')
                unsupported(std::string(1, peek()));
            sel.combinators.push_back(comb);
            sel.parts.push_back(compound());
        }
        if (sel.parts.empty())
            throw Error(Errc::InvalidSelector, "empty selector");
        return sel;
    }
};

}  // namespace

Selector parse_selector(const std::string& text) {
    std::string normalized = text;
    for (char& c : normalized)
        if (c == '\t' || c == '\n' || c == '\r' || c == '\f') c = ' ';
    Selector sel = SelectorParser(normalized).run();
    sel.text = text;
    return sel;
}

bool matches_compound(const DomNode& element, const SimpleSelector& part) {
    if (!element.is_element()) return false;
    if (!part.tag.empty() && element.tag != part.tag) return false;
    if (!part.id.empty()) {
        const std::string* id = element.attr("id");
        if (!id || *id != part.id) return false;
    }
    if (!part.classes.empty()) {
        const std::string* cls = element.attr("class");
        if (!cls) return false;
        for (const auto& want : part.classes) {
            bool found = false;
            std::size_t i = 0;
            while (i < cls->size()) {
                while (i < cls->size() && is_ascii_space((*cls)[i])) ++i;
                std::size_t start = i;
                while (i < cls->size() && !is_ascii_space((*cls)[i])) ++i;
                if (cls->compare(start, i - start, want) == 0) {
                    found = true;
                    break;
                }
            }
            if (!found) return false;
        }
    }
    for (const auto& [name, value] : part.attrs) {
        const std::string* got = element.attr(name);
        if (!got || *got != value) return false;
    }
    return true;
}

namespace {

// The rightmost compound matched path.back(); walk the remaining compounds
// leftward, backtracking through ancestor choices for descendant combinators.
bool match_chain(const Selector& sel, const std::vector<const DomNode*>& path,
                 int node_pos, int part_idx) {
    if (!matches_compound(*path[node_pos], sel.parts[part_idx])) return false;
    if (part_idx == 0) return true;
    if (sel.combinators[part_idx - 1] == Combinator::Child)
        return node_pos > 0 && match_chain(sel, path, node_pos - 1, part_idx - 1);
    for (int p = node_pos - 1; p >= 0; --p)
        if (match_chain(sel, path, p, part_idx - 1)) return true;
    return false;
}

void resolve_into(const Selector& sel, const DomNode& node,
                  std::vector<const DomNode*>& path, std::vector<const DomNode*>& out) {
    if (!node.is_element()) return;
    path.push_back(&node);
    if (match_chain(sel, path, static_cast<int>(path.size()) - 1,
                    static_cast<int>(sel.parts.size()) - 1))
        out.push_back(&node);
    for (const auto& child : node.children) resolve_into(sel, child, path, out);
    path.pop_back();
}

}  // namespace

std::vector<const DomNode*> resolve(const Selector& sel, const DomTree& dom) {
    std::vector<const DomNode*> out;
    std::vector<const DomNode*> path;
    for (const auto& root : dom.roots) resolve_into(sel, root, path, out);
    return out;
}

const DomNode* resolve_unique(const Selector& sel, const DomTree& dom) {
    std::vector<const DomNode*> matches = resolve(sel, dom);
    if (matches.empty())
        throw Error(Errc::InvalidSelector,
                    "selector \"" + sel.text + "\" matches no element");
    if (matches.size() > 1)
        throw Error(Errc::AmbiguousSelector,
                    "selector \"" + sel.text + "\" matches " +
                        std::to_string(matches.size()) + " elements");
    return matches.front();
}

} // namespace navkit
