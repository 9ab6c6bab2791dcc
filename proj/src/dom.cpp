#include "navkit/dom.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <sstream>

#include "navkit/errors.hpp"
#include "navkit/util.hpp"

namespace navkit {

namespace {

const std::set<std::string>& void_elements() {
    static const std::set<std::string> kVoid = {
        "area", "base", "br",    "col",  "embed",  "hr",  "img",
        "input", "link", "meta", "param", "source", "track", "wbr"};
    return kVoid;
}

bool is_void(const std::string& tag) { return void_elements().count(tag) > 0; }

bool is_raw_text(const std::string& tag) {
    return tag == "script" || tag == "style" || tag == "textarea" || tag == "title";
}

// Opening `b` implicitly closes an open `a` when a is in autoclosed_by(b).
bool autocloses(const std::string& open_tag, const std::string& new_tag) {
    static const std::set<std::string> kClosesP = {
        "p",  "div", "ul", "ol",    "li",     "h1",      "h2",  "h3",
        "h4", "h5",  "h6", "table", "form",   "nav",     "header",
        "footer", "section", "article", "blockquote", "pre"};
    if (open_tag == "p") return kClosesP.count(new_tag) > 0;
    if (open_tag == "li") return new_tag == "li";
    if (open_tag == "option") return new_tag == "option" || new_tag == "optgroup";
    if (open_tag == "tr") return new_tag == "tr";
    if (open_tag == "td" || open_tag == "th")
        return new_tag == "td" || new_tag == "th" || new_tag == "tr";
    if (open_tag == "dt" || open_tag == "dd") return new_tag == "dt" || new_tag == "dd";
    return false;
}

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp <= 0x7F) {
        out.push_back(static_cast<char>(cp));
    } else if (cp <= 0x7FF) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp <= 0xFFFF) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp <= 0x10FFFF) {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.append("\xEF\xBF\xBD");  // replacement char
    }
}

// Minimal named set plus numeric references; unknown entities stay verbatim.
std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '&') {
            out.push_back(s[i++]);
            continue;
        }
        std::size_t semi = s.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out.push_back(s[i++]);
            continue;
        }
        std::string_view body = s.substr(i + 1, semi - i - 1);
        if (body == "lt") out.push_back('<');
        else if (body == "gt") out.push_back('>');
        else if (body == "amp") out.push_back('&');
        else if (body == "quot") out.push_back('"');
        else if (body == "apos") out.push_back('\'');
        else if (body == "nbsp") out.push_back(' ');
        else if (!body.empty() && body[0] == '#') {
            std::uint32_t cp = 0;
            bool ok = body.size() > 1;
            if (body.size() > 2 && (body[1] == 'x' || body[1] == 'X')) {
                for (std::size_t k = 2; k < body.size() && ok; ++k) {
                    char c = body[k];
                    int d = (c >= '0' && c <= '9')   ? c - '0'
                            : (c >= 'a' && c <= 'f') ? c - 'a' + 10
                            : (c >= 'A' && c <= 'F') ? c - 'A' + 10
                                                     : -1;
                    ok = d >= 0;
                    if (ok) cp = cp * 16 + static_cast<std::uint32_t>(d);
                }
            } else {
                for (std::size_t k = 1; k < body.size() && ok; ++k) {
                    ok = body[k] >= '0' && body[k] <= '9';
                    if (ok) cp = cp * 10 + static_cast<std::uint32_t>(body[k] - '0');
                }
            }
            if (!ok) {
                out.push_back(s[i++]);
                continue;
            }
            append_utf8(out, cp);
        } else {
            out.push_back(s[i++]);
            continue;
        }
        i = semi + 1;
    }
    return out;
}

constexpr int kMaxDepth = 1024;

// Heap-allocated scratch tree so that the open-element stack survives child
// vector growth; converted to the value tree at the end.
struct BuildNode {
    NodeKind kind = NodeKind::Element;
    std::string tag;
    std::vector<Attr> attributes;
    std::string text;
    std::vector<std::unique_ptr<BuildNode>> children;
};

DomNode to_dom(const BuildNode& b) {
    DomNode n;
    n.kind = b.kind;
    n.tag = b.tag;
    n.attributes = b.attributes;
    n.text = b.text;
    n.children.reserve(b.children.size());
    for (const auto& c : b.children) n.children.push_back(to_dom(*c));
    return n;
}

struct Parser {
    std::string_view src;
    std::size_t pos = 0;
    BuildNode doc;
    std::vector<BuildNode*> stack;  // open elements, doc excluded
    std::string text_buf;           // raw (undecoded) pending text

    BuildNode& parent() { return stack.empty() ? doc : *stack.back(); }

    void flush_text() {
        if (text_buf.empty()) return;
        std::string decoded = decode_entities(text_buf);
        text_buf.clear();
        if (decoded.empty()) return;
        auto& kids = parent().children;
        if (!kids.empty() && kids.back()->kind == NodeKind::Text) {
            kids.back()->text += decoded;
            return;
        }
        auto node = std::make_unique<BuildNode>();
        node->kind = NodeKind::Text;
        node->text = std::move(decoded);
        kids.push_back(std::move(node));
    }

    void append_text_raw(std::string_view raw, bool decode) {
        if (raw.empty()) return;
        flush_text();
        std::string content = decode ? decode_entities(raw) : std::string(raw);
        if (content.empty()) return;
        auto node = std::make_unique<BuildNode>();
        node->kind = NodeKind::Text;
        node->text = std::move(content);
        parent().children.push_back(std::move(node));
    }

    std::string read_name() {
        std::size_t start = pos;
        while (pos < src.size() && !is_ascii_space(src[pos]) && src[pos] != '>' &&
               src[pos] != '/' && src[pos] != '=')
            ++pos;
        return to_lower(src.substr(start, pos - start));
    }

    // Attribute list of an open tag; returns false when EOF hit before '>',
    // in which case the whole tag is discarded.
    bool read_attrs(std::vector<Attr>& attrs, bool& self_close) {
        self_close = false;
        while (true) {
            while (pos < src.size() && is_ascii_space(src[pos])) ++pos;
            if (pos >= src.size()) return false;
            if (src[pos] == '>') {
                ++pos;
                return true;
            }
            if (src[pos] == '/') {
                ++pos;
                if (pos < src.size() && src[pos] == '>') {
                    ++pos;
                    self_close = true;
                    return true;
                }
                continue;  // stray slash
            }
            std::size_t name_start = pos;
            while (pos < src.size() && !is_ascii_space(src[pos]) && src[pos] != '=' &&
                   src[pos] != '>' && src[pos] != '/')
                ++pos;
            if (pos == name_start) {  // unexpected char, skip it
                ++pos;
                continue;
            }
            std::string name = to_lower(src.substr(name_start, pos - name_start));
            std::string value;
            while (pos < src.size() && is_ascii_space(src[pos])) ++pos;
            if (pos < src.size() && src[pos] == '=') {
                ++pos;
                while (pos < src.size() && is_ascii_space(src[pos])) ++pos;
                if (pos < src.size() && (src[pos] == '"' || src[pos] == '\'')) {
                    char quote = src[pos++];
                    std::size_t vstart = pos;
                    while (pos < src.size() && src[pos] != quote) ++pos;
                    value = decode_entities(src.substr(vstart, pos - vstart));
                    if (pos < src.size()) ++pos;  // closing quote
                } else {
                    std::size_t vstart = pos;
                    while (pos < src.size() && !is_ascii_space(src[pos]) && src[pos] != '>')
                        ++pos;
                    value = decode_entities(src.substr(vstart, pos - vstart));
                }
            }
            bool duplicate = std::any_of(attrs.begin(), attrs.end(),
                                         [&](const Attr& a) { return a.name == name; });
            if (!duplicate) attrs.push_back({std::move(name), std::move(value)});
        }
    }

    void open_element(std::string tag, std::vector<Attr> attrs, bool self_close) {
        while (!stack.empty() && autocloses(stack.back()->tag, tag)) stack.pop_back();

        auto node = std::make_unique<BuildNode>();
        node->tag = tag;
        node->attributes = std::move(attrs);
        BuildNode* raw = node.get();
        parent().children.push_back(std::move(node));

        if (is_void(tag) || self_close) return;
        if (is_raw_text(tag)) {
            capture_raw_text(*raw, tag);
            return;
        }
        if (static_cast<int>(stack.size()) < kMaxDepth) stack.push_back(raw);
    }

    // script/style keep their bytes untouched; textarea/title decode entities.
    void capture_raw_text(BuildNode& element, const std::string& tag) {
        std::string closer = "</" + tag;
        std::size_t end = pos;
        while (end < src.size()) {
            std::size_t cand = src.find('<', end);
            if (cand == std::string_view::npos) {
                end = src.size();
                break;
            }
            if (cand + closer.size() <= src.size() &&
                to_lower(src.substr(cand, closer.size())) == closer) {
                end = cand;
                break;
            }
            end = cand + 1;
        }
        std::string_view content = src.substr(pos, end - pos);
        if (!content.empty()) {
            auto node = std::make_unique<BuildNode>();
            node->kind = NodeKind::Text;
            node->text = (tag == "script" || tag == "style") ? std::string(content)
                                                             : decode_entities(content);
            element.children.push_back(std::move(node));
        }
        pos = end;
        if (pos < src.size()) {  // consume the closer through '>'
            std::size_t gt = src.find('>', pos);
            pos = gt == std::string_view::npos ? src.size() : gt + 1;
        }
    }

    void close_element(const std::string& tag) {
        for (std::size_t i = stack.size(); i-- > 0;) {
            if (stack[i]->tag == tag) {
                stack.resize(i);
                return;
            }
        }
        // no matching open element: stray closer, ignored
    }

    void run() {
        while (pos < src.size()) {
            char c = src[pos];
            if (c != '<') {
                std::size_t next = src.find('<', pos);
                if (next == std::string_view::npos) next = src.size();
                text_buf.append(src.substr(pos, next - pos));
                pos = next;
                continue;
            }
            if (pos + 1 >= src.size()) {
                text_buf.push_back('<');
                ++pos;
                continue;
            }
            char d = src[pos + 1];
            if (d == '!') {
                flush_text();
                if (src.substr(pos, 4) == "<!--") {
                    std::size_t end = src.find("-->", pos + 4);
                    pos = end == std::string_view::npos ? src.size() : end + 3;
                } else if (src.substr(pos, 9) == "<![CDATA[") {
                    std::size_t end = src.find("]]>", pos + 9);
                    pos = end == std::string_view::npos ? src.size() : end + 3;
                } else {  // doctype or other declaration
                    std::size_t end = src.find('>', pos + 2);
                    pos = end == std::string_view::npos ? src.size() : end + 1;
                }
            } else if (d == '?') {
                flush_text();
                std::size_t end = src.find('>', pos + 2);
                pos = end == std::string_view::npos ? src.size() : end + 1;
            } else if (d == '/') {
                if (pos + 2 < src.size() && is_alpha(src[pos + 2])) {
                    flush_text();
                    pos += 2;
                    std::string tag = read_name();
                    std::size_t end = src.find('>', pos);
                    pos = end == std::string_view::npos ? src.size() : end + 1;
                    close_element(tag);
                } else {  // bogus comment: "</3>" and friends
                    flush_text();
                    std::size_t end = src.find('>', pos + 2);
                    pos = end == std::string_view::npos ? src.size() : end + 1;
                }
            } else if (is_alpha(d)) {
                flush_text();
                ++pos;
                std::string tag = read_name();
                std::vector<Attr> attrs;
                bool self_close = false;
                if (!read_attrs(attrs, self_close)) {
                    pos = src.size();  // EOF inside tag: discard it
                    break;
                }
                open_element(std::move(tag), std::move(attrs), self_close);
            } else {
                text_buf.push_back('<');  // literal '<' in text
                ++pos;
            }
        }
        flush_text();
    }
};

}  // namespace

const std::string* DomNode::attr(std::string_view name) const {
    for (const auto& a : attributes)
        if (a.name == name) return &a.value;
    return nullptr;
}

DomTree parse_html(std::string_view html) {
    Parser p;
    p.src = html;
    p.run();
    DomTree tree;
    tree.roots.reserve(p.doc.children.size());
    for (const auto& c : p.doc.children) tree.roots.push_back(to_dom(*c));
    return tree;
}

// ---------------------------------------------------------------------------
// Prune
// ---------------------------------------------------------------------------

bool PruneConfig::tag_allowed(const std::string& tag) const {
    return tag_whitelist.count(tag) > 0;
}

bool PruneConfig::attr_allowed(const std::string& tag, const std::string& attr) const {
    if (attr == "node") return true;  // our own annotation, always kept
    if (global_attrs.count(attr)) return true;
    auto it = tag_attrs.find(tag);
    return it != tag_attrs.end() && it->second.count(attr) > 0;
}

void PruneConfig::validate() const {
    if (ratio_threshold < 1.0)
        throw Error(Errc::BadConfig, "ratio_threshold must be >= 1.0");
    if (ratio_min_len < 0) throw Error(Errc::BadConfig, "ratio_min_len must be >= 0");
}

namespace {

void prune_into(const DomNode& node, const PruneConfig& config, std::vector<DomNode>& out) {
    if (node.is_text()) {
        std::string collapsed;
        collapsed.reserve(node.text.size());
        bool prev_space = false;
        for (char c : node.text) {
            if (is_ascii_space(c) || c == '\0') {
                if (!prev_space) collapsed.push_back(' ');
                prev_space = true;
            } else {
                collapsed.push_back(c);
                prev_space = false;
            }
        }
        if (collapsed.empty() || collapsed == " ") return;
        DomNode t;
        t.kind = NodeKind::Text;
        t.text = std::move(collapsed);
        out.push_back(std::move(t));
        return;
    }
    if (config.drop_tags.count(node.tag)) return;
    if (!config.tag_allowed(node.tag)) {
        // unwrap: the element goes away, its children stay in place
        for (const auto& c : node.children) prune_into(c, config, out);
        return;
    }
    DomNode e;
    e.kind = NodeKind::Element;
    e.tag = node.tag;
    e.node_id = node.node_id;
    for (const auto& a : node.attributes)
        if (config.attr_allowed(node.tag, a.name)) e.attributes.push_back(a);
    for (const auto& c : node.children) prune_into(c, config, e.children);
    out.push_back(std::move(e));
}

}  // namespace

DomTree prune(const DomTree& tree, const PruneConfig& config) {
    config.validate();
    DomTree out;
    for (const auto& r : tree.roots) prune_into(r, config, out.roots);
    return out;
}

// ---------------------------------------------------------------------------
// Node ids
// ---------------------------------------------------------------------------

namespace {

void assign_ids(DomNode& node, NodePath& path, int& next_id,
                std::map<int, NodePath>& index) {
    for (std::size_t i = 0; i < node.children.size(); ++i) {
        path.push_back(static_cast<int>(i));
        assign_ids(node.children[i], path, next_id, index);
        path.pop_back();
    }
    if (!node.is_element()) return;
    node.attributes.erase(
        std::remove_if(node.attributes.begin(), node.attributes.end(),
                       [](const Attr& a) { return a.name == "node"; }),
        node.attributes.end());
    node.node_id = next_id;
    index.emplace(next_id, path);
    ++next_id;
}

}  // namespace

PrunedDom assign_node_ids(const DomTree& tree) {
    PrunedDom out;
    out.tree = tree;
    int next_id = 0;
    NodePath path;
    for (std::size_t i = 0; i < out.tree.roots.size(); ++i) {
        path.push_back(static_cast<int>(i));
        assign_ids(out.tree.roots[i], path, next_id, out.id_index);
        path.pop_back();
    }
    return out;
}

const DomNode* PrunedDom::find(int node_id) const {
    auto it = id_index.find(node_id);
    if (it == id_index.end()) return nullptr;
    return at_path(it->second);
}

const DomNode* PrunedDom::at_path(const NodePath& path) const {
    const std::vector<DomNode>* level = &tree.roots;
    const DomNode* node = nullptr;
    for (int idx : path) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= level->size()) return nullptr;
        node = &(*level)[idx];
        level = &node->children;
    }
    return node;
}

bool PrunedDom::is_descendant_of(int id, int ancestor_id) const {
    auto it = id_index.find(id);
    auto anc = id_index.find(ancestor_id);
    if (it == id_index.end() || anc == id_index.end()) return false;
    const NodePath& p = it->second;
    const NodePath& a = anc->second;
    if (a.size() > p.size()) return false;
    return std::equal(a.begin(), a.end(), p.begin());
}

// ---------------------------------------------------------------------------
// Serialize
// ---------------------------------------------------------------------------

namespace {

void escape_text(std::string_view s, std::string& out) {
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out.push_back(c);
        }
    }
}

void escape_attr(std::string_view s, std::string& out) {
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
        }
    }
}

void emit_opening_tag(const DomNode& node, const PruneConfig& config, std::string& out) {
    out.push_back('<');
    out += node.tag;

    std::vector<const Attr*> ordered;
    std::vector<bool> used(node.attributes.size(), false);
    Attr node_attr{"node", {}};
    bool node_emitted = false;
    if (node.node_id) node_attr.value = std::to_string(*node.node_id);

    for (const std::string& name : config.attr_order) {
        if (name == "node" && node.node_id) {
            ordered.push_back(&node_attr);
            node_emitted = true;
            continue;
        }
        for (std::size_t i = 0; i < node.attributes.size(); ++i) {
            if (!used[i] && node.attributes[i].name == name) {
                ordered.push_back(&node.attributes[i]);
                used[i] = true;
            }
        }
    }
    for (std::size_t i = 0; i < node.attributes.size(); ++i)
        if (!used[i]) ordered.push_back(&node.attributes[i]);
    if (node.node_id && !node_emitted) ordered.push_back(&node_attr);

    for (const Attr* a : ordered) {
        out.push_back(' ');
        out += a->name;
        out += "=\"";
        escape_attr(a->value, out);
        out.push_back('"');
    }
    out.push_back('>');
}

void emit_node(const DomNode& node, const PruneConfig& config, std::string& out) {
    if (node.is_text()) {
        escape_text(node.text, out);
        return;
    }
    emit_opening_tag(node, config, out);
    if (is_void(node.tag)) return;
    for (const auto& c : node.children) emit_node(c, config, out);
    out += "</";
    out += node.tag;
    out.push_back('>');
}

}  // namespace

std::string serialize(const PrunedDom& dom, const PruneConfig& config) {
    std::string out;
    for (const auto& r : dom.tree.roots) emit_node(r, config, out);
    return out;
}

std::string serialize_opening_tag(const DomNode& element, const PruneConfig& config) {
    std::string out;
    emit_opening_tag(element, config, out);
    return out;
}

std::string inner_text(const DomNode& element) {
    std::string raw;
    struct Walk {
        static void visit(const DomNode& n, std::string& acc) {
            if (n.is_text()) {
                acc += n.text;
                return;
            }
            for (const auto& c : n.children) visit(c, acc);
        }
    };
    Walk::visit(element, raw);
    return collapse_whitespace(raw);
}

int element_count(const DomTree& tree) {
    struct Walk {
        static int visit(const DomNode& n) {
            if (!n.is_element()) return 0;
            int count = 1;
            for (const auto& c : n.children) count += visit(c);
            return count;
        }
    };
    int count = 0;
    for (const auto& r : tree.roots) count += Walk::visit(r);
    return count;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

PruneConfig default_prune_config() {
    PruneConfig cfg;
    cfg.tag_whitelist = {"a",     "button", "input", "select", "option", "textarea",
                         "form",  "label",  "div",   "span",   "li",     "ul",
                         "ol",    "table",  "tr",    "td",     "h1",     "h2",
                         "h3",    "h4",     "h5",    "h6",     "p",      "img",
                         "svg",   "i",      "nav",   "header", "footer"};
    // attr_order doubles as the serializer's emission order
    cfg.attr_order = {"alt",  "aria-label", "class", "href", "id",    "name",
                      "node", "placeholder", "role", "title", "type", "value"};
    cfg.global_attrs.insert(cfg.attr_order.begin(), cfg.attr_order.end());
    cfg.drop_tags = {"script", "style", "meta", "link", "noscript", "template", "base"};
    return cfg;
}

PruneConfig load_prune_config(const std::string& path) {
    PruneConfig cfg;
    cfg.drop_tags = default_prune_config().drop_tags;

    std::istringstream in(read_file(path));
    std::string line;
    int line_no = 0;
    auto seen_attr = [&](const std::string& a) {
        return std::find(cfg.attr_order.begin(), cfg.attr_order.end(), a) !=
               cfg.attr_order.end();
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string entry = collapse_whitespace(line);
        if (entry.empty()) continue;
        std::size_t dot = entry.find('.');
        if (dot == std::string::npos) {
            cfg.tag_whitelist.insert(to_lower(entry));
            continue;
        }
        std::string tag = to_lower(entry.substr(0, dot));
        std::string attr = to_lower(entry.substr(dot + 1));
        if (tag.empty() || attr.empty() || attr.find('.') != std::string::npos)
            throw Error(Errc::LoadError,
                        path + ":" + std::to_string(line_no) + ": bad entry '" + entry + "'");
        if (tag == "*")
            cfg.global_attrs.insert(attr);
        else
            cfg.tag_attrs[tag].insert(attr);
        if (!seen_attr(attr)) cfg.attr_order.push_back(attr);
    }
    if (cfg.tag_whitelist.empty())
        throw Error(Errc::LoadError, path + ": no tag entries");
    return cfg;
}

} // namespace navkit
