#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace navkit {

// ---------------------------------------------------------------------------
// Element tree
// ---------------------------------------------------------------------------

enum class NodeKind { Element, Text };

struct Attr {
    std::string name;  // lowercase
    std::string value;
};

/// One node of the parsed document. Elements own their children by value;
/// text nodes carry only `text`. `node_id` stays empty until assign_node_ids.
struct DomNode {
    NodeKind kind = NodeKind::Element;
    std::string tag;               // lowercase element name (Element only)
    std::vector<Attr> attributes;  // ordered, names unique within a node
    std::vector<DomNode> children;
    std::string text;              // Text only
    std::optional<int> node_id;

    bool is_element() const { return kind == NodeKind::Element; }
    bool is_text() const { return kind == NodeKind::Text; }
    const std::string* attr(std::string_view name) const;
};

/// A document: zero or more top-level nodes. The document itself is not an
/// element and never receives a node id.
struct DomTree {
    std::vector<DomNode> roots;
};

// ---------------------------------------------------------------------------
// Pruning configuration
// ---------------------------------------------------------------------------

/// Tag/attribute whitelist plus the ratio-rule knobs. `attr_order` is the
/// order attributes are emitted in by the serializer; it lists every
/// whitelisted attribute name once, in whitelist-file order.
struct PruneConfig {
    std::set<std::string> tag_whitelist;
    std::set<std::string> global_attrs;                      // *.attr entries
    std::map<std::string, std::set<std::string>> tag_attrs;  // tag.attr entries
    std::vector<std::string> attr_order;
    std::set<std::string> drop_tags;  // removed with their whole subtree
    double ratio_threshold = 2.0;
    int ratio_min_len = 32;

    bool tag_allowed(const std::string& tag) const;
    bool attr_allowed(const std::string& tag, const std::string& attr) const;

    /// Throws Errc::BadConfig when ratio_threshold < 1 or ratio_min_len < 0.
    void validate() const;
};

/// The shipped defaults (interactive/structural tags; id/class/href/... attrs;
/// script/style/meta-style tags dropped). Mirrors data/whitelist.txt.
PruneConfig default_prune_config();

/// Whitelist file: one entry per line, `tag` or `tag.attr` or `*.attr`,
/// `#` starts a comment. Attribute entries define the serializer's emission
/// order. Drop tags and ratio knobs keep their defaults.
PruneConfig load_prune_config(const std::string& path);

// ---------------------------------------------------------------------------
// Identified tree
// ---------------------------------------------------------------------------

using NodePath = std::vector<int>;  // child indices from the document root

/// Tree with every element carrying a unique id, plus an id -> path index.
struct PrunedDom {
    DomTree tree;
    std::map<int, NodePath> id_index;

    const DomNode* find(int node_id) const;
    const DomNode* at_path(const NodePath& path) const;
    /// True when `id` names a descendant of `ancestor_id` (or the same node).
    bool is_descendant_of(int id, int ancestor_id) const;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Total, error-recovering parse. Unclosed tags close at their parent
/// boundary, stray closers are ignored, and malformed markup degrades to
/// text. Never throws.
DomTree parse_html(std::string_view html);

/// Drops drop_tags subtrees and comments (the parser already discards
/// comments), unwraps non-whitelisted elements in place of their children,
/// removes non-whitelisted attributes, and collapses whitespace runs in text
/// to a single space (whitespace-only text nodes are dropped). Idempotent.
DomTree prune(const DomTree& tree, const PruneConfig& config);

/// Post-order id assignment (deepest-leftmost first), starting at 0. Text
/// nodes get no id. Any literal `node` attribute left over from a previous
/// serialization is replaced.
PrunedDom assign_node_ids(const DomTree& tree);

/// Compact HTML. Every element carries node="ID"; attributes are emitted in
/// whitelist order, then remaining ones in document order. Stable:
/// serialize(parse(serialize(x))) == serialize(x) byte for byte.
std::string serialize(const PrunedDom& dom, const PruneConfig& config = default_prune_config());

/// Just the opening tag of one element, e.g. `<svg class="x" node="3">`.
/// This is the shape used for the Target line of an action.
std::string serialize_opening_tag(const DomNode& element,
                                  const PruneConfig& config = default_prune_config());

/// Concatenated descendant text, whitespace-collapsed and trimmed.
std::string inner_text(const DomNode& element);

/// Number of element nodes in the tree.
int element_count(const DomTree& tree);

} // namespace navkit
