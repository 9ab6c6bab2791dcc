#include "navkit/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "navkit/errors.hpp"
#include "navkit/util.hpp"

namespace navkit {

namespace {

// ---------------------------------------------------------------------------
// Built-in test profiles
// ---------------------------------------------------------------------------

class CharProfile final : public TokenizerProfile {
public:
    const std::string& name() const override {
        static const std::string n = "chars";
        return n;
    }
    std::vector<int> encode(std::string_view s) const override {
        std::vector<int> out;
        out.reserve(s.size());
        int cp = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            unsigned char c = static_cast<unsigned char>(s[i]);
            if ((c & 0xC0) == 0x80) {
                cp = (cp << 6) | (c & 0x3F);
                // continuation byte: extend the pending code point
                if (i + 1 == s.size() || (static_cast<unsigned char>(s[i + 1]) & 0xC0) != 0x80)
                    out.back() = cp;
                continue;
            }
            if (c < 0x80) cp = c;
            else if ((c & 0xE0) == 0xC0) cp = c & 0x1F;
            else if ((c & 0xF0) == 0xE0) cp = c & 0x0F;
            else cp = c & 0x07;
            out.push_back(cp);
        }
        return out;
    }
};

class WhitespaceProfile final : public TokenizerProfile {
public:
    const std::string& name() const override {
        static const std::string n = "whitespace";
        return n;
    }
    std::vector<int> encode(std::string_view s) const override {
        std::vector<int> out;
        std::size_t i = 0;
        while (i < s.size()) {
            while (i < s.size() && is_ascii_space(s[i])) ++i;
            std::size_t start = i;
            while (i < s.size() && !is_ascii_space(s[i])) ++i;
            if (i > start)
                out.push_back(static_cast<int>(fnv1a64(s.substr(start, i - start)) & 0x7FFFFFFF));
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Byte-level BPE
// ---------------------------------------------------------------------------

// GPT-2 byte-to-unicode table: printable bytes map to themselves, the rest to
// code points 256 and up, so every byte has a visible stand-in.
const std::vector<std::string>& byte_to_unicode() {
    static const std::vector<std::string> table = [] {
        std::vector<int> cps(256, -1);
        auto printable = [](int b) {
            return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) ||
                   (b >= 0xAE && b <= 0xFF);
        };
        int next = 256;
        for (int b = 0; b < 256; ++b) cps[b] = printable(b) ? b : next++;
        std::vector<std::string> out(256);
        for (int b = 0; b < 256; ++b) {
            std::string s;
            int cp = cps[b];
            if (cp <= 0x7F) {
                s.push_back(static_cast<char>(cp));
            } else {
                s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
                s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            }
            out[b] = s;
        }
        return out;
    }();
    return table;
}

struct PairHash {
    std::size_t operator()(const std::pair<std::string, std::string>& p) const {
        return fnv1a64(p.first) * 31 + fnv1a64(p.second);
    }
};

class BpeProfile final : public TokenizerProfile {
public:
    BpeProfile(std::string name, std::vector<std::pair<std::string, int>> vocab,
               std::vector<std::pair<std::string, std::string>> merges, bool byte_level)
        : name_(std::move(name)), byte_level_(byte_level) {
        for (auto& [token, id] : vocab) vocab_.emplace(std::move(token), id);
        int rank = 0;
        for (auto& m : merges) ranks_.emplace(std::move(m), rank++);
    }

    const std::string& name() const override { return name_; }

    std::vector<int> encode(std::string_view s) const override {
        if (s.empty()) return {};
        std::vector<std::string> symbols = initial_symbols(s);
        apply_merges(symbols);
        std::vector<int> out;
        out.reserve(symbols.size());
        for (const auto& sym : symbols) {
            auto it = vocab_.find(sym);
            out.push_back(it == vocab_.end() ? -1 : it->second);
        }
        return out;
    }

private:
    std::vector<std::string> initial_symbols(std::string_view s) const {
        std::vector<std::string> symbols;
        symbols.reserve(s.size());
        if (byte_level_) {
            const auto& table = byte_to_unicode();
            for (unsigned char c : s) symbols.push_back(table[c]);
        } else {
            std::size_t i = 0;
            while (i < s.size()) {
                unsigned char c = static_cast<unsigned char>(s[i]);
                std::size_t len = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3
                                    : (c & 0xF8) == 0xF0 ? 4 : 1;
                len = std::min(len, s.size() - i);
                symbols.emplace_back(s.substr(i, len));
                i += len;
            }
        }
        return symbols;
    }

    // Lowest-rank pair first, leftmost occurrence first. Linked list plus a
    // priority queue of candidate merges; stale entries are skipped by
    // re-checking the symbols they were queued against.
    void apply_merges(std::vector<std::string>& symbols) const {
        if (symbols.size() < 2 || ranks_.empty()) return;

        struct Cand {
            int rank;
            int left;
            int version;
        };
        auto cmp = [](const Cand& a, const Cand& b) {
            return a.rank != b.rank ? a.rank > b.rank : a.left > b.left;
        };
        std::priority_queue<Cand, std::vector<Cand>, decltype(cmp)> agenda(cmp);

        int n = static_cast<int>(symbols.size());
        std::vector<int> prev(n), next(n), version(n, 0);
        for (int i = 0; i < n; ++i) {
            prev[i] = i - 1;
            next[i] = i + 1 < n ? i + 1 : -1;
        }
        auto push_pair = [&](int left) {
            int right = next[left];
            if (right < 0) return;
            auto it = ranks_.find({symbols[left], symbols[right]});
            if (it != ranks_.end()) agenda.push({it->second, left, version[left]});
        };
        for (int i = 0; i + 1 < n; ++i) push_pair(i);

        std::vector<bool> alive(n, true);
        while (!agenda.empty()) {
            Cand c = agenda.top();
            agenda.pop();
            int left = c.left;
            if (!alive[left] || version[left] != c.version) continue;
            int right = next[left];
            if (right < 0 || !alive[right]) continue;
            auto it = ranks_.find({symbols[left], symbols[right]});
            if (it == ranks_.end() || it->second != c.rank) continue;

            symbols[left] += symbols[right];
            alive[right] = false;
            ++version[left];
            next[left] = next[right];
            if (next[right] >= 0) prev[next[right]] = left;
            if (prev[left] >= 0) {
                ++version[prev[left]];
                push_pair(prev[left]);
            }
            push_pair(left);
        }

        std::vector<std::string> merged;
        merged.reserve(symbols.size());
        for (int i = 0; i >= 0 && i < n; i = next[i])
            if (alive[i]) merged.push_back(std::move(symbols[i]));
        symbols = std::move(merged);
    }

    std::string name_;
    bool byte_level_;
    std::unordered_map<std::string, int> vocab_;
    std::unordered_map<std::pair<std::string, std::string>, int, PairHash> ranks_;
};

}  // namespace

TokenizerRef make_char_profile() { return std::make_shared<CharProfile>(); }

TokenizerRef make_whitespace_profile() { return std::make_shared<WhitespaceProfile>(); }

TokenizerRef make_bpe_profile(std::string name,
                              std::vector<std::pair<std::string, int>> vocab,
                              std::vector<std::pair<std::string, std::string>> merges,
                              bool byte_level) {
    return std::make_shared<BpeProfile>(std::move(name), std::move(vocab),
                                        std::move(merges), byte_level);
}

TokenizerRef load_bpe(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::LoadError, path + ": invalid JSON: " + e.what());
    }

    if (!doc.contains("model") || !doc["model"].is_object())
        throw Error(Errc::LoadError, path + ": missing \"model\" section");
    const auto& model = doc["model"];
    if (!model.contains("vocab") || !model["vocab"].is_object())
        throw Error(Errc::LoadError, path + ": missing \"model.vocab\" section");
    if (!model.contains("merges") || !model["merges"].is_array())
        throw Error(Errc::LoadError, path + ": missing \"model.merges\" section");

    std::vector<std::pair<std::string, int>> vocab;
    vocab.reserve(model["vocab"].size());
    for (auto it = model["vocab"].begin(); it != model["vocab"].end(); ++it) {
        if (!it.value().is_number_integer())
            throw Error(Errc::LoadError, path + ": non-integer id in \"model.vocab\"");
        vocab.emplace_back(it.key(), it.value().get<int>());
    }

    std::vector<std::pair<std::string, std::string>> merges;
    merges.reserve(model["merges"].size());
    int idx = 0;
    for (const auto& entry : model["merges"]) {
        if (entry.is_string()) {
            std::string s = entry.get<std::string>();
            std::size_t space = s.find(' ');
            if (space == std::string::npos || space == 0 || space + 1 == s.size())
                throw Error(Errc::LoadError, path + ": bad entry " + std::to_string(idx) +
                                                 " in \"model.merges\"");
            merges.emplace_back(s.substr(0, space), s.substr(space + 1));
        } else if (entry.is_array() && entry.size() == 2 && entry[0].is_string() &&
                   entry[1].is_string()) {
            merges.emplace_back(entry[0].get<std::string>(), entry[1].get<std::string>());
        } else {
            throw Error(Errc::LoadError, path + ": bad entry " + std::to_string(idx) +
                                             " in \"model.merges\"");
        }
        ++idx;
    }

    bool byte_level = false;
    if (doc.contains("pre_tokenizer"))
        byte_level = doc["pre_tokenizer"].dump().find("ByteLevel") != std::string::npos;

    std::string name = "bpe";
    if (doc.contains("name") && doc["name"].is_string()) name = doc["name"].get<std::string>();

    return make_bpe_profile(std::move(name), std::move(vocab), std::move(merges), byte_level);
}

TokenizerRef resolve_tokenizer(const std::string& spec) {
    if (spec == "chars") return make_char_profile();
    if (spec == "whitespace") return make_whitespace_profile();
    return load_bpe(spec);
}

double char_token_ratio(const TokenizerProfile& tok, std::string_view s) {
    if (s.empty()) throw Error(Errc::EmptyInput, "cannot compute ratio of an empty string");
    std::size_t tokens = tok.token_count(s);
    if (tokens == 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(utf8_length(s)) / static_cast<double>(tokens);
}

namespace {

bool ratio_prunable(const TokenizerProfile& tok, const PruneConfig& config,
                    const Attr& attr) {
    if (attr.name == "node") return false;
    if (attr.value.empty()) return false;
    if (utf8_length(attr.value) <= static_cast<std::size_t>(config.ratio_min_len))
        return false;
    return char_token_ratio(tok, attr.value) < config.ratio_threshold;
}

void ratio_prune_node(DomNode& node, const TokenizerProfile& tok, const PruneConfig& config) {
    if (node.is_element()) {
        node.attributes.erase(
            std::remove_if(node.attributes.begin(), node.attributes.end(),
                           [&](const Attr& a) { return ratio_prunable(tok, config, a); }),
            node.attributes.end());
    }
    for (auto& c : node.children) ratio_prune_node(c, tok, config);
}

bool contains_wordlist_word(const std::string& value, const std::set<std::string>& wordlist) {
    std::string word;
    auto check = [&]() {
        bool hit = word.size() >= 3 && wordlist.count(word) > 0;
        word.clear();
        return hit;
    };
    for (char c : value) {
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
            word.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
        } else if (check()) {
            return true;
        }
    }
    return check();
}

}  // namespace

DomTree prune_attributes_by_ratio(const DomTree& tree, const TokenizerProfile& tok,
                                  const PruneConfig& config) {
    config.validate();
    DomTree out = tree;
    for (auto& r : out.roots) ratio_prune_node(r, tok, config);
    return out;
}

std::vector<RatioReport> analyze_pruning(const std::vector<DomTree>& corpus,
                                         const TokenizerProfile& tok,
                                         const std::vector<double>& thresholds,
                                         const std::set<std::string>& wordlist,
                                         const PruneConfig& config) {
    if (corpus.empty()) throw Error(Errc::EmptyInput, "analyze_pruning: empty corpus");
    if (wordlist.empty()) throw Error(Errc::EmptyInput, "analyze_pruning: empty wordlist");

    std::int64_t chars_before = 0, tokens_before = 0;
    for (const auto& tree : corpus) {
        std::string before = serialize(assign_node_ids(tree), config);
        chars_before += static_cast<std::int64_t>(utf8_length(before));
        tokens_before += static_cast<std::int64_t>(tok.token_count(before));
    }

    std::vector<RatioReport> reports;
    reports.reserve(thresholds.size());
    for (double threshold : thresholds) {
        PruneConfig cfg = config;
        cfg.ratio_threshold = threshold;
        cfg.validate();

        RatioReport report;
        report.threshold = threshold;
        report.chars_before = chars_before;
        report.tokens_before = tokens_before;

        std::map<std::pair<std::string, std::string>, int> pair_counts;
        int false_positives = 0;

        for (const auto& tree : corpus) {
            // count what the rule would remove, element by element
            struct Walk {
                const TokenizerProfile& tok;
                const PruneConfig& cfg;
                const std::set<std::string>& words;
                std::map<std::pair<std::string, std::string>, int>& counts;
                int& fp;
                int& pruned;
                void visit(const DomNode& n) {
                    if (n.is_element()) {
                        for (const auto& a : n.attributes) {
                            if (!ratio_prunable(tok, cfg, a)) continue;
                            ++counts[{n.tag, a.name}];
                            ++pruned;
                            if (contains_wordlist_word(a.value, words)) ++fp;
                        }
                    }
                    for (const auto& c : n.children) visit(c);
                }
            } walk{tok, cfg, wordlist, pair_counts, false_positives, report.values_pruned};
            for (const auto& r : tree.roots) walk.visit(r);

            std::string after = serialize(assign_node_ids(prune_attributes_by_ratio(tree, tok, cfg)), cfg);
            report.chars_after += static_cast<std::int64_t>(utf8_length(after));
            report.tokens_after += static_cast<std::int64_t>(tok.token_count(after));
        }

        report.false_positive_rate =
            report.values_pruned == 0
                ? 0.0
                : static_cast<double>(false_positives) / report.values_pruned;

        report.pruned_pairs.reserve(pair_counts.size());
        for (const auto& [key, count] : pair_counts)
            report.pruned_pairs.push_back({key.first, key.second, count});
        std::sort(report.pruned_pairs.begin(), report.pruned_pairs.end(),
                  [](const PrunedAttrCount& a, const PrunedAttrCount& b) {
                      if (a.count != b.count) return a.count > b.count;
                      if (a.tag != b.tag) return a.tag < b.tag;
                      return a.attr < b.attr;
                  });
        reports.push_back(std::move(report));
    }
    return reports;
}

std::set<std::string> load_wordlist(const std::string& path) {
    std::istringstream in(read_file(path));
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        std::string w = collapse_whitespace(line);
        if (!w.empty()) words.insert(to_lower(w));
    }
    return words;
}

} // namespace navkit
