#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "navkit/dom.hpp"

namespace navkit {

/// A subword tokenizer. Only `encode` matters to the pipeline; token ids are
/// opaque. encode is deterministic and encode("") is empty.
class TokenizerProfile {
public:
    virtual ~TokenizerProfile() = default;
    virtual const std::string& name() const = 0;
    virtual std::vector<int> encode(std::string_view s) const = 0;

    std::size_t token_count(std::string_view s) const { return encode(s).size(); }
};

using TokenizerRef = std::shared_ptr<const TokenizerProfile>;

/// Test profile: one token per Unicode code point (every ratio is exactly 1).
TokenizerRef make_char_profile();

/// Test profile: one token per run of non-whitespace characters.
TokenizerRef make_whitespace_profile();

/// Build a BPE profile directly from a vocabulary and ranked merge list.
/// `byte_level` maps input bytes through the printable-byte table first
/// (the GPT-2 scheme); without it, symbols start as code points.
TokenizerRef make_bpe_profile(std::string name,
                              std::vector<std::pair<std::string, int>> vocab,
                              std::vector<std::pair<std::string, std::string>> merges,
                              bool byte_level = false);

/// Loads the common JSON serialization: "model.vocab" (token -> id) and
/// "model.merges" (ranked pairs, either "a b" strings or [a, b] arrays).
/// A ByteLevel pre_tokenizer entry switches byte-level mapping on.
/// Throws Errc::LoadError naming the offending section.
TokenizerRef load_bpe(const std::string& path);

/// Resolves "chars" / "whitespace" to the built-in test profiles and
/// anything else as a tokenizer-file path.
TokenizerRef resolve_tokenizer(const std::string& spec);

/// len(s) / len(encode(s)), with len in code points. Empty s is an error;
/// a nonempty s that encodes to zero tokens yields +infinity.
double char_token_ratio(const TokenizerProfile& tok, std::string_view s);

/// Removes an attribute (never the element, never `node`) when its value is
/// longer than config.ratio_min_len code points and its ratio falls below
/// config.ratio_threshold. Structure is untouched.
DomTree prune_attributes_by_ratio(const DomTree& tree, const TokenizerProfile& tok,
                                  const PruneConfig& config);

struct PrunedAttrCount {
    std::string tag;
    std::string attr;
    int count = 0;
};

struct RatioReport {
    double threshold = 0.0;
    std::vector<PrunedAttrCount> pruned_pairs;  // sorted by count descending
    double false_positive_rate = 0.0;           // in [0, 1]
    int values_pruned = 0;
    std::int64_t chars_before = 0;
    std::int64_t chars_after = 0;
    std::int64_t tokens_before = 0;
    std::int64_t tokens_after = 0;
};

/// Sweep of the ratio rule over a corpus of whitelist-pruned DOMs. A pruned
/// value counts as a false positive when it contains a wordlist word of
/// length >= 3 after splitting on non-alphabetic characters.
std::vector<RatioReport> analyze_pruning(const std::vector<DomTree>& corpus,
                                         const TokenizerProfile& tok,
                                         const std::vector<double>& thresholds,
                                         const std::set<std::string>& wordlist,
                                         const PruneConfig& config = default_prune_config());

/// One lowercase word per line.
std::set<std::string> load_wordlist(const std::string& path);

} // namespace navkit
