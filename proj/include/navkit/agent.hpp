#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "navkit/dom.hpp"
#include "navkit/workflow.hpp"

namespace navkit {

struct GenParams {
    double temperature = 0.6;
    double top_p = 0.95;
    int n_samples = 5;
    int max_new_tokens = 512;
    std::uint64_t seed = 0;  // forwarded to the endpoint when nonzero
};

struct EndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8301
    std::string model;
    std::string path = "/v1/chat/completions";
    std::string api_key_env = "NAVKIT_API_KEY";  // credential read from this env var
    int max_attempts = 3;                        // transport errors / 5xx retried
    int backoff_ms = 250;                        // doubled after each failed attempt
    int timeout_sec = 60;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    /// Returns the endpoint's completions for one prompt (usually n_samples).
    virtual std::vector<std::string> complete(const std::string& prompt,
                                              const GenParams& params) = 0;
};

/// Chat-completions HTTP client (messages in, choices out) with retries.
class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(EndpointConfig config);
    ~HttpLlmClient() override;
    std::vector<std::string> complete(const std::string& prompt,
                                      const GenParams& params) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Replays a fixed script; call i returns script[i] regardless of n_samples.
/// Running past the end → ApiError. Issued prompts are retained for tests.
class ScriptedLlmClient final : public LlmClient {
public:
    explicit ScriptedLlmClient(std::vector<std::vector<std::string>> script);
    /// JSONL, one call per line: {"responses": [..]} or {"response": ".."}.
    static ScriptedLlmClient from_jsonl(const std::string& path);
    std::vector<std::string> complete(const std::string& prompt,
                                      const GenParams& params) override;
    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    std::vector<std::vector<std::string>> script_;
    std::size_t cursor_ = 0;
    std::vector<std::string> prompts_;
};

/// Samples completions, parses each as a five-line action, and keeps the
/// valid ones (known op, node present in dom). All invalid → NoValidAction.
std::vector<Action> sample_actions(LlmClient& client, const std::string& prompt,
                                   const PrunedDom& dom, const GenParams& params);

/// Most frequent (op, node, payload) group wins; ties go to the group whose
/// first member was generated earliest. Empty input → EmptyInput.
Action majority_vote(const std::vector<Action>& actions);

// --- viewport ---------------------------------------------------------------

struct Box {
    double x = 0, y = 0, w = 0, h = 0;  // page coordinates
};

struct Viewport {
    double top = 0;
    double height = 0;  // must be positive
};

struct EnvAction {
    enum class Kind { ScrollUp, ScrollDown, Act };
    Kind kind = Kind::Act;
    Action action;           // meaningful for Act
    std::string translated;  // env-dialect form of the action, when available
};

/// If the box lies fully inside [vp.top, vp.top + vp.height] the action goes
/// through alone; otherwise the minimal number of one-viewport scrolls that
/// brings the box into view is prepended (top-aligned best effort when the
/// box cannot fully fit).
std::vector<EnvAction> viewport_guard(const Action& action, const Box& box,
                                      const Viewport& vp);

// --- four-stage pipeline ------------------------------------------------

enum class Stage { Refine, Generate, Translate, Check };
const char* stage_name(Stage stage);

/// Verbatim stage instruction texts, loaded from refine.txt / select.txt /
/// translate.txt / check.txt in one directory.
struct StagePrompts {
    std::string refine;
    std::string select;  // post-vote arbitration (optional stage)
    std::string translate;
    std::string check;
    static StagePrompts load(const std::string& dir);
};

/// Replaces each "{key}" with its value; unknown braces stay verbatim.
std::string fill_template(const std::string& tpl,
                          const std::vector<std::pair<std::string, std::string>>& slots);

struct CheckVerdict {
    bool parsed = false;  // a Summary line was found and understood
    bool completed = false;
    std::optional<std::string> answer;
};

/// Reads the completion's last "Summary:" line: "completed[, answer]" or
/// "incomplete".
CheckVerdict parse_check_summary(const std::string& completion);

struct TranscriptEntry {
    Stage stage = Stage::Refine;
    std::string prompt_hash;  // fnv1a64 of the full prompt, hex
    std::string completion;   // first completion
    std::string action;       // five-line text when the stage produced one
};

struct PipelineLimits {
    int max_rounds = 15;
    bool arbitrate = false;  // post-vote LLM candidate selection
    int arbitration_k = 3;   // top groups offered to the arbiter
};

struct PipelineState {
    Stage stage = Stage::Refine;
    std::string objective;
    std::string refined_objective;
    std::vector<Action> history;
    bool done = false;
    std::optional<std::string> answer;  // set only when done
    std::string reason;                 // why the run stopped
    int rounds = 0;
    std::vector<TranscriptEntry> transcript;
};

/// What the pipeline needs from a browser-side environment.
class EnvAdapter {
public:
    virtual ~EnvAdapter() = default;
    virtual std::string url() = 0;
    virtual const PrunedDom& dom() = 0;
    virtual std::string observation() = 0;  // serialized DOM chunk the agent sees
    virtual std::string axtree() = 0;       // accessibility snippet for helper stages
    virtual std::optional<Box> box_of(int node) = 0;
    virtual Viewport viewport() = 0;
    virtual void apply(const std::vector<EnvAction>& actions) = 0;
};

struct ScriptedPage {
    std::string url;
    std::string html;  // raw page, processed on construction
    std::string axtree;
    std::map<int, Box> boxes;
    Viewport vp{0, 1000};
};

/// Deterministic environment: advances one page per applied Act.
class ScriptedEnv final : public EnvAdapter {
public:
    explicit ScriptedEnv(std::vector<ScriptedPage> pages,
                         const PruneConfig& config = default_prune_config());
    /// JSONL, one page per line: {url, html, axtree?, boxes?: {"id": [x,y,w,h]}, viewport?: [top, height]}.
    static ScriptedEnv from_jsonl(const std::string& path,
                                  const PruneConfig& config = default_prune_config());

    std::string url() override;
    const PrunedDom& dom() override;
    std::string observation() override;
    std::string axtree() override;
    std::optional<Box> box_of(int node) override;
    Viewport viewport() override;
    void apply(const std::vector<EnvAction>& actions) override;

    const std::vector<EnvAction>& applied() const { return applied_; }

private:
    struct Page {
        std::string url;
        std::string axtree;
        PrunedDom dom;
        std::string serialized;
        std::map<int, Box> boxes;
        Viewport vp;
    };
    std::vector<Page> pages_;
    std::size_t cursor_ = 0;
    std::vector<EnvAction> applied_;
};

struct PipelineClients {
    LlmClient* agent = nullptr;   // Generate stage
    LlmClient* helper = nullptr;  // Refine / arbitration / Translate / Check
};

/// Refine once, then Generate → Translate → Check rounds until the Check
/// stage reports completion or max_rounds runs out.
PipelineState run_pipeline(const std::string& objective, const std::string& domain,
                           EnvAdapter& env, PipelineClients clients,
                           const StagePrompts& prompts, const GenParams& params,
                           const PipelineLimits& limits = {});

} // namespace navkit
