#include "navkit/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "navkit/errors.hpp"
#include "navkit/util.hpp"

namespace navkit {

// ---------------------------------------------------------------------------
// HTTP client
// ---------------------------------------------------------------------------

struct HttpLlmClient::Impl {
    EndpointConfig cfg;
    httplib::Client cli;

    explicit Impl(EndpointConfig c) : cfg(std::move(c)), cli(cfg.base_url) {
        cli.set_connection_timeout(cfg.timeout_sec, 0);
        cli.set_read_timeout(cfg.timeout_sec, 0);
    }
};

HttpLlmClient::HttpLlmClient(EndpointConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {
    if (impl_->cfg.base_url.empty())
        throw Error(Errc::BadConfig, "endpoint base_url is empty");
}

HttpLlmClient::~HttpLlmClient() = default;

std::vector<std::string> HttpLlmClient::complete(const std::string& prompt,
                                                 const GenParams& params) {
    const EndpointConfig& cfg = impl_->cfg;

    nlohmann::json body{
        {"model", cfg.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", params.temperature},
        {"top_p", params.top_p},
        {"n", params.n_samples},
        {"max_tokens", params.max_new_tokens},
    };
    if (params.seed != 0) body["seed"] = params.seed;
    std::string payload = body.dump();

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_failure = "no attempt made";
    int delay_ms = cfg.backoff_ms;
    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
        auto res = impl_->cli.Post(cfg.path, headers, payload, "application/json");
        if (!res) {
            last_failure = "transport failure (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status >= 500) {
            last_failure = "server status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw Error(Errc::ApiError, "endpoint returned status " +
                                            std::to_string(res->status) + ": " +
                                            res->body.substr(0, 200));
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ApiError, std::string("unparsable endpoint response: ") + e.what());
        }
        if (!doc.contains("choices") || !doc["choices"].is_array())
            throw Error(Errc::ApiError, "endpoint response has no \"choices\" array");
        std::vector<std::string> out;
        for (const auto& choice : doc["choices"]) {
            if (choice.contains("message") && choice["message"].contains("content") &&
                choice["message"]["content"].is_string())
                out.push_back(choice["message"]["content"].get<std::string>());
            else if (choice.contains("text") && choice["text"].is_string())
                out.push_back(choice["text"].get<std::string>());
        }
        return out;
    }
    throw Error(Errc::TransportError, "endpoint " + cfg.base_url + cfg.path + " failed after " +
                                          std::to_string(cfg.max_attempts) +
                                          " attempts; last: " + last_failure);
}

// ---------------------------------------------------------------------------
// Scripted client
// ---------------------------------------------------------------------------

ScriptedLlmClient::ScriptedLlmClient(std::vector<std::vector<std::string>> script)
    : script_(std::move(script)) {}

ScriptedLlmClient ScriptedLlmClient::from_jsonl(const std::string& path) {
    std::vector<std::vector<std::string>> script;
    std::istringstream in(read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (collapse_whitespace(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::LoadError,
                        path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
        }
        std::vector<std::string> call;
        if (obj.contains("responses") && obj["responses"].is_array()) {
            for (const auto& r : obj["responses"])
                if (r.is_string()) call.push_back(r.get<std::string>());
        } else if (obj.contains("response") && obj["response"].is_string()) {
            call.push_back(obj["response"].get<std::string>());
        } else {
            throw Error(Errc::LoadError, path + ":" + std::to_string(lineno) +
                                             ": expected \"response\" or \"responses\"");
        }
        script.push_back(std::move(call));
    }
    return ScriptedLlmClient(std::move(script));
}

std::vector<std::string> ScriptedLlmClient::complete(const std::string& prompt,
                                                     const GenParams&) {
    prompts_.push_back(prompt);
    if (cursor_ >= script_.size())
        throw Error(Errc::ApiError, "scripted client exhausted after " +
                                        std::to_string(script_.size()) + " calls");
    return script_[cursor_++];
}

// ---------------------------------------------------------------------------
// Sampling and voting
// ---------------------------------------------------------------------------

std::vector<Action> sample_actions(LlmClient& client, const std::string& prompt,
                                   const PrunedDom& dom, const GenParams& params) {
    std::vector<std::string> completions = client.complete(prompt, params);
    std::vector<Action> valid;
    int unparsable = 0, unknown_node = 0;
    for (const std::string& text : completions) {
        Action a;
        try {
            a = parse_action(text);
        } catch (const Error&) {
            ++unparsable;
            continue;
        }
        if (!dom.find(a.node)) {
            ++unknown_node;
            continue;
        }
        valid.push_back(std::move(a));
    }
    if (valid.empty())
        throw Error(Errc::NoValidAction,
                    "no valid action among " + std::to_string(completions.size()) +
                        " samples (" + std::to_string(unparsable) + " unparsable, " +
                        std::to_string(unknown_node) + " with unknown node)");
    return valid;
}

namespace {

std::string vote_key(const Action& a) {
    return op_name(a.op) + '\x1f' + std::to_string(a.node) + '\x1f' + action_payload(a);
}

}  // namespace

Action majority_vote(const std::vector<Action>& actions) {
    if (actions.empty()) throw Error(Errc::EmptyInput, "majority_vote over no actions");
    struct Group {
        int count = 0;
        std::size_t first = 0;
    };
    std::map<std::string, Group> groups;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        auto [it, inserted] = groups.try_emplace(vote_key(actions[i]));
        if (inserted) it->second.first = i;
        ++it->second.count;
    }
    const Group* best = nullptr;
    for (const auto& [key, group] : groups) {
        if (!best || group.count > best->count ||
            (group.count == best->count && group.first < best->first))
            best = &group;
    }
    return actions[best->first];
}

// ---------------------------------------------------------------------------
// Viewport
// ---------------------------------------------------------------------------

std::vector<EnvAction> viewport_guard(const Action& action, const Box& box,
                                      const Viewport& vp) {
    if (vp.height <= 0) throw Error(Errc::BadConfig, "viewport height must be positive");

    double h = vp.height;
    // k whole-viewport scrolls (positive = down); the box fits the view at
    // scroll k iff k_min ≤ k ≤ k_max.
    long k_min = static_cast<long>(std::ceil((box.y + box.h - (vp.top + h)) / h));
    long k_max = static_cast<long>(std::floor((box.y - vp.top) / h));

    long k;
    if (k_min > k_max) k = k_max;                    // box taller than the viewport: show its top
    else if (k_min > 0) k = k_min;
    else if (k_max < 0) k = k_max;
    else k = 0;

    std::vector<EnvAction> out;
    for (long i = 0; i < std::labs(k); ++i) {
        EnvAction scroll;
        scroll.kind = k > 0 ? EnvAction::Kind::ScrollDown : EnvAction::Kind::ScrollUp;
        out.push_back(std::move(scroll));
    }
    EnvAction act;
    act.kind = EnvAction::Kind::Act;
    act.action = action;
    out.push_back(std::move(act));
    return out;
}

// ---------------------------------------------------------------------------
// Stage prompts
// ---------------------------------------------------------------------------

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::Refine: return "refine";
        case Stage::Generate: return "generate";
        case Stage::Translate: return "translate";
        case Stage::Check: return "check";
    }
    return "unknown";
}

StagePrompts StagePrompts::load(const std::string& dir) {
    StagePrompts p;
    p.refine = read_file(dir + "/refine.txt");
    p.select = read_file(dir + "/select.txt");
    p.translate = read_file(dir + "/translate.txt");
    p.check = read_file(dir + "/check.txt");
    return p;
}

std::string fill_template(const std::string& tpl,
                          const std::vector<std::pair<std::string, std::string>>& slots) {
    std::string out = tpl;
    for (const auto& [key, value] : slots) {
        std::string needle = "{" + key + "}";
        std::size_t at = 0;
        while ((at = out.find(needle, at)) != std::string::npos) {
            out.replace(at, needle.size(), value);
            at += value.size();
        }
    }
    return out;
}

CheckVerdict parse_check_summary(const std::string& completion) {
    CheckVerdict verdict;
    std::size_t at = completion.rfind("Summary:");
    if (at == std::string::npos) return verdict;
    std::size_t start = at + 8;
    std::size_t end = completion.find('\n', start);
    std::string rest = completion.substr(
        start, end == std::string::npos ? std::string::npos : end - start);
    rest = collapse_whitespace(rest);
    if (rest.rfind("completed", 0) == 0) {
        verdict.parsed = true;
        verdict.completed = true;
        std::string tail = rest.substr(9);
        if (!tail.empty() && tail[0] == ',') {
            tail = collapse_whitespace(tail.substr(1));
            if (!tail.empty()) verdict.answer = tail;
        }
    } else if (rest.rfind("incomplete", 0) == 0) {
        verdict.parsed = true;
        verdict.completed = false;
    }
    return verdict;
}

// ---------------------------------------------------------------------------
// Scripted environment
// ---------------------------------------------------------------------------

ScriptedEnv::ScriptedEnv(std::vector<ScriptedPage> pages, const PruneConfig& config) {
    if (pages.empty()) throw Error(Errc::EmptyInput, "scripted environment needs pages");
    for (ScriptedPage& in : pages) {
        Page page;
        page.url = std::move(in.url);
        page.axtree = std::move(in.axtree);
        page.dom = assign_node_ids(prune(parse_html(in.html), config));
        page.serialized = serialize(page.dom, config);
        page.boxes = std::move(in.boxes);
        page.vp = in.vp;
        pages_.push_back(std::move(page));
    }
}

ScriptedEnv ScriptedEnv::from_jsonl(const std::string& path, const PruneConfig& config) {
    std::vector<ScriptedPage> pages;
    std::istringstream in(read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (collapse_whitespace(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::LoadError,
                        path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
        }
        ScriptedPage page;
        if (!obj.contains("url") || !obj["url"].is_string() || !obj.contains("html") ||
            !obj["html"].is_string())
            throw Error(Errc::LoadError,
                        path + ":" + std::to_string(lineno) + ": page needs url and html");
        page.url = obj["url"].get<std::string>();
        page.html = obj["html"].get<std::string>();
        if (obj.contains("axtree") && obj["axtree"].is_string())
            page.axtree = obj["axtree"].get<std::string>();
        if (obj.contains("boxes") && obj["boxes"].is_object()) {
            for (auto it = obj["boxes"].begin(); it != obj["boxes"].end(); ++it) {
                const auto& v = it.value();
                if (!v.is_array() || v.size() != 4)
                    throw Error(Errc::LoadError, path + ":" + std::to_string(lineno) +
                                                     ": box must be [x, y, w, h]");
                page.boxes[std::stoi(it.key())] =
                    Box{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(),
                        v[3].get<double>()};
            }
        }
        if (obj.contains("viewport") && obj["viewport"].is_array() &&
            obj["viewport"].size() == 2)
            page.vp = Viewport{obj["viewport"][0].get<double>(),
                               obj["viewport"][1].get<double>()};
        pages.push_back(std::move(page));
    }
    return ScriptedEnv(std::move(pages), config);
}

std::string ScriptedEnv::url() { return pages_[cursor_].url; }
const PrunedDom& ScriptedEnv::dom() { return pages_[cursor_].dom; }
std::string ScriptedEnv::observation() { return pages_[cursor_].serialized; }
std::string ScriptedEnv::axtree() { return pages_[cursor_].axtree; }

std::optional<Box> ScriptedEnv::box_of(int node) {
    const auto& boxes = pages_[cursor_].boxes;
    auto it = boxes.find(node);
    if (it == boxes.end()) return std::nullopt;
    return it->second;
}

Viewport ScriptedEnv::viewport() { return pages_[cursor_].vp; }

void ScriptedEnv::apply(const std::vector<EnvAction>& actions) {
    bool acted = false;
    for (const EnvAction& a : actions) {
        applied_.push_back(a);
        if (a.kind == EnvAction::Kind::Act) acted = true;
    }
    if (acted && cursor_ + 1 < pages_.size()) ++cursor_;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

std::string hash_hex(const std::string& s) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

std::string history_blocks(const std::vector<Action>& history) {
    std::string out;
    for (const Action& a : history) out += format_action(a);
    return out;
}

std::string first_or_empty(const std::vector<std::string>& v) {
    return v.empty() ? std::string() : v.front();
}

// Top-k (op, node, payload) groups by count (earliest-first tie-break),
// numbered for the arbitration prompt.
std::vector<Action> top_candidates(const std::vector<Action>& actions, int k) {
    struct Group {
        int count = 0;
        std::size_t first = 0;
    };
    std::map<std::string, Group> groups;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        auto [it, inserted] = groups.try_emplace(vote_key(actions[i]));
        if (inserted) it->second.first = i;
        ++it->second.count;
    }
    std::vector<Group> ordered;
    for (const auto& [key, g] : groups) ordered.push_back(g);
    std::sort(ordered.begin(), ordered.end(), [](const Group& a, const Group& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.first < b.first;
    });
    std::vector<Action> out;
    for (const Group& g : ordered) {
        out.push_back(actions[g.first]);
        if (static_cast<int>(out.size()) >= k) break;
    }
    return out;
}

}  // namespace

PipelineState run_pipeline(const std::string& objective, const std::string& domain,
                           EnvAdapter& env, PipelineClients clients,
                           const StagePrompts& prompts, const GenParams& params,
                           const PipelineLimits& limits) {
    if (!clients.agent || !clients.helper)
        throw Error(Errc::BadConfig, "pipeline needs both an agent and a helper client");
    if (limits.max_rounds < 1)
        throw Error(Errc::BadConfig, "pipeline step limit must be at least 1");

    GenParams helper_params = params;
    helper_params.n_samples = 1;

    PipelineState state;
    state.objective = objective;

    // Stage 1: objective refinement, once.
    {
        state.stage = Stage::Refine;
        std::string prompt =
            fill_template(prompts.refine, {{"domain", domain}}) + "\n" + objective + "\n";
        std::string completion = first_or_empty(clients.helper->complete(prompt, helper_params));
        state.refined_objective = collapse_whitespace(completion);
        state.transcript.push_back({Stage::Refine, hash_hex(prompt), completion, ""});
    }
    const std::string& goal =
        state.refined_objective.empty() ? state.objective : state.refined_objective;

    for (int round = 1; round <= limits.max_rounds; ++round) {
        state.rounds = round;

        // Stage 2: next-action generation with validity filtering and voting.
        state.stage = Stage::Generate;
        std::string gen_prompt = build_prompt(goal, env.url(), env.observation(), state.history);
        std::vector<Action> candidates =
            sample_actions(*clients.agent, gen_prompt, env.dom(), params);
        Action voted;
        std::string gen_note;
        if (limits.arbitrate && candidates.size() > 1) {
            std::vector<Action> top = top_candidates(candidates, limits.arbitration_k);
            std::string list;
            for (std::size_t i = 0; i < top.size(); ++i)
                list += "No." + std::to_string(i + 1) + "\n" + format_action(top[i]);
            std::string prompt = prompts.select + "\nObjective: " + goal +
                                 "\nURL: " + env.url() + "\nAccessibility tree:\n" +
                                 env.axtree() + "\nPrevious steps:\n" +
                                 history_blocks(state.history) + "Candidates:\n" + list;
            std::string completion =
                first_or_empty(clients.helper->complete(prompt, helper_params));
            gen_note = completion;
            std::size_t digit = completion.find_first_of("0123456789");
            std::size_t pick = 0;
            if (digit != std::string::npos) {
                pick = static_cast<std::size_t>(
                    std::strtol(completion.c_str() + digit, nullptr, 10));
                pick = pick >= 1 && pick <= top.size() ? pick - 1 : 0;
            }
            voted = top[pick];
        } else {
            voted = majority_vote(candidates);
        }
        voted.index = round;
        state.transcript.push_back(
            {Stage::Generate, hash_hex(gen_prompt), gen_note, format_action(voted)});

        // Stage 3: translate to the environment dialect.
        state.stage = Stage::Translate;
        std::string t_prompt = prompts.translate + "\nObjective: " + goal +
                               "\nURL: " + env.url() + "\nHTML snippet: " + voted.target +
                               "\nAccessibility tree:\n" + env.axtree() +
                               "\nPrevious steps:\n" + history_blocks(state.history) +
                               "Proposed next step:\n" + format_action(voted);
        std::string translated = collapse_whitespace(
            first_or_empty(clients.helper->complete(t_prompt, helper_params)));
        state.transcript.push_back({Stage::Translate, hash_hex(t_prompt), translated, ""});

        // Viewport check, then hand the action to the environment.
        std::vector<EnvAction> env_actions;
        if (auto box = env.box_of(voted.node))
            env_actions = viewport_guard(voted, *box, env.viewport());
        else
            env_actions.push_back({EnvAction::Kind::Act, voted, ""});
        for (EnvAction& a : env_actions)
            if (a.kind == EnvAction::Kind::Act) a.translated = translated;
        env.apply(env_actions);
        state.history.push_back(voted);

        // Stage 4: completeness evaluation.
        state.stage = Stage::Check;
        std::string c_prompt = prompts.check + "\nObjective: " + state.objective +
                               "\nDetailed objective: " + goal + "\nURL: " + env.url() +
                               "\nAccessibility tree:\n" + env.axtree() +
                               "\nPrevious steps:\n" + history_blocks(state.history);
        std::string completion =
            first_or_empty(clients.helper->complete(c_prompt, helper_params));
        state.transcript.push_back({Stage::Check, hash_hex(c_prompt), completion, ""});
        CheckVerdict verdict = parse_check_summary(completion);
        if (verdict.parsed && verdict.completed) {
            state.done = true;
            state.answer = verdict.answer;
            state.reason = "completed";
            return state;
        }
        if (!verdict.parsed) state.reason = "check stage gave no Summary line; continuing";
    }
    state.done = false;
    state.reason = "step limit (" + std::to_string(limits.max_rounds) + " rounds) reached";
    return state;
}

} // namespace navkit
