// navkit: command-line front end for the workflow-to-training-data toolkit.
//
// Subcommands
//   preprocess  parse → prune → ratio-prune → assign ids → serialize one page
//   analyze     ratio-threshold sweep over an HTML corpus
//   dataset     build next-step (prompt, label) examples from workflows JSONL
//   eval        score predicted actions against gold actions
//   agent       step (sample + vote once) | pipeline (four-stage loop)
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "navkit/agent.hpp"
#include "navkit/chunking.hpp"
#include "navkit/dom.hpp"
#include "navkit/errors.hpp"
#include "navkit/eval.hpp"
#include "navkit/tokenizer.hpp"
#include "navkit/util.hpp"
#include "navkit/workflow.hpp"

namespace {

using namespace navkit;

// "-" means stdout.
void write_output(const std::string& path, const std::string& content) {
    if (path == "-" || path.empty()) {
        std::cout << content;
        std::cout.flush();
        return;
    }
    write_file(path, content);
}

PruneConfig make_config(const std::string& whitelist, double threshold, int min_len) {
    PruneConfig config = whitelist.empty() ? default_prune_config()
                                           : load_prune_config(whitelist);
    if (threshold > 0) config.ratio_threshold = threshold;
    if (min_len >= 0) config.ratio_min_len = min_len;
    config.validate();
    return config;
}

// --- preprocess --------------------------------------------------------------

struct PreprocessOpts {
    std::string in, out = "-", tokenizer, whitelist;
    double threshold = 0;  // 0: keep the config's default
    int min_len = -1;      // -1: keep the config's default
};

void run_preprocess(const PreprocessOpts& o) {
    PruneConfig config = make_config(o.whitelist, o.threshold, o.min_len);
    DomTree tree = prune(parse_html(read_file(o.in)), config);
    if (!o.tokenizer.empty()) {
        TokenizerRef tok = resolve_tokenizer(o.tokenizer);
        tree = prune_attributes_by_ratio(tree, *tok, config);
    }
    PrunedDom dom = assign_node_ids(tree);
    std::string serialized = serialize(dom, config);
    if (!serialized.empty()) serialized += "\n";
    write_output(o.out, serialized);
}

// --- analyze -----------------------------------------------------------------

struct AnalyzeOpts {
    std::vector<std::string> corpus;
    std::string tokenizer, wordlist, whitelist, out = "-";
    std::vector<double> thresholds{1.25, 1.5, 1.75, 2.0, 2.25, 2.5};
};

void run_analyze(const AnalyzeOpts& o) {
    PruneConfig config = make_config(o.whitelist, 0, -1);
    TokenizerRef tok = resolve_tokenizer(o.tokenizer);
    std::set<std::string> words;
    if (!o.wordlist.empty()) words = load_wordlist(o.wordlist);
    std::vector<DomTree> corpus;
    corpus.reserve(o.corpus.size());
    for (const std::string& path : o.corpus)
        corpus.push_back(prune(parse_html(read_file(path)), config));

    std::vector<RatioReport> reports =
        analyze_pruning(corpus, *tok, o.thresholds, words, config);

    nlohmann::json arr = nlohmann::json::array();
    for (const RatioReport& r : reports) {
        nlohmann::json pairs = nlohmann::json::array();
        for (const PrunedAttrCount& pc : r.pruned_pairs)
            pairs.push_back({{"tag", pc.tag}, {"attr", pc.attr}, {"count", pc.count}});
        arr.push_back({{"threshold", r.threshold},
                       {"values_pruned", r.values_pruned},
                       {"false_positive_rate", r.false_positive_rate},
                       {"chars_before", r.chars_before},
                       {"chars_after", r.chars_after},
                       {"tokens_before", r.tokens_before},
                       {"tokens_after", r.tokens_after},
                       {"pruned_pairs", pairs}});
    }
    write_output(o.out, arr.dump(2) + "\n");
}

// --- dataset -----------------------------------------------------------------

struct DatasetOpts {
    std::string workflows, tokenizer, whitelist, out = "-", rejects;
    int budget = 16384;
    int jobs = 1;
};

DatasetResult build_dataset_parallel(const std::vector<Workflow>& workflows,
                                     const TokenizerProfile& tok, int budget,
                                     const PruneConfig& config, int jobs) {
    // One build_dataset call per workflow, merged in input order, so the
    // output is byte-identical for every --jobs value.
    std::vector<DatasetResult> parts(workflows.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < workflows.size();) {
            try {
                parts[i] = build_dataset({workflows[i]}, tok, budget, config);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::size_t n_threads = std::min<std::size_t>(
        static_cast<std::size_t>(std::max(1, jobs)), std::max<std::size_t>(1, workflows.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    DatasetResult merged;
    for (DatasetResult& part : parts) {
        for (auto& e : part.examples) merged.examples.push_back(std::move(e));
        for (auto& r : part.rejected) merged.rejected.push_back(std::move(r));
        for (auto& s : part.skips) merged.skips.push_back(std::move(s));
        merged.workflows_accepted += part.workflows_accepted;
        merged.steps_accepted += part.steps_accepted;
    }
    return merged;
}

void run_dataset(const DatasetOpts& o) {
    PruneConfig config = make_config(o.whitelist, 0, -1);
    TokenizerRef tok = resolve_tokenizer(o.tokenizer);
    LoadResult loaded = load_workflows(o.workflows);
    DatasetResult result = o.jobs <= 1
        ? build_dataset(loaded.workflows, *tok, o.budget, config)
        : build_dataset_parallel(loaded.workflows, *tok, o.budget, config, o.jobs);

    std::string train;
    for (const TrainingExample& e : result.examples) {
        nlohmann::json row{{"workflow_id", e.workflow_id},
                           {"step_index", e.step_index},
                           {"prompt", e.prompt},
                           {"label", e.label},
                           {"uninformative_description", e.uninformative_description}};
        train += row.dump() + "\n";
    }
    write_output(o.out, train);

    if (!o.rejects.empty()) {
        std::string rejects;
        for (const RejectedRecord& r : loaded.rejects) {
            nlohmann::json row{{"kind", "load"}, {"line", r.line}, {"id", r.id},
                               {"reason", r.reason}};
            rejects += row.dump() + "\n";
        }
        for (const RejectedWorkflow& r : result.rejected) {
            nlohmann::json row{{"kind", "workflow"}, {"id", r.id}, {"reason", r.reason}};
            rejects += row.dump() + "\n";
        }
        for (const SkippedStep& s : result.skips) {
            nlohmann::json row{{"kind", "step"}, {"id", s.workflow_id},
                               {"step_index", s.step_index}, {"reason", s.reason}};
            rejects += row.dump() + "\n";
        }
        write_output(o.rejects, rejects);
    }
    std::fprintf(stderr,
                 "navkit: %d workflow(s) accepted (%zu rejected), %zu example(s) "
                 "written (%zu step(s) skipped)\n",
                 result.workflows_accepted,
                 result.rejected.size() + loaded.rejects.size(),
                 result.examples.size(), result.skips.size());
}

// --- eval --------------------------------------------------------------------

struct EvalOpts {
    std::string pred, gold, ranking, out = "-", whitelist;
    std::string mode = "strict";
    std::string format = "text";
};

void run_eval(const EvalOpts& o) {
    PruneConfig config = make_config(o.whitelist, 0, -1);
    auto preds = load_predictions(o.pred);
    auto gold = load_gold(o.gold);
    EvalMode mode = o.mode == "refined" ? EvalMode::Refined : EvalMode::Strict;
    std::map<std::pair<std::string, int>, std::vector<int>> ranking;
    if (!o.ranking.empty()) ranking = load_ranking(o.ranking);
    EvalReport report = evaluate_predictions(
        preds, gold, mode, o.ranking.empty() ? nullptr : &ranking, config);
    write_output(o.out, o.format == "json" ? render_report_json(report)
                                           : render_report_text(report));
}

// --- agent -------------------------------------------------------------------

struct AgentOpts {
    std::string objective, domain = "web";
    std::string env;       // scripted environment JSONL
    std::string mock;      // scripted LLM JSONL (instead of an endpoint)
    std::string prompts;   // stage prompt directory (pipeline)
    std::string out = "-";
    EndpointConfig endpoint;
    GenParams params;
    int limit = 15;
    bool arbitrate = false;
    int arbitration_k = 3;
};

std::unique_ptr<LlmClient> make_client(const AgentOpts& o) {
    if (!o.mock.empty())
        return std::make_unique<ScriptedLlmClient>(ScriptedLlmClient::from_jsonl(o.mock));
    return std::make_unique<HttpLlmClient>(o.endpoint);
}

void run_agent_step(const AgentOpts& o) {
    std::fprintf(stderr, "navkit: sampling seed %llu\n",
                 static_cast<unsigned long long>(o.params.seed));
    ScriptedEnv env = ScriptedEnv::from_jsonl(o.env);
    std::unique_ptr<LlmClient> client = make_client(o);
    std::string prompt = build_prompt(o.objective, env.url(), env.observation(), {});
    std::vector<Action> actions = sample_actions(*client, prompt, env.dom(), o.params);
    Action voted = majority_vote(actions);
    std::fprintf(stderr, "navkit: %zu valid candidate(s)\n", actions.size());
    write_output(o.out, format_action(voted));
}

void run_agent_pipeline(const AgentOpts& o) {
    std::fprintf(stderr, "navkit: sampling seed %llu\n",
                 static_cast<unsigned long long>(o.params.seed));
    ScriptedEnv env = ScriptedEnv::from_jsonl(o.env);
    StagePrompts prompts = StagePrompts::load(o.prompts);
    std::unique_ptr<LlmClient> client = make_client(o);
    PipelineLimits limits;
    limits.max_rounds = o.limit;
    limits.arbitrate = o.arbitrate;
    limits.arbitration_k = o.arbitration_k;
    PipelineState state = run_pipeline(o.objective, o.domain, env,
                                       {client.get(), client.get()}, prompts,
                                       o.params, limits);

    nlohmann::json history = nlohmann::json::array();
    for (const Action& a : state.history) history.push_back(format_action(a));
    nlohmann::json transcript = nlohmann::json::array();
    for (const TranscriptEntry& e : state.transcript)
        transcript.push_back({{"stage", stage_name(e.stage)},
                              {"prompt_hash", e.prompt_hash},
                              {"completion", e.completion},
                              {"action", e.action}});
    nlohmann::json doc{{"done", state.done},
                       {"reason", state.reason},
                       {"answer", state.answer ? nlohmann::json(*state.answer)
                                               : nlohmann::json()},
                       {"rounds", state.rounds},
                       {"refined_objective", state.refined_objective},
                       {"history", history},
                       {"transcript", transcript}};
    write_output(o.out, doc.dump(2) + "\n");
}

void add_agent_common(CLI::App* sub, const std::shared_ptr<AgentOpts>& o,
                      bool pipeline) {
    sub->add_option("--objective", o->objective, "Task objective")->required();
    sub->add_option("--env", o->env, "Scripted environment JSONL (one page per line)")
        ->required();
    auto* backend = sub->add_option_group("backend", "Completion source");
    backend->add_option("--mock", o->mock, "Scripted completions JSONL");
    backend->add_option("--base-url", o->endpoint.base_url,
                        "Chat-completions endpoint, e.g. http://127.0.0.1:8301");
    backend->require_option(1);
    sub->add_option("--model", o->endpoint.model, "Model name sent to the endpoint");
    sub->add_option("--endpoint-path", o->endpoint.path, "Completions route");
    sub->add_option("--api-key-env", o->endpoint.api_key_env,
                    "Environment variable holding the bearer token");
    sub->add_option("--max-attempts", o->endpoint.max_attempts, "Retry budget");
    sub->add_option("--timeout", o->endpoint.timeout_sec, "Per-request timeout (s)");
    sub->add_option("--n", o->params.n_samples, "Samples per generation call");
    sub->add_option("--temperature", o->params.temperature, "Sampling temperature");
    sub->add_option("--top-p", o->params.top_p, "Nucleus sampling mass");
    sub->add_option("--max-new-tokens", o->params.max_new_tokens, "Generation cap");
    sub->add_option("--seed", o->params.seed, "Sampling seed (0: endpoint default)");
    sub->add_option("--out", o->out, "Output path, - for stdout");
    if (pipeline) {
        sub->add_option("--domain", o->domain, "Site domain fed to the refine stage");
        sub->add_option("--prompts", o->prompts,
                        "Directory with refine/select/translate/check.txt")
            ->required();
        sub->add_option("--limit", o->limit, "Round limit before giving up");
        sub->add_flag("--arbitrate", o->arbitrate,
                      "Let the helper pick among the top voted candidates");
        sub->add_option("--arbitration-k", o->arbitration_k,
                        "Candidates offered to the arbiter");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"navkit: web-workflow recordings in, next-step training data and "
                 "agent evaluations out"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; flags take precedence");
    app.set_version_flag("--version", "navkit 0.1.0");

    auto pre = std::make_shared<PreprocessOpts>();
    CLI::App* sub_pre = app.add_subcommand(
        "preprocess", "Prune one HTML page and print it with node ids");
    sub_pre->add_option("--in", pre->in, "Raw HTML file")->required();
    sub_pre->add_option("--out", pre->out, "Output path, - for stdout");
    auto* pre_tok = sub_pre->add_option(
        "--tokenizer", pre->tokenizer, "chars | whitespace | tokenizer JSON path");
    sub_pre->add_option("--threshold", pre->threshold,
                        "Character-to-token ratio below which attribute values "
                        "are dropped (requires --tokenizer)")
        ->needs(pre_tok);
    sub_pre->add_option("--min-len", pre->min_len,
                        "Only values longer than this many characters are "
                        "ratio-checked")
        ->needs(pre_tok);
    sub_pre->add_option("--whitelist", pre->whitelist, "Tag/attribute whitelist file");
    sub_pre->callback([pre] { run_preprocess(*pre); });

    auto ana = std::make_shared<AnalyzeOpts>();
    CLI::App* sub_ana = app.add_subcommand(
        "analyze", "Sweep ratio thresholds over a corpus and report the fallout");
    sub_ana->add_option("--corpus", ana->corpus, "HTML files")->required()
        ->expected(-1);
    sub_ana->add_option("--tokenizer", ana->tokenizer,
                        "chars | whitespace | tokenizer JSON path")
        ->required();
    sub_ana->add_option("--thresholds", ana->thresholds, "Thresholds to sweep")
        ->expected(-1);
    sub_ana->add_option("--wordlist", ana->wordlist,
                        "English wordlist for the false-positive rate");
    sub_ana->add_option("--whitelist", ana->whitelist, "Tag/attribute whitelist file");
    sub_ana->add_option("--out", ana->out, "Output path, - for stdout");
    sub_ana->callback([ana] { run_analyze(*ana); });

    auto ds = std::make_shared<DatasetOpts>();
    CLI::App* sub_ds = app.add_subcommand(
        "dataset", "Turn recorded workflows into (prompt, label) training rows");
    sub_ds->add_option("--workflows", ds->workflows, "Workflows JSONL")->required();
    sub_ds->add_option("--tokenizer", ds->tokenizer,
                       "chars | whitespace | tokenizer JSON path")
        ->required();
    sub_ds->add_option("--budget", ds->budget, "Model context window in tokens");
    sub_ds->add_option("--out", ds->out, "Training JSONL path, - for stdout");
    sub_ds->add_option("--rejects", ds->rejects,
                       "Where to write rejected workflows and skipped steps");
    sub_ds->add_option("--whitelist", ds->whitelist, "Tag/attribute whitelist file");
    sub_ds->add_option("--jobs", ds->jobs,
                       "Worker threads (output order is unaffected)");
    sub_ds->callback([ds] { run_dataset(*ds); });

    auto ev = std::make_shared<EvalOpts>();
    CLI::App* sub_ev = app.add_subcommand(
        "eval", "Score predicted next actions against gold actions");
    sub_ev->add_option("--pred", ev->pred, "Predictions JSONL")->required();
    sub_ev->add_option("--gold", ev->gold, "Gold JSONL")->required();
    sub_ev->add_option("--mode", ev->mode, "strict | refined")
        ->check(CLI::IsMember({"strict", "refined"}));
    sub_ev->add_option("--ranking", ev->ranking,
                       "Candidate rankings JSONL for multi-stage remapping");
    sub_ev->add_option("--format", ev->format, "text | json")
        ->check(CLI::IsMember({"text", "json"}));
    sub_ev->add_option("--out", ev->out, "Output path, - for stdout");
    sub_ev->add_option("--whitelist", ev->whitelist, "Tag/attribute whitelist file");
    sub_ev->callback([ev] { run_eval(*ev); });

    CLI::App* sub_agent = app.add_subcommand("agent", "Run the acting side");
    sub_agent->require_subcommand(1);
    auto step = std::make_shared<AgentOpts>();
    CLI::App* sub_step = sub_agent->add_subcommand(
        "step", "Sample next-action candidates once and print the vote winner");
    add_agent_common(sub_step, step, false);
    sub_step->callback([step] { run_agent_step(*step); });
    auto pipe = std::make_shared<AgentOpts>();
    CLI::App* sub_pipe = sub_agent->add_subcommand(
        "pipeline", "Refine, then generate/translate/check rounds until done");
    add_agent_common(sub_pipe, pipe, true);
    sub_pipe->callback([pipe] { run_agent_pipeline(*pipe); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints help or the usage error
        return code == 0 ? 0 : 2;
    } catch (const navkit::Error& e) {
        std::fprintf(stderr, "navkit: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "navkit: %s\n", e.what());
        return 1;
    }
    return 0;
}
