// hopqa: operator entry points for the multi-hop QA engine.
//   ingest  build the lexical index from a JSONL corpus
//   ask     solve one question and write its trace
//   eval    run a dataset under one config, report metrics
//   ablate  run a config matrix over a dataset
//   report  re-render the metrics table from a previous run

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "hopqa/harness.hpp"
#include "hopqa/text.hpp"

namespace fs = std::filesystem;
using namespace hopqa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitBackend = 4;

struct CommonFlags {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<int> parallel;
    std::optional<int> max_reflections;
    std::optional<std::string> backend;
    std::optional<std::string> script;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "pipeline config file (JSON)");
    cmd->add_option("--out-dir", flags.out_dir, "output directory");
    cmd->add_option("--parallel", flags.parallel, "batch parallelism bound");
    cmd->add_option("--max-reflections", flags.max_reflections, "reflection budget override");
    cmd->add_option("--backend", flags.backend, "model backend override (scripted|http)")
        ->check(CLI::IsMember({"scripted", "http"}));
    cmd->add_option("--script", flags.script, "scripted backend response file");
}

// flags override config file values, config file overrides defaults
PipelineConfig resolve_config(const CommonFlags& flags) {
    PipelineConfig cfg =
        flags.config_path.empty() ? PipelineConfig{} : load_config_file(flags.config_path);
    if (flags.parallel) cfg.parallel = *flags.parallel;
    if (flags.max_reflections) cfg.max_reflections = *flags.max_reflections;
    if (flags.script) cfg.script_path = *flags.script;
    if (flags.backend) {
        const BackendKind kind =
            *flags.backend == "http" ? BackendKind::http : BackendKind::scripted;
        auto retarget = [&](ModelSpec spec) {
            spec.backend = kind;
            if (kind == BackendKind::scripted) spec.endpoint.clear();
            return spec;
        };
        ModelMap models(retarget(cfg.models.default_spec()));
        for (const auto& [name, spec] : cfg.models.overrides())
            models.set_module(name, retarget(spec));
        cfg.models = models;
        cfg.judge = retarget(cfg.judge);
    }
    cfg.validate();
    return cfg;
}

std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '_' || c == '.' || c == '-';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? "q" : out;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
}

std::string file_sha256(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "";
    std::ostringstream buf;
    buf << in.rdbuf();
    return text::sha256_hex(buf.str());
}

void write_traces(const fs::path& dir, const std::vector<PipelineTrace>& traces) {
    for (const auto& t : traces)
        write_file(dir / (sanitize_filename(t.question.id) + ".json"), dump_trace(t));
}

RunManifest start_manifest(const CommonFlags& flags, const Runner& runner,
                           const std::string& dataset_path) {
    RunManifest m;
    m.run_id = new_run_id();
    m.config_path = flags.config_path;
    m.config_sha256 = flags.config_path.empty() ? "" : file_sha256(flags.config_path);
    m.dataset_path = dataset_path;
    m.templates_digest = runner.templates().digest();
    m.started = iso8601_utc_now();
    return m;
}

void finish_manifest(RunManifest m, const fs::path& out_dir) {
    m.finished = iso8601_utc_now();
    write_file(out_dir / "manifest.json", m.to_json().dump(2) + "\n");
}

void print_step_summary(const Attempt& attempt, const std::string& heading) {
    std::cout << heading << "\n";
    for (const auto& st : attempt.steps) {
        std::cout << "  " << st.step_index << ". " << st.constructed_query << "\n";
        std::cout << "     -> " << st.record.answer.text << " ["
                  << (st.step_verdict.accepted ? "accepted" : "rejected") << "]\n";
    }
}

int run_ask(const CommonFlags& flags, const std::string& question_text) {
    PipelineConfig cfg = resolve_config(flags);
    Runner runner(cfg);

    Question q;
    q.id = "q-" + text::sha256_hex(question_text).substr(0, 12);
    q.text = question_text;
    PipelineTrace trace = runner.ask(q, cfg);

    Json doc = to_json(trace);
    validate_trace_json(doc);
    const fs::path trace_path = fs::path(flags.out_dir) / (sanitize_filename(q.id) + ".json");
    write_file(trace_path, doc.dump(2) + "\n");

    std::cout << "route: " << route_name(trace.route) << "\n";
    if (trace.simple_attempt) print_step_summary(*trace.simple_attempt, "simple attempt:");
    for (size_t i = 0; i < trace.attempts.size(); ++i)
        print_step_summary(trace.attempts[i],
                           "attempt " + std::to_string(i + 1) + " (generation " +
                               std::to_string(trace.attempts[i].plan.generation) + "):");
    std::cout << "final: " << trace.final.text << "\n";
    std::cout << "verified: " << (trace.final_verdict.accepted ? "yes" : "no") << "\n";
    std::cout << "tokens: " << trace.token_usage << "\n";
    std::cout << "trace: " << trace_path.string() << "\n";
    if (!trace.error.empty()) {
        std::cerr << "error: " << trace.error << "\n";
        return kExitBackend;
    }
    return kExitOk;
}

int run_eval(const CommonFlags& flags, const std::string& dataset_path,
             const std::string& label) {
    PipelineConfig cfg = resolve_config(flags);
    Runner runner(cfg);
    auto dataset = load_dataset(dataset_path);

    RunManifest manifest = start_manifest(flags, runner, dataset_path);
    fs::create_directories(flags.out_dir);
    JudgmentCache cache((fs::path(flags.out_dir) / "judgments.jsonl").string());

    EvalResult result = runner.eval(dataset, cfg, label, &cache);
    write_traces(fs::path(flags.out_dir) / "traces" / label, result.traces);

    std::vector<MetricsRow> rows{result.row};
    write_file(fs::path(flags.out_dir) / "metrics.csv", metrics_csv(rows, label));
    write_file(fs::path(flags.out_dir) / "metrics.txt", metrics_table(rows, label));
    finish_manifest(manifest, flags.out_dir);

    std::cout << metrics_table(rows, label);
    std::cout << "judge calls: " << result.judge_calls << "\n";
    return kExitOk;
}

int run_ablate(const CommonFlags& flags, const std::string& dataset_path,
               const std::string& matrix_path) {
    PipelineConfig cfg = resolve_config(flags);
    Runner runner(cfg);
    auto dataset = load_dataset(dataset_path);
    auto [baseline, overlays] = load_matrix_file(matrix_path);

    RunManifest manifest = start_manifest(flags, runner, dataset_path);
    fs::create_directories(flags.out_dir);
    JudgmentCache cache((fs::path(flags.out_dir) / "judgments.jsonl").string());

    std::vector<EvalResult> results;
    std::vector<MetricsRow> rows = runner.ablate(dataset, overlays, &cache, &results);
    for (size_t i = 0; i < overlays.size(); ++i)
        write_traces(fs::path(flags.out_dir) / "traces" / overlays[i].first, results[i].traces);

    write_file(fs::path(flags.out_dir) / "metrics.csv", metrics_csv(rows, baseline));
    write_file(fs::path(flags.out_dir) / "metrics.txt", metrics_table(rows, baseline));
    finish_manifest(manifest, flags.out_dir);

    std::cout << metrics_table(rows, baseline);
    return kExitOk;
}

std::vector<MetricsRow> rows_from_csv(const std::string& csv) {
    std::vector<MetricsRow> rows;
    std::istringstream in(csv);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header || text::trim(line).empty()) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() < 7) throw DataError("metrics.csv row has too few columns");
        MetricsRow r;
        r.config_label = cells[0];
        r.n = std::stoi(cells[1]);
        r.cover_em = std::stod(cells[2]);
        r.llm_eval = std::stod(cells[3]);
        r.avg = std::stod(cells[4]);
        r.avg_tokens = std::stod(cells[5]);
        r.avg_wall_time = std::stod(cells[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

int run_report(const CommonFlags& flags) {
    const fs::path csv_path = fs::path(flags.out_dir) / "metrics.csv";
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw DataError("no metrics.csv under " + flags.out_dir);
    std::ostringstream buf;
    buf << in.rdbuf();
    auto rows = rows_from_csv(buf.str());
    if (rows.empty()) throw DataError("metrics.csv holds no rows");
    std::cout << metrics_table(rows, rows.front().config_label);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"modular multi-hop retrieval-augmented QA engine"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* ingest_cmd = app.add_subcommand("ingest", "build the lexical index from a JSONL corpus");
    std::string corpus_path, index_path;
    ingest_cmd->add_option("corpus", corpus_path, "corpus JSONL (doc_id, title, text)")->required();
    ingest_cmd->add_option("index", index_path, "index output path")->required();

    auto* ask_cmd = app.add_subcommand("ask", "solve a single question");
    std::string question_text;
    ask_cmd->add_option("question", question_text, "the question text")->required();
    add_common(ask_cmd, flags);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a dataset under one config");
    std::string dataset_path, label = "default";
    eval_cmd->add_option("dataset", dataset_path, "dataset JSONL (id, question, answers)")
        ->required();
    eval_cmd->add_option("--label", label, "metrics row label");
    add_common(eval_cmd, flags);

    auto* ablate_cmd = app.add_subcommand("ablate", "run a config matrix over a dataset");
    std::string matrix_path;
    ablate_cmd->add_option("dataset", dataset_path, "dataset JSONL")->required();
    ablate_cmd->add_option("matrix", matrix_path, "config matrix JSON")->required();
    add_common(ablate_cmd, flags);

    auto* report_cmd = app.add_subcommand("report", "re-render metrics from a previous run");
    add_common(report_cmd, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest_cmd->parsed()) {
            std::cout << ingest(corpus_path, index_path) << "\n";
            return kExitOk;
        }
        if (ask_cmd->parsed()) return run_ask(flags, question_text);
        if (eval_cmd->parsed()) return run_eval(flags, dataset_path, label);
        if (ablate_cmd->parsed()) return run_ablate(flags, dataset_path, matrix_path);
        if (report_cmd->parsed()) return run_report(flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TemplateError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const BackendTimeout& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const BackendRejected& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const ScriptExhausted& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const RemoteRetrieverError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
