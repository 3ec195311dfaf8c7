#include "hopqa/harness.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "hopqa/text.hpp"

namespace hopqa {

namespace {

void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
}

BackendKind backend_from_name(const std::string& name) {
    if (name == "scripted") return BackendKind::scripted;
    if (name == "http") return BackendKind::http;
    throw ConfigError("backend must be \"scripted\" or \"http\", got \"" + name + "\"");
}

ModelSpec spec_from_json(const Json& j, ModelSpec base) {
    reject_unknown_keys(j,
                        {"backend", "model_name", "temperature", "max_output_tokens", "endpoint",
                         "timeout", "api_key_env"},
                        "model spec");
    if (j.contains("backend")) {
        base.backend = backend_from_name(j.at("backend").get<std::string>());
        if (base.backend == BackendKind::scripted && !j.contains("endpoint")) base.endpoint.clear();
    }
    if (j.contains("model_name")) base.model_name = j.at("model_name").get<std::string>();
    if (j.contains("temperature")) base.temperature = j.at("temperature").get<double>();
    if (j.contains("max_output_tokens"))
        base.max_output_tokens = j.at("max_output_tokens").get<int>();
    if (j.contains("endpoint")) base.endpoint = j.at("endpoint").get<std::string>();
    if (j.contains("timeout")) base.timeout = j.at("timeout").get<double>();
    if (j.contains("api_key_env")) base.api_key_env = j.at("api_key_env").get<std::string>();
    return base;
}

void apply_enable(EnableFlags& flags, const Json& j) {
    reject_unknown_keys(j, {"qd", "qc", "qr", "pr", "av", "rd", "simple_qa"}, "enable");
    if (j.contains("qd")) flags.qd = j.at("qd").get<bool>();
    if (j.contains("qc")) flags.qc = j.at("qc").get<bool>();
    if (j.contains("qr")) flags.qr = j.at("qr").get<bool>();
    if (j.contains("pr")) flags.pr = j.at("pr").get<bool>();
    if (j.contains("av")) flags.av = j.at("av").get<bool>();
    if (j.contains("rd")) flags.rd = j.at("rd").get<bool>();
    if (j.contains("simple_qa")) flags.simple_qa = j.at("simple_qa").get<bool>();
}

void apply_retrieval(RetrieverConfig& r, const Json& j) {
    reject_unknown_keys(
        j, {"kind", "top_k", "remote_endpoint", "index_path", "passage_char_budget", "timeout"},
        "retrieval");
    if (j.contains("kind")) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "local_lexical")
            r.kind = RetrieverKind::local_lexical;
        else if (kind == "remote")
            r.kind = RetrieverKind::remote;
        else
            throw ConfigError("retrieval.kind must be \"local_lexical\" or \"remote\"");
    }
    if (j.contains("top_k")) r.top_k = j.at("top_k").get<int>();
    if (j.contains("remote_endpoint")) r.remote_endpoint = j.at("remote_endpoint").get<std::string>();
    if (j.contains("index_path")) r.index_path = j.at("index_path").get<std::string>();
    if (j.contains("passage_char_budget"))
        r.passage_char_budget = j.at("passage_char_budget").get<int>();
    if (j.contains("timeout")) r.timeout = j.at("timeout").get<double>();
}

void apply_overlay_keys(PipelineConfig& cfg, const Json& doc, bool allow_label) {
    std::vector<const char*> allowed = {"enable",       "model",           "modules",
                                        "judge",        "max_reflections", "per_step_retries",
                                        "retrieval",    "templates_dir",   "script",
                                        "parallel"};
    if (allow_label) allowed.push_back("label");
    for (const auto& [key, value] : doc.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("unknown key \"" + key + "\" in config");
    }

    if (doc.contains("enable")) apply_enable(cfg.enable, doc.at("enable"));
    if (doc.contains("model")) cfg.models.set_default(spec_from_json(doc.at("model"),
                                                                     cfg.models.default_spec()));
    if (doc.contains("modules")) {
        for (const auto& [module, spec] : doc.at("modules").items())
            cfg.models.set_module(module, spec_from_json(spec, cfg.models.for_module(module)));
    }
    if (doc.contains("judge"))
        cfg.judge = spec_from_json(doc.at("judge"), cfg.judge);
    if (doc.contains("max_reflections")) cfg.max_reflections = doc.at("max_reflections").get<int>();
    if (doc.contains("per_step_retries"))
        cfg.per_step_retries = doc.at("per_step_retries").get<int>();
    if (doc.contains("retrieval")) apply_retrieval(cfg.retrieval, doc.at("retrieval"));
    if (doc.contains("templates_dir")) cfg.templates_dir = doc.at("templates_dir").get<std::string>();
    if (doc.contains("script")) cfg.script_path = doc.at("script").get<std::string>();
    if (doc.contains("parallel")) cfg.parallel = doc.at("parallel").get<int>();
}

}  // namespace

PipelineConfig config_from_json(const Json& doc) {
    PipelineConfig cfg;
    cfg.judge = cfg.models.default_spec();
    apply_overlay_keys(cfg, doc, false);
    if (!doc.contains("judge")) cfg.judge = cfg.models.default_spec();
    cfg.validate();
    return cfg;
}

PipelineConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    Json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(doc);
}

PipelineConfig apply_config_overlay(PipelineConfig cfg, const Json& overlay) {
    apply_overlay_keys(cfg, overlay, true);
    cfg.validate();
    return cfg;
}

std::vector<Question> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset file " + path);
    std::vector<Question> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        Json obj;
        try {
            obj = Json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("dataset line " + std::to_string(lineno) + ": invalid JSON: " +
                            e.what());
        }
        if (!obj.contains("id") || !obj.at("id").is_string())
            throw DataError("dataset line " + std::to_string(lineno) + ": missing string \"id\"");
        if (!obj.contains("question") || !obj.at("question").is_string())
            throw DataError("dataset line " + std::to_string(lineno) +
                            ": missing string \"question\"");
        if (!obj.contains("answers") || !obj.at("answers").is_array() ||
            obj.at("answers").empty())
            throw DataError("dataset line " + std::to_string(lineno) +
                            ": missing non-empty \"answers\" list");
        Question q;
        q.id = obj.at("id").get<std::string>();
        q.text = obj.at("question").get<std::string>();
        for (const auto& a : obj.at("answers")) {
            if (!a.is_string())
                throw DataError("dataset line " + std::to_string(lineno) +
                                ": answers must be strings");
            q.gold_answers.push_back(a.get<std::string>());
        }
        q.validate();
        out.push_back(std::move(q));
    }
    return out;
}

JudgmentCache::JudgmentCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        Json obj = Json::parse(line, nullptr, false);
        if (obj.is_discarded()) continue;  // ignore corrupt cache lines
        entries_[{obj.value("question_id", ""), obj.value("prediction_sha256", "")}] =
            obj.value("llm_eval", 0);
    }
}

std::optional<int> JudgmentCache::lookup(const std::string& question_id,
                                         const std::string& prediction) const {
    auto it = entries_.find({question_id, text::sha256_hex(prediction)});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void JudgmentCache::store(const std::string& question_id, const std::string& prediction,
                          int verdict) {
    const std::string hash = text::sha256_hex(prediction);
    entries_[{question_id, hash}] = verdict;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    Json obj;
    obj["question_id"] = question_id;
    obj["prediction_sha256"] = hash;
    obj["llm_eval"] = verdict;
    out << obj.dump() << "\n";
}

Json RunManifest::to_json() const {
    Json j;
    j["run_id"] = run_id;
    j["config_path"] = config_path;
    j["config_sha256"] = config_sha256;
    j["dataset_path"] = dataset_path;
    j["templates_digest"] = templates_digest;
    j["started"] = started;
    j["finished"] = finished;
    return j;
}

std::string new_run_id() {
    static std::atomic<uint32_t> counter{0};
    std::random_device rd;
    char buf[64];
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::snprintf(buf, sizeof(buf), "%04d%02d%02d-%02d%02d%02d-%04x%02x", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, rd() & 0xFFFF,
                  counter++ & 0xFF);
    return buf;
}

std::string iso8601_utc_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

void parallel_for(size_t count, int parallel, const std::function<void(size_t)>& fn) {
    if (parallel <= 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> threads;
    const int n = std::min<int>(parallel, static_cast<int>(count));
    threads.reserve(n);
    for (int t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
}

Runner::Runner(const PipelineConfig& base) : base_(base) {
    base_.validate();
    templates_ = TemplateSet::load_dir(base_.templates_dir);
    if (!base_.script_path.empty()) {
        gateway_ = std::make_unique<Gateway>(std::make_shared<ScriptedBackend>(
            ScriptedBackend::load_script_file(base_.script_path)));
    } else {
        gateway_ = std::make_unique<Gateway>();
    }
    retriever_ = make_retriever(base_.retrieval);
}

PipelineTrace Runner::ask(const Question& q, const PipelineConfig& cfg) const {
    Engine engine(cfg, *gateway_, templates_, *retriever_);
    return engine.solve(q);
}

EvalResult Runner::eval(const std::vector<Question>& dataset, const PipelineConfig& cfg,
                        const std::string& label, JudgmentCache* cache) const {
    if (dataset.empty()) throw PreconditionError("eval: dataset is empty");
    validate_label(label);
    Engine engine(cfg, *gateway_, templates_, *retriever_);

    EvalResult result;
    result.traces.resize(dataset.size());
    parallel_for(dataset.size(), cfg.parallel,
                 [&](size_t i) { result.traces[i] = engine.solve(dataset[i]); });

    // judging runs sequentially in dataset order for scripted determinism
    ModelMap judge_models(cfg.judge);
    ReasoningModules judge(*gateway_, templates_, judge_models);
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Question& q = dataset[i];
        const std::string& prediction = result.traces[i].final.text;
        Judgment judgment;
        judgment.question_id = q.id;
        try {
            judgment.cover_em = cover_em(prediction, q.gold_answers);
        } catch (const Error&) {
            judgment.cover_em = 0;
        }
        if (auto cached = cache ? cache->lookup(q.id, prediction) : std::nullopt) {
            judgment.llm_eval = *cached;
        } else {
            try {
                CallLog judge_log;
                judgment.llm_eval = judge.llm_eval(q, prediction, q.gold_answers, judge_log) ? 1 : 0;
                ++result.judge_calls;
                if (cache) cache->store(q.id, prediction, judgment.llm_eval);
            } catch (const Error&) {
                judgment.llm_eval = 0;  // judging failure scores zero, run continues
            }
        }
        result.judgments.push_back(judgment);
    }
    result.row = aggregate(result.traces, result.judgments, label);
    return result;
}

std::vector<MetricsRow> Runner::ablate(const std::vector<Question>& dataset,
                                       const std::vector<std::pair<std::string, Json>>& overlays,
                                       JudgmentCache* cache,
                                       std::vector<EvalResult>* results) const {
    if (overlays.empty()) throw PreconditionError("ablate: no configs");
    // validate the whole matrix before running anything
    std::vector<std::pair<std::string, PipelineConfig>> configs;
    for (const auto& [label, overlay] : overlays) {
        validate_label(label);
        configs.emplace_back(label, apply_config_overlay(base_, overlay));
    }
    std::vector<MetricsRow> rows;
    for (const auto& [label, cfg] : configs) {
        EvalResult r = eval(dataset, cfg, label, cache);
        rows.push_back(r.row);
        if (results) results->push_back(std::move(r));
    }
    return rows;
}

std::pair<std::string, std::vector<std::pair<std::string, Json>>> load_matrix_file(
    const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open matrix file " + path);
    Json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("matrix file " + path + " is not valid JSON: " + e.what());
    }
    if (!doc.contains("configs") || !doc.at("configs").is_array() || doc.at("configs").empty())
        throw ConfigError("matrix file needs a non-empty \"configs\" array");
    std::vector<std::pair<std::string, Json>> overlays;
    for (const auto& entry : doc.at("configs")) {
        if (!entry.contains("label"))
            throw ConfigError("every matrix config needs a \"label\"");
        Json overlay = entry;
        std::string label = overlay.at("label").get<std::string>();
        overlay.erase("label");
        overlays.emplace_back(std::move(label), std::move(overlay));
    }
    std::string baseline = doc.value("baseline", overlays.front().first);
    bool found = false;
    for (const auto& [label, _] : overlays)
        if (label == baseline) found = true;
    if (!found) throw ConfigError("baseline \"" + baseline + "\" is not one of the config labels");
    return {baseline, overlays};
}

void validate_label(const std::string& label) {
    if (label.empty()) throw ConfigError("config label must be non-empty");
    for (char c : label) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '_' || c == '.' || c == '-';
        if (!ok)
            throw ConfigError("config label \"" + label +
                              "\" may only use letters, digits, '_', '.', '-'");
    }
}

}  // namespace hopqa
