#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "hopqa/gateway.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "hopqa/text.hpp"

namespace hopqa {

void ModelSpec::validate() const {
    if (temperature < 0) throw ConfigError("temperature must be >= 0");
    if (max_output_tokens <= 0) throw ConfigError("max_output_tokens must be > 0");
    if (backend == BackendKind::http && endpoint.empty())
        throw ConfigError("http backend requires an endpoint");
    if (backend == BackendKind::scripted && !endpoint.empty())
        throw ConfigError("scripted backend takes no endpoint");
}

void PromptTemplate::validate() const {
    if (output_fields.empty())
        throw TemplateError("template \"" + name + "\" declares no output fields");
    std::set<std::string> seen;
    for (const auto& lists : {input_fields, output_fields})
        for (const auto& label : lists)
            if (!seen.insert(label).second)
                throw TemplateError("template \"" + name + "\" label \"" + label +
                                    "\" is not unique");
}

std::string render(const PromptTemplate& tmpl,
                   const std::map<std::string, std::string>& bindings) {
    for (const auto& label : tmpl.input_fields)
        if (!bindings.count(label)) throw MissingBinding(label);
    if (tmpl.input_fields.empty()) return tmpl.system_text;

    std::string out = tmpl.system_text;
    if (!out.empty() && out.back() != '\n') out.push_back('\n');
    for (const auto& label : tmpl.input_fields) {
        out += label;
        out += ": ";
        out += bindings.at(label);
        out.push_back('\n');
    }
    return out;
}

namespace {

// Returns the expected label this line opens, or empty. Longest label wins
// so overlapping label names cannot shadow each other.
std::string match_label_line(std::string_view line, const std::vector<std::string>& expected) {
    std::string_view t = line;
    size_t indent = 0;
    while (indent < t.size() && (t[indent] == ' ' || t[indent] == '\t')) ++indent;
    t = t.substr(indent);
    std::string best;
    for (const auto& label : expected) {
        if (label.size() + 1 > t.size()) continue;
        if (t.substr(0, label.size()) == label && t[label.size()] == ':')
            if (label.size() > best.size()) best = label;
    }
    return best;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start <= text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

}  // namespace

std::map<std::string, std::string> parse_fields(const std::string& text,
                                                const std::vector<std::string>& expected) {
    if (expected.empty()) throw PreconditionError("parse_fields: expected labels are empty");

    std::map<std::string, std::string> fields;
    std::string unlabeled;
    std::string current_label;
    std::string current_value;

    auto close_current = [&] {
        if (current_label.empty()) {
            unlabeled += current_value;
        } else {
            fields[current_label] = std::string(text::trim(current_value));
        }
        current_value.clear();
    };

    for (const auto& line : split_lines(text)) {
        std::string label = match_label_line(line, expected);
        if (label.empty()) {
            current_value += line;
            current_value.push_back('\n');
            continue;
        }
        if (fields.count(label)) throw DuplicateField(label);
        close_current();
        current_label = label;
        fields[label] = "";  // reserve so duplicates are caught mid-scan
        size_t colon = line.find(':');
        current_value = line.substr(colon + 1);
        current_value.push_back('\n');
    }
    close_current();

    std::vector<std::string> missing;
    for (const auto& label : expected)
        if (!fields.count(label)) missing.push_back(label);

    std::string leftover(text::trim(unlabeled));
    if (missing.size() == 1 && !leftover.empty()) {
        fields[missing.front()] = leftover;
        missing.clear();
    }
    if (!missing.empty()) throw MissingField(missing.front());
    return fields;
}

PromptTemplate parse_template(const std::string& name, const std::string& file_text) {
    PromptTemplate tmpl;
    tmpl.name = name;

    auto lines = split_lines(file_text);
    std::string head;
    std::string tail;  // the output declaration block, kept in system_text
    enum { in_head, in_inputs, in_outputs } state = in_head;

    auto declared_label = [](const std::string& line) -> std::string {
        size_t colon = line.find(':');
        if (colon == std::string::npos || colon == 0) return "";
        return std::string(text::trim(line.substr(0, colon)));
    };

    for (const auto& line : lines) {
        auto t = text::trim(line);
        if (state == in_head) {
            if (t == "Input fields are:") {
                state = in_inputs;
                continue;
            }
            head += line;
            head.push_back('\n');
        } else if (state == in_inputs) {
            if (t == "Output fields are:") {
                state = in_outputs;
                tail += line;
                tail.push_back('\n');
                continue;
            }
            if (t.empty()) continue;
            std::string label = declared_label(line);
            if (label.empty())
                throw TemplateError("template \"" + name + "\": bad input field line \"" +
                                    std::string(t) + "\"");
            tmpl.input_fields.push_back(label);
        } else {
            if (t.empty()) continue;
            std::string label = declared_label(line);
            if (label.empty())
                throw TemplateError("template \"" + name + "\": bad output field line \"" +
                                    std::string(t) + "\"");
            tmpl.output_fields.push_back(label);
            tail += line;
            tail.push_back('\n');
        }
    }
    if (state != in_outputs)
        throw TemplateError("template \"" + name +
                            "\": missing \"Input fields are:\" / \"Output fields are:\" blocks");
    tmpl.system_text = head + tail;
    tmpl.validate();
    return tmpl;
}

PromptTemplate load_template_file(const std::string& name, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot open template file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_template(name, buf.str());
}

const std::vector<std::string>& TemplateSet::known_names() {
    static const std::vector<std::string> names = {
        "decomposition",       "construction",
        "retrieval_decision",  "query_rewriting",
        "reranking",           "answer_generation",
        "answer_verification", "final_answering",
        "improve_analysis",    "improve_decomposition",
        "final_answer_verification", "llm_evaluation",
    };
    return names;
}

TemplateSet TemplateSet::load_dir(const std::string& dir) {
    TemplateSet set;
    for (const auto& name : known_names())
        set.put(load_template_file(name, dir + "/" + name + ".txt"));
    return set;
}

const PromptTemplate& TemplateSet::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw TemplateError("unknown template \"" + name + "\"");
    return it->second;
}

void TemplateSet::put(PromptTemplate tmpl) {
    tmpl.validate();
    templates_[tmpl.name] = std::move(tmpl);
}

std::string TemplateSet::digest() const {
    std::string blob;
    for (const auto& [name, tmpl] : templates_) {
        blob += name;
        blob.push_back('\0');
        blob += tmpl.system_text;
        blob.push_back('\0');
        for (const auto& f : tmpl.input_fields) blob += f + ",";
        blob.push_back('\0');
        for (const auto& f : tmpl.output_fields) blob += f + ",";
        blob.push_back('\0');
    }
    return text::sha256_hex(blob);
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries)
    : entries_(std::move(entries)), consumed_(entries_.size(), false) {}

void ScriptedBackend::push(ScriptEntry entry) {
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(entry));
    consumed_.push_back(false);
}

size_t ScriptedBackend::remaining() const {
    std::lock_guard lock(mu_);
    size_t n = 0;
    for (bool c : consumed_)
        if (!c) ++n;
    return n;
}

std::vector<ScriptEntry> ScriptedBackend::parse_script_json(const std::string& json_text) {
    nlohmann::json doc = nlohmann::json::parse(json_text);
    if (!doc.is_array()) throw DataError("script file must hold a JSON array");
    std::vector<ScriptEntry> entries;
    for (const auto& item : doc) {
        ScriptEntry e;
        if (item.is_string()) {
            e.text = item.get<std::string>();
        } else if (item.is_object()) {
            e.text = item.at("text").get<std::string>();
            if (item.contains("match")) e.match = item.at("match").get<std::string>();
            if (item.contains("prompt_tokens")) e.prompt_tokens = item.at("prompt_tokens").get<int>();
            if (item.contains("completion_tokens"))
                e.completion_tokens = item.at("completion_tokens").get<int>();
        } else {
            throw DataError("script entries must be strings or objects");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ScriptEntry> ScriptedBackend::load_script_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open script file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_script_json(buf.str());
}

Completion ScriptedBackend::complete(const ModelSpec&, const std::string& prompt) {
    std::lock_guard lock(mu_);
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (consumed_[i]) continue;
        const auto& e = entries_[i];
        if (!e.match.empty() && prompt.find(e.match) == std::string::npos) continue;
        consumed_[i] = true;
        Completion c;
        c.text = e.text;
        c.prompt_tokens = e.prompt_tokens.value_or(text::whitespace_token_count(prompt));
        c.completion_tokens = e.completion_tokens.value_or(text::whitespace_token_count(e.text));
        c.approx_tokens = !e.prompt_tokens || !e.completion_tokens;
        return c;
    }
    throw ScriptExhausted();
}

namespace {

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must be a full URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Completion HttpBackend::complete(const ModelSpec& spec, const std::string& prompt) {
    auto [base, path] = split_url(spec.endpoint);
    httplib::Client client(base);
    const auto secs = static_cast<time_t>(spec.timeout);
    const auto usecs = static_cast<time_t>((spec.timeout - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!spec.api_key_env.empty()) {
        const char* key = std::getenv(spec.api_key_env.c_str());
        if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    nlohmann::json body;
    body["model"] = spec.model_name;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = spec.temperature;
    body["max_tokens"] = spec.max_output_tokens;

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw BackendTimeout(httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) throw BackendRejected(res->status, res->body);

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendRejected(res->status, std::string("unparseable response body: ") + e.what());
    }

    Completion c;
    try {
        c.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw BackendRejected(res->status, "response holds no choices[0].message.content");
    }
    if (doc.contains("usage") && doc["usage"].contains("prompt_tokens") &&
        doc["usage"].contains("completion_tokens")) {
        c.prompt_tokens = doc["usage"]["prompt_tokens"].get<int>();
        c.completion_tokens = doc["usage"]["completion_tokens"].get<int>();
    } else {
        c.prompt_tokens = text::whitespace_token_count(prompt);
        c.completion_tokens = text::whitespace_token_count(c.text);
        c.approx_tokens = true;
    }
    return c;
}

Gateway::Gateway() : scripted_(std::make_shared<ScriptedBackend>()), http_(new HttpBackend) {}

Gateway::Gateway(std::shared_ptr<ScriptedBackend> scripted)
    : scripted_(std::move(scripted)), http_(new HttpBackend) {
    if (!scripted_) scripted_ = std::make_shared<ScriptedBackend>();
}

Completion Gateway::complete(const ModelSpec& spec, const std::string& prompt) {
    if (prompt.empty()) throw PreconditionError("complete: prompt is empty");
    spec.validate();
    if (spec.backend == BackendKind::scripted) return scripted_->complete(spec, prompt);
    return http_->complete(spec, prompt);
}

}  // namespace hopqa
