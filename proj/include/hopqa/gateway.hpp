#pragma once
// Uniform access to chat-completion backends plus the labeled-field prompt
// grammar every reasoning module shares.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hopqa/errors.hpp"

namespace hopqa {

enum class BackendKind { scripted, http };

struct ModelSpec {
    BackendKind backend = BackendKind::scripted;
    std::string model_name = "scripted";
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::string endpoint;     // required iff backend == http
    double timeout = 30.0;    // seconds
    std::string api_key_env;  // env var holding the API key; empty = no auth

    void validate() const;
};

struct PromptTemplate {
    std::string name;
    std::string system_text;
    std::vector<std::string> input_fields;
    std::vector<std::string> output_fields;

    void validate() const;
};

struct Completion {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    bool approx_tokens = false;  // counts fell back to whitespace tokenization
};

// system_text followed by one "Label: value" line per input field, in
// template order. Throws MissingBinding for an uncovered input field.
std::string render(const PromptTemplate& tmpl,
                   const std::map<std::string, std::string>& bindings);

// Splits completion text at lines beginning with "Label:" for the expected
// labels. Labels may appear in any order, each at most once; a single
// missing label is satisfied by whatever text no label claimed.
std::map<std::string, std::string> parse_fields(const std::string& text,
                                                const std::vector<std::string>& expected);

// Parses a template file: instruction text, then an "Input fields are:"
// block and an "Output fields are:" block declaring the labels. The input
// declaration lines are stripped from system_text; the output declaration
// stays so the rendered prompt states its expected grammar.
PromptTemplate parse_template(const std::string& name, const std::string& file_text);
PromptTemplate load_template_file(const std::string& name, const std::string& path);

// The named template set one pipeline run works with.
class TemplateSet {
public:
    static const std::vector<std::string>& known_names();
    // Loads every known template from `<dir>/<name>.txt`.
    static TemplateSet load_dir(const std::string& dir);

    const PromptTemplate& get(const std::string& name) const;
    void put(PromptTemplate tmpl);
    // Content digest over all templates, for run manifests.
    std::string digest() const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

// One queued scripted response. An empty `match` matches any prompt;
// otherwise the entry is eligible only when `match` occurs in the prompt.
struct ScriptEntry {
    std::string match;
    std::string text;
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual Completion complete(const ModelSpec& spec, const std::string& prompt) = 0;
};

// Deterministic stand-in LLM replaying queued responses. Each call consumes
// the first unconsumed entry whose fingerprint matches the prompt. Queue
// access is serialized; identical queue + call sequence gives identical
// completions byte for byte.
class ScriptedBackend : public Backend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<ScriptEntry> entries);

    void push(ScriptEntry entry);
    void push_text(const std::string& text) { push({"", text, {}, {}}); }
    size_t remaining() const;

    static std::vector<ScriptEntry> parse_script_json(const std::string& json_text);
    static std::vector<ScriptEntry> load_script_file(const std::string& path);

    Completion complete(const ModelSpec& spec, const std::string& prompt) override;

private:
    mutable std::mutex mu_;
    std::vector<ScriptEntry> entries_;
    std::vector<bool> consumed_;
};

// De-facto chat-completion JSON protocol over HTTP: POST {model, messages,
// temperature, max_tokens}; the first choice's message content is the
// completion text.
class HttpBackend : public Backend {
public:
    Completion complete(const ModelSpec& spec, const std::string& prompt) override;
};

// Routes complete() calls to the backend matching the spec. Safe for
// concurrent use.
class Gateway {
public:
    Gateway();
    explicit Gateway(std::shared_ptr<ScriptedBackend> scripted);

    Completion complete(const ModelSpec& spec, const std::string& prompt);
    ScriptedBackend& scripted() { return *scripted_; }

private:
    std::shared_ptr<ScriptedBackend> scripted_;
    std::unique_ptr<HttpBackend> http_;
};

}  // namespace hopqa
