#include "searchrag/llm_backend.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "searchrag/errors.hpp"
#include "searchrag/util.hpp"

namespace searchrag {

using nlohmann::json;

TokenDistribution build_distribution(
    const std::vector<std::pair<std::string, double>>& logprobs) {
    if (logprobs.empty()) throw InvalidLogprob("empty logprob list");
    TokenDistribution dist;
    dist.entries.reserve(logprobs.size());
    double sum = 0.0;
    for (const auto& [token, lp] : logprobs) {
        if (lp > 1e-6) {
            throw InvalidLogprob("positive logprob " + std::to_string(lp) + " for token '" +
                                 token + "'");
        }
        for (const auto& e : dist.entries) {
            if (e.token == token) throw DuplicateToken("duplicate token '" + token + "'");
        }
        double p = std::min(1.0, std::exp(lp));
        dist.entries.push_back({token, p});
        sum += p;
    }
    if (sum > 1.0 + TokenDistribution::kMassTolerance) {
        throw InvalidLogprob("top-k mass " + std::to_string(sum) + " exceeds 1");
    }
    dist.residual = std::max(0.0, 1.0 - sum);
    dist.validate();
    return dist;
}

ChatResponse parse_chat_payload(const json& payload, bool want_logprobs) {
    try {
        const auto& choices = payload.at("choices");
        if (!choices.is_array() || choices.empty()) {
            throw ProtocolError("payload has no choices");
        }
        const auto& choice = choices.at(0);
        ChatResponse resp;
        resp.text = choice.at("message").at("content").get<std::string>();
        if (want_logprobs) {
            if (!choice.contains("logprobs") || choice.at("logprobs").is_null()) {
                throw CapabilityError("endpoint returned no logprobs");
            }
            const auto& content = choice.at("logprobs").at("content");
            if (!content.is_array() || content.empty()) {
                throw CapabilityError("endpoint returned empty logprob content");
            }
            std::vector<std::pair<std::string, double>> lps;
            for (const auto& tl : content.at(0).at("top_logprobs")) {
                lps.emplace_back(tl.at("token").get<std::string>(),
                                 tl.at("logprob").get<double>());
            }
            resp.first_token_dist = build_distribution(lps);
        }
        return resp;
    } catch (const CapabilityError&) {
        throw;
    } catch (const InvalidLogprob& e) {
        throw ProtocolError(std::string("invalid logprobs in payload: ") + e.what());
    } catch (const DuplicateToken& e) {
        throw ProtocolError(std::string("invalid logprobs in payload: ") + e.what());
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed chat payload: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

namespace {

std::string env_or(const char* name, const std::string& fallback = {}) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

// Splits a URL into scheme://host[:port] and path.
std::pair<std::string, std::string> split_url(const std::string& url) {
    size_t scheme = url.find("://");
    size_t path_start = scheme == std::string::npos ? url.find('/')
                                                    : url.find('/', scheme + 3);
    if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
    std::string path = url.substr(path_start);
    if (path == "/") path = "/v1/chat/completions";
    return {url.substr(0, path_start), path};
}

}  // namespace

HttpLlmConfig HttpLlmConfig::from_env() {
    HttpLlmConfig cfg;
    cfg.url = env_or("SEARCHRAG_LLM_URL");
    cfg.api_key = env_or("SEARCHRAG_LLM_KEY");
    cfg.model = env_or("SEARCHRAG_LLM_MODEL");
    return cfg;
}

HttpLlmConfig HttpLlmConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ProtocolError("cannot open llm config file: " + path);
    json j = json::parse(in, nullptr, true, true);
    HttpLlmConfig cfg;
    cfg.url = j.value("url", std::string{});
    cfg.api_key = j.value("api_key", std::string{});
    cfg.model = j.value("model", std::string{});
    if (j.contains("timeout_ms")) cfg.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<int>());
    return cfg;
}

HttpLlmBackend::HttpLlmBackend(HttpLlmConfig config) : config_(std::move(config)) {
    if (config_.url.empty()) {
        throw ProtocolError("llm endpoint URL not configured (SEARCHRAG_LLM_URL)");
    }
    std::tie(host_, path_) = split_url(config_.url);
}

ChatResponse HttpLlmBackend::complete(const ChatRequest& req) {
    json body = {
        {"model", config_.model},
        {"messages",
         json::array({json{{"role", "system"}, {"content", req.system}},
                      json{{"role", "user"}, {"content", req.user}}})},
        {"temperature", req.temperature},
        {"max_tokens", req.max_tokens},
        {"seed", req.seed},
    };
    if (req.want_logprobs) {
        body["logprobs"] = true;
        body["top_logprobs"] = req.top_logprobs;
    }
    std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 2)));
        }
        // One client per call: httplib clients are not safe for concurrent
        // requests over a shared connection.
        httplib::Client client(host_);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        httplib::Headers headers;
        if (!config_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        }
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500 || res->status == 429) {
            last_error = "endpoint status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw ProtocolError("endpoint status " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 200));
        }
        json parsed;
        try {
            parsed = json::parse(res->body);
        } catch (const json::exception& e) {
            throw ProtocolError(std::string("endpoint returned non-JSON body: ") + e.what());
        }
        return parse_chat_payload(parsed, req.want_logprobs);
    }
    throw TransportError("llm request failed after " + std::to_string(config_.max_attempts) +
                         " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

namespace {

TokenDistribution dist_from_json(const json& j) {
    TokenDistribution d;
    if (j.is_object() && !j.contains("entries")) {
        // Authoring shorthand: {"A": 0.25, "B": 0.25, ...}; nlohmann keeps
        // object keys sorted, so entry order is deterministic.
        double sum = 0.0;
        for (const auto& [token, prob] : j.items()) {
            d.entries.push_back({token, prob.get<double>()});
            sum += prob.get<double>();
        }
        d.residual = std::max(0.0, 1.0 - sum);
    } else {
        d = j.get<TokenDistribution>();
    }
    d.validate();
    return d;
}

bool rule_matches(const MockRule& rule, const std::string& haystack) {
    for (const auto& needle : rule.match) {
        if (!needle.empty() && haystack.find(needle) == std::string::npos) return false;
    }
    return true;
}

}  // namespace

MockScript MockScript::from_json(const json& j) {
    MockScript script;
    if (!j.contains("rules") || !j.at("rules").is_array() || j.at("rules").empty()) {
        throw MockScriptError("script must contain a non-empty rules array");
    }
    for (const auto& rj : j.at("rules")) {
        MockRule rule;
        if (rj.contains("match")) {
            std::string m = rj.at("match").get<std::string>();
            if (!m.empty()) rule.match.push_back(std::move(m));
        }
        if (rj.contains("match_all")) {
            for (const auto& m : rj.at("match_all")) {
                std::string s = m.get<std::string>();
                if (!s.empty()) rule.match.push_back(std::move(s));
            }
        }
        if (rj.contains("text")) rule.rotation.push_back(rj.at("text").get<std::string>());
        if (rj.contains("rotation")) {
            for (const auto& t : rj.at("rotation")) rule.rotation.push_back(t.get<std::string>());
        }
        if (rj.contains("rotate_by")) {
            std::string rb = rj.at("rotate_by").get<std::string>();
            if (rb == "seed") rule.rotate_by = MockRule::RotateBy::Seed;
            else if (rb == "hash") rule.rotate_by = MockRule::RotateBy::Hash;
            else throw MockScriptError("rotate_by must be 'seed' or 'hash'");
        }
        if (rj.contains("dist")) rule.dist = dist_from_json(rj.at("dist"));
        if (rj.contains("dist_rotation")) {
            for (const auto& dj : rj.at("dist_rotation")) {
                rule.dist_rotation.push_back(dist_from_json(dj));
            }
        }
        if (rule.rotation.empty() && !rule.dist && rule.dist_rotation.empty()) {
            throw MockScriptError("rule needs text, rotation, or a distribution");
        }
        script.rules.push_back(std::move(rule));
    }
    if (!script.rules.back().match.empty()) {
        throw MockScriptError("last rule must be a fallthrough (no matcher)");
    }
    return script;
}

MockScript MockScript::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MockScriptError("cannot open mock script: " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw MockScriptError(std::string("mock script is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

MockLlmBackend::MockLlmBackend(MockScript script) : script_(std::move(script)) {}

ChatResponse MockLlmBackend::complete(const ChatRequest& req) {
    std::string haystack = req.system + "\n" + req.user;
    for (const auto& rule : script_.rules) {
        if (!rule_matches(rule, haystack)) continue;
        std::uint64_t selector =
            rule.rotate_by == MockRule::RotateBy::Hash ? splitmix64(req.seed) : req.seed;
        ChatResponse resp;
        if (!rule.rotation.empty()) {
            resp.text = rule.rotation[selector % rule.rotation.size()];
        }
        if (req.want_logprobs) {
            if (!rule.dist_rotation.empty()) {
                resp.first_token_dist = rule.dist_rotation[selector % rule.dist_rotation.size()];
            } else if (rule.dist) {
                resp.first_token_dist = *rule.dist;
            } else {
                throw CapabilityError("matched mock rule has no distribution");
            }
        }
        return resp;
    }
    throw MockScriptError("no rule matched (missing fallthrough)");
}

}  // namespace searchrag
