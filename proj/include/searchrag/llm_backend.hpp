#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "searchrag/core_types.hpp"

namespace searchrag {

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_tokens = 1;
    bool want_logprobs = false;
    int top_logprobs = 20;
    std::uint64_t seed = 0;  // advisory; forwarded when the endpoint supports it
};

struct ChatResponse {
    std::string text;
    std::optional<TokenDistribution> first_token_dist;  // present iff want_logprobs
};

/// Completion model that can return text plus first-token top-k logprobs.
/// Implementations must tolerate concurrent complete() calls.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual ChatResponse complete(const ChatRequest& req) = 0;
};

/// Converts endpoint top-k logprobs into a TokenDistribution:
/// prob = exp(logprob), residual = max(0, 1 - sum). Throws InvalidLogprob for
/// logprobs above +1e-6 or mass past 1+1e-6, DuplicateToken for repeats.
TokenDistribution build_distribution(const std::vector<std::pair<std::string, double>>& logprobs);

/// Parses an OpenAI-style chat completion payload. Throws ProtocolError on a
/// malformed shape, CapabilityError when logprobs were requested but the
/// payload has none.
ChatResponse parse_chat_payload(const nlohmann::json& payload, bool want_logprobs);

// ---------------------------------------------------------------------------
// HTTP backend (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

struct HttpLlmConfig {
    std::string url;  // full endpoint URL, e.g. http://host:1234/v1/chat/completions
    std::string api_key;
    std::string model;
    std::chrono::milliseconds timeout{60'000};
    int max_attempts = 3;  // TransportError only; ProtocolError is never retried
    std::chrono::milliseconds backoff_base{500};

    /// Reads SEARCHRAG_LLM_URL / SEARCHRAG_LLM_KEY / SEARCHRAG_LLM_MODEL.
    static HttpLlmConfig from_env();

    static HttpLlmConfig from_file(const std::string& path);
};

class HttpLlmBackend : public LlmBackend {
public:
    explicit HttpLlmBackend(HttpLlmConfig config);
    ChatResponse complete(const ChatRequest& req) override;

private:
    HttpLlmConfig config_;
    std::string host_;  // scheme://host[:port]
    std::string path_;
};

// ---------------------------------------------------------------------------
// Scripted mock backend
// ---------------------------------------------------------------------------

/// One scripted response rule. Matchers are substrings checked against the
/// concatenated system + user prompt; a rule with no matchers matches
/// everything. Rotation entries are selected by the request seed: "seed"
/// indexes directly (consecutive per-sample seeds sweep the list), "hash"
/// remixes the seed first (independent uniform draws).
struct MockRule {
    std::vector<std::string> match;
    std::vector<std::string> rotation;  // response texts; single entry = fixed text
    enum class RotateBy { Seed, Hash };
    RotateBy rotate_by = RotateBy::Seed;
    std::optional<TokenDistribution> dist;
    std::vector<TokenDistribution> dist_rotation;
};

struct MockScript {
    std::vector<MockRule> rules;

    /// Throws MockScriptError unless the last rule is a catch-all.
    static MockScript from_json(const nlohmann::json& j);
    static MockScript load(const std::string& path);
};

/// Pure function of (script, request): no internal state, trivially safe to
/// share across threads. Identical requests produce byte-identical replies.
class MockLlmBackend : public LlmBackend {
public:
    explicit MockLlmBackend(MockScript script);
    ChatResponse complete(const ChatRequest& req) override;

private:
    MockScript script_;
};

}  // namespace searchrag
