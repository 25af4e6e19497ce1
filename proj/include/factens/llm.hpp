#pragma once

// LLM access: backends, the append-only response cache, and the pool runner
// that turns (prompt, example) pairs into verdicts.

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "factens/corpus.hpp"
#include "factens/prompts.hpp"

namespace factens {

struct CompletionRequest {
    std::string model_id;
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 1024;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    // Throws TransientBackendError for retryable failures, BackendError otherwise.
    virtual std::string complete(const CompletionRequest& request) = 0;
    // A replay-only backend never produces responses; everything must come
    // from the cache.
    virtual bool replay_only() const { return false; }
};

class ReplayBackend final : public LlmBackend {
public:
    std::string complete(const CompletionRequest&) override;
    bool replay_only() const override { return true; }
};

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com";
    std::string endpoint = "/v1/chat/completions";
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_seconds = 120;
};

// OpenAI-style chat-completion endpoint. The API key is read from the named
// environment variable at construction; an unset variable sends no
// Authorization header.
class HttpChatBackend final : public LlmBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig config);
    std::string complete(const CompletionRequest& request) override;

private:
    HttpBackendConfig config_;
    std::string api_key_;
};

struct CacheEntry {
    std::string key;
    std::string model;
    std::string prompt_id;
    std::string response;
    std::string ts;
};

// Attempt 0 is the primary query; attempt 1 is the re-query issued after an
// unparseable response.
std::string cache_key(const PromptSpec& p, std::string_view rendered, int attempt = 0);

// JSON-lines cache. Readers share a lock; appends are serialized and flushed
// line by line. Lines that fail to parse are skipped and counted; they never
// poison neighbouring entries.
class ResponseCache {
public:
    ResponseCache() = default;  // in-memory only
    explicit ResponseCache(std::filesystem::path path);

    std::optional<CacheEntry> lookup(const std::string& key) const;
    void append(CacheEntry entry);

    std::size_t size() const;
    std::size_t corrupt_lines() const { return corrupt_lines_; }

private:
    std::optional<std::filesystem::path> path_;
    std::map<std::string, CacheEntry> entries_;
    std::size_t corrupt_lines_ = 0;
    mutable std::shared_mutex mutex_;
    std::ofstream out_;
};

struct RetryPolicy {
    int transient_retries = 2;  // extra attempts after the first transient failure
};

struct QueryStats {
    std::atomic<std::size_t> backend_calls{0};
    std::atomic<std::size_t> cache_hits{0};
    std::atomic<std::size_t> requeries{0};
};

// One verdict for (prompt, example). Cache hits cost no backend traffic. An
// unparseable response is re-queried once at the same decoding settings,
// then recorded as Abstain.
Verdict query(LlmBackend& backend, const PromptSpec& p, const LabeledExample& e, ResponseCache& cache,
              const RetryPolicy& retry = {}, QueryStats* stats = nullptr);

struct PoolFailure {
    std::string example_id;
    std::string prompt_id;
    std::string message;
};

struct PoolRunOptions {
    std::size_t parallelism = 4;
    RetryPolicy retry;
    // Called after each finished cell with (done, total, failures so far).
    std::function<void(std::size_t, std::size_t, std::size_t)> progress;
};

struct PoolRunResult {
    std::vector<Verdict> verdicts;  // (example index, prompt index) order
    std::vector<PoolFailure> failures;
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
};

PoolRunResult run_pool(std::span<const PromptSpec> pool, std::span<const LabeledExample> examples,
                       LlmBackend& backend, ResponseCache& cache, const PoolRunOptions& options = {});

}  // namespace factens
