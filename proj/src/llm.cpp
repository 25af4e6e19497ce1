#include "factens/llm.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "factens/error.hpp"
#include "factens/hash.hpp"
#include "factens/parallel.hpp"

namespace factens {

namespace {

std::string utc_now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

bool is_hex_key(const std::string& s) {
    return s.size() == 64 && s.find_first_not_of("0123456789abcdef") == std::string::npos;
}

}  // namespace

std::string ReplayBackend::complete(const CompletionRequest&) { throw BackendError("replay miss"); }

std::string cache_key(const PromptSpec& p, std::string_view rendered, int attempt) {
    nlohmann::json j;  // object keys are sorted, so the dump is canonical
    j["model"] = p.model_id;
    j["prompt_id"] = p.prompt_id;
    j["rendered"] = std::string(rendered);
    j["temperature"] = p.decoding.temperature;
    j["max_tokens"] = p.decoding.max_tokens;
    if (attempt > 0) j["attempt"] = attempt;
    return sha256_hex(j.dump());
}

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_, std::ios::binary);
    if (in) {
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                CacheEntry e{j.at("key").get<std::string>(), j.at("model").get<std::string>(),
                             j.at("prompt_id").get<std::string>(), j.at("response").get<std::string>(),
                             j.value("ts", std::string{})};
                if (!is_hex_key(e.key)) {
                    ++corrupt_lines_;
                    continue;
                }
                entries_.try_emplace(e.key, std::move(e));
            } catch (const nlohmann::json::exception&) {
                ++corrupt_lines_;
            }
        }
    }
}

std::optional<CacheEntry> ResponseCache::lookup(const std::string& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::append(CacheEntry entry) {
    if (entry.ts.empty()) entry.ts = utc_now_iso8601();
    std::unique_lock lock(mutex_);
    if (entries_.count(entry.key)) return;
    if (path_) {
        if (!out_.is_open()) {
            if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
            out_.open(*path_, std::ios::binary | std::ios::app);
            if (!out_) throw IoError(path_->string(), "cannot append to cache");
        }
        nlohmann::ordered_json j;
        j["key"] = entry.key;
        j["model"] = entry.model;
        j["prompt_id"] = entry.prompt_id;
        j["response"] = entry.response;
        j["ts"] = entry.ts;
        out_ << j.dump() << '\n';
        out_.flush();
    }
    entries_.emplace(entry.key, std::move(entry));
}

std::size_t ResponseCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

namespace {

// Cached response for `key`, or nullopt when a replay-only backend misses
// and `miss_ok` is set. Other misses go to the backend.
std::optional<std::string> fetch(LlmBackend& backend, const PromptSpec& p, const std::string& rendered,
                                 const std::string& key, ResponseCache& cache, const RetryPolicy& retry,
                                 QueryStats* stats, bool miss_ok) {
    if (auto hit = cache.lookup(key)) {
        if (hit->model != p.model_id || hit->prompt_id != p.prompt_id) {
            throw CacheCorruption("cache entry " + key + " belongs to (" + hit->model + ", " + hit->prompt_id +
                                  "), requested (" + p.model_id + ", " + p.prompt_id + ")");
        }
        if (stats) ++stats->cache_hits;
        return hit->response;
    }
    if (backend.replay_only()) {
        if (miss_ok) return std::nullopt;
        throw BackendError("replay miss");
    }
    const CompletionRequest request{p.model_id, rendered, p.decoding.temperature, p.decoding.max_tokens};
    std::string last_error;
    for (int attempt = 0; attempt <= retry.transient_retries; ++attempt) {
        try {
            if (stats) ++stats->backend_calls;
            auto response = backend.complete(request);
            cache.append({key, p.model_id, p.prompt_id, response, {}});
            return response;
        } catch (const TransientBackendError& e) {
            last_error = e.what();
        }
    }
    throw BackendError("retry budget exhausted after " + std::to_string(retry.transient_retries + 1) +
                       " attempts: " + last_error);
}

}  // namespace

Verdict query(LlmBackend& backend, const PromptSpec& p, const LabeledExample& e, ResponseCache& cache,
              const RetryPolicy& retry, QueryStats* stats) {
    const std::string rendered = render(p, e);
    Verdict v;
    v.prompt_id = p.prompt_id;
    v.example_id = e.id;

    auto first = fetch(backend, p, rendered, cache_key(p, rendered, 0), cache, retry, stats, false);
    v.raw_response = *first;
    v.value = parse_verdict(p.parser, v.raw_response);
    if (v.value != VerdictValue::Abstain) return v;

    if (stats) ++stats->requeries;
    auto second = fetch(backend, p, rendered, cache_key(p, rendered, 1), cache, retry, stats, true);
    if (second) {
        v.raw_response = *second;
        v.value = parse_verdict(p.parser, v.raw_response);
    }
    return v;
}

PoolRunResult run_pool(std::span<const PromptSpec> pool, std::span<const LabeledExample> examples,
                       LlmBackend& backend, ResponseCache& cache, const PoolRunOptions& options) {
    if (pool.empty()) throw PreconditionError("run_pool: empty prompt pool");
    validate_pool(pool);

    const std::size_t cells = pool.size() * examples.size();
    std::vector<std::optional<Verdict>> slots(cells);
    std::vector<std::optional<std::string>> errors(cells);
    QueryStats stats;
    std::atomic<std::size_t> done{0}, failed{0};
    std::mutex progress_mutex;

    parallel_for(cells, options.parallelism, [&](std::size_t cell) {
        const auto& e = examples[cell / pool.size()];
        const auto& p = pool[cell % pool.size()];
        try {
            slots[cell] = query(backend, p, e, cache, options.retry, &stats);
        } catch (const BackendError& err) {
            errors[cell] = err.what();
            ++failed;
        }
        const auto finished = ++done;
        if (options.progress) {
            std::lock_guard lock(progress_mutex);
            options.progress(finished, cells, failed.load());
        }
    });

    PoolRunResult result;
    result.verdicts.reserve(cells);
    for (std::size_t cell = 0; cell < cells; ++cell) {
        if (slots[cell]) {
            result.verdicts.push_back(std::move(*slots[cell]));
        } else {
            result.failures.push_back(
                {examples[cell / pool.size()].id, pool[cell % pool.size()].prompt_id, *errors[cell]});
        }
    }
    result.backend_calls = stats.backend_calls.load();
    result.cache_hits = stats.cache_hits.load();
    return result;
}

}  // namespace factens
