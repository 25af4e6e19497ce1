#pragma once

// Prompt specifications and the text-level operations on them: rendering a
// request and reducing a free-text response to a binary verdict.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factens/corpus.hpp"

namespace factens {

enum class VerdictValue : std::int8_t { Inconsistent = 0, Consistent = 1, Abstain = -1 };

std::string_view to_string(VerdictValue v);

enum class ScanMode { LastOccurrence };

// Numeric-score responses ("Scores: 85", "Stars: 4"): the last number inside
// [lo, hi] is read and mapped to Consistent when >= threshold.
struct NumericScale {
    double lo = 0;
    double hi = 100;
    double threshold = 50;
};

struct ParserSpec {
    std::vector<std::string> positive_markers;
    std::vector<std::string> negative_markers;
    ScanMode scan = ScanMode::LastOccurrence;
    std::optional<NumericScale> numeric;

    // Throws PreconditionError: empty marker list, or a marker in both lists
    // after case-folding.
    void validate() const;
};

struct Decoding {
    double temperature = 0.0;
    int max_tokens = 1024;
};

inline constexpr std::string_view kDocumentPlaceholder = "{document}";
inline constexpr std::string_view kSummaryPlaceholder = "{summary}";

struct PromptSpec {
    std::string prompt_id;
    std::string template_text;
    ParserSpec parser;
    std::string model_id;
    Decoding decoding;

    // Throws TemplateError unless each placeholder occurs exactly once.
    void validate() const;
};

struct Verdict {
    VerdictValue value = VerdictValue::Abstain;
    std::string raw_response;
    std::string prompt_id;
    std::string example_id;
};

std::string render(const PromptSpec& p, const LabeledExample& e);

// Case-insensitive scan for markers at word boundaries. A match lying inside
// a longer match ("supported" within "not supported") is discarded, then the
// match ending last decides. No match yields Abstain.
VerdictValue parse_verdict(const ParserSpec& spec, std::string_view response);

// Prompt pool file (YAML). Template paths resolve relative to the pool file.
std::vector<PromptSpec> load_pool(const std::filesystem::path& pool_file);

// Validates every spec and checks prompt_id uniqueness.
void validate_pool(std::span<const PromptSpec> pool);

}  // namespace factens
