#include "factens/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "factens/error.hpp"

namespace factens {

namespace {

std::string fold(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

struct Match {
    std::size_t begin, end;
    VerdictValue value;
};

VerdictValue parse_numeric(const NumericScale& scale, std::string_view text) {
    std::optional<double> last;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.')) ++j;
        while (j > i && text[j - 1] == '.') --j;
        // "4/5": the denominator is a scale, not a score.
        const bool denominator = i > 0 && text[i - 1] == '/';
        double v = 0;
        auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + j, v);
        if (ec == std::errc{} && !denominator && v >= scale.lo && v <= scale.hi) last = v;
        i = j == i ? i + 1 : j;
    }
    if (!last) return VerdictValue::Abstain;
    return *last >= scale.threshold ? VerdictValue::Consistent : VerdictValue::Inconsistent;
}

}  // namespace

std::string_view to_string(VerdictValue v) {
    switch (v) {
        case VerdictValue::Consistent: return "consistent";
        case VerdictValue::Inconsistent: return "inconsistent";
        case VerdictValue::Abstain: return "abstain";
    }
    return "abstain";
}

void ParserSpec::validate() const {
    if (numeric) {
        if (!(numeric->lo < numeric->hi)) throw PreconditionError("numeric parser: lo must be < hi");
        return;
    }
    if (positive_markers.empty() || negative_markers.empty())
        throw PreconditionError("parser: marker lists must be non-empty");
    std::set<std::string> pos;
    for (const auto& m : positive_markers) {
        auto f = fold(m);
        if (f.empty()) throw PreconditionError("parser: empty marker");
        pos.insert(std::move(f));
    }
    for (const auto& m : negative_markers) {
        auto f = fold(m);
        if (f.empty()) throw PreconditionError("parser: empty marker");
        if (pos.count(f)) throw PreconditionError("parser: marker '" + m + "' is both positive and negative");
    }
}

void PromptSpec::validate() const {
    for (auto ph : {kDocumentPlaceholder, kSummaryPlaceholder}) {
        const auto n = count_occurrences(template_text, ph);
        if (n != 1) {
            throw TemplateError("prompt '" + prompt_id + "': placeholder " + std::string(ph) + " occurs " +
                                std::to_string(n) + " times, expected 1");
        }
    }
    if (decoding.temperature < 0) throw PreconditionError("prompt '" + prompt_id + "': negative temperature");
    if (decoding.max_tokens <= 0) throw PreconditionError("prompt '" + prompt_id + "': max_tokens must be > 0");
    parser.validate();
}

std::string render(const PromptSpec& p, const LabeledExample& e) {
    const auto tpl = std::string_view(p.template_text);
    const auto d = tpl.find(kDocumentPlaceholder);
    const auto s = tpl.find(kSummaryPlaceholder);
    if (d == std::string_view::npos || s == std::string_view::npos ||
        count_occurrences(tpl, kDocumentPlaceholder) != 1 || count_occurrences(tpl, kSummaryPlaceholder) != 1) {
        p.validate();  // throws with a precise message
    }
    // Substitute by template position so placeholder-like text inside the
    // document or summary is left alone.
    struct Slot {
        std::size_t pos, len;
        const std::string* value;
    };
    Slot first{d, kDocumentPlaceholder.size(), &e.document};
    Slot second{s, kSummaryPlaceholder.size(), &e.summary};
    if (second.pos < first.pos) std::swap(first, second);

    std::string out;
    out.reserve(tpl.size() + e.document.size() + e.summary.size());
    out.append(tpl.substr(0, first.pos));
    out.append(*first.value);
    out.append(tpl.substr(first.pos + first.len, second.pos - first.pos - first.len));
    out.append(*second.value);
    out.append(tpl.substr(second.pos + second.len));
    return out;
}

VerdictValue parse_verdict(const ParserSpec& spec, std::string_view response) {
    if (spec.numeric) return parse_numeric(*spec.numeric, response);

    const std::string text = fold(response);
    std::vector<Match> matches;
    auto scan = [&](const std::vector<std::string>& markers, VerdictValue value) {
        for (const auto& raw : markers) {
            const std::string m = fold(raw);
            if (m.empty()) continue;
            for (auto pos = text.find(m); pos != std::string::npos; pos = text.find(m, pos + 1)) {
                const auto end = pos + m.size();
                const bool left_ok = pos == 0 || !is_word(text[pos - 1]) || !is_word(m.front());
                const bool right_ok = end == text.size() || !is_word(text[end]) || !is_word(m.back());
                if (left_ok && right_ok) matches.push_back({pos, end, value});
            }
        }
    };
    scan(spec.positive_markers, VerdictValue::Consistent);
    scan(spec.negative_markers, VerdictValue::Inconsistent);

    const Match* best = nullptr;
    for (const auto& m : matches) {
        const bool contained = std::any_of(matches.begin(), matches.end(), [&](const Match& o) {
            return &o != &m && o.begin <= m.begin && m.end <= o.end && (o.end - o.begin) > (m.end - m.begin);
        });
        if (contained) continue;
        if (!best || m.end > best->end || (m.end == best->end && (m.end - m.begin) > (best->end - best->begin))) {
            best = &m;
        }
    }
    return best ? best->value : VerdictValue::Abstain;
}

void validate_pool(std::span<const PromptSpec> pool) {
    std::set<std::string> ids;
    for (const auto& p : pool) {
        if (p.prompt_id.empty()) throw PreconditionError("prompt with empty id");
        if (!ids.insert(p.prompt_id).second) throw PreconditionError("duplicate prompt id: " + p.prompt_id);
        p.validate();
    }
}

std::vector<PromptSpec> load_pool(const std::filesystem::path& pool_file) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(pool_file.string());
    } catch (const YAML::BadFile&) {
        throw IoError(pool_file.string(), "cannot open prompt pool");
    } catch (const YAML::Exception& e) {
        throw ConfigError("prompt pool " + pool_file.string() + ": " + e.what());
    }
    const auto base = pool_file.parent_path();

    std::string default_model = root["defaults"]["model"].as<std::string>("");
    Decoding default_decoding;
    if (auto d = root["defaults"]["decoding"]) {
        default_decoding.temperature = d["temperature"].as<double>(default_decoding.temperature);
        default_decoding.max_tokens = d["max_tokens"].as<int>(default_decoding.max_tokens);
    }

    std::vector<PromptSpec> pool;
    const auto prompts = root["prompts"];
    if (!prompts || !prompts.IsSequence()) throw ConfigError("prompt pool: missing 'prompts' sequence");
    try {
        for (const auto& node : prompts) {
            PromptSpec p;
            p.prompt_id = node["id"].as<std::string>();
            p.model_id = node["model"].as<std::string>(default_model);
            if (p.model_id.empty()) throw ConfigError("prompt '" + p.prompt_id + "': no model");
            p.decoding = default_decoding;
            if (auto d = node["decoding"]) {
                p.decoding.temperature = d["temperature"].as<double>(p.decoding.temperature);
                p.decoding.max_tokens = d["max_tokens"].as<int>(p.decoding.max_tokens);
            }
            if (auto t = node["template_text"]) {
                p.template_text = t.as<std::string>();
            } else {
                const auto path = base / node["template"].as<std::string>();
                std::ifstream in(path, std::ios::binary);
                if (!in) throw IoError(path.string(), "cannot open template");
                std::stringstream ss;
                ss << in.rdbuf();
                p.template_text = ss.str();
            }
            const auto parser = node["parser"];
            if (auto num = parser["numeric"]) {
                NumericScale s;
                s.lo = num["lo"].as<double>();
                s.hi = num["hi"].as<double>();
                s.threshold = num["threshold"].as<double>((s.lo + s.hi) / 2);
                p.parser.numeric = s;
            } else {
                p.parser.positive_markers = parser["positive"].as<std::vector<std::string>>();
                p.parser.negative_markers = parser["negative"].as<std::vector<std::string>>();
            }
            pool.push_back(std::move(p));
        }
    } catch (const YAML::Exception& e) {
        throw ConfigError("prompt pool " + pool_file.string() + ": " + e.what());
    }
    validate_pool(pool);
    return pool;
}

}  // namespace factens
