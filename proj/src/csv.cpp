#include "factens/csv.hpp"

#include <fstream>
#include <sstream>

#include "factens/error.hpp"

namespace factens::csv {

int Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

std::vector<Record> parse(std::string_view text) {
    std::vector<Record> out;
    Record record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // blank line
        if (!(record.size() == 1 && record[0].empty())) out.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                end_field();
                field_started = true;
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
                end_record();
                break;
            case '\n':
                end_record();
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (in_quotes) throw Error("csv: unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return out;
}

Table parse_table(std::string_view text, bool skip_comments) {
    if (skip_comments) {
        while (!text.empty() && text.front() == '#') {
            const auto nl = text.find('\n');
            text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        }
    }
    auto records = parse(text);
    Table t;
    if (records.empty()) return t;
    t.header = std::move(records.front());
    t.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
    return t;
}

Table read_table(const std::filesystem::path& path, bool skip_comments) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_table(ss.str(), skip_comments);
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_record(std::ostream& out, const Record& record) {
    for (std::size_t i = 0; i < record.size(); ++i) {
        if (i) out << ',';
        out << escape(record[i]);
    }
    out << '\n';
}

}  // namespace factens::csv
