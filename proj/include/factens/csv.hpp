#pragma once

// Minimal RFC-4180 reader/writer. Records may span lines inside quoted fields.
// Leading lines starting with '#' are provenance comments and are skipped by
// the reader when asked.

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace factens::csv {

using Record = std::vector<std::string>;

struct Table {
    Record header;
    std::vector<Record> rows;

    // Column index by name, or -1.
    int column(std::string_view name) const;
};

std::vector<Record> parse(std::string_view text);

// First non-comment record becomes the header.
Table parse_table(std::string_view text, bool skip_comments = true);
Table read_table(const std::filesystem::path& path, bool skip_comments = true);

std::string escape(std::string_view field);
void write_record(std::ostream& out, const Record& record);

}  // namespace factens::csv
