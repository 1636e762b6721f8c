#pragma once

#include <string>
#include <vector>

namespace dmlplr::csv {

// RFC-4180-style parsing: fields may be quoted with '"', quotes escape as
// "", records end at newline outside quotes. Delimiter is configurable.
struct ParseOptions {
    char delimiter = ',';
};

// Splits an entire file into records of fields. Keeps empty trailing fields.
std::vector<std::vector<std::string>> read_records(const std::string& path,
                                                   const ParseOptions& opt = {});

// Quotes a field when it contains the delimiter, a quote, or a newline.
std::string escape_field(const std::string& field, char delimiter = ',');

void write_records(const std::string& path,
                   const std::vector<std::vector<std::string>>& records,
                   char delimiter = ',');

} // namespace dmlplr::csv
