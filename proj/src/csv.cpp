#include "dmlplr/csv.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmlplr::csv {

std::vector<std::vector<std::string>> read_records(const std::string& path,
                                                   const ParseOptions& opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;

    auto end_field = [&]() {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&]() {
        end_field();
        records.push_back(record);
        record.clear();
    };

    for (size_t i = 0; i < text.size(); ++i) {
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
        } else if (c == '"' && field.empty() && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == opt.delimiter) {
            end_field();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            end_record();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw std::runtime_error("unterminated quoted field in " + path);
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

std::string escape_field(const std::string& field, char delimiter) {
    const bool needs_quote = field.find_first_of("\"\n\r") != std::string::npos ||
                             field.find(delimiter) != std::string::npos;
    if (!needs_quote) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_records(const std::string& path,
                   const std::vector<std::vector<std::string>>& records,
                   char delimiter) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    for (const auto& record : records) {
        for (size_t i = 0; i < record.size(); ++i) {
            if (i > 0) out << delimiter;
            out << escape_field(record[i], delimiter);
        }
        out << '\n';
    }
}

} // namespace dmlplr::csv
