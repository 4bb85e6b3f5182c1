#include "peee/tabular.hpp"

#include "peee/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_set>

namespace peee {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// Splits one record; double-quoted fields may contain the delimiter and "" escapes.
std::vector<std::string> split_record(std::string_view line, char delim, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"' && trim(current).empty()) {
            current.clear();
            quoted = true;
            was_quoted = true;
        } else if (c == delim) {
            fields.emplace_back(was_quoted ? current : std::string(trim(current)));
            current.clear();
            was_quoted = false;
        } else {
            current.push_back(c);
        }
    }
    if (quoted)
        throw ParseError(fmt::format("line {}: unterminated quoted field", line_no), line_no);
    fields.emplace_back(was_quoted ? current : std::string(trim(current)));
    return fields;
}

bool parse_double(std::string_view text, double& out) {
    text = trim(text);
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_int(std::string_view text, std::int64_t& out) {
    text = trim(text);
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

std::string_view to_string(ColumnRole role) noexcept {
    switch (role) {
    case ColumnRole::response: return "response";
    case ColumnRole::covariate: return "covariate";
    case ColumnRole::auxiliary: return "auxiliary";
    case ColumnRole::id: return "id";
    }
    return "unknown";
}

ObservationTable::ObservationTable(std::vector<std::int64_t> subject_ids,
                                   std::vector<Column> columns,
                                   std::string incomplete_column)
    : subject_ids_(std::move(subject_ids)),
      columns_(std::move(columns)),
      incomplete_(std::move(incomplete_column)) {
    const std::size_t n = subject_ids_.size();
    std::unordered_set<std::int64_t> seen;
    seen.reserve(n);
    for (auto id : subject_ids_) {
        if (!seen.insert(id).second)
            throw SchemaError(fmt::format("duplicate subject id {}", id));
    }
    std::unordered_set<std::string> names;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        auto& col = columns_[c];
        if (col.role == ColumnRole::id)
            throw SchemaError(fmt::format("column '{}': id role is reserved for subject ids", col.name));
        if (!names.insert(col.name).second)
            throw SchemaError(fmt::format("duplicate column name '{}'", col.name));
        if (col.values.size() != n)
            throw SchemaError(fmt::format("column '{}' has {} values, expected {}", col.name,
                                          col.values.size(), n));
        if (col.missing.empty())
            col.missing.assign(n, 0);
        if (col.missing.size() != n)
            throw SchemaError(fmt::format("column '{}' has a mask of the wrong length", col.name));
        if (col.categorical() && col.level_count() < 2)
            throw SchemaError(fmt::format("categorical column '{}' needs at least 2 levels", col.name));
        for (std::size_t i = 0; i < n; ++i) {
            if (col.missing[i]) {
                if (col.name != incomplete_)
                    throw SchemaError(fmt::format(
                        "row {}: missing value in column '{}' which is not declared incomplete",
                        i + 1, col.name));
                col.values[i] = kNaN;
                continue;
            }
            const double v = col.values[i];
            if (col.categorical()) {
                if (v != std::floor(v) || v < 1 || v > col.level_count())
                    throw SchemaError(fmt::format("column '{}' row {}: level code {} outside 1..{}",
                                                  col.name, i + 1, v, col.level_count()));
            } else if (!std::isfinite(v)) {
                throw SchemaError(fmt::format("column '{}' row {}: non-finite value", col.name, i + 1));
            }
        }
        if (col.name == incomplete_)
            incomplete_index_ = static_cast<std::ptrdiff_t>(c);
    }
    if (!incomplete_.empty() && incomplete_index_ < 0)
        throw SchemaError(fmt::format("incomplete column '{}' not present", incomplete_));
}

bool ObservationTable::has_column(std::string_view name) const noexcept {
    return std::any_of(columns_.begin(), columns_.end(),
                       [&](const Column& c) { return c.name == name; });
}

const Column& ObservationTable::column(std::string_view name) const {
    for (const auto& c : columns_)
        if (c.name == name)
            return c;
    throw SchemaError(fmt::format("unknown column '{}'", name));
}

bool ObservationTable::observed(std::size_t row) const noexcept {
    if (incomplete_index_ < 0)
        return true;
    return columns_[static_cast<std::size_t>(incomplete_index_)].missing[row] == 0;
}

std::vector<std::size_t> ObservationTable::complete_rows() const {
    std::vector<std::size_t> out;
    out.reserve(rows());
    for (std::size_t i = 0; i < rows(); ++i)
        if (observed(i))
            out.push_back(i);
    return out;
}

std::vector<std::size_t> ObservationTable::incomplete_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows(); ++i)
        if (!observed(i))
            out.push_back(i);
    return out;
}

ObservationTable ObservationTable::select_rows(std::span<const std::size_t> rows,
                                               bool renumber_ids) const {
    std::vector<std::int64_t> ids;
    ids.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k)
        ids.push_back(renumber_ids ? static_cast<std::int64_t>(k + 1) : subject_ids_.at(rows[k]));
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& src : columns_) {
        Column col;
        col.name = src.name;
        col.role = src.role;
        col.kind = src.kind;
        col.levels = src.levels;
        col.values.reserve(rows.size());
        col.missing.reserve(rows.size());
        for (auto r : rows) {
            col.values.push_back(src.values.at(r));
            col.missing.push_back(src.missing[r]);
        }
        cols.push_back(std::move(col));
    }
    return ObservationTable(std::move(ids), std::move(cols), incomplete_);
}

ObservationTable ObservationTable::with_subject_ids(std::vector<std::int64_t> ids) const {
    if (ids.size() != rows())
        throw SchemaError("subject id vector has the wrong length");
    return ObservationTable(std::move(ids), columns_, incomplete_);
}

ObservationTable read_csv(std::istream& in, const TableSchema& schema) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_record(line, schema.delimiter, line_no);
            break;
        }
    }
    if (header.empty())
        throw ParseError("empty input: no header row", line_no);
    if (!header.front().empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0)
        header.front().erase(0, 3);

    const auto find = [&](const std::string& name) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    for (const auto& [name, role] : schema.roles)
        if (find(name) < 0)
            throw SchemaError(fmt::format("schema column '{}' not found in header", name));
    for (const auto& name : schema.categorical)
        if (find(name) < 0)
            throw SchemaError(fmt::format("categorical column '{}' not found in header", name));
    if (!schema.incomplete_column.empty() && find(schema.incomplete_column) < 0)
        throw SchemaError(fmt::format("incomplete column '{}' not found in header",
                                      schema.incomplete_column));
    const std::ptrdiff_t id_index = schema.id_column.empty() ? -1 : find(schema.id_column);
    if (!schema.id_column.empty() && id_index < 0)
        throw SchemaError(fmt::format("id column '{}' not found in header", schema.id_column));
    for (const auto& [name, role] : schema.roles)
        if (role == ColumnRole::id && name != schema.id_column)
            throw SchemaError(fmt::format("column '{}' has role id but is not the id column", name));

    const auto is_missing = [&](const std::string& cell) {
        return std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(), cell) !=
               schema.missing_tokens.end();
    };

    std::vector<Column> cols;
    std::vector<std::size_t> col_source;
    for (std::size_t h = 0; h < header.size(); ++h) {
        if (static_cast<std::ptrdiff_t>(h) == id_index)
            continue;
        Column col;
        col.name = header[h];
        if (auto it = schema.roles.find(col.name); it != schema.roles.end())
            col.role = it->second;
        if (schema.categorical.count(col.name)) {
            col.kind = ColumnKind::categorical;
            if (auto lv = schema.levels.find(col.name); lv != schema.levels.end())
                col.levels = lv->second;
        }
        cols.push_back(std::move(col));
        col_source.push_back(h);
    }

    std::vector<std::int64_t> ids;
    // Categorical cells are buffered as text until the level set is final.
    std::vector<std::vector<std::string>> raw(cols.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto fields = split_record(line, schema.delimiter, line_no);
        if (fields.size() != header.size())
            throw ParseError(fmt::format("line {}: expected {} fields, found {}", line_no,
                                         header.size(), fields.size()),
                             line_no);
        if (id_index >= 0) {
            std::int64_t id = 0;
            if (!parse_int(fields[static_cast<std::size_t>(id_index)], id))
                throw ParseError(fmt::format("line {}: subject id '{}' is not an integer", line_no,
                                             fields[static_cast<std::size_t>(id_index)]),
                                 line_no);
            ids.push_back(id);
        } else {
            ids.push_back(static_cast<std::int64_t>(ids.size() + 1));
        }
        for (std::size_t c = 0; c < cols.size(); ++c) {
            auto& col = cols[c];
            const auto& cell = fields[col_source[c]];
            if (is_missing(cell)) {
                if (col.name != schema.incomplete_column)
                    throw SchemaError(fmt::format(
                        "line {}: missing value in column '{}' which is not declared incomplete",
                        line_no, col.name));
                col.missing.push_back(1);
                col.values.push_back(kNaN);
                raw[c].emplace_back();
                continue;
            }
            col.missing.push_back(0);
            if (col.categorical()) {
                raw[c].push_back(cell);
                col.values.push_back(0.0);
            } else {
                double v = 0.0;
                if (!parse_double(cell, v))
                    throw ParseError(fmt::format("line {}: column '{}' value '{}' is not numeric",
                                                 line_no, col.name, cell),
                                     line_no);
                col.values.push_back(v);
            }
        }
    }

    for (std::size_t c = 0; c < cols.size(); ++c) {
        auto& col = cols[c];
        if (!col.categorical())
            continue;
        const bool fixed = !col.levels.empty();
        for (std::size_t i = 0; i < col.values.size(); ++i) {
            if (col.missing[i])
                continue;
            auto it = std::find(col.levels.begin(), col.levels.end(), raw[c][i]);
            if (it == col.levels.end()) {
                if (fixed)
                    throw SchemaError(fmt::format("column '{}': level '{}' not in configured level list",
                                                  col.name, raw[c][i]));
                col.levels.push_back(raw[c][i]);
                it = col.levels.end() - 1;
            }
            col.values[i] = static_cast<double>(it - col.levels.begin() + 1);
        }
    }
    return ObservationTable(std::move(ids), std::move(cols), schema.incomplete_column);
}

ObservationTable load_csv(const std::filesystem::path& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in)
        throw ParseError(fmt::format("cannot open '{}'", path.string()), 0);
    return read_csv(in, schema);
}

void write_csv(const ObservationTable& table, std::ostream& out, char delimiter) {
    out << "id";
    for (const auto& col : table.columns())
        out << delimiter << col.name;
    out << '\n';
    for (std::size_t i = 0; i < table.rows(); ++i) {
        out << table.subject_ids()[i];
        for (const auto& col : table.columns()) {
            out << delimiter;
            if (col.missing[i])
                continue;
            if (col.categorical())
                out << col.levels[static_cast<std::size_t>(col.values[i]) - 1];
            else
                out << fmt::format("{}", col.values[i]);
        }
        out << '\n';
    }
}

MissingnessSummary missingness_summary(const ObservationTable& table) {
    MissingnessSummary s;
    s.n = table.rows();
    for (std::size_t i = 0; i < s.n; ++i)
        if (!table.observed(i))
            ++s.m;
    s.rate = s.n == 0 ? 0.0 : static_cast<double>(s.m) / static_cast<double>(s.n);
    return s;
}

}  // namespace peee
