#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace peee {

enum class ColumnRole { response, covariate, auxiliary, id };
enum class ColumnKind { numeric, categorical };

/// One named column. Categorical values are level codes 1..K stored as
/// doubles; masked cells hold NaN.
struct Column {
    std::string name;
    ColumnRole role = ColumnRole::covariate;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<double> values;
    std::vector<std::uint8_t> missing;
    /// Labels for categorical levels; `levels[k-1]` is the label of code k.
    std::vector<std::string> levels;

    bool categorical() const noexcept { return kind == ColumnKind::categorical; }
    int level_count() const noexcept { return static_cast<int>(levels.size()); }
};

struct MissingnessSummary {
    std::size_t n = 0;
    std::size_t m = 0;
    double rate = 0.0;
};

/// Rectangular data set with at most one incompletely observed column.
class ObservationTable {
public:
    ObservationTable() = default;

    /// Validates every invariant and throws SchemaError on violation.
    /// `incomplete_column` may be empty when the data are complete.
    ObservationTable(std::vector<std::int64_t> subject_ids, std::vector<Column> columns,
                     std::string incomplete_column = {});

    std::size_t rows() const noexcept { return subject_ids_.size(); }
    const std::vector<std::int64_t>& subject_ids() const noexcept { return subject_ids_; }
    const std::vector<Column>& columns() const noexcept { return columns_; }

    bool has_column(std::string_view name) const noexcept;
    const Column& column(std::string_view name) const;

    /// Name of the column that may carry missing cells; empty if none.
    const std::string& incomplete_column() const noexcept { return incomplete_; }

    /// R_i: true when row i has every cell observed.
    bool observed(std::size_t row) const noexcept;
    std::vector<std::size_t> complete_rows() const;
    std::vector<std::size_t> incomplete_rows() const;

    /// Rows gathered in the given order. With `renumber_ids` the result gets
    /// fresh ids 1..k, so rows may repeat; otherwise a repeated row is a
    /// SchemaError (duplicate id).
    ObservationTable select_rows(std::span<const std::size_t> rows, bool renumber_ids) const;

    ObservationTable with_subject_ids(std::vector<std::int64_t> ids) const;

private:
    std::vector<std::int64_t> subject_ids_;
    std::vector<Column> columns_;
    std::string incomplete_;
    std::ptrdiff_t incomplete_index_ = -1;
};

struct TableSchema {
    /// Column holding subject ids. When empty, ids are the 1-based row numbers.
    std::string id_column;
    /// Roles for named columns; unlisted columns are covariates.
    std::map<std::string, ColumnRole> roles;
    std::set<std::string> categorical;
    /// Optional explicit level order per categorical column.
    std::map<std::string, std::vector<std::string>> levels;
    /// The only column allowed to contain missing cells (may be empty).
    std::string incomplete_column;
    char delimiter = ',';
    std::vector<std::string> missing_tokens = {"", "NA"};
};

ObservationTable read_csv(std::istream& in, const TableSchema& schema);
ObservationTable load_csv(const std::filesystem::path& path, const TableSchema& schema);

/// Writes the table with shortest round-trip float formatting; missing cells
/// are left empty.
void write_csv(const ObservationTable& table, std::ostream& out, char delimiter = ',');

MissingnessSummary missingness_summary(const ObservationTable& table);

std::string_view to_string(ColumnRole role) noexcept;

}  // namespace peee
