#pragma once

#include "peee/splines.hpp"
#include "peee/tabular.hpp"

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace peee {

enum class TermKind {
    numeric,      // z
    categorical,  // cat(z): K-1 indicators, smallest level is the reference
    spline,       // bs(z, N, m): N+m-1 B-spline columns (first basis function dropped)
};

struct Term {
    TermKind kind = TermKind::numeric;
    std::string column;
    int n_internal_knots = 0;
    int order = 0;

    bool operator==(const Term&) const = default;
};

/// `response ~ term + term + ...`; an intercept is always included.
struct Formula {
    std::string response;
    std::vector<Term> terms;

    /// Canonical text form; parse_formula(f.text()) == f.
    std::string text() const;
    /// Every column referenced by a term.
    std::vector<std::string> term_columns() const;
    bool uses(std::string_view column) const;

    bool operator==(const Formula&) const = default;
};

/// Grammar: response "~" term ("+" term)*, where term is an identifier,
/// `cat(id)`, `bs(id, int, int)` or `1` (intercept only).
/// Throws ParseError carrying the character offset.
Formula parse_formula(std::string_view text);

struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> column_names;

    Eigen::Index rows() const noexcept { return values.rows(); }
    Eigen::Index cols() const noexcept { return values.cols(); }
};

/// Substitute values keyed by column name, aligned with the rows being built.
using Overrides = std::map<std::string, std::vector<double>, std::less<>>;

/// Design-matrix factory bound to one formula and one source table.
///
/// Level sets and spline bases are frozen at construction from the table's
/// observed values, so pseudo-records built later with substituted values
/// share the same columns.
class DesignBuilder {
public:
    DesignBuilder(Formula formula, std::shared_ptr<const ObservationTable> table);
    /// Copies `table` into shared ownership.
    DesignBuilder(Formula formula, const ObservationTable& table);

    const Formula& formula() const noexcept { return formula_; }
    const ObservationTable& table() const noexcept { return *table_; }
    int width() const noexcept { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& column_names() const noexcept { return names_; }

    /// Design columns generated by the terms that reference `column`.
    std::vector<int> columns_of(std::string_view column) const;
    /// Spline basis frozen for the bs() term on `column`, if any.
    const SplineBasis* spline_for(std::string_view column) const;

    DesignMatrix build(std::span<const std::size_t> rows, const Overrides& overrides = {}) const;
    DesignMatrix build(const Overrides& overrides = {}) const;

    /// Response values for the requested rows (level codes for categorical).
    Eigen::VectorXd response(std::span<const std::size_t> rows, const Overrides& overrides = {}) const;

private:
    struct BoundTerm {
        Term term;
        std::size_t column;
        int first_col;
        int width;
        std::optional<SplineBasis> basis;
    };

    Formula formula_;
    std::shared_ptr<const ObservationTable> table_;
    std::vector<BoundTerm> bound_;
    std::vector<std::string> names_;
};

DesignMatrix build_design(const Formula& formula, const ObservationTable& table,
                          const Overrides& overrides = {});

}  // namespace peee
