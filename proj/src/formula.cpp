#include "peee/formula.hpp"

#include "peee/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace peee {

namespace {

class FormulaParser {
public:
    explicit FormulaParser(std::string_view text) : text_(text) {}

    Formula parse() {
        Formula f;
        f.response = identifier();
        expect('~');
        bool intercept_only = false;
        while (true) {
            skip_ws();
            const std::size_t start = pos_;
            if (peek() == '1') {
                ++pos_;
                intercept_only = true;
            } else {
                Term t = term();
                if (t.column == f.response)
                    fail(fmt::format("response '{}' reused as a term", f.response), start);
                if (std::find(f.terms.begin(), f.terms.end(), t) != f.terms.end())
                    fail(fmt::format("duplicate term on '{}'", t.column), start);
                f.terms.push_back(std::move(t));
            }
            skip_ws();
            if (at_end())
                break;
            expect('+');
        }
        if (intercept_only && !f.terms.empty())
            fail("'1' cannot be combined with other terms", 0);
        return f;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
        throw ParseError(fmt::format("formula '{}': {} at position {}", text_, msg, at), at);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }
    bool at_end() {
        skip_ws();
        return pos_ >= text_.size();
    }
    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }
    void expect(char c) {
        if (peek() != c) {
            if (pos_ >= text_.size())
                fail(fmt::format("expected '{}' but input ended", c), pos_);
            fail(fmt::format("unexpected token '{}', expected '{}'", text_[pos_], c), pos_);
        }
        ++pos_;
    }

    static bool ident_start(char c) {
        return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    }
    static bool ident_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    }

    std::string identifier() {
        skip_ws();
        if (pos_ >= text_.size())
            fail("expected identifier but input ended", pos_);
        if (!ident_start(text_[pos_]))
            fail(fmt::format("unexpected token '{}'", text_[pos_]), pos_);
        const std::size_t start = pos_;
        while (pos_ < text_.size() && ident_char(text_[pos_]))
            ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    int integer() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
        if (start == pos_)
            fail("expected integer", start);
        return std::stoi(std::string(text_.substr(start, pos_ - start)));
    }

    Term term() {
        const std::string name = identifier();
        if (peek() != '(') {
            return Term{TermKind::numeric, name, 0, 0};
        }
        const std::size_t fn_pos = pos_;
        expect('(');
        Term t;
        if (name == "cat") {
            t = Term{TermKind::categorical, identifier(), 0, 0};
        } else if (name == "bs") {
            t.kind = TermKind::spline;
            t.column = identifier();
            expect(',');
            t.n_internal_knots = integer();
            expect(',');
            t.order = integer();
            if (t.order < 1)
                fail("spline order must be >= 1", fn_pos);
        } else {
            fail(fmt::format("unknown function '{}'", name), fn_pos);
        }
        expect(')');
        return t;
    }
};

}  // namespace

std::string Formula::text() const {
    std::string out = response + " ~ ";
    if (terms.empty())
        return out + "1";
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (i)
            out += " + ";
        const auto& t = terms[i];
        switch (t.kind) {
        case TermKind::numeric: out += t.column; break;
        case TermKind::categorical: out += fmt::format("cat({})", t.column); break;
        case TermKind::spline:
            out += fmt::format("bs({},{},{})", t.column, t.n_internal_knots, t.order);
            break;
        }
    }
    return out;
}

std::vector<std::string> Formula::term_columns() const {
    std::vector<std::string> out;
    for (const auto& t : terms)
        if (std::find(out.begin(), out.end(), t.column) == out.end())
            out.push_back(t.column);
    return out;
}

bool Formula::uses(std::string_view column) const {
    return std::any_of(terms.begin(), terms.end(), [&](const Term& t) { return t.column == column; });
}

Formula parse_formula(std::string_view text) {
    return FormulaParser(text).parse();
}

DesignBuilder::DesignBuilder(Formula formula, const ObservationTable& table)
    : DesignBuilder(std::move(formula), std::make_shared<const ObservationTable>(table)) {}

DesignBuilder::DesignBuilder(Formula formula, std::shared_ptr<const ObservationTable> table)
    : formula_(std::move(formula)), table_(std::move(table)) {
    const auto& cols = table_->columns();
    const auto index_of = [&](const std::string& name) {
        for (std::size_t c = 0; c < cols.size(); ++c)
            if (cols[c].name == name)
                return c;
        throw SchemaError(fmt::format("formula '{}': unknown column '{}'", formula_.text(), name));
    };
    index_of(formula_.response);
    names_.emplace_back("(Intercept)");
    int next = 1;
    for (const auto& t : formula_.terms) {
        BoundTerm b{t, index_of(t.column), next, 0, std::nullopt};
        const Column& col = cols[b.column];
        switch (t.kind) {
        case TermKind::numeric:
            b.width = 1;
            names_.push_back(t.column);
            break;
        case TermKind::categorical:
            if (!col.categorical())
                throw SchemaError(fmt::format("cat({}): column is not categorical", t.column));
            b.width = col.level_count() - 1;
            for (int k = 2; k <= col.level_count(); ++k)
                names_.push_back(fmt::format("{}={}", t.column, col.levels[static_cast<std::size_t>(k - 1)]));
            break;
        case TermKind::spline: {
            if (col.categorical())
                throw SchemaError(fmt::format("bs({}): column is categorical", t.column));
            std::vector<double> observed;
            observed.reserve(col.values.size());
            for (std::size_t i = 0; i < col.values.size(); ++i)
                if (!col.missing[i])
                    observed.push_back(col.values[i]);
            b.basis = SplineBasis::from_quantiles(observed, t.n_internal_knots, t.order);
            // The first basis function is dropped; the rest plus the intercept span the same space.
            b.width = b.basis->dimension() - 1;
            for (int s = 1; s <= b.width; ++s)
                names_.push_back(fmt::format("bs({}){}", t.column, s));
            break;
        }
        }
        next += b.width;
        bound_.push_back(std::move(b));
    }
}

std::vector<int> DesignBuilder::columns_of(std::string_view column) const {
    std::vector<int> out;
    for (const auto& b : bound_)
        if (b.term.column == column)
            for (int j = 0; j < b.width; ++j)
                out.push_back(b.first_col + j);
    return out;
}

const SplineBasis* DesignBuilder::spline_for(std::string_view column) const {
    for (const auto& b : bound_)
        if (b.term.column == column && b.basis)
            return &*b.basis;
    return nullptr;
}

namespace {

const std::vector<double>* lookup(const Overrides& m, std::string_view key, std::size_t expected) {
    auto it = m.find(key);
    if (it == m.end())
        return nullptr;
    if (it->second.size() != expected)
        throw ConfigError(fmt::format("override for '{}' has {} values, expected {}", key,
                                      it->second.size(), expected));
    return &it->second;
}

}  // namespace

DesignMatrix DesignBuilder::build(std::span<const std::size_t> rows, const Overrides& overrides) const {
    const auto n = static_cast<Eigen::Index>(rows.size());
    DesignMatrix d;
    d.column_names = names_;
    d.values.setZero(n, width());
    d.values.col(0).setOnes();
    const auto& cols = table_->columns();
    std::vector<double> spline_row;
    for (const auto& b : bound_) {
        const Column& col = cols[b.column];
        const auto* sub = lookup(overrides, col.name, rows.size());
        if (b.basis)
            spline_row.resize(static_cast<std::size_t>(b.basis->dimension()));
        for (Eigen::Index r = 0; r < n; ++r) {
            const std::size_t src = rows[static_cast<std::size_t>(r)];
            double v = sub ? (*sub)[static_cast<std::size_t>(r)] : col.values.at(src);
            if (std::isnan(v))
                throw MissingDataError(
                    fmt::format("row {}: column '{}' is missing and has no substitute", src + 1, col.name),
                    src, col.name);
            switch (b.term.kind) {
            case TermKind::numeric: d.values(r, b.first_col) = v; break;
            case TermKind::categorical: {
                const int code = static_cast<int>(v);
                if (code < 1 || code > col.level_count() || code != v)
                    throw SchemaError(fmt::format("column '{}': level code {} outside 1..{}", col.name,
                                                  v, col.level_count()));
                if (code >= 2)
                    d.values(r, b.first_col + code - 2) = 1.0;
                break;
            }
            case TermKind::spline:
                b.basis->eval(v, spline_row);
                for (int j = 0; j < b.width; ++j)
                    d.values(r, b.first_col + j) = spline_row[static_cast<std::size_t>(j) + 1];
                break;
            }
        }
    }
    return d;
}

DesignMatrix DesignBuilder::build(const Overrides& overrides) const {
    std::vector<std::size_t> all(table_->rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return build(all, overrides);
}

Eigen::VectorXd DesignBuilder::response(std::span<const std::size_t> rows,
                                        const Overrides& overrides) const {
    const Column& col = table_->column(formula_.response);
    const auto* sub = lookup(overrides, col.name, rows.size());
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double v = sub ? (*sub)[r] : col.values.at(rows[r]);
        if (std::isnan(v))
            throw MissingDataError(
                fmt::format("row {}: response '{}' is missing and has no substitute", rows[r] + 1, col.name),
                rows[r], col.name);
        y(static_cast<Eigen::Index>(r)) = v;
    }
    return y;
}

DesignMatrix build_design(const Formula& formula, const ObservationTable& table,
                          const Overrides& overrides) {
    return DesignBuilder(formula, table).build(overrides);
}

}  // namespace peee
