#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bloompipe {

/// Values visible to an expression, keyed by dotted reference name
/// ("event.path", "schedule.fire_time", "param.file", ...).
using ExprContext = std::map<std::string, std::string>;

/// Tiny binding language: terms joined by `+`.
///
///   @scope.name      reference into the context
///   'text'           quoted literal (may contain spaces and '+')
///   bare-word        unquoted literal made of [A-Za-z0-9_./:-]
///
/// Example: `'annotated/' + @param.file`.
class Expression {
public:
    struct Term {
        bool reference = false;
        std::string text;  // literal text or reference name without '@'
    };

    /// Throws Error{BadBinding} on malformed input.
    static Expression parse(std::string_view source);

    /// Throws Error{BindingEvaluation} when a reference is missing.
    std::string evaluate(const ExprContext& context) const;

    std::vector<std::string> references() const;
    const std::string& source() const { return source_; }
    const std::vector<Term>& terms() const { return terms_; }

private:
    std::string source_;
    std::vector<Term> terms_;
};

}  // namespace bloompipe
