#include "bloompipe/expression.hpp"

#include "bloompipe/error.hpp"

namespace bloompipe {

namespace {

bool is_word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '.' || c == '/' || c == '-' || c == ':';
}

bool is_ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

Expression Expression::parse(std::string_view source) {
    Expression expr;
    expr.source_ = std::string(source);
    std::size_t i = 0;
    auto fail = [&](const std::string& why) -> void {
        throw Error(Errc::BadBinding, "bad expression '" + std::string(source) + "': " + why +
                                          " at position " + std::to_string(i));
    };
    auto skip_ws = [&] {
        while (i < source.size() && source[i] == ' ') ++i;
    };

    skip_ws();
    if (i == source.size()) fail("empty expression");
    for (;;) {
        skip_ws();
        if (i >= source.size()) fail("expected a term");
        Term term;
        if (source[i] == '@') {
            ++i;
            const auto begin = i;
            int dots = 0;
            while (i < source.size() && (is_ident_char(source[i]) || source[i] == '.')) {
                if (source[i] == '.') ++dots;
                ++i;
            }
            term.reference = true;
            term.text = std::string(source.substr(begin, i - begin));
            if (dots != 1 || term.text.front() == '.' || term.text.back() == '.') {
                fail("references look like @scope.name");
            }
        } else if (source[i] == '\'') {
            const auto close = source.find('\'', i + 1);
            if (close == std::string_view::npos) fail("unterminated quote");
            term.text = std::string(source.substr(i + 1, close - i - 1));
            i = close + 1;
        } else if (is_word_char(source[i])) {
            const auto begin = i;
            while (i < source.size() && is_word_char(source[i])) ++i;
            term.text = std::string(source.substr(begin, i - begin));
        } else {
            fail(std::string("unexpected character '") + source[i] + "'");
        }
        expr.terms_.push_back(std::move(term));
        skip_ws();
        if (i == source.size()) break;
        if (source[i] != '+') fail("expected '+'");
        ++i;
    }
    return expr;
}

std::string Expression::evaluate(const ExprContext& context) const {
    std::string out;
    for (const auto& term : terms_) {
        if (!term.reference) {
            out += term.text;
            continue;
        }
        auto it = context.find(term.text);
        if (it == context.end()) {
            throw Error(Errc::BindingEvaluation, "unknown field @" + term.text + " in '" + source_ + "'");
        }
        out += it->second;
    }
    return out;
}

std::vector<std::string> Expression::references() const {
    std::vector<std::string> refs;
    for (const auto& term : terms_)
        if (term.reference) refs.push_back(term.text);
    return refs;
}

}  // namespace bloompipe
