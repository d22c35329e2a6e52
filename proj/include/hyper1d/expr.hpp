#pragma once

#include <cctype>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hyper1d/util.hpp"

namespace hyper1d {

/// Closed-form scalar expressions of (x,t).
///
/// Grammar: operators + - * / ^, functions sin cos exp abs, variables x t,
/// the constant pi, and piecewise(c, a, b) which evaluates a where c > 0 and
/// b otherwise. Boundary maps may additionally use z1..zn, bound to the
/// trace vector supplied at evaluation time.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind {
        Const, VarX, VarT, VarZ,
        Add, Sub, Mul, Div, Pow, Neg,
        Sin, Cos, Exp, Abs,
        Piecewise
    };

    Kind kind;
    double value = 0.0;  // Kind::Const: the constant; Kind::VarZ: 0-based index
    ExprPtr a, b, c;

    double eval(double x, double t) const { return eval(x, t, nullptr); }

    double eval(double x, double t, const std::vector<double>* z) const {
        switch (kind) {
            case Kind::Const: return value;
            case Kind::VarX: return x;
            case Kind::VarT: return t;
            case Kind::VarZ: {
                const size_t i = (size_t)value;
                if (!z || i >= z->size()) throw Error("z-variable outside its context");
                return (*z)[i];
            }
            case Kind::Add: return a->eval(x, t, z) + b->eval(x, t, z);
            case Kind::Sub: return a->eval(x, t, z) - b->eval(x, t, z);
            case Kind::Mul: return a->eval(x, t, z) * b->eval(x, t, z);
            case Kind::Div: return a->eval(x, t, z) / b->eval(x, t, z);
            case Kind::Pow: return std::pow(a->eval(x, t, z), b->eval(x, t, z));
            case Kind::Neg: return -a->eval(x, t, z);
            case Kind::Sin: return std::sin(a->eval(x, t, z));
            case Kind::Cos: return std::cos(a->eval(x, t, z));
            case Kind::Exp: return std::exp(a->eval(x, t, z));
            case Kind::Abs: return std::abs(a->eval(x, t, z));
            case Kind::Piecewise:
                return a->eval(x, t, z) > 0.0 ? b->eval(x, t, z) : c->eval(x, t, z);
        }
        return 0.0;
    }

    bool depends_on_t() const {
        switch (kind) {
            case Kind::Const: case Kind::VarX: case Kind::VarZ: return false;
            case Kind::VarT: return true;
            default:
                return (a && a->depends_on_t()) || (b && b->depends_on_t()) ||
                       (c && c->depends_on_t());
        }
    }

    std::optional<double> constant_value() const {
        if (kind == Kind::Const) return value;
        return std::nullopt;
    }
};

namespace detail {

inline ExprPtr make_const(double v) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Const;
    e->value = v;
    return e;
}

inline ExprPtr make_node(Expr::Kind k, ExprPtr a, ExprPtr b = nullptr, ExprPtr c = nullptr) {
    // Fold constant subtrees eagerly; keeps zero-detection exact downstream.
    // Leaves (variables) and piecewise gates are never folded.
    const bool leaf = k == Expr::Kind::Const || k == Expr::Kind::VarX ||
                      k == Expr::Kind::VarT || k == Expr::Kind::VarZ;
    const bool foldable =
        !leaf && k != Expr::Kind::Piecewise &&
        (!a || a->kind == Expr::Kind::Const) &&
        (!b || b->kind == Expr::Kind::Const) &&
        (!c || c->kind == Expr::Kind::Const);
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->a = std::move(a);
    e->b = std::move(b);
    e->c = std::move(c);
    if (foldable && k != Expr::Kind::Const) return make_const(e->eval(0, 0));
    return e;
}

class Parser {
  public:
    explicit Parser(std::string src) : src_(std::move(src)) {}

    ExprPtr parse() {
        auto e = expr();
        skip_ws();
        if (pos_ != src_.size()) fail("trailing input");
        return e;
    }

  private:
    std::string src_;
    size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) {
        throw Error("expression parse error at position " + std::to_string(pos_) +
                    " in \"" + src_ + "\": " + what);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace((unsigned char)src_[pos_])) ++pos_;
    }

    bool accept(char ch) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == ch) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char ch) {
        if (!accept(ch)) fail(std::string("expected '") + ch + "'");
    }

    ExprPtr expr() {
        auto e = term();
        for (;;) {
            if (accept('+')) e = make_node(Expr::Kind::Add, e, term());
            else if (accept('-')) e = make_node(Expr::Kind::Sub, e, term());
            else return e;
        }
    }

    ExprPtr term() {
        auto e = factor();
        for (;;) {
            if (accept('*')) e = make_node(Expr::Kind::Mul, e, factor());
            else if (accept('/')) e = make_node(Expr::Kind::Div, e, factor());
            else return e;
        }
    }

    ExprPtr factor() {
        auto e = unary();
        if (accept('^')) return make_node(Expr::Kind::Pow, e, factor());  // right assoc
        return e;
    }

    ExprPtr unary() {
        // '^' binds tighter than unary minus: -x^2 = -(x^2)
        if (accept('-')) return make_node(Expr::Kind::Neg, factor());
        return primary();
    }

    std::string ident() {
        skip_ws();
        size_t start = pos_;
        while (pos_ < src_.size() && (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_'))
            ++pos_;
        return src_.substr(start, pos_ - start);
    }

    ExprPtr primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        char ch = src_[pos_];
        if (std::isdigit((unsigned char)ch) || ch == '.') {
            char* end = nullptr;
            double v = std::strtod(src_.c_str() + pos_, &end);
            pos_ = end - src_.c_str();
            return make_const(v);
        }
        if (ch == '(') {
            ++pos_;
            auto e = expr();
            expect(')');
            return e;
        }
        if (std::isalpha((unsigned char)ch)) {
            std::string name = ident();
            if (name == "x") return make_node(Expr::Kind::VarX, nullptr);
            if (name == "t") return make_node(Expr::Kind::VarT, nullptr);
            if (name.size() >= 2 && name[0] == 'z' &&
                name.find_first_not_of("0123456789", 1) == std::string::npos) {
                const int idx = std::atoi(name.c_str() + 1);
                if (idx < 1) fail("z-variables are numbered from z1");
                auto e = std::make_shared<Expr>();
                e->kind = Expr::Kind::VarZ;
                e->value = idx - 1;
                return e;
            }
            if (name == "pi") return make_const(two_pi / 2.0);
            if (name == "piecewise") {
                expect('(');
                auto c = expr();
                expect(',');
                auto a = expr();
                expect(',');
                auto b = expr();
                expect(')');
                return make_node(Expr::Kind::Piecewise, c, a, b);
            }
            Expr::Kind k;
            if (name == "sin") k = Expr::Kind::Sin;
            else if (name == "cos") k = Expr::Kind::Cos;
            else if (name == "exp") k = Expr::Kind::Exp;
            else if (name == "abs") k = Expr::Kind::Abs;
            else fail("unknown identifier '" + name + "'");
            expect('(');
            auto arg = expr();
            expect(')');
            return make_node(k, arg);
        }
        fail("unexpected character");
    }
};

}  // namespace detail

inline ExprPtr parse_expression(const std::string& src) {
    return detail::Parser(src).parse();
}

/// A piecewise-smooth coefficient of (x,t) with an explicit x-breakpoint list.
class CoefficientField {
  public:
    CoefficientField() : CoefficientField(0.0) {}

    explicit CoefficientField(double constant)
        : expr_(detail::make_const(constant)), source_(std::to_string(constant)) {}

    explicit CoefficientField(const std::string& source, std::vector<double> breakpoints = {})
        : expr_(parse_expression(source)), source_(source), breakpoints_(std::move(breakpoints)) {
        validate_breakpoints();
    }

    CoefficientField(ExprPtr expr, std::string source, std::vector<double> breakpoints = {})
        : expr_(std::move(expr)), source_(std::move(source)), breakpoints_(std::move(breakpoints)) {
        validate_breakpoints();
    }

    double operator()(double x, double t) const { return expr_->eval(x, t); }

    bool time_independent() const { return !expr_->depends_on_t(); }
    bool is_zero() const {
        auto v = expr_->constant_value();
        return v && *v == 0.0;
    }
    std::optional<double> constant_value() const { return expr_->constant_value(); }

    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::string& source() const { return source_; }

  private:
    void validate_breakpoints() {
        for (size_t i = 0; i < breakpoints_.size(); ++i) {
            if (breakpoints_[i] < 0.0 || breakpoints_[i] > 1.0)
                throw Error("breakpoint outside [0,1]: " + std::to_string(breakpoints_[i]));
            if (i > 0 && breakpoints_[i] <= breakpoints_[i - 1])
                throw Error("breakpoints must be strictly increasing");
        }
    }

    ExprPtr expr_;
    std::string source_;
    std::vector<double> breakpoints_;
};

}  // namespace hyper1d
