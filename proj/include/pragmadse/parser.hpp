#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>

#include "pragmadse/kernel_ir.hpp"

namespace pragmadse {

namespace detail {

struct Token {
    enum class Kind { ident, number, punct, pragma_line, eof };
    Kind kind = Kind::eof;
    std::string text;
    double number = 0.0;
    bool is_int = true;
    int line = 1, col = 1;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        skip_ws_and_comments();
        tok_ = Token{};
        tok_.line = line_;
        tok_.col = col_;
        if (pos_ >= src_.size()) {
            tok_.kind = Token::Kind::eof;
            return;
        }
        char c = src_[pos_];
        if (c == '#') {
            // whole pragma line as one token
            std::size_t end = src_.find('\n', pos_);
            if (end == std::string::npos) end = src_.size();
            tok_.kind = Token::Kind::pragma_line;
            tok_.text = src_.substr(pos_, end - pos_);
            while (pos_ < end) take();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            tok_.kind = Token::Kind::ident;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                    src_[pos_] == '_'))
                tok_.text += take();
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            tok_.kind = Token::Kind::number;
            std::string num;
            bool is_float = false;
            while (pos_ < src_.size() &&
                   (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
                    src_[pos_] == '.')) {
                if (src_[pos_] == '.') is_float = true;
                num += take();
            }
            tok_.text = num;
            tok_.number = std::stod(num);
            tok_.is_int = !is_float;
            return;
        }
        tok_.kind = Token::Kind::punct;
        tok_.text = std::string(1, take());
        // two-char operators
        if (pos_ < src_.size()) {
            const char d = src_[pos_];
            if ((tok_.text[0] == '+' && (d == '+' || d == '=')) ||
                (tok_.text[0] == '-' && d == '=') ||
                (tok_.text[0] == '*' && d == '=') ||
                (tok_.text[0] == '/' && d == '=')) {
                tok_.text += take();
            }
        }
    }

    void skip_ws_and_comments() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                take();
            } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
                while (pos_ < src_.size() && src_[pos_] != '\n') take();
            } else {
                break;
            }
        }
    }

    char take() {
        const char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    const std::string& src_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

inline std::string lower_copy(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

struct PendingPragma {
    PragmaKind kind;
    std::string placeholder;
    int line, col;
};

}  // namespace detail

class KernelParser {
public:
    KernelIR parse(const KernelSource& src) {
        lexer_.emplace(src.text);
        ir_ = KernelIR{};
        while (!at_eof()) {
            if (peek_ident("const")) {
                parse_const_decl();
            } else if (peek_ident("void")) {
                parse_function();
            } else {
                fail("expected 'const' or 'void' at top level");
            }
        }
        if (ir_.functions.empty()) fail("no function in kernel source");
        ir_.kernel_index = static_cast<int>(ir_.functions.size()) - 1;
        ir_.name = ir_.kernel().name;
        if (!src.name.empty() && src.name != ir_.name)
            throw DataError("kernel name '" + src.name +
                            "' does not match function '" + ir_.name + "'");
        validate();
        return std::move(ir_);
    }

private:
    std::optional<detail::Lexer> lexer_;
    KernelIR ir_;
    FunctionDecl* fn_ = nullptr;
    bool in_kernel_candidate_ = false;  // loops/pragmas allowed (resolved late)
    std::vector<std::string> loop_vars_in_scope_;

    [[noreturn]] void fail(const std::string& msg) const {
        const auto& t = lexer_->peek();
        throw ParseError(msg, t.line, t.col);
    }
    [[noreturn]] void fail_at(const std::string& msg, int line, int col) const {
        throw ParseError(msg, line, col);
    }

    bool at_eof() const { return lexer_->peek().kind == detail::Token::Kind::eof; }

    bool peek_ident(const char* s) const {
        return lexer_->peek().kind == detail::Token::Kind::ident &&
               lexer_->peek().text == s;
    }
    bool peek_punct(const char* s) const {
        return lexer_->peek().kind == detail::Token::Kind::punct &&
               lexer_->peek().text == s;
    }

    detail::Token expect_ident() {
        if (lexer_->peek().kind != detail::Token::Kind::ident)
            fail("expected identifier");
        return lexer_->next();
    }
    void expect_keyword(const char* s) {
        if (!peek_ident(s)) fail(std::string("expected '") + s + "'");
        lexer_->next();
    }
    void expect_punct(const char* s) {
        if (!peek_punct(s)) fail(std::string("expected '") + s + "'");
        lexer_->next();
    }

    int parse_const_expr() {
        const auto& t = lexer_->peek();
        if (t.kind == detail::Token::Kind::number) {
            if (!t.is_int || t.number < 1) fail("expected positive integer constant");
            return static_cast<int>(lexer_->next().number);
        }
        if (t.kind == detail::Token::Kind::ident) {
            for (const auto& [n, v] : ir_.constants)
                if (n == t.text) {
                    lexer_->next();
                    return v;
                }
            fail("unknown constant '" + t.text + "' (loop bounds and extents must be compile-time constants)");
        }
        fail("expected integer constant");
    }

    void parse_const_decl() {
        expect_keyword("const");
        expect_keyword("int");
        const auto name = expect_ident().text;
        expect_punct("=");
        const int v = parse_const_expr();
        expect_punct(";");
        ir_.constants.emplace_back(name, v);
    }

    void parse_function() {
        expect_keyword("void");
        FunctionDecl fn;
        fn.name = expect_ident().text;
        expect_punct("(");
        if (!peek_punct(")")) {
            while (true) {
                fn.params.push_back(parse_param());
                if (peek_punct(",")) {
                    lexer_->next();
                    continue;
                }
                break;
            }
        }
        expect_punct(")");
        ir_.functions.push_back(std::move(fn));
        fn_ = &ir_.functions.back();
        loop_vars_in_scope_.clear();
        expect_punct("{");
        fn_->body = parse_block_items();
        expect_punct("}");
        fn_ = nullptr;
    }

    ParamDecl parse_param() {
        ParamDecl p;
        bool is_float = false;
        if (peek_ident("int")) {
            lexer_->next();
        } else if (peek_ident("float")) {
            lexer_->next();
            is_float = true;
        } else {
            fail("expected parameter type 'int' or 'float'");
        }
        const auto name = expect_ident().text;
        if (peek_punct("[")) {
            p.is_array = true;
            p.array.name = name;
            p.array.is_float = is_float;
            p.array.elem_bits = 32;
            while (peek_punct("[")) {
                lexer_->next();
                p.array.extents.push_back(parse_const_expr());
                expect_punct("]");
            }
        } else {
            p.scalar = ScalarDecl{name, is_float};
        }
        return p;
    }

    /// Items until the closing '}' of the current block.
    std::vector<BodyItem> parse_block_items() {
        std::vector<BodyItem> items;
        std::vector<detail::PendingPragma> pending;
        while (!peek_punct("}")) {
            if (at_eof()) fail("unexpected end of file in block");
            if (lexer_->peek().kind == detail::Token::Kind::pragma_line) {
                pending.push_back(parse_pragma_line());
                continue;
            }
            if (peek_ident("for")) {
                items.push_back(parse_for(pending));
                pending.clear();
                continue;
            }
            if (!pending.empty())
                fail_at("pragma not attached to a loop", pending.front().line,
                        pending.front().col);
            items.push_back(parse_simple_statement());
        }
        if (!pending.empty())
            fail_at("pragma not attached to a loop", pending.front().line,
                    pending.front().col);
        return items;
    }

    detail::PendingPragma parse_pragma_line() {
        const auto tok = lexer_->next();
        detail::PendingPragma p;
        p.line = tok.line;
        p.col = tok.col;
        std::istringstream is(tok.text);
        std::string hash, accel, kind, rest;
        is >> hash >> accel >> kind;
        std::getline(is, rest);
        if (hash != "#pragma" || detail::lower_copy(accel) != "accel")
            fail_at("malformed pragma line (expected '#pragma ACCEL ...')", p.line, p.col);
        const std::string k = detail::lower_copy(kind);
        auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        rest = strip(rest);
        std::string expect_prefix;
        if (k == "pipeline") {
            p.kind = PragmaKind::pipeline;
            expect_prefix = "auto{";
        } else if (k == "parallel") {
            p.kind = PragmaKind::parallel;
            expect_prefix = "factor=auto{";
        } else if (k == "tile") {
            p.kind = PragmaKind::tile;
            expect_prefix = "factor=auto{";
        } else {
            fail_at("unknown pragma kind '" + kind + "'", p.line, p.col);
        }
        if (rest.rfind(expect_prefix, 0) != 0 || rest.back() != '}')
            fail_at("malformed pragma option (expected '" + expect_prefix + "NAME}')",
                    p.line, p.col);
        p.placeholder = rest.substr(expect_prefix.size(),
                                    rest.size() - expect_prefix.size() - 1);
        if (p.placeholder.empty())
            fail_at("empty pragma placeholder name", p.line, p.col);
        return p;
    }

    BodyItem parse_for(const std::vector<detail::PendingPragma>& pragmas) {
        const auto for_tok = lexer_->next();  // 'for'
        expect_punct("(");
        expect_keyword("int");
        const auto var = expect_ident().text;
        expect_punct("=");
        if (lexer_->peek().kind != detail::Token::Kind::number ||
            lexer_->peek().number != 0.0)
            fail("loop must start at 0");
        lexer_->next();
        expect_punct(";");
        if (expect_ident().text != var) fail("loop condition must test the loop variable");
        expect_punct("<");
        const std::string bound_text = lexer_->peek().text;
        const int trip = parse_const_expr();
        expect_punct(";");
        if (expect_ident().text != var) fail("loop increment must update the loop variable");
        expect_punct("++");
        expect_punct(")");

        LoopNode loop;
        loop.id = static_cast<int>(ir_.loops.size());
        loop.var = var;
        loop.trip_count = trip;
        loop.bound_text = bound_text;
        ir_.loops.push_back(loop);
        const int loop_id = loop.id;

        for (const auto& p : pragmas) {
            for (const auto& s : ir_.slots) {
                if (s.id == p.placeholder)
                    fail_at("duplicate pragma placeholder '" + p.placeholder + "'",
                            p.line, p.col);
                if (s.loop_id == loop_id && s.kind == p.kind)
                    fail_at("loop already has a " +
                                std::string(pragma_kind_name(p.kind)) + " pragma",
                            p.line, p.col);
            }
            ir_.slots.push_back(PragmaSlot{p.placeholder, p.kind, loop_id});
            ir_.loops[static_cast<std::size_t>(loop_id)].pragma_slots.push_back(
                static_cast<int>(ir_.slots.size()) - 1);
        }

        loop_vars_in_scope_.push_back(var);
        expect_punct("{");
        auto body = parse_block_items();
        expect_punct("}");
        loop_vars_in_scope_.pop_back();
        ir_.loops[static_cast<std::size_t>(loop_id)].body = std::move(body);
        (void)for_tok;
        return BodyItem{BodyItem::Kind::loop, loop_id};
    }

    BodyItem parse_simple_statement() {
        // local scalar declaration
        if (peek_ident("int") || peek_ident("float")) {
            const bool is_float = lexer_->next().text == "float";
            const auto name = expect_ident().text;
            LocalDecl d;
            d.scalar = ScalarDecl{name, is_float};
            if (peek_punct("=")) {
                lexer_->next();
                d.init = parse_expr();
                d.init_text = render_expr(*d.init);
            }
            expect_punct(";");
            fn_->locals.push_back(std::move(d));
            // declarations are not statements; nothing enters the body list
            return parse_after_decl();
        }
        Statement st;
        const auto head = expect_ident();
        if (peek_punct("(")) {
            st.kind = Statement::Kind::call;
            st.callee = head.text;
            lexer_->next();
            if (!peek_punct(")")) {
                while (true) {
                    st.args.push_back(parse_expr());
                    if (peek_punct(",")) {
                        lexer_->next();
                        continue;
                    }
                    break;
                }
            }
            expect_punct(")");
            expect_punct(";");
        } else {
            st.kind = Statement::Kind::assign;
            st.lhs_name = head.text;
            while (peek_punct("[")) {
                lexer_->next();
                st.lhs_indices.push_back(parse_expr());
                expect_punct("]");
                st.lhs_is_array = true;
            }
            const auto op_tok = lexer_->next();
            if (op_tok.kind != detail::Token::Kind::punct) fail("expected assignment operator");
            if (op_tok.text == "=")
                st.assign_op = '=';
            else if (op_tok.text == "+=")
                st.assign_op = '+';
            else if (op_tok.text == "-=")
                st.assign_op = '-';
            else if (op_tok.text == "*=")
                st.assign_op = '*';
            else if (op_tok.text == "/=")
                st.assign_op = '/';
            else
                fail("unknown assignment operator '" + op_tok.text + "'");
            st.rhs = parse_expr();
            expect_punct(";");
        }
        finish_statement(st);
        fn_->statements.push_back(std::move(st));
        return BodyItem{BodyItem::Kind::statement,
                        static_cast<int>(fn_->statements.size()) - 1};
    }

    /// Declarations vanish from the item list; recurse for the next real item.
    BodyItem parse_after_decl() {
        if (peek_punct("}")) return BodyItem{BodyItem::Kind::statement, -1};
        if (lexer_->peek().kind == detail::Token::Kind::pragma_line || peek_ident("for"))
            fail("declarations must precede loops in a block");
        return parse_simple_statement();
    }

    ExprPtr parse_expr() {
        ExprPtr lhs = parse_term();
        while (peek_punct("+") || peek_punct("-")) {
            const char op = lexer_->next().text[0];
            lhs = Expr::make_binop(op, std::move(lhs), parse_term());
        }
        return lhs;
    }

    ExprPtr parse_term() {
        ExprPtr lhs = parse_factor();
        while (peek_punct("*") || peek_punct("/")) {
            const char op = lexer_->next().text[0];
            lhs = Expr::make_binop(op, std::move(lhs), parse_factor());
        }
        return lhs;
    }

    ExprPtr parse_factor() {
        const auto& t = lexer_->peek();
        if (t.kind == detail::Token::Kind::number) {
            const auto tok = lexer_->next();
            return Expr::make_number(tok.number, tok.is_int);
        }
        if (peek_punct("(")) {
            lexer_->next();
            auto e = parse_expr();
            expect_punct(")");
            return e;
        }
        if (t.kind == detail::Token::Kind::ident) {
            const auto name = lexer_->next().text;
            if (peek_punct("[")) {
                std::vector<ExprPtr> idx;
                while (peek_punct("[")) {
                    lexer_->next();
                    idx.push_back(parse_expr());
                    expect_punct("]");
                }
                return Expr::make_array(name, std::move(idx));
            }
            return Expr::make_scalar(name);
        }
        fail("expected expression");
    }

    // ---- statement analysis -------------------------------------------------

    void collect_index_vars(const Expr& e, std::vector<std::string>& vars) const {
        switch (e.kind) {
            case Expr::Kind::scalar_ref:
                vars.push_back(e.name);
                break;
            case Expr::Kind::binop:
                collect_index_vars(*e.lhs, vars);
                collect_index_vars(*e.rhs, vars);
                break;
            default:
                break;
        }
    }

    Access make_access(const std::string& array, bool is_write,
                       const std::vector<ExprPtr>& indices) const {
        Access a;
        a.array = array;
        a.is_write = is_write;
        for (const auto& idx : indices) {
            std::vector<std::string> vars;
            collect_index_vars(*idx, vars);
            a.dim_vars.push_back(std::move(vars));
        }
        return a;
    }

    void analyze_expr(const Expr& e, Statement& st) const {
        switch (e.kind) {
            case Expr::Kind::array_ref:
                st.ops[OpCode::load] += 1;
                st.accesses.push_back(make_access(e.name, false, e.indices));
                for (const auto& idx : e.indices) analyze_index(*idx, st);
                break;
            case Expr::Kind::binop:
                analyze_expr(*e.lhs, st);
                analyze_expr(*e.rhs, st);
                st.ops[binop_code(e.op)] += 1;
                break;
            default:
                break;
        }
    }

    /// Index expressions contribute address arithmetic ops but no loads.
    void analyze_index(const Expr& e, Statement& st) const {
        if (e.kind == Expr::Kind::binop) {
            analyze_index(*e.lhs, st);
            analyze_index(*e.rhs, st);
            st.ops[binop_code(e.op)] += 1;
        } else if (e.kind == Expr::Kind::array_ref) {
            throw DataError("array reference inside an index expression");
        }
    }

    static OpCode binop_code(char op) {
        switch (op) {
            case '+': return OpCode::add;
            case '-': return OpCode::sub;
            case '*': return OpCode::mul;
            default: return OpCode::div;
        }
    }

    void finish_statement(Statement& st) const {
        if (st.kind == Statement::Kind::call) {
            std::string s = st.callee + "(";
            for (std::size_t i = 0; i < st.args.size(); ++i) {
                if (i) s += ", ";
                s += render_expr(*st.args[i]);
            }
            st.text = s + ")";
            return;  // cost and accesses come from the callee at use sites
        }
        if (st.lhs_is_array && st.assign_op != '=') {
            // compound update reads the destination element first
            st.ops[OpCode::load] += 1;
            st.accesses.push_back(make_access(st.lhs_name, false, st.lhs_indices));
        }
        analyze_expr(*st.rhs, st);
        if (st.assign_op != '=') st.ops[binop_code(st.assign_op)] += 1;
        if (st.lhs_is_array) {
            st.ops[OpCode::store] += 1;
            st.accesses.push_back(make_access(st.lhs_name, true, st.lhs_indices));
            for (const auto& idx : st.lhs_indices) analyze_index(*idx, st);
        }
        std::string lhs = st.lhs_name;
        for (const auto& idx : st.lhs_indices) lhs += "[" + render_expr(*idx) + "]";
        const std::string op_text =
            st.assign_op == '=' ? "=" : std::string(1, st.assign_op) + "=";
        st.text = lhs + " " + op_text + " " + render_expr(*st.rhs);
    }

    // ---- validation -----------------------------------------------------------

    void validate() const {
        std::set<std::string> fnames;
        for (const auto& f : ir_.functions)
            if (!fnames.insert(f.name).second)
                throw DataError("duplicate function name '" + f.name + "'");

        for (std::size_t fi = 0; fi < ir_.functions.size(); ++fi) {
            const auto& f = ir_.functions[fi];
            const bool is_kernel = static_cast<int>(fi) == ir_.kernel_index;
            for (const auto& st : f.statements) {
                if (st.kind == Statement::Kind::call) {
                    if (!is_kernel)
                        throw DataError("helper '" + f.name + "' may not call functions");
                    const int ci = ir_.function_index(st.callee);
                    if (ci < 0 || ci == ir_.kernel_index)
                        throw DataError("call to unknown helper '" + st.callee + "'");
                    const auto& callee = ir_.functions[static_cast<std::size_t>(ci)];
                    if (st.args.size() != callee.params.size())
                        throw DataError("call to '" + st.callee + "': argument count mismatch");
                    for (std::size_t ai = 0; ai < st.args.size(); ++ai) {
                        const bool arg_is_array =
                            st.args[ai]->kind == Expr::Kind::scalar_ref &&
                            f.find_array(st.args[ai]->name) != nullptr;
                        if (arg_is_array != callee.params[ai].is_array)
                            throw DataError("call to '" + st.callee +
                                            "': array/scalar mismatch at argument " +
                                            std::to_string(ai));
                    }
                }
                for (const auto& a : st.accesses)
                    if (!f.find_array(a.array))
                        throw DataError("unknown array '" + a.array + "' in '" +
                                        f.name + "'");
            }
        }
        // helpers carry no loops: all loops were parsed into the kernel list,
        // but loops in non-final functions would also land there
        for (const auto& loop : ir_.loops) {
            if (loop.trip_count < 1)
                throw DataError("loop trip count must be >= 1");
        }
    }
};

inline KernelIR parse_kernel(const KernelSource& src) {
    KernelParser p;
    KernelIR ir = p.parse(src);
    return ir;
}

// ---- pretty printer --------------------------------------------------------

namespace detail {

inline void print_items(const KernelIR& ir, const FunctionDecl& fn,
                        const std::vector<BodyItem>& items, int indent,
                        std::string& out) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    for (const auto& item : items) {
        if (item.kind == BodyItem::Kind::statement) {
            if (item.index < 0) continue;
            out += pad + fn.statements[static_cast<std::size_t>(item.index)].text + ";\n";
        } else {
            const auto& loop = ir.loops[static_cast<std::size_t>(item.index)];
            for (int si : loop.pragma_slots) {
                const auto& s = ir.slots[static_cast<std::size_t>(si)];
                out += pad + "#pragma ACCEL " + pragma_kind_name(s.kind) + " ";
                if (s.kind != PragmaKind::pipeline) out += "factor=";
                out += "auto{" + s.id + "}\n";
            }
            out += pad + "for (int " + loop.var + " = 0; " + loop.var + " < " +
                   loop.bound_text + "; " + loop.var + "++) {\n";
            print_items(ir, fn, loop.body, indent + 1, out);
            out += pad + "}\n";
        }
    }
}

}  // namespace detail

/// Emit mini-language source that parses back to a structurally equal IR.
inline std::string print_kernel(const KernelIR& ir) {
    std::string out;
    for (const auto& [n, v] : ir.constants)
        out += "const int " + n + " = " + std::to_string(v) + ";\n";
    if (!ir.constants.empty()) out += "\n";
    for (std::size_t fi = 0; fi < ir.functions.size(); ++fi) {
        const auto& fn = ir.functions[fi];
        out += "void " + fn.name + "(";
        for (std::size_t pi = 0; pi < fn.params.size(); ++pi) {
            if (pi) out += ", ";
            const auto& p = fn.params[pi];
            if (p.is_array) {
                out += std::string(p.array.is_float ? "float " : "int ") + p.array.name;
                for (int e : p.array.extents) out += "[" + std::to_string(e) + "]";
            } else {
                out += std::string(p.scalar.is_float ? "float " : "int ") + p.scalar.name;
            }
        }
        out += ") {\n";
        for (const auto& d : fn.locals) {
            out += std::string("  ") + (d.scalar.is_float ? "float " : "int ") +
                   d.scalar.name;
            if (!d.init_text.empty()) out += " = " + d.init_text;
            out += ";\n";
        }
        detail::print_items(ir, fn, fn.body, 1, out);
        out += "}\n";
        if (fi + 1 < ir.functions.size()) out += "\n";
    }
    return out;
}

}  // namespace pragmadse
