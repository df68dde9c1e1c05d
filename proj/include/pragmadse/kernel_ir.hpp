#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pragmadse/util.hpp"

namespace pragmadse {

enum class PragmaKind { pipeline, parallel, tile };

inline const char* pragma_kind_name(PragmaKind k) {
    switch (k) {
        case PragmaKind::pipeline: return "PIPELINE";
        case PragmaKind::parallel: return "PARALLEL";
        case PragmaKind::tile: return "TILE";
    }
    return "?";
}

/// Statement-level operation kinds priced by the cost model. `cmp` renders
/// as "icmp" in lowered form; `call` only appears in lowered instructions.
enum class OpCode { add, sub, mul, div, cmp, load, store, call };

inline const char* opcode_name(OpCode op) {
    switch (op) {
        case OpCode::add: return "add";
        case OpCode::sub: return "sub";
        case OpCode::mul: return "mul";
        case OpCode::div: return "div";
        case OpCode::cmp: return "icmp";
        case OpCode::load: return "load";
        case OpCode::store: return "store";
        case OpCode::call: return "call";
    }
    return "?";
}

// ---- expressions -----------------------------------------------------------

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind { number, scalar_ref, array_ref, binop };
    Kind kind = Kind::number;

    double number = 0.0;
    bool is_int = true;
    std::string name;             // scalar_ref / array_ref
    std::vector<ExprPtr> indices; // array_ref
    char op = 0;                  // binop: + - * /
    ExprPtr lhs, rhs;

    static ExprPtr make_number(double v, bool is_int) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::number;
        e->number = v;
        e->is_int = is_int;
        return e;
    }
    static ExprPtr make_scalar(std::string n) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::scalar_ref;
        e->name = std::move(n);
        return e;
    }
    static ExprPtr make_array(std::string n, std::vector<ExprPtr> idx) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::array_ref;
        e->name = std::move(n);
        e->indices = std::move(idx);
        return e;
    }
    static ExprPtr make_binop(char op, ExprPtr l, ExprPtr r) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::binop;
        e->op = op;
        e->lhs = std::move(l);
        e->rhs = std::move(r);
        return e;
    }
};

inline int precedence_of(char op) { return (op == '*' || op == '/') ? 2 : 1; }

inline std::string render_number(double v, bool is_int) {
    if (is_int) return std::to_string(static_cast<long long>(v));
    std::string s = std::to_string(v);
    return s;
}

/// Canonical source rendering with minimal parentheses; re-parsing the
/// rendered text reproduces the expression tree.
inline std::string render_expr(const Expr& e, int parent_prec = 0) {
    switch (e.kind) {
        case Expr::Kind::number:
            return render_number(e.number, e.is_int);
        case Expr::Kind::scalar_ref:
            return e.name;
        case Expr::Kind::array_ref: {
            std::string s = e.name;
            for (const auto& idx : e.indices) s += "[" + render_expr(*idx) + "]";
            return s;
        }
        case Expr::Kind::binop: {
            const int p = precedence_of(e.op);
            // right operand of - and / needs parens at equal precedence
            std::string s = render_expr(*e.lhs, p) + " " + e.op + " " +
                            render_expr(*e.rhs, p + 1);
            if (p < parent_prec) s = "(" + s + ")";
            return s;
        }
    }
    return "";
}

// ---- declarations ----------------------------------------------------------

struct ArrayDecl {
    std::string name;
    int elem_bits = 32;
    bool is_float = false;
    std::vector<int> extents;

    std::uint64_t words() const {
        std::uint64_t w = 1;
        for (int e : extents) w *= static_cast<std::uint64_t>(e);
        return w;
    }
    bool operator==(const ArrayDecl&) const = default;
};

struct ScalarDecl {
    std::string name;
    bool is_float = false;
    bool operator==(const ScalarDecl&) const = default;
};

struct ParamDecl {
    bool is_array = false;
    ArrayDecl array;
    ScalarDecl scalar;
    bool operator==(const ParamDecl&) const = default;
};

struct LocalDecl {
    ScalarDecl scalar;
    ExprPtr init;  // may be null
    std::string init_text;
    bool operator==(const LocalDecl& o) const {
        return scalar == o.scalar && init_text == o.init_text;
    }
};

/// One array element touched by a statement: which loop variables index each
/// dimension, in dimension order (innermost dimension last).
struct Access {
    std::string array;
    bool is_write = false;
    std::vector<std::vector<std::string>> dim_vars;
    bool operator==(const Access&) const = default;
};

struct Statement {
    enum class Kind { assign, call };
    Kind kind = Kind::assign;

    // assign
    bool lhs_is_array = false;
    std::string lhs_name;
    std::vector<ExprPtr> lhs_indices;
    char assign_op = '=';  // '=' or the compound op character
    ExprPtr rhs;

    // call
    std::string callee;
    std::vector<ExprPtr> args;

    std::string text;               // canonical rendering, no trailing ';'
    std::map<OpCode, int> ops;      // multiset of priced operations
    std::vector<Access> accesses;   // array touches, in evaluation order

    int op_count() const {
        int n = 0;
        for (auto& [op, c] : ops) n += c;
        return n;
    }
    bool operator==(const Statement& o) const {
        return kind == o.kind && text == o.text && ops == o.ops &&
               accesses == o.accesses;
    }
};

struct BodyItem {
    enum class Kind { statement, loop };
    Kind kind = Kind::statement;
    int index = 0;  // into FunctionDecl::statements or KernelIR::loops
    bool operator==(const BodyItem&) const = default;
};

struct LoopNode {
    int id = 0;  // preorder index within the kernel
    std::string var;
    int trip_count = 1;
    int depth = 0;
    int parent = -1;
    std::string bound_text;  // literal or named constant as written
    std::vector<BodyItem> body;
    std::vector<int> pragma_slots;  // indices into KernelIR::slots, source order

    bool operator==(const LoopNode& o) const {
        return var == o.var && trip_count == o.trip_count && depth == o.depth &&
               parent == o.parent && body == o.body && pragma_slots == o.pragma_slots;
    }
};

struct PragmaSlot {
    std::string id;  // placeholder name, e.g. _PIPE_L1
    PragmaKind kind = PragmaKind::pipeline;
    int loop_id = 0;
    bool operator==(const PragmaSlot&) const = default;
};

struct FunctionDecl {
    std::string name;
    std::vector<ParamDecl> params;
    std::vector<LocalDecl> locals;
    std::vector<Statement> statements;
    std::vector<BodyItem> body;  // top-level items

    const ArrayDecl* find_array(const std::string& n) const {
        for (const auto& p : params)
            if (p.is_array && p.array.name == n) return &p.array;
        return nullptr;
    }
    bool operator==(const FunctionDecl& o) const {
        return name == o.name && params == o.params && locals == o.locals &&
               statements == o.statements && body == o.body;
    }
};

struct KernelSource {
    std::string name;
    std::string text;
    std::string path;
};

/// Parsed kernel: a forest of loops over straight-line statements, plus the
/// pragma placeholder slots attached to loops.
struct KernelIR {
    std::string name;
    std::vector<std::pair<std::string, int>> constants;  // const int decls
    std::vector<FunctionDecl> functions;                 // source order
    int kernel_index = 0;
    std::vector<LoopNode> loops;      // kernel function's loops, preorder
    std::vector<PragmaSlot> slots;    // source order

    const FunctionDecl& kernel() const { return functions[static_cast<std::size_t>(kernel_index)]; }
    FunctionDecl& kernel() { return functions[static_cast<std::size_t>(kernel_index)]; }

    std::vector<ArrayDecl> arrays() const {
        std::vector<ArrayDecl> out;
        for (const auto& p : kernel().params)
            if (p.is_array) out.push_back(p.array);
        return out;
    }

    int function_index(const std::string& fname) const {
        for (std::size_t i = 0; i < functions.size(); ++i)
            if (functions[i].name == fname) return static_cast<int>(i);
        return -1;
    }

    const PragmaSlot* find_slot(const std::string& slot_id) const {
        for (const auto& s : slots)
            if (s.id == slot_id) return &s;
        return nullptr;
    }

    std::vector<int> children_of(int loop_id) const {
        std::vector<int> out;
        for (const auto& item : loops[static_cast<std::size_t>(loop_id)].body)
            if (item.kind == BodyItem::Kind::loop) out.push_back(item.index);
        return out;
    }

    bool is_ancestor(int maybe_ancestor, int loop_id) const {
        int p = loops[static_cast<std::size_t>(loop_id)].parent;
        while (p >= 0) {
            if (p == maybe_ancestor) return true;
            p = loops[static_cast<std::size_t>(p)].parent;
        }
        return false;
    }

    bool operator==(const KernelIR& o) const {
        return name == o.name && constants == o.constants && functions == o.functions &&
               kernel_index == o.kernel_index && loops == o.loops && slots == o.slots;
    }
};

}  // namespace pragmadse
