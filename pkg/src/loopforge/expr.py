"""Side-effect-free expression trees and the substitution-rule machinery.

Expressions carry all right-hand-side arithmetic of a kernel. Substitution
rules are named parametric expression macros that can always be expanded;
expanding one never changes the value of the surrounding expression.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from .diagnostics import (
    ArityMismatch,
    DivisionByZero,
    IndexOutOfBounds,
    UnboundVariable,
    UnknownFunction,
    UnknownRule,
)

F32 = "f32"
I32 = "i32"

BINARY_OPS = ("add", "sub", "mul", "div", "pow")
_OP_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "**"}


@dataclass(frozen=True)
class Expression:
    pass


@dataclass(frozen=True)
class NumericLiteral(Expression):
    value: float | int
    dtype: str = F32

    def __post_init__(self):
        if self.dtype == I32 and not isinstance(self.value, int):
            raise ValueError(f"i32 literal with non-int value {self.value!r}")


@dataclass(frozen=True)
class VariableRef(Expression):
    name: str


@dataclass(frozen=True)
class Subscript(Expression):
    array: str
    indices: tuple[Expression, ...]


@dataclass(frozen=True)
class UnaryOp(Expression):
    op: str  # "neg"
    operand: Expression


@dataclass(frozen=True)
class BinaryOp(Expression):
    op: str  # add | sub | mul | div | pow
    lhs: Expression
    rhs: Expression

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {self.op!r}")


@dataclass(frozen=True)
class Call(Expression):
    fn: str
    args: tuple[Expression, ...]


@dataclass(frozen=True)
class RuleInvocation(Expression):
    rule: str
    args: tuple[Expression, ...]


def lit(value: float | int, dtype: str | None = None) -> NumericLiteral:
    if dtype is None:
        dtype = I32 if isinstance(value, int) else F32
    return NumericLiteral(value, dtype)


def var(name: str) -> VariableRef:
    return VariableRef(name)


def sub(array: str, *indices: Expression | str | int) -> Subscript:
    conv = tuple(
        i if isinstance(i, Expression) else (var(i) if isinstance(i, str) else lit(i))
        for i in indices
    )
    return Subscript(array, conv)


def add(a: Expression, b: Expression) -> BinaryOp:
    return BinaryOp("add", a, b)


def mul(a: Expression, b: Expression) -> BinaryOp:
    return BinaryOp("mul", a, b)


def div(a: Expression, b: Expression) -> BinaryOp:
    return BinaryOp("div", a, b)


# tree walks

def children(e: Expression) -> tuple[Expression, ...]:
    if isinstance(e, Subscript):
        return e.indices
    if isinstance(e, UnaryOp):
        return (e.operand,)
    if isinstance(e, BinaryOp):
        return (e.lhs, e.rhs)
    if isinstance(e, (Call, RuleInvocation)):
        return e.args
    return ()


def walk(e: Expression) -> Iterator[Expression]:
    """Pre-order traversal of the tree."""
    yield e
    for c in children(e):
        yield from walk(c)


def free_variables(e: Expression) -> list[str]:
    """Free VariableRef names of `e` in first-occurrence order.

    Array names of Subscript nodes and rule names are not included; index
    expressions and invocation arguments are.
    """
    seen: dict[str, None] = {}
    for node in walk(e):
        if isinstance(node, VariableRef) and node.name not in seen:
            seen[node.name] = None
    return list(seen)


def referenced_arrays(e: Expression) -> list[str]:
    seen: dict[str, None] = {}
    for node in walk(e):
        if isinstance(node, Subscript) and node.array not in seen:
            seen[node.array] = None
    return list(seen)


def invoked_rules(e: Expression) -> list[str]:
    seen: dict[str, None] = {}
    for node in walk(e):
        if isinstance(node, RuleInvocation) and node.rule not in seen:
            seen[node.rule] = None
    return list(seen)


def transform_bottom_up(e: Expression, f: Callable[[Expression], Expression]) -> Expression:
    """Rebuild the tree bottom-up, applying `f` to every node."""
    if isinstance(e, Subscript):
        e = Subscript(e.array, tuple(transform_bottom_up(i, f) for i in e.indices))
    elif isinstance(e, UnaryOp):
        e = UnaryOp(e.op, transform_bottom_up(e.operand, f))
    elif isinstance(e, BinaryOp):
        e = BinaryOp(e.op, transform_bottom_up(e.lhs, f), transform_bottom_up(e.rhs, f))
    elif isinstance(e, Call):
        e = Call(e.fn, tuple(transform_bottom_up(a, f) for a in e.args))
    elif isinstance(e, RuleInvocation):
        e = RuleInvocation(e.rule, tuple(transform_bottom_up(a, f) for a in e.args))
    return f(e)


def substitute(e: Expression, mapping: Mapping[str, Expression]) -> Expression:
    """Replace free VariableRef nodes by expression trees."""
    if not mapping:
        return e

    def repl(node: Expression) -> Expression:
        if isinstance(node, VariableRef) and node.name in mapping:
            return mapping[node.name]
        return node

    return transform_bottom_up(e, repl)


def rename_variables(e: Expression, mapping: Mapping[str, str]) -> Expression:
    return substitute(e, {old: var(new) for old, new in mapping.items()})


def rename_arrays(e: Expression, mapping: Mapping[str, str]) -> Expression:
    def repl(node: Expression) -> Expression:
        if isinstance(node, Subscript) and node.array in mapping:
            return Subscript(mapping[node.array], node.indices)
        if isinstance(node, VariableRef) and node.name in mapping:
            return VariableRef(mapping[node.name])
        return node

    return transform_bottom_up(e, repl)


def rename_invocations(e: Expression, mapping: Mapping[str, str]) -> Expression:
    def repl(node: Expression) -> Expression:
        if isinstance(node, RuleInvocation) and node.rule in mapping:
            return RuleInvocation(mapping[node.rule], node.args)
        return node

    return transform_bottom_up(e, repl)


def fold_constants(e: Expression) -> Expression:
    """Fold integer arithmetic on literals; used for index expressions.

    Additive chains are normalized by accumulating their integer-literal
    contribution, so shifted indices like (n + 1) - 1 come back as n.
    """

    def additive_terms(node: Expression, sign: int,
                       out: list[tuple[int, Expression]]) -> None:
        if isinstance(node, BinaryOp) and node.op in ("add", "sub"):
            additive_terms(node.lhs, sign, out)
            additive_terms(node.rhs, sign if node.op == "add" else -sign, out)
        else:
            out.append((sign, node))

    def fold(node: Expression) -> Expression:
        if isinstance(node, UnaryOp) and isinstance(node.operand, NumericLiteral):
            return NumericLiteral(-node.operand.value, node.operand.dtype)
        if isinstance(node, BinaryOp):
            a, b = node.lhs, node.rhs
            if isinstance(a, NumericLiteral) and isinstance(b, NumericLiteral) \
                    and a.dtype == I32 and b.dtype == I32:
                x, y = a.value, b.value
                if node.op == "add":
                    return lit(x + y)
                if node.op == "sub":
                    return lit(x - y)
                if node.op == "mul":
                    return lit(x * y)
                if node.op == "div" and y != 0 and x % y == 0:
                    return lit(x // y)
            if node.op in ("add", "sub"):
                terms: list[tuple[int, Expression]] = []
                additive_terms(node, 1, terms)
                const = 0
                rest: list[tuple[int, Expression]] = []
                for sign, t in terms:
                    if isinstance(t, NumericLiteral) and t.dtype == I32:
                        const += sign * t.value
                    else:
                        rest.append((sign, t))
                if not rest:
                    return lit(const)
                if len(rest) == len(terms) and const == 0:
                    return node  # nothing to fold
                out: Expression | None = None
                for sign, t in rest:
                    if out is None:
                        out = t if sign > 0 else UnaryOp("neg", t)
                    else:
                        out = BinaryOp("add" if sign > 0 else "sub", out, t)
                assert out is not None
                if const:
                    out = BinaryOp("add" if const > 0 else "sub", out,
                                   lit(abs(const)))
                return out
        return node

    return transform_bottom_up(e, fold)


# product / sum chains

def flatten_chain(e: Expression, op: str) -> list[Expression]:
    """Flatten nested left/right-associated `op` applications into a list."""
    if isinstance(e, BinaryOp) and e.op == op:
        return flatten_chain(e.lhs, op) + flatten_chain(e.rhs, op)
    return [e]


def rebuild_chain(terms: Iterable[Expression], op: str, empty: Expression) -> Expression:
    terms = list(terms)
    if not terms:
        return empty
    out = terms[0]
    for t in terms[1:]:
        out = BinaryOp(op, out, t)
    return out


def collect_common_factors_expr(
    terms: list[Expression], candidate: Expression
) -> tuple[bool, list[Expression]]:
    """Remove `candidate` once from every term of a product-chain list.

    Returns (factored, residual_terms). When `candidate` does not occur
    multiplicatively in every term, the inputs are returned unchanged.
    """
    if not terms:
        return False, terms
    residuals = []
    for t in terms:
        factors = flatten_chain(t, "mul")
        if candidate not in factors:
            return False, terms
        factors.remove(candidate)
        residuals.append(rebuild_chain(factors, "mul", lit(1.0, F32)))
    return True, residuals


# printing

_PRECEDENCE = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 3}


def format_expression(e: Expression) -> str:
    def fmt(node: Expression, parent_prec: int, right_side: bool) -> str:
        if isinstance(node, NumericLiteral):
            if node.dtype == I32:
                return str(node.value)
            text = repr(float(node.value))
            return text
        if isinstance(node, VariableRef):
            return node.name
        if isinstance(node, Subscript):
            inner = ", ".join(fmt(i, 0, False) for i in node.indices)
            return f"{node.array}[{inner}]"
        if isinstance(node, Call):
            inner = ", ".join(fmt(a, 0, False) for a in node.args)
            return f"{node.fn}({inner})"
        if isinstance(node, RuleInvocation):
            inner = ", ".join(fmt(a, 0, False) for a in node.args)
            return f"{node.rule}({inner})"
        if isinstance(node, UnaryOp):
            return f"-{fmt(node.operand, 4, False)}"
        assert isinstance(node, BinaryOp)
        prec = _PRECEDENCE[node.op]
        text = (
            f"{fmt(node.lhs, prec, False)} {_OP_SYMBOL[node.op]} "
            f"{fmt(node.rhs, prec, True)}"
        )
        # sub/div/pow are not associative: parenthesize equal precedence on
        # the right; pow in addition on the left (right-assoc convention).
        need = prec < parent_prec or (
            prec == parent_prec and right_side and node.op in ("sub", "div", "pow", "add", "mul")
        )
        if node.op == "pow" and parent_prec == 3 and not right_side:
            need = True
        return f"({text})" if need else text

    return fmt(e, 0, False)


# substitution rules

@dataclass(frozen=True)
class SubstitutionRule:
    """A named parametric expression macro: name(params) := body."""

    name: str
    params: tuple[str, ...]
    body: Expression


class RuleRegistry:
    """Immutable, insertion-ordered collection of substitution rules."""

    def __init__(self, rules: Iterable[SubstitutionRule] = ()):
        self._rules: dict[str, SubstitutionRule] = {}
        for r in rules:
            if r.name in self._rules:
                raise ValueError(f"duplicate rule name {r.name!r}")
            self._rules[r.name] = r

    def __contains__(self, name: str) -> bool:
        return name in self._rules

    def __iter__(self) -> Iterator[SubstitutionRule]:
        return iter(self._rules.values())

    def __len__(self) -> int:
        return len(self._rules)

    def __eq__(self, other) -> bool:
        return isinstance(other, RuleRegistry) and self._rules == other._rules

    def get(self, name: str) -> SubstitutionRule:
        try:
            return self._rules[name]
        except KeyError:
            raise UnknownRule(f"no substitution rule named {name!r}") from None

    def names(self) -> list[str]:
        return list(self._rules)

    def with_rule(self, rule: SubstitutionRule) -> "RuleRegistry":
        if rule.name in self._rules:
            raise ValueError(f"rule {rule.name!r} already registered")
        return RuleRegistry(list(self._rules.values()) + [rule])

    def without(self, names: Iterable[str]) -> "RuleRegistry":
        drop = set(names)
        return RuleRegistry(r for r in self._rules.values() if r.name not in drop)

    def replacing(self, rules: Iterable[SubstitutionRule]) -> "RuleRegistry":
        new = {r.name: r for r in rules}
        return RuleRegistry(
            new.get(name, r) for name, r in self._rules.items()
        )

    def check(self) -> list[str]:
        """Return problems: unknown callees, arity mismatches, cycles."""
        problems = []
        for r in self:
            for node in walk(r.body):
                if isinstance(node, RuleInvocation):
                    if node.rule not in self:
                        problems.append(
                            f"rule {r.name!r} invokes unknown rule {node.rule!r}")
                    elif len(node.args) != len(self.get(node.rule).params):
                        problems.append(
                            f"rule {r.name!r} invokes {node.rule!r} with "
                            f"{len(node.args)} args, expected "
                            f"{len(self.get(node.rule).params)}")
        # cycle detection over the rule dependency graph
        color: dict[str, int] = {}

        def visit(name: str) -> bool:
            color[name] = 1
            for callee in invoked_rules(self.get(name).body):
                if callee not in self:
                    continue
                c = color.get(callee, 0)
                if c == 1 or (c == 0 and visit(callee)):
                    return True
            color[name] = 2
            return False

        for name in self.names():
            if color.get(name, 0) == 0 and visit(name):
                problems.append(f"rule dependency cycle through {name!r}")
                break
        return problems


EMPTY_REGISTRY = RuleRegistry()


def expand_rules(
    e: Expression, registry: RuleRegistry, which: set[str] | None = None
) -> Expression:
    """Expand rule invocations; `which=None` expands all registered rules.

    Formal parameters are replaced by the (already expanded) argument trees
    before the body is merged into the surrounding context, so expansion is
    capture-avoiding.
    """
    if which is not None:
        for name in which:
            registry.get(name)  # raises UnknownRule

    def expand(node: Expression) -> Expression:
        if isinstance(node, RuleInvocation):
            if node.rule in registry and (which is None or node.rule in which):
                rule = registry.get(node.rule)
                if len(node.args) != len(rule.params):
                    raise ArityMismatch(
                        f"rule {rule.name!r} takes {len(rule.params)} args, "
                        f"got {len(node.args)}")
                body = transform_bottom_up(rule.body, expand)
                return substitute(body, dict(zip(rule.params, node.args)))
            if node.rule not in registry:
                raise UnknownRule(f"invocation of unknown rule {node.rule!r}")
        return node

    return transform_bottom_up(e, expand)


def _canonical_key(rule: SubstitutionRule) -> str:
    """Serialize the body with params renamed positionally (p0, p1, ...)."""
    renamed = rename_variables(
        rule.body, {p: f"\x00p{i}" for i, p in enumerate(rule.params)})
    return f"{len(rule.params)}|{format_expression(renamed)}"


def unify_identical_rules(
    registry: RuleRegistry, kernel_bodies: list[Expression]
) -> tuple[RuleRegistry, list[Expression], dict[str, str]]:
    """Merge rules whose bodies are structurally equal under positional
    parameter renaming.

    The earliest-registered rule of each group survives; invocation sites in
    `kernel_bodies` and in remaining rule bodies are rewritten to the
    survivor. Because equality is positional, rewriting never reorders
    arguments. Runs to a fixpoint (a merge can make further bodies equal).
    Returns (registry, rewritten bodies, total old->new name mapping).
    """
    total_renames: dict[str, str] = {}
    bodies = list(kernel_bodies)
    while True:
        groups: dict[str, str] = {}
        renames: dict[str, str] = {}
        for rule in registry:
            key = _canonical_key(rule)
            if key in groups:
                renames[rule.name] = groups[key]
            else:
                groups[key] = rule.name
        if not renames:
            break
        registry = RuleRegistry(
            SubstitutionRule(r.name, r.params, rename_invocations(r.body, renames))
            for r in registry if r.name not in renames
        )
        bodies = [rename_invocations(b, renames) for b in bodies]
        for old, new in renames.items():
            total_renames[old] = new
        # keep the total mapping transitive
        for old, new in list(total_renames.items()):
            while new in total_renames:
                new = total_renames[new]
            total_renames[old] = new
    return registry, bodies, total_renames


# evaluation

_F32 = np.float32
_CALL_FNS = {
    "sqrt": lambda a: np.sqrt(a),
    "abs": lambda a: np.abs(a),
    "fma": lambda a, b, c: a * b + c,
}


def _as_f32(v):
    if isinstance(v, (int, np.integer)):
        return _F32(v)
    return _F32(v)


def evaluate(
    e: Expression,
    bindings: Mapping[str, object],
    registry: RuleRegistry = EMPTY_REGISTRY,
) -> np.float32 | np.int32:
    """Evaluate to a scalar under f32 arithmetic.

    Integer subtrees stay int32 until combined with an f32 operand. Arrays
    appear in `bindings` as numpy ndarrays and may only be read through
    Subscript nodes with in-bounds integer indices.
    """

    def ev(node: Expression, env: Mapping[str, object]):
        if isinstance(node, NumericLiteral):
            return np.int32(node.value) if node.dtype == I32 else _F32(node.value)
        if isinstance(node, VariableRef):
            if node.name not in env:
                raise UnboundVariable(f"unbound variable {node.name!r}")
            val = env[node.name]
            if isinstance(val, np.ndarray):
                raise UnboundVariable(
                    f"{node.name!r} is an array; scalar reference is invalid")
            return val
        if isinstance(node, Subscript):
            if node.array not in env:
                raise UnboundVariable(f"unbound array {node.array!r}")
            arr = env[node.array]
            if not isinstance(arr, np.ndarray):
                raise UnboundVariable(f"{node.array!r} is not bound to an array")
            idx = []
            for ie in node.indices:
                v = ev(ie, env)
                if not isinstance(v, (np.integer, int)):
                    raise IndexOutOfBounds(
                        f"non-integer index {v!r} into {node.array!r}")
                idx.append(int(v))
            if len(idx) != arr.ndim:
                raise IndexOutOfBounds(
                    f"{node.array!r} has rank {arr.ndim}, got {len(idx)} indices")
            for d, (i, n) in enumerate(zip(idx, arr.shape)):
                if not 0 <= i < n:
                    raise IndexOutOfBounds(
                        f"index {i} out of bounds for axis {d} of "
                        f"{node.array!r} (extent {n})")
            return arr[tuple(idx)]
        if isinstance(node, UnaryOp):
            return -ev(node.operand, env)
        if isinstance(node, Call):
            fn = _CALL_FNS.get(node.fn)
            if fn is None:
                raise UnknownFunction(f"unknown function {node.fn!r}")
            return fn(*[_as_f32(ev(a, env)) for a in node.args])
        if isinstance(node, RuleInvocation):
            rule = registry.get(node.rule)
            if len(node.args) != len(rule.params):
                raise ArityMismatch(
                    f"rule {rule.name!r} takes {len(rule.params)} args, "
                    f"got {len(node.args)}")
            inner = dict(env)
            for p, a in zip(rule.params, node.args):
                inner[p] = ev(a, env)
            return ev(rule.body, inner)
        assert isinstance(node, BinaryOp)
        a = ev(node.lhs, env)
        b = ev(node.rhs, env)
        int_op = isinstance(a, (np.integer, int)) and isinstance(b, (np.integer, int))
        if not int_op:
            a, b = _as_f32(a), _as_f32(b)
        if node.op == "add":
            return a + b
        if node.op == "sub":
            return a - b
        if node.op == "mul":
            return a * b
        if node.op == "div":
            if float(b) == 0.0:
                raise DivisionByZero(f"division by zero in {format_expression(node)}")
            if int_op:
                return np.int32(int(a) // int(b))
            return a / b
        # pow: real exponents go through f32 exp/log semantics
        a, b = _as_f32(a), _as_f32(b)
        with np.errstate(invalid="raise", divide="raise"):
            return _F32(np.power(a, b))

    return ev(e, bindings)
