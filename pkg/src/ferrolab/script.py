"""
Experiment scripting language for the bench.

Scripts set the DC bias, wait, take sweeps, keep numeric variables, branch
and loop on measured quantities, and save rows of arbitrary expressions to a
CSV file. A static checker runs the script abstractly before it touches a
bench.

Grammar (newlines are insignificant, ';' may separate statements)::

    statement := 'let' NAME '=' expr | NAME '=' expr
               | 'bias' expr | 'wait' expr | 'measure'
               | 'save' expr (',' expr)* | 'print' expr
               | 'if' cond block ['else' block]
               | 'while' cond block | 'repeat' NUMBER block
    cond      := expr ('<' | '<=' | '>' | '>=' | '==' | '!=') expr
    block     := '{' statement* '}'
    expr      := term (('+' | '-') term)*
    term      := unary (('*' | '/') unary)*
    unary     := '-' unary | NUMBER | NAME | '(' expr ')'
"""
import logging
import math
import operator
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Set, Tuple, Union

import pandas as pd
import ply.lex as lex
from pydantic import BaseModel, ConfigDict, Field

from ferrolab.config import config
from ferrolab.instruments import Testbench, write_csv
from ferrolab.utils import (
    INDICATORS,
    MAX_BIAS_V,
    FerroLabError,
    PreconditionError,
    ScriptRuntimeError,
    ScriptSyntaxError,
    ShapeMismatch,
    StepLimitExceeded,
    UnknownCharacter,
)

logger = logging.getLogger(__name__)

KEYWORDS = frozenset({"let", "bias", "wait", "measure", "save", "print", "if", "else", "while", "repeat"})
BUILTINS = frozenset(INDICATORS) | {"T", "BIAS"}

# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

tokens = (
    "IDENT", "NUMBER",
    "PLUS", "MINUS", "TIMES", "DIVIDE",
    "LPAREN", "RPAREN", "LBRACE", "RBRACE",
    "COMMA", "SEMI", "ASSIGN",
    "LE", "GE", "EQ", "NE", "LT", "GT",
)

t_PLUS = r"\+"
t_MINUS = r"-"
t_TIMES = r"\*"
t_DIVIDE = r"/"
t_LPAREN = r"\("
t_RPAREN = r"\)"
t_LBRACE = r"\{"
t_RBRACE = r"\}"
t_COMMA = r","
t_SEMI = r";"
t_LE = r"<="
t_GE = r">="
t_EQ = r"=="
t_NE = r"!="
t_LT = r"<"
t_GT = r">"
t_ASSIGN = r"="
t_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"

t_ignore = " \t\r"
t_ignore_COMMENT = r"\#[^\n]*"


def t_NUMBER(t):
    r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?"
    t.value = float(t.value)
    return t


def t_newline(t):
    r"\n+"
    t.lexer.lineno += len(t.value)


def t_error(t):
    line = t.lexer.lineno
    raise UnknownCharacter(t.value[0], line, _column(t.lexer.lexdata, t.lexpos))


_lexer = lex.lex(errorlog=lex.NullLogger())

OPERAND_TYPES = frozenset({"NUMBER", "RPAREN"})


class Token(BaseModel):
    model_config = ConfigDict(frozen=True)

    type: str
    value: Union[float, str]
    line: int
    column: int


def _column(text: str, pos: int) -> int:
    return pos - text.rfind("\n", 0, pos)


def lex_script(text: str) -> List[Token]:
    """
    Split script text into tokens with 1-based line and column positions.

    A minus sign directly followed by a number becomes part of the number
    unless the minus follows an operand, so ``bias -3.3`` is a keyword and
    one signed number while ``x -3`` stays a subtraction.

    Raises:
        UnknownCharacter: On a character outside the language
    """
    lexer = _lexer.clone()
    lexer.lineno = 1
    lexer.input(text)
    raw = [Token(type=tok.type, value=tok.value, line=tok.lineno, column=_column(text, tok.lexpos))
           for tok in iter(lexer.token, None)]

    merged: List[Token] = []
    i = 0
    while i < len(raw):
        tok = raw[i]
        if tok.type == "MINUS" and i + 1 < len(raw) and raw[i + 1].type == "NUMBER" and _unary_context(merged):
            merged.append(tok.model_copy(update={"type": "NUMBER", "value": -raw[i + 1].value}))
            i += 2
            continue
        merged.append(tok)
        i += 1
    return merged


def _unary_context(previous: List[Token]) -> bool:
    if not previous:
        return True
    last = previous[-1]
    if last.type == "IDENT":
        return last.value in KEYWORDS
    return last.type not in OPERAND_TYPES


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Node(BaseModel):
    model_config = ConfigDict(frozen=True)

    pos: Tuple[int, int] = Field(default=(0, 0), exclude=True)


class Num(Node):
    kind: Literal["num"] = "num"
    value: float


class Var(Node):
    kind: Literal["var"] = "var"
    name: str


class BinOp(Node):
    kind: Literal["binop"] = "binop"
    op: Literal["+", "-", "*", "/"]
    left: "Expr"
    right: "Expr"


class Neg(Node):
    kind: Literal["neg"] = "neg"
    operand: "Expr"


Expr = Union[Num, Var, BinOp, Neg]


class Condition(Node):
    kind: Literal["cond"] = "cond"
    op: Literal["<", "<=", ">", ">=", "==", "!="]
    left: Expr
    right: Expr


class Let(Node):
    kind: Literal["let"] = "let"
    name: str
    value: Expr


class Assign(Node):
    kind: Literal["assign"] = "assign"
    name: str
    value: Expr


class Bias(Node):
    kind: Literal["bias"] = "bias"
    value: Expr


class Wait(Node):
    kind: Literal["wait"] = "wait"
    value: Expr


class Measure(Node):
    kind: Literal["measure"] = "measure"


class Save(Node):
    kind: Literal["save"] = "save"
    values: List[Expr]


class Print(Node):
    kind: Literal["print"] = "print"
    value: Expr


class If(Node):
    kind: Literal["if"] = "if"
    cond: Condition
    then: List["Statement"]
    orelse: List["Statement"] = Field(default_factory=list)


class While(Node):
    kind: Literal["while"] = "while"
    cond: Condition
    body: List["Statement"]


class Repeat(Node):
    kind: Literal["repeat"] = "repeat"
    count: int = Field(ge=0)
    body: List["Statement"]


Statement = Union[Let, Assign, Bias, Wait, Measure, Save, Print, If, While, Repeat]

for _model in (BinOp, Neg, Condition, Let, Assign, Bias, Wait, Save, Print, If, While, Repeat):
    _model.model_rebuild()


class Program(BaseModel):
    """Parsed script. Immutable after parsing."""

    model_config = ConfigDict(frozen=True)

    statements: List[Statement]
    source_map: List[Tuple[int, int]] = Field(default_factory=list, exclude=True)
    declared_vars: Set[str] = Field(default_factory=set)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_COMPARISONS = {"LT": "<", "LE": "<=", "GT": ">", "GE": ">=", "EQ": "==", "NE": "!="}
_STATEMENT_START = ("let", "bias", "wait", "measure", "save", "print", "if", "while", "repeat", "NAME")
_EXPR_START = ("NUMBER", "NAME", "(", "-")


class _Parser:
    def __init__(self, toks: List[Token], text: str):
        self.toks = toks
        self.i = 0
        self.declared: Set[str] = set()
        lines = text.split("\n")
        self.end = (len(lines), len(lines[-1]) + 1)

    def peek(self) -> Optional[Token]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def fail(self, expected: Sequence[str]):
        tok = self.peek()
        if tok is None:
            raise ScriptSyntaxError(expected, "end of input", *self.end)
        found = repr(tok.value) if tok.type != "NUMBER" else f"number {tok.value!r}"
        raise ScriptSyntaxError(expected, found, tok.line, tok.column)

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.type == "IDENT" and tok.value == word

    def at(self, type_: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.type == type_

    def take(self, type_: str, label: str) -> Token:
        if not self.at(type_):
            self.fail([label])
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def name(self) -> Token:
        tok = self.peek()
        if tok is None or tok.type != "IDENT" or tok.value in KEYWORDS:
            self.fail(["NAME"])
        self.i += 1
        return tok

    def skip_separators(self) -> None:
        while self.at("SEMI"):
            self.i += 1

    def program(self) -> Program:
        statements, positions = [], []
        self.skip_separators()
        while self.peek() is not None:
            stmt = self.statement()
            statements.append(stmt)
            positions.append(stmt.pos)
            self.skip_separators()
        return Program(statements=statements, source_map=positions, declared_vars=self.declared)

    def block(self) -> List[Statement]:
        self.take("LBRACE", "{")
        body = []
        self.skip_separators()
        while not self.at("RBRACE"):
            if self.peek() is None:
                self.fail(["}", *_STATEMENT_START])
            body.append(self.statement())
            self.skip_separators()
        self.i += 1
        return body

    def statement(self) -> Statement:
        tok = self.peek()
        if tok is None or tok.type != "IDENT":
            self.fail(_STATEMENT_START)
        pos = (tok.line, tok.column)
        word = tok.value
        if word not in KEYWORDS:
            self.i += 1
            self.take("ASSIGN", "=")
            return Assign(name=word, value=self.expr(), pos=pos)
        self.i += 1
        if word == "let":
            name = self.name().value
            self.take("ASSIGN", "=")
            value = self.expr()
            self.declared.add(name)
            return Let(name=name, value=value, pos=pos)
        if word == "bias":
            return Bias(value=self.expr(), pos=pos)
        if word == "wait":
            return Wait(value=self.expr(), pos=pos)
        if word == "measure":
            return Measure(pos=pos)
        if word == "save":
            values = [self.expr()]
            while self.at("COMMA"):
                self.i += 1
                values.append(self.expr())
            return Save(values=values, pos=pos)
        if word == "print":
            return Print(value=self.expr(), pos=pos)
        if word == "if":
            cond = self.condition()
            then = self.block()
            orelse = []
            if self.at_keyword("else"):
                self.i += 1
                orelse = self.block()
            return If(cond=cond, then=then, orelse=orelse, pos=pos)
        if word == "while":
            cond = self.condition()
            return While(cond=cond, body=self.block(), pos=pos)
        if word == "repeat":
            count_tok = self.peek()
            if count_tok is None or count_tok.type != "NUMBER" \
                    or count_tok.value < 0 or count_tok.value != int(count_tok.value):
                self.fail(["non-negative integer"])
            self.i += 1
            return Repeat(count=int(count_tok.value), body=self.block(), pos=pos)
        self.i -= 1
        self.fail(_STATEMENT_START)

    def condition(self) -> Condition:
        left = self.expr()
        tok = self.peek()
        if tok is None or tok.type not in _COMPARISONS:
            self.fail(list(_COMPARISONS.values()))
        self.i += 1
        return Condition(op=_COMPARISONS[tok.type], left=left, right=self.expr(), pos=left.pos)

    def expr(self) -> Expr:
        node = self.term()
        while self.at("PLUS") or self.at("MINUS"):
            op = "+" if self.toks[self.i].type == "PLUS" else "-"
            self.i += 1
            node = BinOp(op=op, left=node, right=self.term(), pos=node.pos)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.at("TIMES") or self.at("DIVIDE"):
            op = "*" if self.toks[self.i].type == "TIMES" else "/"
            self.i += 1
            node = BinOp(op=op, left=node, right=self.unary(), pos=node.pos)
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok is None:
            self.fail(_EXPR_START)
        pos = (tok.line, tok.column)
        if tok.type == "MINUS":
            self.i += 1
            return Neg(operand=self.unary(), pos=pos)
        if tok.type == "NUMBER":
            self.i += 1
            return Num(value=tok.value, pos=pos)
        if tok.type == "IDENT" and tok.value not in KEYWORDS:
            self.i += 1
            return Var(name=tok.value, pos=pos)
        if tok.type == "LPAREN":
            self.i += 1
            node = self.expr()
            self.take("RPAREN", ")")
            return node
        self.fail(_EXPR_START)


def parse_tokens(toks: List[Token], text: str = "") -> Program:
    """
    Build a Program from a token list.

    Raises:
        ScriptSyntaxError: With the expected token set and the position of the offending token
    """
    return _Parser(toks, text).program()


def parse_script(text: str) -> Program:
    """Lex and parse script text."""
    return parse_tokens(lex_script(text), text)


def load_script(path: Path) -> Program:
    return parse_script(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------

def format_expr(node: Expr) -> str:
    """Render an expression; nested binary operations are parenthesized."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"-({format_expr(node.operand)})"
    return f"({format_expr(node.left)} {node.op} {format_expr(node.right)})"


def _top_expr(node: Expr) -> str:
    text = format_expr(node)
    return text[1:-1] if isinstance(node, BinOp) else text


def _format_block(statements: List[Statement], depth: int) -> List[str]:
    pad = "    " * depth
    lines = []
    for stmt in statements:
        if isinstance(stmt, Let):
            lines.append(f"{pad}let {stmt.name} = {_top_expr(stmt.value)}")
        elif isinstance(stmt, Assign):
            lines.append(f"{pad}{stmt.name} = {_top_expr(stmt.value)}")
        elif isinstance(stmt, (Bias, Wait, Print)):
            lines.append(f"{pad}{stmt.kind} {_top_expr(stmt.value)}")
        elif isinstance(stmt, Measure):
            lines.append(f"{pad}measure")
        elif isinstance(stmt, Save):
            lines.append(f"{pad}save {', '.join(_top_expr(v) for v in stmt.values)}")
        elif isinstance(stmt, Repeat):
            lines.append(f"{pad}repeat {stmt.count} {{")
            lines.extend(_format_block(stmt.body, depth + 1))
            lines.append(f"{pad}}}")
        else:
            cond = f"{format_expr(stmt.cond.left)} {stmt.cond.op} {format_expr(stmt.cond.right)}"
            body = stmt.then if isinstance(stmt, If) else stmt.body
            lines.append(f"{pad}{stmt.kind} {cond} {{")
            lines.extend(_format_block(body, depth + 1))
            if isinstance(stmt, If) and stmt.orelse:
                lines.append(f"{pad}}} else {{")
                lines.extend(_format_block(stmt.orelse, depth + 1))
            lines.append(f"{pad}}}")
    return lines


def pretty_print(program: Program) -> str:
    """Canonical source text of a program; parsing it again gives the same AST."""
    lines = _format_block(program.statements, 0)
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Static checker
# ---------------------------------------------------------------------------

class Diagnostic(BaseModel):
    code: str
    message: str
    line: int
    column: int


class Diagnostics(BaseModel):
    """Result of a static check; the script is runnable when errors is empty."""

    errors: List[Diagnostic] = Field(default_factory=list)
    warnings: List[Diagnostic] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error_codes(self) -> List[str]:
        return [d.code for d in self.errors]

    def warning_codes(self) -> List[str]:
        return [d.code for d in self.warnings]


_ARITH: Dict[str, Callable[[float, float], float]] = {
    "+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv,
}
_CMP: Dict[str, Callable[[float, float], bool]] = {
    "<": operator.lt, "<=": operator.le, ">": operator.gt,
    ">=": operator.ge, "==": operator.eq, "!=": operator.ne,
}


def _names(node: Union[Expr, Condition]) -> Set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return _names(node.operand)
    return _names(node.left) | _names(node.right)


def _walk(statements: List[Statement]):
    for stmt in statements:
        yield stmt
        if isinstance(stmt, If):
            yield from _walk(stmt.then)
            yield from _walk(stmt.orelse)
        elif isinstance(stmt, (While, Repeat)):
            yield from _walk(stmt.body)


class _Checker:
    def __init__(self):
        self.report = Diagnostics()
        self.declared: Set[str] = set()

    def error(self, code: str, message: str, pos: Tuple[int, int]) -> None:
        self.report.errors.append(Diagnostic(code=code, message=message, line=pos[0], column=pos[1]))

    def warn(self, code: str, message: str, pos: Tuple[int, int]) -> None:
        self.report.warnings.append(Diagnostic(code=code, message=message, line=pos[0], column=pos[1]))

    def fold(self, node: Expr) -> Optional[float]:
        """Constant value of an expression, or None when it depends on state."""
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Var):
            if node.name not in self.declared and node.name not in BUILTINS:
                self.error("UndeclaredVariable", f"Variable {node.name!r} is used before 'let'", node.pos)
            return None
        if isinstance(node, Neg):
            value = self.fold(node.operand)
            return None if value is None else -value
        left, right = self.fold(node.left), self.fold(node.right)
        if node.op == "/" and right == 0:
            self.error("DivisionByZero", "Division by constant zero", node.right.pos)
            return None
        if left is None or right is None:
            return None
        return _ARITH[node.op](left, right)

    def condition(self, cond: Condition) -> Optional[bool]:
        left, right = self.fold(cond.left), self.fold(cond.right)
        if cond.op in ("==", "!=") and _names(cond) & set(INDICATORS):
            self.warn("FloatEquality", f"'{cond.op}' on a measured indicator rarely holds exactly", cond.pos)
        if left is None or right is None:
            return None
        return _CMP[cond.op](left, right)

    def scoped(self, statements: List[Statement]) -> bool:
        """Check a block that may not run; its declarations do not outlive it."""
        before = self.declared
        self.declared = set(before)
        try:
            return self.block(statements)
        finally:
            self.declared = before

    def block(self, statements: List[Statement]) -> bool:
        """Check a block; returns False when control never leaves it."""
        falls_through = True
        for stmt in statements:
            if not falls_through:
                self.error("Unreachable", "Statement follows a loop that never ends", stmt.pos)
                return False
            falls_through = self.statement(stmt)
        return falls_through

    def statement(self, stmt: Statement) -> bool:
        if isinstance(stmt, Let):
            self.fold(stmt.value)
            if stmt.name in BUILTINS:
                self.error("ReadOnlyBuiltin", f"{stmt.name} is a builtin and cannot be declared", stmt.pos)
            elif stmt.name in self.declared:
                self.warn("Redeclaration", f"Variable {stmt.name!r} is declared again", stmt.pos)
            self.declared.add(stmt.name)
        elif isinstance(stmt, Assign):
            self.fold(stmt.value)
            if stmt.name in BUILTINS:
                self.error("ReadOnlyBuiltin", f"{stmt.name} is read-only", stmt.pos)
            elif stmt.name not in self.declared:
                self.error("UndeclaredVariable", f"Variable {stmt.name!r} is assigned before 'let'", stmt.pos)
        elif isinstance(stmt, Bias):
            value = self.fold(stmt.value)
            if value is not None and not abs(value) <= MAX_BIAS_V:
                self.error("BiasOutOfRange", f"Bias {value:g} V exceeds ±{MAX_BIAS_V:g} V", stmt.pos)
        elif isinstance(stmt, Wait):
            value = self.fold(stmt.value)
            if value is not None and not value >= 0:
                self.error("InvalidDuration", f"Wait duration {value:g} s is negative", stmt.pos)
        elif isinstance(stmt, Save):
            for value in stmt.values:
                self.fold(value)
        elif isinstance(stmt, Print):
            self.fold(stmt.value)
        elif isinstance(stmt, If):
            verdict = self.condition(stmt.cond)
            before = self.declared
            self.declared = set(before)
            then_ok = self.block(stmt.then)
            then_declared = self.declared
            self.declared = set(before)
            else_ok = self.block(stmt.orelse)
            else_declared = self.declared
            if verdict is True:
                self.declared = then_declared
                return then_ok
            if verdict is False:
                self.declared = else_declared
                return else_ok
            # only names bound on every path survive the if
            self.declared = then_declared & else_declared
            return then_ok or else_ok
        elif isinstance(stmt, Repeat):
            if stmt.count == 0:
                self.scoped(stmt.body)
                return True
            return self.block(stmt.body)
        elif isinstance(stmt, While):
            return self.loop(stmt)
        return True

    def loop(self, stmt: While) -> bool:
        verdict = self.condition(stmt.cond)
        if verdict is True:
            self.block(stmt.body)
        else:
            self.scoped(stmt.body)
        if verdict is False:
            self.warn("DeadLoop", "Loop condition is never true", stmt.pos)
            return True

        inner = list(_walk(stmt.body))
        measures = any(isinstance(s, Measure) for s in inner)
        if verdict is True:
            if not measures:
                self.error("InfiniteLoop", "Loop condition is always true and the body never measures", stmt.pos)
            else:
                self.warn("InfiniteLoop", "Loop condition is always true", stmt.pos)
            return False

        changing = {s.name for s in inner if isinstance(s, (Let, Assign))}
        if measures:
            changing |= set(INDICATORS)
        if any(isinstance(s, (Bias, Wait, Measure)) for s in inner):
            changing.add("T")
        if any(isinstance(s, Bias) for s in inner):
            changing.add("BIAS")
        if not _names(stmt.cond) & changing:
            self.warn("PossibleInfiniteLoop", "Nothing in the loop body changes its condition", stmt.pos)
        return True


def check(program: Program) -> Diagnostics:
    """
    Run a program abstractly without a bench.

    Reports undeclared variables, assignments to builtins, constant biases
    beyond ±10 V, constant negative waits, division by constant zero, loops
    that can never end without measuring and the statements they make
    unreachable. Warnings cover equality tests on indicators, redeclarations
    and loops whose condition never changes.
    """
    checker = _Checker()
    checker.block(program.statements)
    return checker.report


# ---------------------------------------------------------------------------
# Interpreter
# ---------------------------------------------------------------------------

class CsvSink:
    """
    Collects rows saved by a script and writes them as CSV.

    The header is the source text of the saved expressions; every save in a
    run must produce the same number of columns.
    """

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path is not None else None
        self.columns: Optional[List[str]] = None
        self.rows: List[List[float]] = []

    def append(self, columns: List[str], values: List[float]) -> None:
        if self.columns is None:
            self.columns = columns
        elif len(columns) != len(self.columns):
            raise ShapeMismatch(f"save with {len(columns)} columns after a save with {len(self.columns)}")
        self.rows.append(values)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns or [])

    def flush(self) -> None:
        if self.path is not None and self.columns is not None:
            write_csv(self.frame(), self.path)


class Interpreter:
    """
    Executes a Program against a bench.

    Indicator builtins hold the values of the last ``measure`` and are NaN
    before the first one; T and BIAS read the bench directly. Every executed
    statement and every loop test consumes one step of fuel.
    """

    def __init__(self, bench: Testbench, sink: Optional[CsvSink] = None, step_limit: Optional[int] = None,
                 on_print: Optional[Callable[[float], None]] = None):
        self.bench = bench
        self.sink = sink if sink is not None else CsvSink()
        self.step_limit = config.step_limit if step_limit is None else step_limit
        self.on_print = on_print or (lambda value: logger.info("print: %r", value))
        self.env: Dict[str, float] = {}
        self.indicators: Dict[str, float] = {name: math.nan for name in INDICATORS}
        self.steps = 0

    def run(self, program: Program) -> None:
        try:
            self.block(program.statements)
        finally:
            self.sink.flush()

    def tick(self, pos: Tuple[int, int]) -> None:
        self.steps += 1
        if self.steps > self.step_limit:
            raise ScriptRuntimeError(f"step limit of {self.step_limit} exceeded", *pos,
                                     cause=StepLimitExceeded(f"More than {self.step_limit} steps"))

    def value(self, node: Expr) -> float:
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Var):
            if node.name in self.indicators:
                return self.indicators[node.name]
            if node.name == "T":
                return self.bench.clock
            if node.name == "BIAS":
                return self.bench.bias
            if node.name not in self.env:
                raise ScriptRuntimeError(f"variable {node.name!r} is not defined", *node.pos)
            return self.env[node.name]
        if isinstance(node, Neg):
            return -self.value(node.operand)
        left, right = self.value(node.left), self.value(node.right)
        if node.op == "/" and right == 0:
            raise ScriptRuntimeError("division by zero", *node.pos)
        return _ARITH[node.op](left, right)

    def test(self, cond: Condition) -> bool:
        return _CMP[cond.op](self.value(cond.left), self.value(cond.right))

    def block(self, statements: List[Statement]) -> None:
        for stmt in statements:
            self.tick(stmt.pos)
            try:
                self.statement(stmt)
            except ScriptRuntimeError:
                raise
            except FerroLabError as e:
                raise ScriptRuntimeError(str(e), *stmt.pos, cause=e) from e

    def statement(self, stmt: Statement) -> None:
        if isinstance(stmt, (Let, Assign)):
            self.env[stmt.name] = self.value(stmt.value)
        elif isinstance(stmt, Bias):
            self.bench.set_bias(self.value(stmt.value))
        elif isinstance(stmt, Wait):
            self.bench.wait(self.value(stmt.value))
        elif isinstance(stmt, Measure):
            result = self.bench.sweep()
            self.indicators.update(zip(INDICATORS, result.zc))
        elif isinstance(stmt, Save):
            self.sink.append([_top_expr(v) for v in stmt.values], [self.value(v) for v in stmt.values])
        elif isinstance(stmt, Print):
            self.on_print(self.value(stmt.value))
        elif isinstance(stmt, If):
            self.block(stmt.then if self.test(stmt.cond) else stmt.orelse)
        elif isinstance(stmt, Repeat):
            for _ in range(stmt.count):
                self.block(stmt.body)
        elif isinstance(stmt, While):
            while self.test(stmt.cond):
                self.block(stmt.body)
                self.tick(stmt.pos)


def run(program: Program, bench: Testbench, sink: Optional[CsvSink] = None,
        step_limit: Optional[int] = None, on_print: Optional[Callable[[float], None]] = None) -> Interpreter:
    """
    Check and execute a program against a bench.

    Args:
        program: Parsed script
        bench: Bench to drive
        sink: Destination for saved rows; rows already saved are flushed even when the run fails
        step_limit: Statement budget; defaults to the configured limit
        on_print: Receives the value of every print statement

    Returns:
        The interpreter, for access to variables and saved rows

    Raises:
        PreconditionError: If the static check reports errors
        ScriptRuntimeError: With the position of the failing statement
    """
    report = check(program)
    if not report.ok:
        first = report.errors[0]
        raise PreconditionError(
            f"Script has {len(report.errors)} error(s); first: {first.code} at line {first.line}: {first.message}"
        )
    interpreter = Interpreter(bench, sink=sink, step_limit=step_limit, on_print=on_print)
    interpreter.run(program)
    logger.info("Script finished after %d steps at t=%.1f s", interpreter.steps, bench.clock)
    return interpreter
