"""Front end for the annotated SQL subset.

Parses DDL plus views into ASTs, attaches ``-- @...`` annotations, resolves and
type-checks column references, and classifies each view as input, hard
constraint, soft constraint, or auxiliary solver view.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import ClassifyError, SqlSyntaxError
from .relstore import BOOLEAN, INTEGER, TEXT, ColumnDef, TableDef
from .sqlast import (
    AUX,
    HARD,
    INPUT,
    SOFT,
    AGGREGATES,
    AggCall,
    BinOp,
    BoolLit,
    ColRef,
    Expr,
    InSubquery,
    IntLit,
    Join,
    NotOp,
    QueryAst,
    ScalarSubquery,
    SelectItem,
    Star,
    StrLit,
    ViewDef,
    walk_query,
)

KEYWORDS = {
    "create", "table", "view", "as", "select", "from", "join", "inner", "on",
    "where", "group", "by", "having", "and", "or", "not", "in", "true", "false",
    "primary", "key", "null", "integer", "int", "bigint", "boolean", "bool",
    "text", "varchar",
}

_TYPE_MAP = {
    "integer": INTEGER, "int": INTEGER, "bigint": INTEGER,
    "boolean": BOOLEAN, "bool": BOOLEAN,
    "text": TEXT, "varchar": TEXT,
}

_ANNOTATION_RE = re.compile(r"^--\s*@(\w+)\s*(.*)$")


@dataclass
class Token:
    kind: str  # ident, keyword, int, string, op, eof
    text: str
    line: int
    col: int


@dataclass
class _Annotation:
    kind: str
    columns: tuple[str, ...]
    line: int
    col: int


def _tokenize(text: str, filename: str) -> tuple[list[Token], list[tuple[int, _Annotation]]]:
    """Returns tokens plus annotations keyed by the index of the next token."""
    tokens: list[Token] = []
    annotations: list[tuple[int, _Annotation]] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            end = text.find("\n", i)
            if end == -1:
                end = n
            comment = text[i:end]
            match = _ANNOTATION_RE.match(comment.strip())
            if match:
                kind, rest = match.group(1), match.group(2).strip()
                if kind not in ("variable_columns", "hard_constraint", "soft_constraint"):
                    raise SqlSyntaxError(f"unknown annotation @{kind}", line, col, filename)
                columns: tuple[str, ...] = ()
                if kind == "variable_columns":
                    inner = rest.strip()
                    if not (inner.startswith("(") and inner.endswith(")")):
                        raise SqlSyntaxError(
                            "@variable_columns expects a parenthesized column list",
                            line, col, filename,
                        )
                    columns = tuple(
                        c.strip() for c in inner[1:-1].split(",") if c.strip()
                    )
                    if not columns:
                        raise SqlSyntaxError(
                            "@variable_columns lists no columns", line, col, filename
                        )
                elif rest:
                    raise SqlSyntaxError(
                        f"@{kind} takes no arguments", line, col, filename
                    )
                annotations.append((len(tokens), _Annotation(kind, columns, line, col)))
            col += end - i
            i = end
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "keyword" if word.lower() in KEYWORDS else "ident"
            tokens.append(Token(kind, word.lower() if kind == "keyword" else word, line, col))
            col += j - i
            i = j
            continue
        if ch == "'":
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise SqlSyntaxError("unterminated string literal", line, col, filename)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    j += 1
                    break
                if text[j] == "\n":
                    raise SqlSyntaxError("newline in string literal", line, col, filename)
                buf.append(text[j])
                j += 1
            tokens.append(Token("string", "".join(buf), line, col))
            col += j - i
            i = j
            continue
        for op in ("<=", ">=", "!=", "<>", "=", "<", ">", "+", "-", "*", "(", ")", ",", ";", "."):
            if text.startswith(op, i):
                tokens.append(Token("op", "!=" if op == "<>" else op, line, col))
                col += len(op)
                i += len(op)
                break
        else:
            raise SqlSyntaxError(f"unexpected character {ch!r}", line, col, filename)
    tokens.append(Token("eof", "", line, col))
    return tokens, annotations


class _Parser:
    def __init__(self, text: str, filename: str):
        self.filename = filename
        self.tokens, raw = _tokenize(text, filename)
        self.annotations = {idx: ann for idx, ann in raw}
        if len(self.annotations) != len(raw):
            dup = raw[-1][1]
            raise SqlSyntaxError(
                "multiple annotations before one statement", dup.line, dup.col, filename
            )
        self.pos = 0

    # -- token helpers -------------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise SqlSyntaxError(message, tok.line, tok.col, self.filename)

    def expect_kw(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind != "keyword" or tok.text != word:
            self.error(f"expected {word.upper()!r}, found {tok.text!r}")
        return self.advance()

    def expect_op(self, op: str) -> Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            self.error(f"expected {op!r}, found {tok.text!r}")
        return self.advance()

    def expect_ident(self) -> str:
        tok = self.peek()
        if tok.kind != "ident":
            self.error(f"expected identifier, found {tok.text!r}")
        return self.advance().text

    def at_kw(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "keyword" and tok.text in words

    def at_op(self, op: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text == op

    # -- grammar ---------------------------------------------------------------

    def parse_program(self) -> tuple[list[TableDef], list[ViewDef]]:
        tables: list[TableDef] = []
        views: list[ViewDef] = []
        while not self.peek().kind == "eof":
            ann = self.annotations.get(self.pos)
            start = self.peek()
            self.expect_kw("create")
            if self.at_kw("table"):
                if ann is not None and ann.kind != "variable_columns":
                    self.error(f"@{ann.kind} cannot annotate a table", start)
                tables.append(self._create_table(ann))
            elif self.at_kw("view"):
                if ann is not None and ann.kind == "variable_columns":
                    self.error("@variable_columns cannot annotate a view", start)
                views.append(self._create_view(ann, start.line))
            else:
                self.error("expected TABLE or VIEW after CREATE")
            self.expect_op(";")
        return tables, views

    def _create_table(self, ann: Optional[_Annotation]) -> TableDef:
        self.expect_kw("table")
        name = self.expect_ident()
        self.expect_op("(")
        var_cols = set(ann.columns) if ann else set()
        columns: list[ColumnDef] = []
        primary: Optional[str] = None
        while True:
            if self.at_kw("primary"):
                self.advance()
                self.expect_kw("key")
                self.expect_op("(")
                pk = self.expect_ident()
                self.expect_op(")")
                if primary is not None:
                    self.error("duplicate primary key clause")
                primary = pk
            else:
                col_name = self.expect_ident()
                type_tok = self.peek()
                if type_tok.kind != "keyword" or type_tok.text not in _TYPE_MAP:
                    self.error(f"expected a column type, found {type_tok.text!r}")
                self.advance()
                dtype = _TYPE_MAP[type_tok.text]
                if type_tok.text == "varchar" and self.at_op("("):
                    self.advance()
                    if self.peek().kind != "int":
                        self.error("expected a length in varchar(...)")
                    self.advance()
                    self.expect_op(")")
                if self.at_kw("not"):
                    self.advance()
                    self.expect_kw("null")
                if self.at_kw("primary"):
                    self.advance()
                    self.expect_kw("key")
                    if primary is not None:
                        self.error("duplicate primary key clause")
                    primary = col_name
                try:
                    columns.append(
                        ColumnDef(col_name, dtype, is_variable=col_name in var_cols)
                    )
                except Exception as exc:
                    self.error(str(exc))
            if self.at_op(","):
                self.advance()
                continue
            break
        self.expect_op(")")
        unknown = var_cols - {c.name for c in columns}
        if unknown:
            self.error(f"@variable_columns names unknown columns {sorted(unknown)!r}")
        try:
            return TableDef(name, tuple(columns), primary)
        except Exception as exc:
            self.error(str(exc))

    def _create_view(self, ann: Optional[_Annotation], line: int) -> ViewDef:
        self.expect_kw("view")
        name = self.expect_ident()
        self.expect_kw("as")
        ast = self._select()
        klass = None
        if ann is not None:
            klass = HARD if ann.kind == "hard_constraint" else SOFT
        return ViewDef(name, ast, klass, line)

    def _select(self) -> QueryAst:
        self.expect_kw("select")
        projection = [self._select_item()]
        while self.at_op(","):
            self.advance()
            projection.append(self._select_item())
        self.expect_kw("from")
        base = self.expect_ident()
        joins = []
        while self.at_kw("inner", "join"):
            if self.at_kw("inner"):
                self.advance()
            self.expect_kw("join")
            table = self.expect_ident()
            self.expect_kw("on")
            joins.append(Join(table, self._expr()))
        where = None
        if self.at_kw("where"):
            self.advance()
            where = self._expr()
        group_by: list[ColRef] = []
        if self.at_kw("group"):
            self.advance()
            self.expect_kw("by")
            group_by.append(self._colref())
            while self.at_op(","):
                self.advance()
                group_by.append(self._colref())
        having = None
        if self.at_kw("having"):
            self.advance()
            having = self._expr()
        return QueryAst(tuple(projection), base, tuple(joins), where, tuple(group_by), having)

    def _select_item(self) -> SelectItem:
        if self.at_op("*"):
            self.advance()
            return SelectItem(Star())
        expr = self._expr()
        alias = None
        if self.at_kw("as"):
            self.advance()
            alias = self.expect_ident()
        return SelectItem(expr, alias)

    def _colref(self) -> ColRef:
        first = self.expect_ident()
        if self.at_op("."):
            self.advance()
            return ColRef(first, self.expect_ident())
        return ColRef(None, first)

    # Precedence: or < and < not < comparison/in < additive < multiplicative < primary
    def _expr(self) -> Expr:
        return self._or()

    def _or(self) -> Expr:
        left = self._and()
        while self.at_kw("or"):
            self.advance()
            left = BinOp("or", left, self._and())
        return left

    def _and(self) -> Expr:
        left = self._not()
        while self.at_kw("and"):
            self.advance()
            left = BinOp("and", left, self._not())
        return left

    def _not(self) -> Expr:
        if self.at_kw("not"):
            self.advance()
            return NotOp(self._not())
        return self._comparison()

    def _comparison(self) -> Expr:
        left = self._additive()
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("=", "!=", "<", "<=", ">", ">="):
            self.advance()
            return BinOp(tok.text, left, self._additive())
        negated = False
        if self.at_kw("not"):
            save = self.pos
            self.advance()
            if self.at_kw("in"):
                negated = True
            else:
                self.pos = save
                return left
        if self.at_kw("in"):
            self.advance()
            self.expect_op("(")
            if not self.at_kw("select"):
                self.error("IN expects a subquery")
            query = self._select()
            self.expect_op(")")
            return InSubquery(left, query, negated)
        return left

    def _additive(self) -> Expr:
        left = self._multiplicative()
        while self.at_op("+") or self.at_op("-"):
            op = self.advance().text
            left = BinOp(op, left, self._multiplicative())
        return left

    def _multiplicative(self) -> Expr:
        left = self._primary()
        while self.at_op("*"):
            self.advance()
            left = BinOp("*", left, self._primary())
        return left

    def _primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.advance()
            return IntLit(int(tok.text))
        if tok.kind == "string":
            self.advance()
            return StrLit(tok.text)
        if tok.kind == "keyword" and tok.text in ("true", "false"):
            self.advance()
            return BoolLit(tok.text == "true")
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            if self.at_kw("select"):
                query = self._select()
                self.expect_op(")")
                return ScalarSubquery(query)
            inner = self._expr()
            self.expect_op(")")
            return inner
        if tok.kind == "ident":
            name = self.advance().text
            if self.at_op("(") and name.lower() in AGGREGATES:
                self.advance()
                arg = self._expr()
                self.expect_op(")")
                return AggCall(name.lower(), arg)
            if self.at_op("."):
                self.advance()
                return ColRef(name, self.expect_ident())
            return ColRef(None, name)
        self.error(f"unexpected token {tok.text!r}")


def parse_program(text: str, filename: str = "<sql>") -> tuple[list[TableDef], list[ViewDef]]:
    """Parse DDL and views; annotations attach to the statement they precede."""
    return _Parser(text, filename).parse_program()


def render_program(tables: list[TableDef], views: list[ViewDef]) -> str:
    """Deterministic textual form; parsing it back yields identical ASTs."""
    parts = []
    for table in tables:
        var_cols = [c.name for c in table.columns if c.is_variable]
        if var_cols:
            parts.append(f"-- @variable_columns ({', '.join(var_cols)})")
        cols = []
        for c in table.columns:
            dtype = {INTEGER: "integer", BOOLEAN: "boolean", TEXT: "text"}[c.dtype]
            pk = " primary key" if table.primary_key == c.name else ""
            cols.append(f"  {c.name} {dtype} not null{pk}")
        parts.append(f"create table {table.name} (\n" + ",\n".join(cols) + "\n);")
    for view in views:
        parts.append(view.render())
    return "\n".join(parts) + "\n"


# -- classification -----------------------------------------------------------


@dataclass
class Program:
    """Parsed and classified policy program."""

    tables: dict[str, TableDef]
    views: list[ViewDef]  # in dependency (topological) order, klass assigned
    schemas: dict[str, tuple[ColumnDef, ...]]  # output schema per view

    def views_by_class(self, klass: str) -> list[ViewDef]:
        return [v for v in self.views if v.klass == klass]

    def by_name(self, name: str) -> ViewDef:
        for v in self.views:
            if v.name == name:
                return v
        raise KeyError(name)


def classify_views(tables: list[TableDef], views: list[ViewDef]) -> Program:
    """Assign classes and return views in dependency order.

    Unannotated views are inputs when no decision column is reachable;
    variable-dependent unannotated views become auxiliary solver views when a
    constraint view consumes them, and are rejected otherwise.
    """
    table_map: dict[str, TableDef] = {}
    for t in tables:
        if t.name in table_map:
            raise ClassifyError(f"table {t.name!r} defined twice")
        table_map[t.name] = t
    view_map: dict[str, ViewDef] = {}
    for v in views:
        if v.name in table_map or v.name in view_map:
            raise ClassifyError(f"view {v.name!r} collides with an existing name")
        view_map[v.name] = v

    order = _toposort(views, view_map)

    schemas: dict[str, tuple[ColumnDef, ...]] = {}
    touches_var: dict[str, bool] = {}
    checker = _TypeChecker(table_map, schemas, touches_var)
    for view in order:
        schema, touches = checker.check_view(view)
        schemas[view.name] = schema
        touches_var[view.name] = touches

    # Who consumes whom, for the aux rule.
    consumers: dict[str, set[str]] = {v.name: set() for v in views}
    for view in order:
        for dep in _view_deps(view, view_map):
            consumers[dep].add(view.name)

    # Classify in reverse topological order so consumer classes are known.
    classed: dict[str, str] = {}
    for view in reversed(order):
        if view.klass in (HARD, SOFT):
            classed[view.name] = view.klass
            continue
        if not touches_var[view.name]:
            classed[view.name] = INPUT
            continue
        used_by_constraint = any(
            classed.get(c) in (HARD, SOFT, AUX) for c in consumers[view.name]
        )
        if not used_by_constraint:
            raise ClassifyError(
                f"view {view.name!r} touches decision columns but is not annotated "
                "and no constraint view consumes it"
            )
        classed[view.name] = AUX

    for view in order:
        view.klass = classed[view.name]

    for view in order:
        if view.klass == SOFT:
            _check_soft_scalar(view, schemas)
        if view.klass == INPUT and touches_var[view.name]:
            raise ClassifyError(f"input view {view.name!r} touches a decision column")
        for dep in _view_deps(view, view_map):
            if view_map[dep].klass == SOFT:
                raise ClassifyError(
                    f"view {view.name!r} references soft view {dep!r}; "
                    "soft views cannot be nested"
                )

    return Program(table_map, order, schemas)


def _view_deps(view: ViewDef, view_map: dict[str, ViewDef]) -> set[str]:
    deps: set[str] = set()

    def visit_query(q: QueryAst):
        for name in q.sources():
            if name in view_map:
                deps.add(name)
        for node in walk_query(q):
            if isinstance(node, (InSubquery,)):
                visit_query(node.query)
            elif isinstance(node, ScalarSubquery):
                visit_query(node.query)

    visit_query(view.ast)
    return deps


def _toposort(views: list[ViewDef], view_map: dict[str, ViewDef]) -> list[ViewDef]:
    state: dict[str, int] = {}  # 0 visiting, 1 done
    order: list[ViewDef] = []

    def visit(name: str, chain: list[str]):
        if state.get(name) == 1:
            return
        if state.get(name) == 0:
            cycle = " -> ".join(chain[chain.index(name):] + [name])
            raise ClassifyError(f"cycle in view dependencies: {cycle}")
        state[name] = 0
        for dep in sorted(_view_deps(view_map[name], view_map)):
            visit(dep, chain + [name])
        state[name] = 1
        order.append(view_map[name])

    for view in views:
        visit(view.name, [])
    return order


def _check_soft_scalar(view: ViewDef, schemas) -> None:
    ast = view.ast
    if len(ast.projection) != 1 or isinstance(ast.projection[0].expr, Star) or ast.group_by:
        raise ClassifyError(
            f"soft view {view.name!r} must compute a single scalar integer"
        )
    schema = schemas[view.name]
    if len(schema) != 1 or schema[0].dtype != INTEGER:
        raise ClassifyError(f"soft view {view.name!r} must be integer-typed")


# -- resolution and type checking ----------------------------------------------


@dataclass
class _Scope:
    sources: dict[str, tuple[ColumnDef, ...]]
    parent: Optional["_Scope"] = None

    def resolve(self, ref: ColRef, view_name: str) -> tuple[ColRef, ColumnDef]:
        if ref.table is not None:
            scope: Optional[_Scope] = self
            while scope is not None:
                cols = scope.sources.get(ref.table)
                if cols is not None:
                    for col in cols:
                        if col.name == ref.column:
                            return ref, col
                    raise ClassifyError(
                        f"view {view_name!r}: {ref.table!r} has no column {ref.column!r}"
                    )
                scope = scope.parent
            raise ClassifyError(f"view {view_name!r}: unknown source {ref.table!r}")
        hits = []
        scope = self
        while scope is not None:
            for name, cols in scope.sources.items():
                for col in cols:
                    if col.name == ref.column:
                        hits.append((name, col))
            if hits:
                break
            scope = scope.parent
        if not hits:
            raise ClassifyError(f"view {view_name!r}: unknown column {ref.column!r}")
        if len(hits) > 1:
            names = sorted(h[0] for h in hits)
            raise ClassifyError(
                f"view {view_name!r}: ambiguous column {ref.column!r} (in {names})"
            )
        name, col = hits[0]
        return ColRef(name, ref.column), col


class _TypeChecker:
    """Resolves column references in place and derives output schemas."""

    def __init__(self, tables, schemas, touches_var):
        self.tables = tables
        self.schemas = schemas
        self.touches_var = touches_var

    def source_columns(self, name: str, view_name: str) -> tuple[ColumnDef, ...]:
        if name in self.tables:
            return self.tables[name].columns
        if name in self.schemas:
            return self.schemas[name]
        raise ClassifyError(f"view {view_name!r}: unknown table or view {name!r}")

    def check_view(self, view: ViewDef) -> tuple[tuple[ColumnDef, ...], bool]:
        ast, schema, touches = self._check_query(view.ast, view.name, parent=None)
        view.ast = ast
        return schema, touches

    def _check_query(self, q: QueryAst, view_name: str, parent) -> tuple[QueryAst, tuple[ColumnDef, ...], bool]:
        sources = q.sources()
        if len(set(sources)) != len(sources):
            raise ClassifyError(
                f"view {view_name!r}: source appears twice (self-joins unsupported)"
            )
        scope = _Scope({s: self.source_columns(s, view_name) for s in sources}, parent)
        # Ranging over a variable-dependent view taints the consumer even when
        # only its key columns are referenced: the rows themselves depend on
        # decision values.
        touches = any(self.touches_var.get(s, False) for s in sources)

        def is_var(ref: ColRef, col: ColumnDef) -> bool:
            if ref.table in self.tables:
                return col.is_variable
            return False  # view columns are never decision cells themselves

        def rewrite(expr, allow_agg: bool):
            nonlocal touches
            if isinstance(expr, ColRef):
                resolved, col = scope.resolve(expr, view_name)
                if is_var(resolved, col):
                    touches = True
                if resolved.table not in scope.sources and self.touches_var.get(resolved.table):
                    touches = True
                return resolved, col.dtype
            if isinstance(expr, IntLit):
                return expr, INTEGER
            if isinstance(expr, StrLit):
                return expr, TEXT
            if isinstance(expr, BoolLit):
                return expr, BOOLEAN
            if isinstance(expr, NotOp):
                inner, dtype = rewrite(expr.operand, allow_agg)
                if dtype != BOOLEAN:
                    raise ClassifyError(f"view {view_name!r}: NOT needs a boolean")
                return NotOp(inner), BOOLEAN
            if isinstance(expr, BinOp):
                left, lt = rewrite(expr.left, allow_agg)
                right, rt = rewrite(expr.right, allow_agg)
                out = BinOp(expr.op, left, right)
                if expr.op in ("and", "or"):
                    if lt != BOOLEAN or rt != BOOLEAN:
                        raise ClassifyError(
                            f"view {view_name!r}: {expr.op} needs booleans"
                        )
                    return out, BOOLEAN
                if expr.op in ("+", "-", "*"):
                    if lt != INTEGER or rt != INTEGER:
                        raise ClassifyError(
                            f"view {view_name!r}: arithmetic needs integers"
                        )
                    return out, INTEGER
                if expr.op in ("=", "!="):
                    if lt != rt:
                        raise ClassifyError(
                            f"view {view_name!r}: comparing {lt} with {rt}"
                        )
                    return out, BOOLEAN
                if lt != INTEGER or rt != INTEGER:
                    raise ClassifyError(
                        f"view {view_name!r}: ordering comparison needs integers"
                    )
                return out, BOOLEAN
            if isinstance(expr, AggCall):
                if not allow_agg:
                    raise ClassifyError(
                        f"view {view_name!r}: aggregate {expr.func} only allowed "
                        "in projection or HAVING"
                    )
                arg, dtype = rewrite(expr.arg, allow_agg=False)
                if expr.func == "all_different":
                    if dtype == BOOLEAN:
                        raise ClassifyError(
                            f"view {view_name!r}: all_different needs integer or text"
                        )
                    return AggCall(expr.func, arg), BOOLEAN
                if expr.func == "count":
                    return AggCall(expr.func, arg), INTEGER
                if dtype != INTEGER:
                    raise ClassifyError(
                        f"view {view_name!r}: {expr.func} needs an integer argument"
                    )
                return AggCall(expr.func, arg), INTEGER
            if isinstance(expr, InSubquery):
                needle, nt = rewrite(expr.needle, allow_agg=False)
                sub, schema, sub_touches = self._check_query(expr.query, view_name, scope)
                if len(schema) != 1:
                    raise ClassifyError(
                        f"view {view_name!r}: IN subquery must project one column"
                    )
                if schema[0].dtype != nt:
                    raise ClassifyError(
                        f"view {view_name!r}: IN compares {nt} with {schema[0].dtype}"
                    )
                touches = touches or sub_touches
                return InSubquery(needle, sub, expr.negated), BOOLEAN
            if isinstance(expr, ScalarSubquery):
                sub, schema, sub_touches = self._check_query(expr.query, view_name, None)
                if len(schema) != 1 or schema[0].dtype != INTEGER:
                    raise ClassifyError(
                        f"view {view_name!r}: scalar subquery must yield one integer"
                    )
                touches = touches or sub_touches
                return ScalarSubquery(sub), INTEGER
            raise ClassifyError(f"view {view_name!r}: unsupported expression {expr!r}")

        joins = []
        for join in q.joins:
            on, dtype = rewrite(join.on, allow_agg=False)
            if dtype != BOOLEAN:
                raise ClassifyError(f"view {view_name!r}: JOIN ON must be boolean")
            joins.append(Join(join.table, on))
        where = None
        if q.where is not None:
            where, dtype = rewrite(q.where, allow_agg=False)
            if dtype != BOOLEAN:
                raise ClassifyError(f"view {view_name!r}: WHERE must be boolean")
        group_by = []
        for key in q.group_by:
            resolved, _ = rewrite(key, allow_agg=False)
            group_by.append(resolved)
        having = None
        if q.having is not None:
            having, dtype = rewrite(q.having, allow_agg=True)
            if dtype != BOOLEAN:
                raise ClassifyError(f"view {view_name!r}: HAVING must be boolean")

        items: list[SelectItem] = []
        out_cols: list[ColumnDef] = []
        for item in q.projection:
            if isinstance(item.expr, Star):
                items.append(item)
                for name in sources:
                    for col in scope.sources[name]:
                        out_cols.append(ColumnDef(col.name, col.dtype))
                        if name in self.tables and col.is_variable:
                            touches = True
                continue
            expr, dtype = rewrite(item.expr, allow_agg=True)
            items.append(SelectItem(expr, item.alias))
            if item.alias:
                out_name = item.alias
            elif isinstance(expr, ColRef):
                out_name = expr.column
            else:
                out_name = f"col{len(out_cols)}"
            out_cols.append(ColumnDef(out_name, dtype))

        names = [c.name for c in out_cols]
        if len(set(names)) != len(names):
            raise ClassifyError(f"view {view_name!r}: duplicate output columns {names!r}")
        new_q = QueryAst(tuple(items), q.base, tuple(joins), where, tuple(group_by), having)
        return new_q, tuple(out_cols), touches
