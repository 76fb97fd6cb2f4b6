"""Feature detectors and normalization denominators over a parsed file."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import asdict, dataclass, field, fields

from featrend.syntax import NodeKind, SourceTree, SyntaxNode, count_lloc

__all__ = [
    "DEFAULT_COROUTINE_KEYWORDS",
    "DEFAULT_RANGE_INFIX",
    "DenominatorCounts",
    "DetectorConfig",
    "FeatureInstance",
    "FeatureKind",
    "FileFeatureReport",
    "detect",
]


class FeatureKind(str, enum.Enum):
    TypeInference = "TypeInference"
    Lambda = "Lambda"
    InlineFunction = "InlineFunction"
    SafeCall = "SafeCall"
    UnsafeCall = "UnsafeCall"
    WhenExpr = "WhenExpr"
    FuncWithDefaultValue = "FuncWithDefaultValue"
    FuncCallWithNamedArg = "FuncCallWithNamedArg"
    SmartCast = "SmartCast"
    DataClass = "DataClass"
    RangeExpr = "RangeExpr"
    ExtensionFunction = "ExtensionFunction"
    StringTemplate = "StringTemplate"
    SuperDelegation = "SuperDelegation"
    PropertyDelegation = "PropertyDelegation"
    OperatorOverloading = "OperatorOverloading"
    Singleton = "Singleton"
    CompanionObject = "CompanionObject"
    DestructuringDecl = "DestructuringDecl"
    InfixFunction = "InfixFunction"
    TailrecFunction = "TailrecFunction"
    SealedClass = "SealedClass"
    TypeAlias = "TypeAlias"
    Coroutine = "Coroutine"
    Contract = "Contract"
    InlineClass = "InlineClass"

    def __str__(self) -> str:
        return self.value


DEFAULT_COROUTINE_KEYWORDS = frozenset({"launch", "async", "runBlocking", "withContext", "coroutineScope", "delay"})
DEFAULT_RANGE_INFIX = frozenset({"until", "downTo"})

# Kinds whose detection is a syntactic stand-in for a semantic property.
APPROXIMATE_KINDS = frozenset({FeatureKind.SmartCast, FeatureKind.Coroutine})


@dataclass(frozen=True)
class FeatureInstance:
    kind: FeatureKind
    path: str
    line: int


@dataclass
class DenominatorCounts:
    variable_declarations: int = 0
    named_functions: int = 0
    constructors: int = 0
    classes: int = 0
    function_calls: int = 0
    strings: int = 0
    properties: int = 0
    inheritances: int = 0
    object_declarations: int = 0
    lloc: int = 0

    def __add__(self, other: DenominatorCounts) -> DenominatorCounts:
        return DenominatorCounts(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


@dataclass
class FileFeatureReport:
    path: str
    instances: list[FeatureInstance] = field(default_factory=list)
    denominators: DenominatorCounts = field(default_factory=DenominatorCounts)
    warnings: int = 0
    declared_counts: dict[FeatureKind, int] | None = None

    def counts(self) -> Counter:
        """Instance count per FeatureKind (kinds with zero instances are absent).

        Reports loaded from a history without instance locations carry their
        counts in ``declared_counts`` instead.
        """
        if self.declared_counts is not None:
            return Counter({k: v for k, v in self.declared_counts.items() if v})
        return Counter(i.kind for i in self.instances)


@dataclass(frozen=True)
class DetectorConfig:
    """Tunable detector settings.

    Attributes:
        enabled: Kinds to report. Disabled kinds are dropped from the output.
        coroutine_keywords: Callee names that mark a coroutine use.
        range_infix: Infix function names treated as range expressions.
    """

    enabled: frozenset[FeatureKind] = frozenset(FeatureKind)
    coroutine_keywords: frozenset[str] = DEFAULT_COROUTINE_KEYWORDS
    range_infix: frozenset[str] = DEFAULT_RANGE_INFIX


_DEFAULT_CONFIG = DetectorConfig()

_FUNCTION_MODIFIER_KINDS = (
    ("inline", FeatureKind.InlineFunction),
    ("operator", FeatureKind.OperatorOverloading),
    ("infix", FeatureKind.InfixFunction),
    ("tailrec", FeatureKind.TailrecFunction),
)


def _is_checks(expr: SyntaxNode | None) -> set[str]:
    """Names proven by positive ``is`` checks in an ``&&`` chain."""
    names: set[str] = set()
    stack = [expr] if expr is not None else []
    while stack:
        node = stack.pop()
        if node.kind is NodeKind.BINARY_OP:
            op = node.attrs.get("op")
            if op == "is" and node.attrs.get("lhs_name"):
                names.add(node.attrs["lhs_name"])
            elif op == "&&":
                stack.extend(node.children)
        elif node.kind is NodeKind.OTHER and node.attrs.get("role") == "paren":
            stack.extend(node.children)
    return names


def _role(node: SyntaxNode) -> str | None:
    return node.attrs.get("role")


def _child_guards(node: SyntaxNode, guards: frozenset[str]) -> list[frozenset[str]]:
    """Guard set for each child of ``node``."""
    kids = node.children
    out = [guards] * len(kids)
    role = _role(node)
    if node.kind is NodeKind.OTHER and role == "if":
        names: set[str] = set()
        for c in kids:
            if _role(c) == "cond":
                for e in c.children:
                    names |= _is_checks(e)
        if names:
            extended = guards | names
            out = [extended if _role(c) == "then" else guards for c in kids]
    elif node.kind is NodeKind.BINARY_OP and node.attrs.get("op") == "&&" and len(kids) == 2:
        names = _is_checks(kids[0])
        if names:
            out = [guards, guards | names]
    elif node.kind is NodeKind.OTHER and role == "when-branch":
        subject = node.attrs.get("subject_name")
        names = set()
        for c in kids:
            if _role(c) == "when-cond":
                if c.attrs.get("is_check") and subject:
                    names.add(subject)
                for e in c.children:
                    names |= _is_checks(e)
        if names:
            extended = guards | names
            out = [extended if _role(c) == "when-body" else guards for c in kids]
    return out


def _call_name(node: SyntaxNode) -> str | None:
    return node.attrs.get("name")


def _is_contract_call(node: SyntaxNode) -> bool:
    if _call_name(node) != "contract":
        return False
    args = [c for c in node.children if c.kind is NodeKind.CALL_ARGUMENT]
    return len(args) == 1 and args[0].attrs.get("lambda_arg") and not args[0].attrs.get("named")


def detect(tree: SourceTree, config: DetectorConfig | None = None) -> FileFeatureReport:
    """Run every enabled detector and count the denominators for one file."""
    cfg = config or _DEFAULT_CONFIG
    path = tree.path
    found: list[tuple[int, FeatureKind]] = []
    den = DenominatorCounts(lloc=count_lloc(tree))

    def add(kind: FeatureKind, line: int) -> None:
        found.append((line, kind))

    # Propagate subject names onto when branches so guard computation stays local.
    for node in tree.root.walk():
        if node.kind is NodeKind.WHEN_EXPR:
            for c in node.children:
                if _role(c) == "when-branch":
                    c.attrs["subject_name"] = node.attrs.get("subject_name")

    stack: list[tuple[SyntaxNode, frozenset[str], bool]] = [(tree.root, frozenset(), False)]
    while stack:
        node, guards, in_function = stack.pop()
        kind = node.kind
        mods = node.modifiers if kind in (NodeKind.FUNCTION_DECL, NodeKind.CLASS_DECL, NodeKind.LAMBDA_EXPR) else frozenset()

        if kind is NodeKind.VARIABLE_DECL:
            den.variable_declarations += 1
            a = node.attrs
            if a.get("has_initializer") and not a.get("has_type_annotation") and not a.get("delegated"):
                add(FeatureKind.TypeInference, node.start_line)
        elif kind is NodeKind.DESTRUCTURING_DECL:
            den.variable_declarations += max(1, len(node.attrs.get("components", ())))
            add(FeatureKind.DestructuringDecl, node.line)
        elif kind is NodeKind.LAMBDA_EXPR:
            add(FeatureKind.Lambda, node.line)
            if node.attrs.get("suspend"):
                add(FeatureKind.Coroutine, node.line)
        elif kind is NodeKind.FUNCTION_DECL:
            named = node.attrs.get("name") is not None
            if "suspend" in mods:
                add(FeatureKind.Coroutine, node.line)
            if named:
                den.named_functions += 1
                for mod, fk in _FUNCTION_MODIFIER_KINDS:
                    if mod in mods:
                        add(fk, node.line)
                if node.attrs.get("receiver"):
                    add(FeatureKind.ExtensionFunction, node.line)
                if any(c.attrs.get("has_default") for c in node.children):
                    add(FeatureKind.FuncWithDefaultValue, node.line)
        elif kind is NodeKind.CONSTRUCTOR_DECL:
            den.constructors += 1
            if any(c.attrs.get("has_default") for c in node.children):
                add(FeatureKind.FuncWithDefaultValue, node.line)
        elif kind is NodeKind.CLASS_DECL:
            den.classes += 1
            if "data" in mods:
                add(FeatureKind.DataClass, node.line)
            if "sealed" in mods:
                add(FeatureKind.SealedClass, node.line)
            if "inline" in mods or "value" in mods:
                add(FeatureKind.InlineClass, node.line)
        elif kind is NodeKind.OBJECT_DECL:
            den.object_declarations += 1
            if not node.attrs.get("literal"):
                add(FeatureKind.Singleton, node.line)
        elif kind is NodeKind.COMPANION_OBJECT_DECL:
            den.object_declarations += 1
            add(FeatureKind.CompanionObject, node.line)
        elif kind is NodeKind.PROPERTY_DECL:
            den.properties += 1
            if node.attrs.get("delegated"):
                add(FeatureKind.PropertyDelegation, node.line)
        elif kind is NodeKind.SUPER_TYPE_ENTRY:
            den.inheritances += 1
            if node.attrs.get("delegated"):
                add(FeatureKind.SuperDelegation, node.start_line)
        elif kind is NodeKind.CALL_EXPR:
            den.function_calls += 1
            name = _call_name(node)
            if any(c.kind is NodeKind.CALL_ARGUMENT and c.attrs.get("named") for c in node.children):
                add(FeatureKind.FuncCallWithNamedArg, node.line)
            if name in cfg.coroutine_keywords:
                add(FeatureKind.Coroutine, node.line)
            if in_function and _is_contract_call(node):
                add(FeatureKind.Contract, node.line)
        elif kind is NodeKind.STRING_LITERAL:
            den.strings += 1
            if any(c.kind is NodeKind.STRING_TEMPLATE_ENTRY for c in node.children):
                add(FeatureKind.StringTemplate, node.start_line)
        elif kind is NodeKind.TYPE_ALIAS_DECL:
            add(FeatureKind.TypeAlias, node.line)
        elif kind is NodeKind.WHEN_EXPR:
            add(FeatureKind.WhenExpr, node.start_line)
        elif kind is NodeKind.UNARY_POSTFIX_OP:
            if node.attrs.get("op") == "!!":
                add(FeatureKind.UnsafeCall, node.line)
        elif kind is NodeKind.BINARY_OP:
            op = node.attrs.get("op")
            if op == "?.":
                add(FeatureKind.SafeCall, node.line)
            if op in ("..", "..<") or op in cfg.range_infix:
                add(FeatureKind.RangeExpr, node.line)
            if op in (".", "?.") and guards and node.attrs.get("receiver_name") in guards:
                add(FeatureKind.SmartCast, node.line)

        child_in_function = in_function or kind in (NodeKind.FUNCTION_DECL, NodeKind.CONSTRUCTOR_DECL)
        child_guards = _child_guards(node, guards) if node.children else []
        for child, g in zip(reversed(node.children), reversed(child_guards)):
            stack.append((child, g, child_in_function))

    found.sort(key=lambda t: (t[0], list(FeatureKind).index(t[1])))
    instances = [FeatureInstance(k, path, line) for line, k in found if k in cfg.enabled]
    return FileFeatureReport(path=path, instances=instances, denominators=den, warnings=tree.warnings)
