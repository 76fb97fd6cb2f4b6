"""Feature detector tests: rule examples, the labeled corpus and properties."""

from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus_labels import CORPUS_DIR, read_labels
from featrend.detect import DenominatorCounts, DetectorConfig, FeatureKind, detect
from featrend.metrics import NORMALIZATION
from featrend.syntax import parse_source

K = FeatureKind
CORPUS = sorted(CORPUS_DIR.glob("*.kt"))


def run(source, config=None):
    rep = detect(parse_source(source), config)
    return rep.counts(), rep.denominators


def kinds(source, config=None):
    return dict(run(source, config)[0])


class TestRuleExamples:
    def test_type_inference(self):
        counts, den = run("var a = 10")
        assert counts == Counter({K.TypeInference: 1})
        assert den.variable_declarations == 1

    def test_annotated_declaration(self):
        counts, den = run('val s: String = "x"')
        assert counts[K.TypeInference] == 0
        assert den.strings == 1
        assert den.variable_declarations == 1

    def test_constructor_default(self):
        counts, den = run("class C(val p: Int = 0)")
        assert counts == Counter({K.FuncWithDefaultValue: 1})
        assert (den.classes, den.constructors, den.properties) == (1, 1, 1)

    def test_safe_and_unsafe_calls(self):
        counts, den = run("x?.f()!!.g()")
        assert counts[K.SafeCall] == 1
        assert counts[K.UnsafeCall] == 1
        assert den.function_calls == 2

    def test_one_default_instance_per_declaration(self):
        assert kinds("fun f(a: Int = 1, b: Int = 2) {}") == {K.FuncWithDefaultValue: 1}

    def test_one_named_arg_instance_per_call(self):
        assert kinds("fun g() { f(a = 1, b = 2) }")[K.FuncCallWithNamedArg] == 1

    def test_string_template_per_literal(self):
        counts, den = run('val s = "$a and ${b + 1}"')
        assert counts[K.StringTemplate] == 1
        assert den.strings == 1

    def test_plain_string_is_not_template(self):
        assert K.StringTemplate not in kinds('val s = "a \\$b"')

    def test_ranges(self):
        src = "fun f() { for (i in 0..9) {}; for (j in 0 until 9) {}; for (k in 9 downTo 0 step 2) {} }"
        assert kinds(src)[K.RangeExpr] == 3

    def test_step_can_be_enabled(self):
        cfg = DetectorConfig(range_infix=frozenset({"until", "downTo", "step"}))
        assert kinds("val r = 9 downTo 0 step 2", cfg)[K.RangeExpr] == 2

    def test_smart_cast(self):
        src = "fun f(x: Any) { if (x is String) { println(x.length) } }"
        assert kinds(src)[K.SmartCast] == 1

    def test_explicit_cast_is_not_smart_cast(self):
        src = "fun f(x: Any) { if (x is String) { println((x as String).length) } }"
        assert K.SmartCast not in kinds(src)

    def test_when_subject_smart_cast(self):
        src = "fun f(x: Any) = when (x) { is String -> x.length\n else -> 0 }"
        got = kinds(src)
        assert got[K.SmartCast] == 1
        assert got[K.WhenExpr] == 1

    def test_object_kinds(self):
        src = "object A\nclass B { companion object }\nval c = object : Runnable { override fun run() {} }"
        counts, den = run(src)
        assert counts[K.Singleton] == 1
        assert counts[K.CompanionObject] == 1
        assert den.object_declarations == 3

    def test_delegation(self):
        src = "class A(b: B) : I by b, Base()\nclass P { val x by lazy { 1 } }"
        counts, den = run(src)
        assert counts[K.SuperDelegation] == 1
        assert counts[K.PropertyDelegation] == 1
        assert den.inheritances == 2

    def test_class_modifiers(self):
        src = "data class D(val a: Int)\nsealed class S\ninline class I(val v: Int)\n@JvmInline value class V(val v: Int)"
        got = kinds(src)
        assert got[K.DataClass] == 1
        assert got[K.SealedClass] == 1
        assert got[K.InlineClass] == 2

    def test_function_modifiers(self):
        src = ("inline fun a() {}\noperator fun P.plus(o: P) = o\n"
               "infix fun Int.x(o: Int) = o\ntailrec fun t(n: Int): Int = if (n == 0) 0 else t(n - 1)")
        got = kinds(src)
        assert got[K.InlineFunction] == 1
        assert got[K.OperatorOverloading] == 1
        assert got[K.InfixFunction] == 1
        assert got[K.TailrecFunction] == 1
        assert got[K.ExtensionFunction] == 2

    def test_destructuring_denominator(self):
        counts, den = run("fun f(p: Pair<Int, Int>) { val (a, b) = p; val c = 1 }")
        assert counts[K.DestructuringDecl] == 1
        assert den.variable_declarations == 3

    def test_coroutines(self):
        src = "suspend fun s() { delay(1) }\nfun g() = runBlocking { launch { } }"
        assert kinds(src)[K.Coroutine] == 4

    def test_custom_coroutine_keywords(self):
        cfg = DetectorConfig(coroutine_keywords=frozenset({"produce"}))
        assert kinds("fun g() = scope.produce { send(1) }", cfg)[K.Coroutine] == 1

    def test_contract(self):
        src = "fun f(x: Any?) { contract { returns() implies (x != null) } }"
        assert kinds(src)[K.Contract] == 1

    def test_contract_outside_function(self):
        assert K.Contract not in kinds("val c = contract { }")

    def test_type_alias(self):
        assert kinds("typealias Ids = List<Int>") == {K.TypeAlias: 1}

    def test_disabled_kinds_are_dropped(self):
        cfg = DetectorConfig(enabled=frozenset(FeatureKind) - {K.Lambda})
        assert K.Lambda not in kinds("val f = { x: Int -> x }", cfg)

    def test_comments_and_strings_hide_code(self):
        assert kinds('// val a = 1\n/* x?.y */\nval s: String = "a?.b!!"') == {}


@pytest.fixture(scope="module")
def results():
    out = {}
    for path in CORPUS:
        expected, misses = read_labels(path)
        rep = detect(parse_source(path.read_bytes(), path.name))
        got = Counter((i.kind, i.line) for i in rep.instances)
        out[path.name] = (expected, misses, got)
    return out


class TestCorpus:
    def test_every_kind_has_five_labels(self, results):
        totals = Counter()
        for expected, _, _ in results.values():
            for (kind, _), n in expected.items():
                totals[kind] += n
        assert {k: totals[k] for k in FeatureKind if totals[k] < 5} == {}

    @pytest.mark.parametrize("name", [p.name for p in CORPUS])
    def test_no_spurious_instances(self, results, name):
        expected, _, got = results[name]
        assert got - expected == Counter()

    @pytest.mark.parametrize("name", [p.name for p in CORPUS])
    def test_no_missed_instances(self, results, name):
        expected, _, got = results[name]
        assert expected - got == Counter()

    def test_known_coroutine_misses(self, results):
        misses = Counter()
        for name, (_, miss, got) in results.items():
            for key, n in miss.items():
                assert key[0] is K.Coroutine
                assert got[key] == 0, (name, key)
                misses[key[0]] += n
        assert misses[K.Coroutine] >= 1


def non_lloc_kinds():
    return [k for k, fields in NORMALIZATION.items() if fields != ("lloc",)]


snippet = st.sampled_from([
    "val a = 1\n", "var b: Int = 2\n", "val (x, y) = p\n", "fun f(a: Int = 0) = a\n",
    "class C(val p: Int = 1) : B(), I by d\n", 'val s = "$a"\n', "object O\n",
    "class D { companion object { } }\n", "data class E(val a: Int)\n", "val l by lazy { 1 }\n",
    "fun Int.ext() = this\n", "f(a = 1)\n", "x?.y!!.z()\n", "for ((i, v) in m) {}\n",
    "if (q is String) q.length\n", "sealed class S\n", "typealias T = Int\n", "when (a) { 1 -> 2 }\n",
])


class TestProperties:
    @pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.name)
    def test_dominance_on_corpus(self, path):
        rep = detect(parse_source(path.read_bytes()))
        counts, den = rep.counts(), rep.denominators
        for kind in non_lloc_kinds():
            assert counts[kind] <= sum(getattr(den, f) for f in NORMALIZATION[kind]), kind

    @settings(max_examples=200, deadline=None)
    @given(st.lists(snippet, min_size=1, max_size=12))
    def test_dominance(self, parts):
        rep = detect(parse_source("fun host() {\n" + "".join(parts) + "}\n"))
        counts, den = rep.counts(), rep.denominators
        for kind in non_lloc_kinds():
            assert counts[kind] <= sum(getattr(den, f) for f in NORMALIZATION[kind]), kind

    @settings(max_examples=100, deadline=None)
    @given(st.lists(snippet, max_size=8), st.lists(snippet, max_size=8))
    def test_locality(self, left, right):
        a, b = "".join(left), "".join(right)
        ca, da = run(a)
        cb, db = run(b)
        cab, dab = run(a + b)
        assert cab == ca + cb
        assert dab == da + db

    def test_locality_on_corpus_files(self):
        texts = [p.read_text(encoding="utf-8") for p in CORPUS]
        whole, whole_den = run("".join(t if t.endswith("\n") else t + "\n" for t in texts))
        parts = [run(t) for t in texts]
        assert whole == sum((c for c, _ in parts), Counter())
        assert whole_den == sum((d for _, d in parts), DenominatorCounts())

    def test_deterministic(self):
        for path in CORPUS:
            data = path.read_bytes()
            first = detect(parse_source(data, path.name))
            second = detect(parse_source(data, path.name))
            assert first.instances == second.instances
            assert first.denominators == second.denominators
