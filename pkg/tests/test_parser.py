import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempograph.cypher import ast, parse, render
from tempograph.errors import InvalidRange, ParseError

from querygen import EXAMPLE3, TEMPLATES, fuzz_inputs, generated_corpus


def test_example_query_shape():
    q = parse(EXAMPLE3)
    assert isinstance(q, ast.MatchQuery)
    assert q.temporal == ast.AsOf(ast.Literal(100))
    (pattern,) = q.patterns
    assert [n.labels for n in pattern.nodes] == [("Customer",), ("Phone",), ("Transaction",)]
    assert [r.direction for r in pattern.rels] == ["both", "both"]
    assert pattern.rels[1].type == "Messages"
    assert q.where == ast.Binary("=", ast.Prop("n", "Name"), ast.Literal("Jack"))
    assert [i.expr for i in q.returns] == [ast.Prop("p", "IP"), ast.Prop("t", "Loc")]


def test_plain_match_has_no_temporal_clause():
    q = parse("MATCH (n) RETURN n")
    assert q.temporal is None and q.returns == (ast.ReturnItem(ast.Var("n")),)


def test_reversed_window_parses_but_fails_at_evaluation(db):
    q = parse("MATCH (n) FOR TT FROM 10 TO 5 RETURN n")
    assert q.temporal == ast.FromTo(ast.Literal(10), ast.Literal(5))
    with pytest.raises(InvalidRange):
        db.query(q)


def test_render_canonical_forms():
    assert "FOR TT AS OF 100" in render(parse("match (n) for tt as of 100 return n"))
    assert render(parse("MATCH (n {b: 1, a: 2}) RETURN n")) == "MATCH (n {a: 2, b: 1}) RETURN n"
    assert render(parse("MATCH (n) FOR TT FROM $a TO now() RETURN n")).endswith(
        "FOR TT FROM $a TO now() RETURN n")


@pytest.mark.parametrize("text", list(TEMPLATES.values()) + [EXAMPLE3] + generated_corpus())
def test_round_trip(text):
    stmt = parse(text)
    again = parse(render(stmt))
    assert again == stmt
    assert render(again) == render(stmt)


def test_keywords_case_insensitive_identifiers_not():
    assert parse("match (N:user) Where N.x = 1 RETURN N") == parse("MATCH (N:user) WHERE N.x = 1 return N")
    assert parse("MATCH (n) RETURN n") != parse("MATCH (N) RETURN N")


def test_string_escapes():
    q = parse(r"MATCH (n {name: 'it\'s \\ ok'}) RETURN n")
    assert q.patterns[0].nodes[0].props == (("name", ast.Literal("it's \\ ok")),)


@pytest.mark.parametrize("text", [
    "MATCH (n) FOR TT AS OF 1, (m) RETURN n",          # per-pattern qualifier
    "MATCH (n) FOR TT AS OF 1 WHERE n.x = 1 RETURN n",  # qualifier before WHERE
    "MATCH (n) FOR TT AS OF 1 SET n.x = 1",
    "MATCH (n) FOR TT BETWEEN 1 AND 2 RETURN n",
    "MATCH (n)-[*1..2]->(m) RETURN n",
    "MATCH (n) RETURN",
    "MATCH (n RETURN n",
    "RETURN 1",
    "MATCH (n) RETURN n.x = 99999999999999999999",
    "",
])
def test_rejections(text):
    with pytest.raises(ParseError):
        parse(text)


def test_diagnostic_position_and_expected():
    with pytest.raises(ParseError) as info:
        parse("MATCH (n)\nFOR TT AT 5 RETURN n")
    err = info.value
    assert (err.line, err.column) == (2, 8)
    assert set(err.expected) == {"AS", "FROM"}
    text = err.diagnostic().splitlines()
    assert text[1].strip() == "FOR TT AT 5 RETURN n" and text[2].index("^") == 2 + 7


def test_deep_nesting_is_a_parse_error():
    with pytest.raises(ParseError):
        parse("MATCH (n) WHERE " + "NOT " * 5000 + "true RETURN n")
    with pytest.raises(ParseError):
        parse("MATCH (n) WHERE " + "(" * 5000 + "true" + ")" * 5000 + " RETURN n")


def test_write_statements():
    assert isinstance(parse("CREATE (a:User {id: 1})-[:Follows]->(b:User)"), ast.CreateStmt)
    s = parse("MATCH (a) WHERE a.id = 1 SET a.x = 2, a.y = 'z'")
    assert isinstance(s, ast.SetStmt) and len(s.items) == 2
    d = parse("MATCH (a) DETACH DELETE a")
    assert isinstance(d, ast.DeleteStmt) and d.detach


def _total(text):
    try:
        parse(text)
    except ParseError:
        pass


@settings(max_examples=500, deadline=None)
@given(st.text(max_size=60))
def test_parse_is_total_on_text(text):
    _total(text)


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(list(TEMPLATES.values()) + [EXAMPLE3]), st.integers(0, 200), st.text(max_size=4))
def test_parse_is_total_on_mutations(base, pos, insert):
    pos %= len(base) + 1
    _total(base[:pos] + insert + base[pos + 1:])


def test_fuzz_sample():
    for text in fuzz_inputs(5000, seed=1, corpus=list(TEMPLATES.values())):
        _total(text)
