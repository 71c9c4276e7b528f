import pytest

from bgcosim import textdoc
from bgcosim.textdoc import TextDocError


def test_scalars_and_types():
    doc = textdoc.loads('a = 1\nb = 2.5\nc = "hi"\nd = true\ne = false\n')
    assert doc == {"a": 1, "b": 2.5, "c": "hi", "d": True, "e": False}
    assert isinstance(doc["a"], int) and isinstance(doc["b"], float)


def test_tables_and_array_tables():
    text = """
    base = 1.0
    [grid]
    bus = 1
    [[bus]]
    id = 1
    [[bus]]
    id = 2
    """
    doc = textdoc.loads(text)
    assert doc["grid"] == {"bus": 1}
    assert [b["id"] for b in doc["bus"]] == [1, 2]


def test_arrays_single_and_multiline():
    doc = textdoc.loads("xs = [1, 2, 3]\nys = [1.0,\n  2.0,\n  3.0]\n")
    assert doc["xs"] == [1, 2, 3]
    assert doc["ys"] == [1.0, 2.0, 3.0]


def test_comments_and_strings_with_hash():
    doc = textdoc.loads('a = 1  # trailing\n# full line\nb = "a # b"\n')
    assert doc == {"a": 1, "b": "a # b"}


def test_nested_section_after_array_table():
    text = '[[it]]\nx = 1\n[it.inner]\ny = 2\n[[it]]\nx = 3\n'
    doc = textdoc.loads(text)
    assert doc["it"][0] == {"x": 1, "inner": {"y": 2}}
    assert doc["it"][1] == {"x": 3}


@pytest.mark.parametrize(
    "bad",
    [
        "a =\n",
        "a = unquoted\n",
        "a = 1\na = 2\n",
        "[broken\n",
        "a = [1, 2\n",
        "just a line\n",
    ],
)
def test_malformed_documents_raise(bad):
    with pytest.raises(TextDocError):
        textdoc.loads(bad)


def test_roundtrip_is_stable():
    doc = {
        "name": "x",
        "scale": 2.5,
        "flags": [True, False],
        "grid": {"bus": 1, "note": 'say "hi"\nagain'},
        "bus": [{"id": 1, "kind": "slack"}, {"id": 2, "kind": "load"}],
    }
    text = textdoc.dumps(doc)
    assert textdoc.loads(text) == doc
    assert textdoc.dumps(textdoc.loads(text)) == text


def test_emit_is_deterministic_bytes():
    doc = {"a": 0.1, "b": [1.5, -2.25], "t": [{"k": 1}]}
    assert textdoc.dumps(doc) == textdoc.dumps(doc)
