"""Text front end and symbol table."""
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenetts.g2p import PAD, UNK, Vocabulary, char_g2p, g2p, register_backend


def test_char_units_drop_spaces_and_case():
    assert char_g2p("Pato Kise") == list("patokise")


def test_punctuation_stripped():
    assert char_g2p("a, b.") == ["a", "b"]


def test_unknown_backend_named():
    with pytest.raises(KeyError, match="nope"):
        g2p("hi", backend="nope")


def test_custom_backend_roundtrip():
    register_backend("upper", lambda text: list(text.upper()))
    assert g2p("ab", backend="upper") == ["A", "B"]


class TestVocabulary:
    def test_specials_pinned(self):
        vocab = Vocabulary.build([["a", "b"], ["b", "c"]])
        assert vocab.symbols[0] == PAD
        assert vocab.symbols[1] == UNK
        assert vocab.encode([PAD, UNK]) == [0, 1]

    def test_unknown_maps_to_unk(self):
        vocab = Vocabulary.build([["a"]])
        assert vocab.encode(["a", "z"]) == [2, 1]

    def test_decode_inverts_encode_for_known(self):
        vocab = Vocabulary.build([list("abc")])
        units = list("cab")
        assert vocab.decode(vocab.encode(units)) == units

    def test_from_symbols_preserves_order(self):
        vocab = Vocabulary.build([list("xyz")])
        again = Vocabulary.from_symbols(vocab.symbols)
        assert again.symbols == vocab.symbols

    def test_duplicate_symbols_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary(symbols=[PAD, UNK, "a", "a"])

    @given(st.lists(st.text(alphabet="abcdef", min_size=1, max_size=2), max_size=20))
    def test_add_idempotent(self, units):
        vocab = Vocabulary()
        first = [vocab.add(u) for u in units]
        second = [vocab.add(u) for u in units]
        assert first == second
        assert len(set(vocab.symbols)) == len(vocab.symbols)
