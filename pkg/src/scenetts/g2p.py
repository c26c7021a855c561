"""Text-to-phoneme front end: lexicon lookup with character fallback."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .corpus import normalize_text

PAD = "<pad>"
UNK = "<unk>"
SPECIALS = (PAD, UNK)

_BACKENDS: dict[str, Callable[[str], list[str]]] = {}


def register_backend(name: str, fn: Callable[[str], list[str]]) -> None:
    _BACKENDS[name] = fn


def char_g2p(text: str) -> list[str]:
    """Character-level fallback: one unit per character after punctuation
    and whitespace are stripped. Casefolded so 'A' and 'a' share a unit."""
    return [c for c in normalize_text(text) if not c.isspace()]


register_backend("char", char_g2p)


def g2p(text: str, backend: str = "char") -> list[str]:
    if backend not in _BACKENDS:
        raise KeyError(f"unknown g2p backend {backend!r}; registered: {sorted(_BACKENDS)}")
    return _BACKENDS[backend](text)


@dataclass
class Vocabulary:
    """Symbol/id mapping. Ids 0 and 1 are pinned to pad and unk."""

    symbols: list[str] = field(default_factory=lambda: list(SPECIALS))
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.symbols[:2]) != SPECIALS:
            self.symbols = list(SPECIALS) + [s for s in self.symbols if s not in SPECIALS]
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")

    def __len__(self) -> int:
        return len(self.symbols)

    def add(self, symbol: str) -> int:
        if symbol not in self._index:
            self._index[symbol] = len(self.symbols)
            self.symbols.append(symbol)
        return self._index[symbol]

    def encode(self, units: Iterable[str]) -> list[int]:
        unk = self._index[UNK]
        return [self._index.get(u, unk) for u in units]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.symbols[i] for i in ids]

    @classmethod
    def build(cls, corpus_units: Iterable[Iterable[str]]) -> "Vocabulary":
        vocab = cls()
        for units in corpus_units:
            for u in units:
                vocab.add(u)
        return vocab

    def to_dict(self) -> Mapping[str, int]:
        return dict(self._index)

    @classmethod
    def from_symbols(cls, symbols: Iterable[str]) -> "Vocabulary":
        return cls(symbols=list(symbols))
