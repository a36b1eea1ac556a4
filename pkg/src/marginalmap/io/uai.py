"""Reader and writer for UAI-style model, query and evidence files."""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import ParseError, StructureError
from ..jgraph import FactorModel

NETWORK_TYPES = ("MARKOV", "BAYES")


class _Tokens:
    def __init__(self, text: str):
        self.toks = text.split()
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.toks):
            raise ParseError(f"unexpected end of input while reading {what}", self.pos)
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def int(self, what: str, lo: int = 0) -> int:
        t = self.next(what)
        try:
            v = int(t)
        except ValueError:
            raise ParseError(f"expected an integer for {what}, got {t!r}", self.pos - 1) from None
        if v < lo:
            raise ParseError(f"{what} must be at least {lo}, got {v}", self.pos - 1)
        return v

    def float(self, what: str) -> float:
        t = self.next(what)
        try:
            v = float(t)
        except ValueError:
            raise ParseError(f"expected a number for {what}, got {t!r}", self.pos - 1) from None
        if not np.isfinite(v) or v < 0:
            raise ParseError(f"{what} must be a finite nonnegative number, got {t!r}", self.pos - 1)
        return v

    def done(self):
        if self.pos != len(self.toks):
            raise ParseError("trailing tokens after the last section", self.pos)


@dataclass
class UaiDocument:
    network: str
    model: FactorModel


def parse_uai_document(text: str) -> UaiDocument:
    tk = _Tokens(text)
    net = tk.next("network type")
    if net.upper() not in NETWORK_TYPES:
        raise ParseError(f"network type must be MARKOV or BAYES, got {net!r}", 0)
    n = tk.int("variable count")
    cards = [tk.int(f"cardinality of variable {v}", lo=1) for v in range(n)]
    F = tk.int("factor count")
    scopes = []
    for f in range(F):
        size = tk.int(f"scope size of factor {f}")
        scope = []
        for _ in range(size):
            v = tk.int(f"scope of factor {f}")
            if v >= n:
                raise StructureError(f"factor {f} refers to variable {v} but only {n} exist", tk.pos - 1)
            if v in scope:
                raise StructureError(f"factor {f} repeats variable {v}", tk.pos - 1)
            scope.append(v)
        scopes.append(tuple(scope))
    tables = []
    for f, scope in enumerate(scopes):
        count = tk.int(f"table size of factor {f}")
        shape = tuple(cards[v] for v in scope)
        expect = int(np.prod(shape, dtype=np.int64))
        if count != expect:
            raise StructureError(f"factor {f} lists {count} entries but its scope has {expect} states", tk.pos - 1)
        vals = np.array([tk.float(f"table of factor {f}") for _ in range(count)])
        with np.errstate(divide="ignore"):
            tables.append(np.log(vals).reshape(shape))
    tk.done()
    return UaiDocument(net.upper(), FactorModel(cards, scopes, tables))


def parse_uai(text: str) -> FactorModel:
    """Model file to a factor model with log tables; zero entries become ``-inf``."""
    return parse_uai_document(text).model


def _fmt(x: float) -> str:
    return repr(float(x))


def write_uai(fm: FactorModel, network: str = "MARKOV") -> str:
    if network.upper() not in NETWORK_TYPES:
        raise ValueError("network must be MARKOV or BAYES")
    lines = [network.upper(), str(fm.num_vars), " ".join(str(int(c)) for c in fm.cards), str(len(fm.scopes))]
    for s in fm.scopes:
        lines.append(" ".join([str(len(s))] + [str(v) for v in s]))
    for t in fm.tables:
        lines.append("")
        lines.append(str(t.size))
        lines.append(" ".join(_fmt(v) for v in np.exp(t).ravel()))
    return "\n".join(lines) + "\n"


def parse_query(text: str, num_vars: int = None) -> List[int]:
    """Count followed by 0-based max-variable indices."""
    tk = _Tokens(text)
    k = tk.int("query count")
    out = []
    for _ in range(k):
        v = tk.int("query variable")
        if num_vars is not None and v >= num_vars:
            raise StructureError(f"query variable {v} out of range", tk.pos - 1)
        if v in out:
            raise StructureError(f"query variable {v} listed twice", tk.pos - 1)
        out.append(v)
    tk.done()
    return sorted(out)


def write_query(max_vars: Sequence[int]) -> str:
    return " ".join([str(len(max_vars))] + [str(int(v)) for v in max_vars]) + "\n"


def parse_evidence(text: str, cards: Sequence[int] = None) -> List[Tuple[int, int]]:
    """Count followed by ``(variable, state)`` pairs."""
    tk = _Tokens(text)
    k = tk.int("evidence count")
    out = []
    for _ in range(k):
        v = tk.int("evidence variable")
        s = tk.int("evidence state")
        if cards is not None:
            if v >= len(cards):
                raise StructureError(f"evidence variable {v} out of range", tk.pos - 2)
            if s >= cards[v]:
                raise StructureError(f"evidence state {s} out of range for variable {v}", tk.pos - 1)
        out.append((v, s))
    tk.done()
    return out


def write_evidence(evidence: Sequence[Tuple[int, int]]) -> str:
    return " ".join([str(len(evidence))] + [f"{v} {s}" for v, s in evidence]) + "\n"


def apply_evidence(fm: FactorModel, evidence: Sequence[Tuple[int, int]]) -> FactorModel:
    """Clamp observed variables by slicing them out of every table.

    Variable indices are kept; each observed variable gets an indicator factor
    (``0`` at the observed state, ``-inf`` elsewhere) so energies are unchanged on
    configurations that agree with the evidence.
    """
    obs = {}
    for v, s in evidence:
        if not 0 <= v < fm.num_vars or not 0 <= s < fm.cards[v]:
            raise StructureError(f"evidence ({v}, {s}) out of range")
        if obs.get(v, s) != s:
            raise StructureError(f"conflicting evidence for variable {v}")
        obs[v] = s
    scopes, tables = [], []
    for s, t in zip(fm.scopes, fm.tables):
        idx = tuple(obs[v] if v in obs else slice(None) for v in s)
        rest = tuple(v for v in s if v not in obs)
        sub = np.array(t[idx], dtype=float)
        if rest:
            scopes.append(rest)
            tables.append(sub)
        elif sub.size and float(sub) != 0.0:
            scopes.append(())
            tables.append(sub.reshape(()))
    for v, s in sorted(obs.items()):
        ind = np.full(int(fm.cards[v]), -np.inf)
        ind[s] = 0.0
        scopes.append((v,))
        tables.append(ind)
    return FactorModel(fm.cards, scopes, tables, fm.is_max)
