"""
Index symbol graph for general denesting.

Vertices u_i / v_i carry the i-th symbol of the inner output string and of
the outer operand string; x_i ties the two together.  Every connected
component is renamed to one fresh symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Mapping, NamedTuple

from engine.core import EinsumNode, Expression, IndexString, IndexSymbol, max_tag
from engine.errors import LengthMismatch, NotNested, PreconditionViolated


class UnionFind:
    """Union-find with path compression over arbitrary hashable keys."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self.forest: dict = {}
        for item in items:
            self.add(item)

    def add(self, k):
        if k not in self.forest:
            self.forest[k] = k
        return k

    def find(self, k):
        self.add(k)
        root = k
        while root != self.forest[root]:
            root = self.forest[root]
        node = k
        while node != self.forest[node]:
            self.forest[node], node = root, self.forest[node]
        return root

    def union(self, a, b):
        root_a, root_b = self.find(a), self.find(b)
        if root_a != root_b:
            self.forest[root_b] = root_a
        return root_a

    def components(self) -> list[list]:
        """Components in insertion order of their first member."""
        groups: dict = {}
        for k in self.forest:
            groups.setdefault(self.find(k), []).append(k)
        return list(groups.values())


class Vertex(NamedTuple):
    kind: str       # "u", "v" or "x"
    position: int   # 0-based


@dataclass(frozen=True)
class IndexSymbolGraph:
    inner: IndexString          # I_u = (a_1, ..., a_d)
    outer: IndexString          # Î_u = (b_1, ..., b_d)
    edges: frozenset[frozenset[Vertex]] = field(repr=False)

    @property
    def d(self) -> int:
        return len(self.inner)

    def vertices(self) -> Iterator[Vertex]:
        for kind in ("u", "v", "x"):
            for i in range(self.d):
                yield Vertex(kind, i)

    def label(self, vertex: Vertex):
        if vertex.kind == "u":
            return self.inner[vertex.position]
        if vertex.kind == "v":
            return self.outer[vertex.position]
        return None

    def components(self) -> list[list[Vertex]]:
        """Connected components, ordered by their smallest x position."""
        uf = UnionFind(Vertex("x", i) for i in range(self.d))
        for vertex in self.vertices():
            uf.add(vertex)
        for edge in self.edges:
            a, b = tuple(edge)
            uf.union(a, b)
        comps = uf.components()
        return sorted(
            (sorted(c) for c in comps),
            key=lambda c: min(v.position for v in c if v.kind == "x"),
        )


def build_index_symbol_graph(outer: EinsumNode) -> IndexSymbolGraph:
    inner = outer.args[0]
    if not isinstance(inner, EinsumNode):
        raise NotNested("The first argument is not an einsum expression")
    a, b = inner.output, outer.inputs[0]
    if len(a) != len(b):
        raise LengthMismatch(
            f"Inner output string has length {len(a)} but the outer operand string has length {len(b)}"
        )
    shared = inner.format.symbols() & outer.format.symbols()
    if shared:
        raise PreconditionViolated(
            "Inner and outer expression share symbols "
            + ", ".join(map(str, sorted(shared)))
            + "; rename them apart first",
            reason="symbol-collision",
        )
    edges: set[frozenset[Vertex]] = set()
    d = len(a)
    for i in range(d):
        for j in range(i + 1, d):
            if a[i] == a[j]:
                edges.add(frozenset((Vertex("u", i), Vertex("u", j))))
            if b[i] == b[j]:
                edges.add(frozenset((Vertex("v", i), Vertex("v", j))))
        edges.add(frozenset((Vertex("u", i), Vertex("x", i))))
        edges.add(frozenset((Vertex("v", i), Vertex("x", i))))
    return IndexSymbolGraph(a, b, frozenset(edges))


# --------------------------------------------------------------------------- #
# Symbol maps
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SymbolMap:
    """ν; symbols without an entry map to themselves."""

    mapping: Mapping[IndexSymbol, IndexSymbol]

    def __call__(self, symbol: IndexSymbol) -> IndexSymbol:
        return self.mapping.get(symbol, symbol)

    def apply(self, index: IndexString) -> IndexString:
        """ν* on an index string."""
        return tuple(self(s) for s in index)

    def is_injective_on(self, scope: Iterable[IndexSymbol]) -> bool:
        scope = set(scope) | set(self.mapping)
        return len({self(s) for s in scope}) == len(scope)


class FreshSymbols:
    """Integer tags strictly above every tag already in use."""

    def __init__(self, start: int = 0):
        self.next = start

    @classmethod
    def above(cls, *exprs: Expression) -> FreshSymbols:
        return cls(max((max_tag(e) for e in exprs), default=-1) + 1)

    def __iter__(self) -> Iterator[IndexSymbol]:
        return self

    def __next__(self) -> IndexSymbol:
        symbol = IndexSymbol(self.next)
        self.next += 1
        return symbol


def derive_symbol_map(graph: IndexSymbolGraph, fresh: Iterator[IndexSymbol]) -> SymbolMap:
    mapping: dict[IndexSymbol, IndexSymbol] = {}
    for component in graph.components():
        labels = {graph.label(v) for v in component} - {None}
        if not labels:
            continue
        target = next(fresh)
        for symbol in labels:
            mapping[symbol] = target
    return SymbolMap(mapping)
