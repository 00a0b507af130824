"""Groupoid-graded vector spaces and the operators acting on them.

A graded space assigns a dimension to each arrow of a carrier (a groupoid or a
connecting set). Tensor products are spaces of composable paths; an operator is
stored as a table of small dense blocks keyed by (input path, output path) with
equal endpoints. Matrices are always indexed [output, input], and the basis of a
fiber is ordered by path (tuple of arrow ids) and then by component index.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from . import config
from .exceptions import GradingError, NotInvertible, SchemaError, UnsupportedDimension
from .models import BlockOperatorSchema, BlockSchema, TransferKind

logger = logging.getLogger(__name__)

Path = Tuple[str, ...]
Key = Tuple[Path, Path]


class GradedSpace:
    """Finite dimensions attached to the arrows of a carrier."""

    def __init__(self, carrier, dims: Dict[str, int], name: str):
        self.carrier = carrier
        self.name = name
        self.dims = {a: int(d) for a, d in dims.items() if int(d) > 0}
        for arrow_id, d in dims.items():
            if int(d) < 0:
                raise GradingError(f"negative dimension on {arrow_id!r} in {name}")
            carrier.source(arrow_id)
        self._support: Dict[str, List[str]] = defaultdict(list)
        for arrow_id in sorted(self.dims):
            self._support[carrier.source(arrow_id)].append(arrow_id)

    def __repr__(self):
        return f"GradedSpace({self.name!r}, {len(self.dims)} components)"

    def __eq__(self, other):
        return isinstance(other, GradedSpace) and self.name == other.name and self.dims == other.dims

    def __hash__(self):
        return hash(self.name)

    @classmethod
    def uniform(cls, carrier, arrows: Iterable[str], name: str, dim: int = 1) -> "GradedSpace":
        return cls(carrier, {a: dim for a in arrows}, name)

    def dim(self, arrow_id: str) -> int:
        return self.dims.get(arrow_id, 0)

    def source(self, arrow_id: str) -> str:
        return self.carrier.source(arrow_id)

    def target(self, arrow_id: str) -> str:
        return self.carrier.target(arrow_id)

    def support_from(self, obj: str) -> List[str]:
        return self._support.get(obj, [])

    def start_objects(self) -> List[str]:
        return sorted(self._support)


def graded_tensor(V: GradedSpace, W: GradedSpace) -> Dict[Tuple[str, str], List[Path]]:
    """Summands of V (x) W grouped by (source, target) of the composite path."""
    if V.carrier is not W.carrier:
        raise GradingError(f"{V.name} and {W.name} are graded by different groupoids")
    summands: Dict[Tuple[str, str], List[Path]] = defaultdict(list)
    for obj in V.start_objects():
        for path in enumerate_paths([V, W], obj):
            summands[(obj, W.target(path[-1]))].append(path)
    return dict(summands)


def enumerate_paths(spaces: Sequence[GradedSpace], start: str) -> List[Path]:
    """All composable paths through ``spaces`` starting at ``start``, sorted."""
    frontier: List[Tuple[Path, str]] = [((), start)]
    for space in spaces:
        frontier = [
            (path + (a,), space.target(a))
            for path, obj in frontier
            for a in space.support_from(obj)
        ]
    return sorted(path for path, _ in frontier)


def path_dim(spaces: Sequence[GradedSpace], path: Path) -> int:
    d = 1
    for space, arrow_id in zip(spaces, path):
        d *= space.dim(arrow_id)
    return d


def path_end(spaces: Sequence[GradedSpace], path: Path, start: Optional[str] = None) -> str:
    if not path:
        return start
    return spaces[len(path) - 1].target(path[-1])


def path_start(spaces: Sequence[GradedSpace], path: Path) -> str:
    return spaces[0].source(path[0])


@dataclass
class Fiber:
    """Ordered basis of the source fiber of a tensor product at one base object."""

    spaces: List[GradedSpace]
    base: str
    paths: List[Path]
    offsets: Dict[Path, int] = field(default_factory=dict)
    dims: Dict[Path, int] = field(default_factory=dict)
    size: int = 0

    def slot(self, path: Path) -> slice:
        start = self.offsets[path]
        return slice(start, start + self.dims[path])


def fiber_basis(spaces: Sequence[GradedSpace], base: str) -> Fiber:
    spaces = list(spaces)
    fiber = Fiber(spaces, base, enumerate_paths(spaces, base))
    offset = 0
    for path in fiber.paths:
        fiber.offsets[path] = offset
        fiber.dims[path] = path_dim(spaces, path)
        offset += fiber.dims[path]
    fiber.size = offset
    return fiber


def _names(spaces: Sequence[GradedSpace]) -> List[str]:
    return [s.name for s in spaces]


class BlockOperator:
    """A graded linear map stored blockwise by (input path, output path)."""

    def __init__(
        self,
        domain: Sequence[GradedSpace],
        codomain: Sequence[GradedSpace],
        blocks: Dict[Key, np.ndarray],
        validate: bool = True,
    ):
        self.domain = list(domain)
        self.codomain = list(codomain)
        self.blocks: Dict[Key, np.ndarray] = {
            key: np.asarray(mat, dtype=complex) for key, mat in blocks.items()
        }
        self._by_input: Optional[Dict[Path, List[Tuple[Path, np.ndarray]]]] = None
        if validate:
            for key, mat in self.blocks.items():
                self._check_key(key, mat)

    def __repr__(self):
        return f"BlockOperator({_names(self.domain)} -> {_names(self.codomain)}, {len(self.blocks)} blocks)"

    def _check_key(self, key: Key, mat: np.ndarray):
        inp, out = key
        if len(inp) != len(self.domain) or len(out) != len(self.codomain):
            raise GradingError(f"block {key} has the wrong number of legs")
        for spaces, path in ((self.domain, inp), (self.codomain, out)):
            for i in range(len(path) - 1):
                if spaces[i].target(path[i]) != spaces[i + 1].source(path[i + 1]):
                    raise GradingError(f"block {key}: path {path} is not composable")
        if path_start(self.domain, inp) != path_start(self.codomain, out):
            raise GradingError(f"block {key}: input and output paths start at different objects")
        if path_end(self.domain, inp) != path_end(self.codomain, out):
            raise GradingError(f"block {key}: input and output paths end at different objects")
        expected = (path_dim(self.codomain, out), path_dim(self.domain, inp))
        if mat.shape != expected:
            raise GradingError(f"block {key} has shape {mat.shape}, expected {expected}")

    @property
    def legs(self) -> int:
        return len(self.domain)

    def is_endomorphism(self) -> bool:
        return _names(self.domain) == _names(self.codomain)

    def get(self, inp: Path, out: Path) -> Optional[np.ndarray]:
        return self.blocks.get((tuple(inp), tuple(out)))

    def outputs(self, inp: Path) -> List[Tuple[Path, np.ndarray]]:
        if self._by_input is None:
            table: Dict[Path, List[Tuple[Path, np.ndarray]]] = defaultdict(list)
            for (i, o), mat in sorted(self.blocks.items(), key=lambda item: item[0]):
                table[i].append((o, mat))
            self._by_input = dict(table)
        return self._by_input.get(tuple(inp), [])

    def scalar(self, inp: Path, out: Path) -> complex:
        """Coefficient of a one-dimensional block (0 when absent)."""
        mat = self.get(inp, out)
        if mat is None:
            return 0j
        if mat.shape != (1, 1):
            raise GradingError(f"block {(inp, out)} is not one-dimensional")
        return complex(mat[0, 0])

    def is_finite(self) -> bool:
        return all(np.isfinite(mat).all() for mat in self.blocks.values())

    def max_abs(self) -> float:
        return max((float(np.abs(m).max()) for m in self.blocks.values() if m.size), default=0.0)

    def pruned(self, tol: float = 0.0) -> "BlockOperator":
        kept = {k: m for k, m in self.blocks.items() if m.size and np.abs(m).max() > tol}
        return BlockOperator(self.domain, self.codomain, kept, validate=False)

    @classmethod
    def from_fiber_matrix(
        cls,
        matrix: np.ndarray,
        domain: Sequence[GradedSpace],
        codomain: Sequence[GradedSpace],
        base: str,
        tol: float = 0.0,
    ) -> "BlockOperator":
        return cls.from_fiber_matrices({base: matrix}, domain, codomain, tol=tol)

    @classmethod
    def from_fiber_matrices(
        cls,
        matrices: Dict[str, np.ndarray],
        domain: Sequence[GradedSpace],
        codomain: Sequence[GradedSpace],
        tol: float = 0.0,
    ) -> "BlockOperator":
        blocks: Dict[Key, np.ndarray] = {}
        for base, matrix in matrices.items():
            matrix = np.asarray(matrix, dtype=complex)
            fin, fout = fiber_basis(domain, base), fiber_basis(codomain, base)
            if matrix.shape != (fout.size, fin.size):
                raise GradingError(f"fiber matrix at {base!r} has shape {matrix.shape}, expected {(fout.size, fin.size)}")
            for p in fin.paths:
                for q in fout.paths:
                    if path_end(domain, p) != path_end(codomain, q):
                        continue
                    sub = matrix[fout.slot(q), fin.slot(p)]
                    if sub.size and np.abs(sub).max() > tol:
                        blocks[(p, q)] = sub.copy()
        return cls(domain, codomain, blocks)

    def to_schema(self) -> BlockOperatorSchema:
        return BlockOperatorSchema(
            domain=_names(self.domain),
            codomain=_names(self.codomain),
            blocks=[
                BlockSchema(
                    inp=list(inp),
                    out=list(out),
                    mat=[[(float(v.real), float(v.imag)) for v in row] for row in mat],
                )
                for (inp, out), mat in sorted(self.blocks.items())
            ],
        )

    @classmethod
    def from_schema(cls, schema: BlockOperatorSchema, spaces: Dict[str, GradedSpace]) -> "BlockOperator":
        try:
            domain = [spaces[n] for n in schema.domain]
            codomain = [spaces[n] for n in schema.codomain]
        except KeyError as e:
            raise SchemaError(f"domain/codomain: unknown space {e}") from None
        blocks: Dict[Key, np.ndarray] = {}
        op = cls(domain, codomain, {}, validate=False)
        for i, block in enumerate(schema.blocks):
            key = (tuple(block.inp), tuple(block.out))
            try:
                rows = [[complex(re, im) for re, im in row] for row in block.mat]
                width = len(rows[0]) if rows else 0
                if any(len(row) != width for row in rows):
                    raise SchemaError("ragged matrix")
                mat = np.array(rows, dtype=complex).reshape(len(rows), width)
                op._check_key(key, mat)
            except Exception as e:
                raise SchemaError(f"blocks[{i}]: {e}") from None
            blocks[key] = mat
        return cls(domain, codomain, blocks, validate=False)


def identity_block(spaces: Sequence[GradedSpace]) -> BlockOperator:
    spaces = list(spaces)
    blocks = {}
    for obj in spaces[0].start_objects():
        for path in enumerate_paths(spaces, obj):
            blocks[(path, path)] = np.eye(path_dim(spaces, path), dtype=complex)
    return BlockOperator(spaces, spaces, blocks, validate=False)


def compose_blocks(F: BlockOperator, G: BlockOperator) -> BlockOperator:
    """F after G."""
    if _names(G.codomain) != _names(F.domain):
        raise GradingError(f"cannot compose: {_names(G.codomain)} != {_names(F.domain)}")
    blocks: Dict[Key, np.ndarray] = {}
    for (p, q), g in G.blocks.items():
        for r, f in F.outputs(q):
            key = (p, r)
            prod = f @ g
            blocks[key] = blocks[key] + prod if key in blocks else prod
    return BlockOperator(G.domain, F.codomain, blocks, validate=False)


def tensor_blocks(F: BlockOperator, G: BlockOperator) -> BlockOperator:
    """F (x) G on concatenated legs."""
    blocks: Dict[Key, np.ndarray] = {}
    starts: Dict[str, List[Tuple[Key, np.ndarray]]] = defaultdict(list)
    for key, g in G.blocks.items():
        starts[path_start(G.domain, key[0])].append((key, g))
    for (pf, qf), f in F.blocks.items():
        for (pg, qg), g in starts.get(path_end(F.domain, pf), []):
            blocks[(pf + pg, qf + qg)] = np.kron(f, g)
    return BlockOperator(F.domain + G.domain, F.codomain + G.codomain, blocks, validate=False)


def add_blocks(F: BlockOperator, G: BlockOperator, scale: complex = 1.0) -> BlockOperator:
    """F + scale * G."""
    blocks = {k: m.copy() for k, m in F.blocks.items()}
    for key, g in G.blocks.items():
        blocks[key] = blocks[key] + scale * g if key in blocks else scale * g
    return BlockOperator(F.domain, F.codomain, blocks, validate=False)


def max_difference(F: BlockOperator, G: BlockOperator) -> float:
    worst = 0.0
    for key in set(F.blocks) | set(G.blocks):
        f, g = F.blocks.get(key), G.blocks.get(key)
        if f is None:
            diff = np.abs(g)
        elif g is None:
            diff = np.abs(f)
        else:
            diff = np.abs(f - g)
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst


def fiber_matrix(
    op: BlockOperator,
    legs: Optional[Sequence[GradedSpace]] = None,
    offset: int = 0,
    base: Optional[str] = None,
) -> np.ndarray:
    """Dense matrix of ``op`` acting on legs[offset:offset+k] of the fiber at ``base``.

    The input basis is the fiber of ``legs``; the output basis is the fiber of
    ``legs`` with the acted-on legs replaced by the codomain of ``op``.
    """
    legs = list(op.domain if legs is None else legs)
    k = op.legs
    if _names(legs[offset:offset + k]) != _names(op.domain):
        raise GradingError(f"operator domain {_names(op.domain)} does not match legs {_names(legs)} at {offset}")
    out_legs = legs[:offset] + op.codomain + legs[offset + k:]
    fin, fout = fiber_basis(legs, base), fiber_basis(out_legs, base)
    M = np.zeros((fout.size, fin.size), dtype=complex)
    for p in fin.paths:
        pre, mid, post = p[:offset], p[offset:offset + k], p[offset + k:]
        d_pre = path_dim(legs[:offset], pre)
        d_post = path_dim(legs[offset + k:], post)
        for q_mid, blk in op.outputs(mid):
            q = pre + q_mid + post
            if q not in fout.offsets:
                raise GradingError(f"output path {q} is missing from the fiber at {base!r}")
            local = blk
            if d_pre > 1:
                local = np.kron(np.eye(d_pre), local)
            if d_post > 1:
                local = np.kron(local, np.eye(d_post))
            M[fout.slot(q), fin.slot(p)] += local
    return M


def restrict_source_fiber(F: BlockOperator, base: str) -> np.ndarray:
    if not F.is_endomorphism():
        raise GradingError("source-fiber restriction needs an endomorphism")
    fiber = fiber_basis(F.domain, base)
    if fiber.size == 0:
        raise GradingError(f"empty source fiber at {base!r}")
    return fiber_matrix(F, F.domain, 0, base)


# Transfer operators


Entries = Dict[Tuple[str, str], Dict[Key, np.ndarray]]


class TransferOperator:
    """Arrow-pair-graded family of hom blocks.

    Every entry is keyed by (incoming connecting arrow, outgoing connecting
    arrow) and holds blocks (input path, output path) -> matrix. For a forward
    square operator the incoming arrow is the bottom edge and the blocks map
    left-groupoid paths to right-groupoid paths; a backward operator is keyed
    (top, bottom) and maps right paths to left paths. Triangle operators arise
    from composites and conjugations.
    """

    def __init__(
        self,
        kind: TransferKind,
        entries: Entries,
        connecting,
        in_spaces: Sequence[GradedSpace],
        out_spaces: Sequence[GradedSpace],
        validate: bool = True,
    ):
        self.kind = TransferKind(kind)
        self.connecting = connecting
        self.in_spaces = list(in_spaces)
        self.out_spaces = list(out_spaces)
        self.entries: Entries = {
            key: {k: np.asarray(m, dtype=complex) for k, m in blocks.items()}
            for key, blocks in entries.items()
        }
        self._by_grade = None
        if validate and self.kind != TransferKind.TRIANGLE:
            for key, blocks in self.entries.items():
                for bkey, mat in blocks.items():
                    self._check_block(key, bkey, mat)

    def __repr__(self):
        count = sum(len(b) for b in self.entries.values())
        return f"TransferOperator({self.kind.value}, {len(self.entries)} entries, {count} blocks)"

    def top(self, key: Tuple[str, str]) -> str:
        return key[1] if self.kind == TransferKind.FORWARD else key[0]

    def bottom(self, key: Tuple[str, str]) -> str:
        return key[0] if self.kind == TransferKind.FORWARD else key[1]

    def _key_for(self, top: str, bottom: str) -> Tuple[str, str]:
        return (bottom, top) if self.kind == TransferKind.FORWARD else (top, bottom)

    def _check_block(self, key, bkey, mat):
        cset = self.connecting
        top, bottom = self.top(key), self.bottom(key)
        inp, out = bkey
        if self.kind == TransferKind.FORWARD:
            left_path, right_path = inp, out
            left_spaces, right_spaces = self.in_spaces, self.out_spaces
        else:
            left_path, right_path = out, inp
            left_spaces, right_spaces = self.out_spaces, self.in_spaces
        ok = (
            path_start(left_spaces, left_path) == cset.source(top)
            and path_end(left_spaces, left_path) == cset.source(bottom)
            and path_start(right_spaces, right_path) == cset.target(top)
            and path_end(right_spaces, right_path) == cset.target(bottom)
        )
        if not ok:
            raise GradingError(f"transfer block {key} {bkey} does not close a square")
        expected = (path_dim(self.out_spaces, out), path_dim(self.in_spaces, inp))
        if mat.shape != expected:
            raise GradingError(f"transfer block {key} {bkey} has shape {mat.shape}, expected {expected}")

    def blocks(self, key: Tuple[str, str]) -> Dict[Key, np.ndarray]:
        return self.entries.get(key, {})

    def scalar(self, key: Tuple[str, str], inp: Path, out: Path) -> complex:
        mat = self.entries.get(key, {}).get((tuple(inp), tuple(out)))
        return 0j if mat is None else complex(mat[0, 0])

    def grade(self, key: Tuple[str, str]) -> Tuple[str, str]:
        return (self.connecting.source(self.top(key)), self.connecting.target(self.bottom(key)))

    def _path_then_arrow(self, spaces, start: str, end: str) -> List[Tuple[str, Path]]:
        out = []
        for path in enumerate_paths(spaces, start):
            for beta in self.connecting.arrows_from(path_end(spaces, path, start)):
                if self.connecting.target(beta) == end:
                    out.append((beta, path))
        return out

    def _arrow_then_path(self, spaces, start: str, end: str) -> List[Tuple[str, Path]]:
        out = []
        for beta in self.connecting.arrows_from(start):
            for path in enumerate_paths(spaces, self.connecting.target(beta)):
                if path_end(spaces, path) == end:
                    out.append((beta, path))
        return out

    def grade_indices(self, grade: Tuple[str, str]) -> Tuple[List[Tuple[str, Path]], List[Tuple[str, Path]]]:
        """Domain and codomain index sets (arrow, path) of one grade."""
        a1, e2 = grade
        if self.kind == TransferKind.FORWARD:
            return (
                self._path_then_arrow(self.in_spaces, a1, e2),
                self._arrow_then_path(self.out_spaces, a1, e2),
            )
        if self.kind == TransferKind.BACKWARD:
            return (
                self._arrow_then_path(self.in_spaces, a1, e2),
                self._path_then_arrow(self.out_spaces, a1, e2),
            )
        raise GradingError("triangle operators carry no square grading")

    def grades(self) -> List[Tuple[str, str]]:
        return [(a, e) for a in self.connecting.left.objects for e in self.connecting.right.objects]

    def grade_matrix(self, grade):
        """Dense matrix of one grade with its (arrow, path) row and column indices."""
        if self._by_grade is None:
            grouped = defaultdict(list)
            for key, blocks in self.entries.items():
                grouped[self.grade(key)].append((key, blocks))
            self._by_grade = dict(grouped)
        dom, cod = self.grade_indices(grade)
        col_off, row_off = _offsets(dom, self.in_spaces), _offsets(cod, self.out_spaces)
        F = np.zeros((row_off[1], col_off[1]), dtype=complex)
        for key, blocks in self._by_grade.get(grade, []):
            for (inp, out), mat in blocks.items():
                r = row_off[0][(key[1], out)]
                c = col_off[0][(key[0], inp)]
                F[r:r + mat.shape[0], c:c + mat.shape[1]] += mat
        return F, dom, cod

    def _inverse(self, need_left: bool, need_right: bool, cutoff: float) -> "TransferOperator":
        entries: Entries = defaultdict(dict)
        for grade in self.grades():
            F, dom, cod = self.grade_matrix(grade)
            if not dom and not cod:
                continue
            if F.size:
                s = linalg.svdvals(F)
                rank = int((s > cutoff * s.max()).sum()) if s.size and s.max() > 0 else 0
            else:
                rank = 0
            if need_left and rank < F.shape[1]:
                raise NotInvertible("not left invertible", grade)
            if need_right and rank < F.shape[0]:
                raise NotInvertible("not right invertible", grade)
            G = linalg.pinv(F, rtol=cutoff) if F.size else np.zeros((F.shape[1], F.shape[0]), dtype=complex)
            row_off, col_off = _offsets(dom, self.in_spaces)[0], _offsets(cod, self.out_spaces)[0]
            scale = max(1.0, float(np.abs(G).max()) if G.size else 1.0)
            for beta_out, q in cod:
                c = col_off[(beta_out, q)]
                dq = path_dim(self.out_spaces, q)
                for beta_in, p in dom:
                    r = row_off[(beta_in, p)]
                    dp = path_dim(self.in_spaces, p)
                    blk = G[r:r + dp, c:c + dq]
                    if blk.size and np.abs(blk).max() > 1e-14 * scale:
                        entries[(beta_out, beta_in)][(q, p)] = blk.copy()
        kind = TransferKind.BACKWARD if self.kind == TransferKind.FORWARD else TransferKind.FORWARD
        return TransferOperator(kind, dict(entries), self.connecting, self.out_spaces, self.in_spaces)

    def left_inverse(self, cutoff: float = config.INVERSE_CUTOFF) -> "TransferOperator":
        return self._inverse(True, False, cutoff)

    def right_inverse(self, cutoff: float = config.INVERSE_CUTOFF) -> "TransferOperator":
        return self._inverse(False, True, cutoff)

    def inverse(self, cutoff: float = config.INVERSE_CUTOFF) -> "TransferOperator":
        return self._inverse(True, True, cutoff)

    def is_invertible(self, cutoff: float = config.INVERSE_CUTOFF) -> bool:
        try:
            self.inverse(cutoff)
        except NotInvertible:
            return False
        return True


def _offsets(indices: List[Tuple[str, Path]], spaces) -> Tuple[Dict[Tuple[str, Path], int], int]:
    table, offset = {}, 0
    for idx in indices:
        table[idx] = offset
        offset += path_dim(spaces, idx[1])
    return table, offset


def _accumulate(entries: Entries, key, bkey, mat):
    blocks = entries.setdefault(key, {})
    blocks[bkey] = blocks[bkey] + mat if bkey in blocks else mat


def transfer_compose(outer: TransferOperator, inner: TransferOperator) -> TransferOperator:
    """(outer *o inner)(b1, b2) = sum_b outer(b, b2) inner(b1, b)."""
    if _names(inner.out_spaces) != _names(outer.in_spaces):
        raise GradingError(f"cannot compose transfer operators: {_names(inner.out_spaces)} != {_names(outer.in_spaces)}")
    if inner.kind == TransferKind.TRIANGLE:
        kind = outer.kind
    elif outer.kind == TransferKind.TRIANGLE:
        kind = inner.kind
    elif inner.kind != outer.kind:
        kind = TransferKind.TRIANGLE
    else:
        raise GradingError(f"two {inner.kind.value} operators do not compose")

    by_in: Dict[str, List[Tuple[str, Dict[Path, List[Tuple[Path, np.ndarray]]]]]] = defaultdict(list)
    for (b, b2), blocks in outer.entries.items():
        table: Dict[Path, List[Tuple[Path, np.ndarray]]] = defaultdict(list)
        for (q, r), mat in blocks.items():
            table[q].append((r, mat))
        by_in[b].append((b2, table))

    entries: Entries = {}
    for (b1, b), blocks in inner.entries.items():
        for b2, table in by_in.get(b, []):
            for (p, q), m_in in blocks.items():
                for r, m_out in table.get(q, []):
                    _accumulate(entries, (b1, b2), (p, r), m_out @ m_in)
    return TransferOperator(kind, entries, inner.connecting, inner.in_spaces, outer.out_spaces, validate=False)


def transfer_fuse(f: TransferOperator, g: TransferOperator) -> TransferOperator:
    """Fusion product: f is the upper square, g the lower one sharing f's bottom edge.

    Forward: (f *x g)(b1, b2) = sum_b f(b, b2) (x) g(b1, b).
    Backward: (f *x g)(b1, b2) = sum_b f(b1, b) (x) g(b, b2).
    """
    if f.kind != g.kind or f.kind == TransferKind.TRIANGLE:
        raise GradingError(f"cannot fuse {f.kind.value} with {g.kind.value}")
    by_top: Dict[str, List[Tuple[Tuple[str, str], Dict[Key, np.ndarray]]]] = defaultdict(list)
    for key, blocks in g.entries.items():
        by_top[g.top(key)].append((key, blocks))

    entries: Entries = {}
    for fkey, fblocks in f.entries.items():
        for gkey, gblocks in by_top.get(f.bottom(fkey), []):
            key = f._key_for(f.top(fkey), g.bottom(gkey))
            for (pf, qf), mf in fblocks.items():
                for (pg, qg), mg in gblocks.items():
                    _accumulate(entries, key, (pf + pg, qf + qg), np.kron(mf, mg))
    return TransferOperator(
        f.kind, entries, f.connecting, f.in_spaces + g.in_spaces, f.out_spaces + g.out_spaces, validate=False
    )


def fuse_power(f: TransferOperator, n: int) -> TransferOperator:
    if n < 1:
        raise GradingError("fusion power needs n >= 1")
    result = f
    for _ in range(n - 1):
        result = transfer_fuse(result, f)
    return result


def transfer_apply(S: BlockOperator, g: TransferOperator) -> TransferOperator:
    """Post-compose every block of g with the graded operator S."""
    if _names(S.domain) != _names(g.out_spaces):
        raise GradingError(f"operator on {_names(S.domain)} cannot act on {_names(g.out_spaces)}")
    entries: Entries = {}
    for key, blocks in g.entries.items():
        for (p, q), mat in blocks.items():
            for r, s in S.outputs(q):
                _accumulate(entries, key, (p, r), s @ mat)
    return TransferOperator(g.kind, entries, g.connecting, g.in_spaces, S.codomain, validate=False)


def transfer_conjugate(f: TransferOperator, S: BlockOperator, g: TransferOperator) -> TransferOperator:
    """Triangle product sum_b f(b, b2) S g(b1, b) for f forward and g backward."""
    if f.kind != TransferKind.FORWARD or g.kind != TransferKind.BACKWARD:
        raise GradingError("conjugation needs a forward outer and a backward inner operator")
    return transfer_compose(f, transfer_apply(S, g))


def transfer_identity_residual(t: TransferOperator, support: Iterable[Tuple[str, Path]]) -> float:
    """Distance of t from delta_{b1 b2} id on the given (arrow, path) support."""
    worst = 0.0
    for (b1, b2), blocks in t.entries.items():
        for (p, q), mat in blocks.items():
            target = np.eye(mat.shape[0], mat.shape[1]) if (b1 == b2 and p == q) else 0.0
            if mat.size:
                worst = max(worst, float(np.abs(mat - target).max()))
    for beta, path in support:
        if (path, path) not in t.entries.get((beta, beta), {}):
            worst = max(worst, 1.0)
    return worst


def triangle_down(tri: TransferOperator, system) -> BlockOperator:
    """Read the (b, b) entries at the system's chosen arrows as one graded operator."""
    if system.connecting is not tri.connecting:
        raise GradingError("connecting system belongs to a different connecting set")
    blocks: Dict[Key, np.ndarray] = {}
    for obj, beta in system.assignment.items():
        for (p, q), mat in tri.entries.get((beta, beta), {}).items():
            if path_start(tri.in_spaces, p) == obj:
                blocks[(p, q)] = mat
    return BlockOperator(tri.in_spaces, tri.out_spaces, blocks)


def triangle_up(S: BlockOperator, connecting) -> TransferOperator:
    """Diagonal triangle operator with (b, b) = blocks of S starting at t(b)."""
    entries: Entries = {}
    for beta in sorted(connecting.arrows):
        start = connecting.target(beta)
        blocks = {(p, q): m for (p, q), m in S.blocks.items() if path_start(S.domain, p) == start}
        if blocks:
            entries[(beta, beta)] = blocks
    return TransferOperator(TransferKind.TRIANGLE, entries, connecting, S.domain, S.codomain)


def matrix_element(J: BlockOperator, middle: GradedSpace, shape: str = "square") -> TransferOperator:
    """Matrix element of J against the distinguished vectors v_b (first basis vectors) of ``middle``.

    shape="square": J in Hom(V1.. (x) Vpi, Vpi (x) V2..) gives a forward operator.
    shape="triangle": J in Hom(V1.. (x) Vpi, V1.. (x) Vpi) gives a triangle operator.
    """
    entries: Entries = {}
    connecting = middle.carrier
    if shape == "square":
        if J.domain[-1].name != middle.name or J.codomain[0].name != middle.name:
            raise GradingError("square matrix elements need the middle leg last in and first out")
        for (inp, out), mat in J.blocks.items():
            b_in, b_out = inp[-1], out[0]
            d_in, d_out = middle.dim(b_in), middle.dim(b_out)
            n_rows = mat.shape[0] // d_out
            sub = mat[:n_rows, ::d_in]
            entries.setdefault((b_in, b_out), {})[(inp[:-1], out[1:])] = sub
        return TransferOperator(TransferKind.FORWARD, entries, connecting, J.domain[:-1], J.codomain[1:])
    if shape == "triangle":
        for (inp, out), mat in J.blocks.items():
            b_in, b_out = inp[-1], out[-1]
            d_in, d_out = middle.dim(b_in), middle.dim(b_out)
            sub = mat[::d_out, ::d_in]
            entries.setdefault((b_in, b_out), {})[(inp[:-1], out[:-1])] = sub
        return TransferOperator(TransferKind.TRIANGLE, entries, connecting, J.domain[:-1], J.codomain[:-1])
    raise GradingError(f"unknown matrix element shape {shape!r}")


# Convolution algebras


Coefficient = Dict[Tuple[Path, Path], np.ndarray]


class ConvolutionElement:
    """A finitely supported map arrow -> coefficient block of a graded algebra or module."""

    def __init__(self, carrier, entries: Dict[str, Coefficient], tag: str = "hom"):
        self.carrier = carrier
        self.tag = tag
        self.entries = {
            arrow: {k: np.asarray(m, dtype=complex) for k, m in coeff.items()}
            for arrow, coeff in entries.items()
        }

    def __repr__(self):
        return f"ConvolutionElement({self.tag}, support={sorted(self.entries)})"

    @classmethod
    def unit(cls, groupoid, tag: str = "scalar") -> "ConvolutionElement":
        return cls(
            groupoid,
            {groupoid.identity(o): {((), ()): np.eye(1, dtype=complex)} for o in groupoid.objects},
            tag=tag,
        )

    def difference(self, other: "ConvolutionElement") -> float:
        worst = 0.0
        for arrow in set(self.entries) | set(other.entries):
            a, b = self.entries.get(arrow, {}), other.entries.get(arrow, {})
            for key in set(a) | set(b):
                x = a.get(key, 0)
                y = b.get(key, 0)
                diff = np.abs(np.asarray(x) - np.asarray(y))
                if diff.size:
                    worst = max(worst, float(diff.max()))
        return worst


def _coefficient_product(first: Coefficient, second: Coefficient) -> Coefficient:
    """first applied after second."""
    out: Coefficient = {}
    by_in: Dict[Path, List[Tuple[Path, np.ndarray]]] = defaultdict(list)
    for (x, y), m in first.items():
        by_in[x].append((y, m))
    for (w, x), m2 in second.items():
        for y, m1 in by_in.get(x, []):
            key = (w, y)
            out[key] = out[key] + m1 @ m2 if key in out else m1 @ m2
    return out


def convolve(f: ConvolutionElement, g: ConvolutionElement) -> ConvolutionElement:
    """(g * f)(a) = sum over materialized factorizations a2 o a1 = a of f(a2) g(a1)."""
    if f.carrier is not g.carrier:
        raise GradingError("convolution factors live on different groupoids")
    groupoid = f.carrier
    result: Dict[str, Coefficient] = {}
    for a1, coeff1 in g.entries.items():
        for a2, coeff2 in f.entries.items():
            if groupoid.target(a1) != groupoid.source(a2):
                continue
            a = groupoid.try_compose(a1, a2)
            if a is None:
                continue
            prod = _coefficient_product(coeff2, coeff1)
            bucket = result.setdefault(a, {})
            for key, m in prod.items():
                bucket[key] = bucket[key] + m if key in bucket else m
    return ConvolutionElement(groupoid, result, tag=f.tag)


def module_act(
    f: ConvolutionElement,
    l: ConvolutionElement,
    action: Callable[[str, str], Optional[str]],
    carrier=None,
) -> ConvolutionElement:
    """(f * l)(b) = sum_{a' * b' = b} l(b') f(a').

    ``carrier`` labels the result when the action lands outside l's carrier.
    """
    result: Dict[str, Coefficient] = {}
    for a, coeff_f in f.entries.items():
        for b, coeff_l in l.entries.items():
            target = action(a, b)
            if target is None:
                continue
            prod = _coefficient_product(coeff_l, coeff_f)
            bucket = result.setdefault(target, {})
            for key, m in prod.items():
                bucket[key] = bucket[key] + m if key in bucket else m
    return ConvolutionElement(carrier or l.carrier, result, tag=l.tag)


def partial_trace(C: BlockOperator, middle: Optional[GradedSpace] = None, leg: str = "upper") -> ConvolutionElement:
    """Trace over the middle leg of C in Hom(V1 (x) Vpi, Vpi (x) V2).

    ``leg="upper"`` traces the second input against the first output;
    ``leg="lower"`` traces the first input against the second output.
    """
    if C.legs != 2 or len(C.codomain) != 2:
        raise GradingError("partial trace needs a two-leg operator")
    entries: Dict[str, Coefficient] = {}
    for (inp, out), mat in C.blocks.items():
        if leg == "upper":
            beta, alpha, gamma = inp[1], inp[0], out[1]
            if out[0] != beta:
                continue
            space = middle or C.domain[1]
            db = space.dim(beta)
            da, dg = C.domain[0].dim(alpha), C.codomain[1].dim(gamma)
            T = np.einsum("igai->ga", mat.reshape(db, dg, da, db))
        elif leg == "lower":
            beta, alpha, gamma = inp[0], inp[1], out[0]
            if out[1] != beta:
                continue
            space = middle or C.domain[0]
            db = space.dim(beta)
            da, dg = C.domain[1].dim(alpha), C.codomain[0].dim(gamma)
            T = np.einsum("giia->ga", mat.reshape(dg, db, db, da))
        else:
            raise GradingError(f"unknown trace leg {leg!r}")
        bucket = entries.setdefault(beta, {})
        key = ((alpha,), (gamma,))
        bucket[key] = bucket[key] + T if key in bucket else T
    carrier = (middle or (C.domain[1] if leg == "upper" else C.domain[0])).carrier
    return ConvolutionElement(carrier, entries, tag=f"trace-{leg}")


# Periodic rows


@dataclass
class ClosedPathMatrix:
    """Dense matrix between closed-path bases of two graded spaces."""

    row_paths: List[Path]
    col_paths: List[Path]
    row_offsets: Dict[Path, int]
    col_offsets: Dict[Path, int]
    matrix: np.ndarray

    def __matmul__(self, other: "ClosedPathMatrix") -> "ClosedPathMatrix":
        if self.col_paths != other.row_paths:
            raise GradingError("closed-path bases do not match")
        return ClosedPathMatrix(
            self.row_paths, other.col_paths, self.row_offsets, other.col_offsets, self.matrix @ other.matrix
        )


def closed_paths(space: GradedSpace, n: int) -> List[Path]:
    spaces = [space] * n
    result = []
    for obj in space.start_objects():
        result.extend(p for p in enumerate_paths(spaces, obj) if path_end(spaces, p) == obj)
    return sorted(result)


def transfer_matrix(X: BlockOperator, n: int) -> ClosedPathMatrix:
    """Row transfer matrix tr_{Vpi} X^(12) X^(23) ... X^(n,n+1) on closed paths of length n.

    X maps V1 (x) Vpi to Vpi (x) V2; the auxiliary leg is closed into a ring.
    All three spaces must have one-dimensional components.
    """
    if n < 1:
        raise GradingError("ring length must be at least 1")
    V1, Vpi = X.domain
    Vpi_out, V2 = X.codomain
    if Vpi.name != Vpi_out.name:
        raise GradingError("auxiliary legs of a row transfer operator must agree")
    for space in (V1, Vpi, V2):
        if any(d != 1 for d in space.dims.values()):
            raise UnsupportedDimension(f"row transfer matrices need one-dimensional components ({space.name})")

    cols = closed_paths(V1, n)
    rows = closed_paths(V2, n)
    col_off, c_size = _path_offsets(cols, [V1] * n)
    row_off, r_size = _path_offsets(rows, [V2] * n)
    T = np.zeros((r_size, c_size), dtype=complex)

    for path in cols:
        start = V1.source(path[0])
        for beta_in in Vpi.support_from(start):
            states: Dict[Tuple[str, Path], complex] = {(beta_in, ()): 1.0 + 0j}
            for site in range(n - 1, -1, -1):
                states = _row_step(X, path[site], states)
            for (beta, gamma), value in states.items():
                if beta == beta_in and gamma in row_off:
                    T[row_off[gamma], col_off[path]] += value
    return ClosedPathMatrix(rows, cols, row_off, col_off, T)


def _path_offsets(paths: List[Path], spaces) -> Tuple[Dict[Path, int], int]:
    table, offset = {}, 0
    for p in paths:
        table[p] = offset
        offset += path_dim(spaces, p)
    return table, offset


def _row_step(X: BlockOperator, alpha: str, states: Dict[Tuple[str, Path], complex]) -> Dict[Tuple[str, Path], complex]:
    new_states: Dict[Tuple[str, Path], complex] = {}
    for (beta, suffix), value in states.items():
        for (beta_out, gamma), mat in X.outputs((alpha, beta)):
            key = (beta_out, (gamma,) + suffix)
            new_states[key] = new_states.get(key, 0j) + mat[0, 0] * value
    return new_states
