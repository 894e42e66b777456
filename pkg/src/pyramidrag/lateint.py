"""Patch-grid late interaction (MaxSim) and the per-page memory / compute cost model.

Grids here are synthetic: there are no vision-backbone weights in this package,
only the scoring arithmetic and the storage model it implies.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyQuery, InvalidFactor

DEFAULT_PATCH_DIM = 128
FLOAT16 = 2
FLOAT32 = 4


@dataclass(frozen=True, eq=False)
class PatchGrid:
    grid_h: int
    grid_w: int
    vectors: np.ndarray  # (grid_h * grid_w, dim), unit rows

    def __post_init__(self) -> None:
        if self.grid_h < 1 or self.grid_w < 1:
            raise ValueError("grid sides must be positive")
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != self.grid_h * self.grid_w:
            raise ValueError(f"expected {self.grid_h * self.grid_w} patch vectors, got shape {v.shape}")
        norms = np.linalg.norm(v, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError("patch vectors must be unit-norm")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def num_patches(self) -> int:
        return self.grid_h * self.grid_w

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PatchGrid):
            return NotImplemented
        return (self.grid_h, self.grid_w) == (other.grid_h, other.grid_w) and np.array_equal(self.vectors, other.vectors)

    __hash__ = None  # type: ignore[assignment]


class PoolMode(str, enum.Enum):
    BLOCK_2D = "block2d"
    SEQ_1D = "seq1d"


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero vector")
    return x / norms


def synth_grid(seed: int, grid_h: int = 32, grid_w: int = 32, dim: int = DEFAULT_PATCH_DIM) -> PatchGrid:
    if grid_h < 1 or grid_w < 1 or dim < 1:
        raise ValueError("grid sides and dim must be positive")
    rng = np.random.default_rng(seed)
    return PatchGrid(grid_h, grid_w, _unit_rows(rng.standard_normal((grid_h * grid_w, dim))))


def synth_query(seed: int, q_len: int = 20, dim: int = DEFAULT_PATCH_DIM) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return _unit_rows(rng.standard_normal((q_len, dim)))


def maxsim_score(query_vecs: Sequence[Sequence[float]] | np.ndarray, page: PatchGrid) -> float:
    """Sum over query tokens of the best dot product against any patch."""
    q = np.asarray(query_vecs, dtype=np.float64)
    if q.size == 0:
        raise EmptyQuery("query has no token vectors")
    if q.ndim != 2 or q.shape[1] != page.dim:
        raise DimensionMismatch(f"query token dim {q.shape[-1]} != patch dim {page.dim}")
    return float((q @ page.vectors.T).max(axis=1).sum())


def pool_patches(page: PatchGrid, factor: int, mode: PoolMode | str = PoolMode.BLOCK_2D) -> PatchGrid:
    """Mean-pool patches and renormalize.

    ``block2d``: non-overlapping ``factor x factor`` blocks over the grid, edges
    padded by replication, giving ``ceil(h/f) x ceil(w/f)`` patches.
    ``seq1d``: windows of ``factor`` over the row-major sequence (last window may
    be short), giving a ``1 x ceil(h*w/f)`` grid.
    """
    if isinstance(factor, bool) or not isinstance(factor, int) or factor < 1:
        raise InvalidFactor(f"pooling factor must be an integer >= 1, got {factor!r}")
    mode = PoolMode(mode)
    if factor == 1:
        return page
    d = page.dim
    if mode is PoolMode.BLOCK_2D:
        out_h, out_w = math.ceil(page.grid_h / factor), math.ceil(page.grid_w / factor)
        grid = page.vectors.reshape(page.grid_h, page.grid_w, d)
        pad = ((0, out_h * factor - page.grid_h), (0, out_w * factor - page.grid_w), (0, 0))
        grid = np.pad(grid, pad, mode="edge")
        pooled = grid.reshape(out_h, factor, out_w, factor, d).mean(axis=(1, 3)).reshape(out_h * out_w, d)
        return PatchGrid(out_h, out_w, _unit_rows(pooled))
    n = page.num_patches
    out_n = math.ceil(n / factor)
    pooled = np.stack([page.vectors[i * factor : (i + 1) * factor].mean(axis=0) for i in range(out_n)])
    return PatchGrid(1, out_n, _unit_rows(pooled))


def pooled_count(grid_h: int, grid_w: int, factor: int, mode: PoolMode | str = PoolMode.BLOCK_2D) -> int:
    if factor < 1:
        raise InvalidFactor("pooling factor must be >= 1")
    if PoolMode(mode) is PoolMode.BLOCK_2D:
        return math.ceil(grid_h / factor) * math.ceil(grid_w / factor)
    return math.ceil(grid_h * grid_w / factor)


# ---------------------------------------------------------------------------
# cost model


@dataclass(frozen=True)
class CostSpec:
    vectors_per_page: int
    dim: int
    bytes_per_scalar: int = FLOAT16

    def __post_init__(self) -> None:
        if min(self.vectors_per_page, self.dim, self.bytes_per_scalar) < 1:
            raise ValueError("cost spec fields must be positive")


def memory_bytes(spec: CostSpec) -> int:
    return spec.vectors_per_page * spec.dim * spec.bytes_per_scalar


def corpus_memory(spec: CostSpec, pages: int) -> int:
    if pages < 1:
        raise ValueError("pages must be >= 1")
    return pages * memory_bytes(spec)


def maxsim_macs(q_len: int, patches: int, dim: int) -> int:
    if min(q_len, patches, dim) < 1:
        raise ValueError("all arguments must be positive")
    return q_len * patches * dim


# -- budget tables ----------------------------------------------------------

KIB = 1024
MIB = 1024 * 1024
TABLE2_PAGES = (100, 1_000, 10_000, 1_000_000)


@dataclass(frozen=True)
class BudgetRow:
    method: str
    spec: CostSpec

    @property
    def bytes_per_page(self) -> int:
        return memory_bytes(self.spec)


def default_rows(bytes_per_scalar: int = FLOAT16, pooled_vectors: int = 341, vectors_per_page: int = 14) -> list[BudgetRow]:
    """The five per-page configurations compared in the memory tables."""
    b = bytes_per_scalar
    return [
        BudgetRow("ColPali full", CostSpec(1024, 128, b)),
        BudgetRow("ColPali pooled", CostSpec(pooled_vectors, 128, b)),
        BudgetRow("Pyramid (d=1024)", CostSpec(vectors_per_page, 1024, b)),
        BudgetRow("Pyramid (d=1536)", CostSpec(vectors_per_page, 1536, b)),
        BudgetRow("Pyramid (d=3072)", CostSpec(vectors_per_page, 3072, b)),
    ]


def format_kb(n_bytes: int) -> str:
    """Per-page figure: binary kilobytes with one decimal (262144 -> ``256.0 KB``)."""
    return f"{n_bytes / KIB:.1f} KB"


def _two_sig(x: float) -> str:
    if x == 0:
        return "0"
    ndigits = 1 - math.floor(math.log10(abs(x)))
    value = round(x, ndigits)
    # rounding may carry into a new leading digit (e.g. 9.96 -> 10)
    ndigits = 1 - math.floor(math.log10(abs(value)))
    value = round(value, ndigits)
    return f"{value:.{max(0, ndigits)}f}"


def format_corpus_size(n_bytes: int) -> str:
    """Corpus total in the memory-scaling table's convention.

    Sizes are counted in binary megabytes (2**20 B); from 1000 MB upward they are
    shown in GB as MB / 1000. Two significant figures. Reproduces e.g.
    ``2,621,440,000 B -> "2.5 GB"`` and ``43,008,000,000 B -> "41 GB"``.
    """
    mb = n_bytes / MIB
    if mb >= 1000:
        return f"{_two_sig(mb / 1000)} GB"
    return f"{_two_sig(mb)} MB"


def efficiency_label(baseline_bytes: int, n_bytes: int) -> str:
    if n_bytes == baseline_bytes:
        return "baseline"
    return f"{baseline_bytes / n_bytes:.1f}x smaller"


def table1(rows: Sequence[BudgetRow] | None = None) -> list[dict]:
    rows = list(rows or default_rows())
    base = rows[0].bytes_per_page
    return [
        {
            "method": r.method,
            "vectors": r.spec.vectors_per_page,
            "dim": r.spec.dim,
            "bytes_per_scalar": r.spec.bytes_per_scalar,
            "bytes_per_page": r.bytes_per_page,
            "mem_per_page": format_kb(r.bytes_per_page),
            "efficiency": efficiency_label(base, r.bytes_per_page),
        }
        for r in rows
    ]


def table2(rows: Sequence[BudgetRow] | None = None, pages: Sequence[int] = TABLE2_PAGES) -> list[dict]:
    rows = list(rows or default_rows())
    out = []
    for r in rows:
        row: dict = {"method": r.method}
        for p in pages:
            total = corpus_memory(r.spec, p)
            row[f"bytes_{p}"] = total
            row[f"size_{p}"] = format_corpus_size(total)
        out.append(row)
    return out
