"""Self-attention fused with a sparse feature-graph aggregation.

The block runs two paths over a flattened (H*W, C_in) feature map and fuses
them with a final 1x1 projection:

  dense path    Wd = softmax(f(X) g(X)^T / sqrt(d)),  Z = Wd h(X)
  sparse path   Ws = CosSim(f(X), g(X)) - CosSim(P, P)   with P a fixed
                sine-cosine positional encoding; each node keeps its top-K
                highest-Ws neighbours (never itself) and aggregates raw
                features by the channelwise max of neighbour differences:
                V[i] = max_j in N(i) (X[j] - X[i])
  fuse          out = [Z, V] Wu + bu

Subtracting the positional-similarity matrix pushes the selected neighbours
away from trivially nearby patches and toward remote, semantically similar
ones; passing eliminate_ps=False in the params disables the subtraction for
ablation runs.

The top-K selection is treated as a constant during differentiation: the
backward pass routes gradients through attention, projections, and the max
aggregation while holding the graph fixed. sg_forward accepts an optional
pre-built graph so finite-difference checks can evaluate the same fixed
selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensors import as_matrix, as_tensor3, flatten, softmax_rows, unflatten


@dataclass(frozen=True)
class SparseGraph:
    """Top-K neighbour lists: neighbors[i] holds K distinct nodes, never i."""

    n: int
    neighbors: np.ndarray  # (n, k) int64, each row sorted by descending similarity

    def __post_init__(self):
        nb = self.neighbors
        if nb.ndim != 2 or nb.shape[0] != self.n:
            raise ValueError(f"neighbors must be (n, k), got {nb.shape} for n={self.n}")
        if ((nb < 0) | (nb >= self.n)).any():
            raise ValueError("neighbor index out of range")
        rows = np.arange(self.n)[:, None]
        if (nb == rows).any():
            raise ValueError("graph contains a self-loop")

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]


@dataclass
class SgParams:
    """Weights for the block; d = c_in // reduction is the query/key width."""

    c_in: int
    c_out: int
    wf: np.ndarray  # (c_in, d)
    wg: np.ndarray  # (c_in, d)
    wh: np.ndarray  # (c_in, c_out)
    wu: np.ndarray  # (c_out + c_in, c_out)
    bf: Optional[np.ndarray] = None
    bg: Optional[np.ndarray] = None
    bh: Optional[np.ndarray] = None
    bu: Optional[np.ndarray] = None
    reduction: int = 8
    k: int = 9
    pos_dim: Optional[int] = None
    eliminate_ps: bool = True

    def __post_init__(self):
        if self.c_in % self.reduction != 0:
            raise ValueError(f"reduction {self.reduction} must divide c_in {self.c_in}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        d = self.d
        expect = {
            "wf": (self.c_in, d),
            "wg": (self.c_in, d),
            "wh": (self.c_in, self.c_out),
            "wu": (self.c_out + self.c_in, self.c_out),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} must have shape {shape}, got {got}")

    @property
    def d(self) -> int:
        return self.c_in // self.reduction

    @property
    def resolved_pos_dim(self) -> int:
        if self.pos_dim is not None:
            return self.pos_dim
        # default tracks the query/key width, rounded up to a multiple of 4
        return max(4, -(-self.d // 4) * 4)

    @classmethod
    def random(
        cls,
        c_in: int,
        c_out: Optional[int] = None,
        reduction: int = 8,
        k: int = 9,
        pos_dim: Optional[int] = None,
        seed: int = 0,
        bias: bool = True,
        eliminate_ps: bool = True,
    ) -> "SgParams":
        """Seeded Gaussian init scaled by 1/sqrt(fan_in)."""
        c_out = c_in if c_out is None else c_out
        d = c_in // reduction
        rng = np.random.default_rng(seed)

        def w(rows, cols):
            return rng.normal(0.0, 1.0 / np.sqrt(rows), size=(rows, cols))

        def b(cols):
            return rng.normal(0.0, 0.05, size=cols) if bias else None

        return cls(
            c_in=c_in,
            c_out=c_out,
            wf=w(c_in, d),
            wg=w(c_in, d),
            wh=w(c_in, c_out),
            wu=w(c_out + c_in, c_out),
            bf=b(d),
            bg=b(d),
            bh=b(c_out),
            bu=b(c_out),
            reduction=reduction,
            k=k,
            pos_dim=pos_dim,
            eliminate_ps=eliminate_ps,
        )


def project(x, w, bias=None) -> np.ndarray:
    """Per-row affine map (a 1x1 convolution over the flattened grid)."""
    xm = as_matrix(x, "x")
    wm = as_matrix(w, "w")
    if xm.shape[1] != wm.shape[0]:
        raise ValueError(
            f"project shape mismatch: ({xm.shape[0]}x{xm.shape[1]}) @ ({wm.shape[0]}x{wm.shape[1]})"
        )
    out = xm @ wm
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


def dense_attention(f, g, h) -> tuple[np.ndarray, np.ndarray]:
    """Scaled-dot-product attention over all node pairs.

    Returns (Wd, Z) with Wd = softmax(f g^T / sqrt(d)) row-stochastic and
    Z = Wd h.
    """
    fm = as_matrix(f, "f")
    gm = as_matrix(g, "g")
    hm = as_matrix(h, "h")
    if fm.shape != gm.shape:
        raise ValueError(f"f and g must have equal shapes, got {fm.shape} vs {gm.shape}")
    if hm.shape[0] != fm.shape[0]:
        raise ValueError(f"h row count {hm.shape[0]} != node count {fm.shape[0]}")
    d = fm.shape[1]
    wd = softmax_rows(fm @ gm.T / np.sqrt(d))
    return wd, wd @ hm


def sincos_pos_encoding(height: int, width: int, pos_dim: int) -> np.ndarray:
    """Fixed 2-D sine-cosine positional encoding, one row per grid node.

    pos_dim must be divisible by 4: half the channels encode the row, half
    the column, and each half splits into sines and cosines over geometric
    frequencies 10000^(-t/q) with q = pos_dim // 4. Row layout matches the
    row-major node order of :func:`anomaly_forge.tensors.flatten`.
    """
    if pos_dim % 4 != 0 or pos_dim < 4:
        raise ValueError(f"pos_dim must be a positive multiple of 4, got {pos_dim}")
    if height < 1 or width < 1:
        raise ValueError(f"grid dims must be positive, got {height}x{width}")
    q = pos_dim // 4
    freqs = 10000.0 ** (-np.arange(q, dtype=np.float64) / q)
    rows = np.repeat(np.arange(height, dtype=np.float64), width)
    cols = np.tile(np.arange(width, dtype=np.float64), height)
    r = rows[:, None] * freqs[None, :]
    c = cols[:, None] * freqs[None, :]
    return np.concatenate([np.sin(r), np.cos(r), np.sin(c), np.cos(c)], axis=1)


def cosine_similarity(a, b) -> np.ndarray:
    """Pairwise cosine similarity of the rows of a and b, clipped to [-1, 1]."""
    am = as_matrix(a, "a")
    bm = as_matrix(b, "b")
    if am.shape[1] != bm.shape[1]:
        raise ValueError(f"row width mismatch: {am.shape[1]} vs {bm.shape[1]}")
    na = np.linalg.norm(am, axis=1)
    nb = np.linalg.norm(bm, axis=1)
    if (na == 0).any() or (nb == 0).any():
        raise ValueError("cosine similarity undefined for zero-norm rows")
    sim = (am / na[:, None]) @ (bm / nb[:, None]).T
    return np.clip(sim, -1.0, 1.0)


def positional_similarity(p) -> np.ndarray:
    """Cosine similarity of positional-encoding rows: symmetric, unit diagonal."""
    return cosine_similarity(p, p)


def sparse_similarity(f, g, wp) -> np.ndarray:
    """Semantic cosine similarity minus positional similarity; entries in [-2, 2]."""
    sim = cosine_similarity(f, g)
    wpm = as_matrix(wp, "wp")
    if wpm.shape != sim.shape:
        raise ValueError(f"wp shape {wpm.shape} != similarity shape {sim.shape}")
    return sim - wpm


def topk_neighbors(ws, k: int) -> SparseGraph:
    """Per row, the k highest-similarity columns excluding the diagonal.

    Ties break toward the smaller column index; each neighbour list is
    ordered by descending similarity.
    """
    wsm = as_matrix(ws, "ws")
    n = wsm.shape[0]
    if wsm.shape[1] != n:
        raise ValueError(f"ws must be square, got {wsm.shape}")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, n-1] = [1, {n - 1}], got {k}")
    keyed = -wsm.copy()
    np.fill_diagonal(keyed, np.inf)  # self sorts last, never selected
    order = np.argsort(keyed, axis=1, kind="stable")  # stable => ties to smaller index
    return SparseGraph(n=n, neighbors=order[:, :k].astype(np.int64))


def max_relative_aggregate(v, graph: SparseGraph) -> np.ndarray:
    """Channelwise max of neighbour differences: out[i, c] = max_j (v[j,c] - v[i,c])."""
    out, _ = _max_relative_with_argmax(v, graph)
    return out


def _max_relative_with_argmax(v, graph: SparseGraph) -> tuple[np.ndarray, np.ndarray]:
    vm = as_matrix(v, "v")
    if vm.shape[0] != graph.n:
        raise ValueError(f"v has {vm.shape[0]} rows but graph.n = {graph.n}")
    diffs = vm[graph.neighbors] - vm[:, None, :]  # (n, k, c)
    best = diffs.argmax(axis=1)  # first occurrence wins on ties
    cols = np.arange(vm.shape[1])[None, :]
    amax_nodes = graph.neighbors[np.arange(graph.n)[:, None], best]
    out = diffs[np.arange(graph.n)[:, None], best, cols]
    return out, amax_nodes


@dataclass
class SgCache:
    """Intermediates retained by sg_forward for the matching backward pass."""

    height: int
    width: int
    x_flat: np.ndarray
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    wd: np.ndarray
    z: np.ndarray
    graph: SparseGraph
    v: np.ndarray
    amax_nodes: np.ndarray
    fused_in: np.ndarray
    c_out: int = field(default=0)


def sg_forward(x, params: SgParams, graph: Optional[SparseGraph] = None):
    """Run the block on an (H, W, C_in) map; returns ((H, W, C_out), cache).

    When ``graph`` is given it replaces the top-K construction (used to hold
    the selection fixed, e.g. for finite-difference checks).
    """
    t = as_tensor3(x, "x")
    h_dim, w_dim, c = t.shape
    if c != params.c_in:
        raise ValueError(f"input has {c} channels, params expect {params.c_in}")
    x_flat = flatten(t)

    f = project(x_flat, params.wf, params.bf)
    g = project(x_flat, params.wg, params.bg)
    h_proj = project(x_flat, params.wh, params.bh)
    wd, z = dense_attention(f, g, h_proj)

    if graph is None:
        sem = cosine_similarity(f, g)
        if params.eliminate_ps:
            p = sincos_pos_encoding(h_dim, w_dim, params.resolved_pos_dim)
            ws = sem - positional_similarity(p)
        else:
            ws = sem
        graph = topk_neighbors(ws, params.k)
    elif graph.n != x_flat.shape[0]:
        raise ValueError(f"supplied graph has n={graph.n}, expected {x_flat.shape[0]}")

    v, amax_nodes = _max_relative_with_argmax(x_flat, graph)
    fused_in = np.concatenate([z, v], axis=1)
    out = project(fused_in, params.wu, params.bu)

    cache = SgCache(
        height=h_dim,
        width=w_dim,
        x_flat=x_flat,
        f=f,
        g=g,
        h=h_proj,
        wd=wd,
        z=z,
        graph=graph,
        v=v,
        amax_nodes=amax_nodes,
        fused_in=fused_in,
        c_out=params.c_out,
    )
    return unflatten(out, h_dim, w_dim), cache


def _softmax_rows_backward(wd: np.ndarray, d_wd: np.ndarray) -> np.ndarray:
    # rowwise softmax Jacobian: dS = Wd * (dWd - sum(dWd * Wd))
    inner = (d_wd * wd).sum(axis=1, keepdims=True)
    return wd * (d_wd - inner)


def sg_backward(grad_out, cache: SgCache, params: SgParams):
    """Analytic gradients for sg_forward with the graph held fixed.

    Returns (grad_x, grads) where grads maps weight/bias names to arrays.
    Gradients of the max aggregation route to the argmax neighbour recorded
    in the cache.
    """
    g_out = as_tensor3(grad_out, "grad_out")
    if g_out.shape != (cache.height, cache.width, cache.c_out):
        raise ValueError(
            f"grad_out shape {g_out.shape} does not match cache "
            f"({cache.height}, {cache.width}, {cache.c_out}); stale cache?"
        )
    dy = flatten(g_out)
    n, c_in = cache.x_flat.shape
    c_out = cache.c_out

    grads: dict[str, np.ndarray] = {}
    grads["wu"] = cache.fused_in.T @ dy
    if params.bu is not None:
        grads["bu"] = dy.sum(axis=0)
    d_fused = dy @ params.wu.T
    dz = d_fused[:, :c_out]
    dv = d_fused[:, c_out:]

    # max-relative aggregation: out[i,c] = x[j*,c] - x[i,c]
    dx = np.zeros_like(cache.x_flat)
    cols = np.broadcast_to(np.arange(c_in)[None, :], (n, c_in))
    np.add.at(dx, (cache.amax_nodes, cols), dv)
    dx -= dv

    # attention: Z = Wd h, Wd = softmax(f g^T / sqrt(d))
    d_wd = dz @ cache.h.T
    dh = cache.wd.T @ dz
    ds = _softmax_rows_backward(cache.wd, d_wd)
    scale = 1.0 / np.sqrt(cache.f.shape[1])
    df = ds @ cache.g * scale
    dg = ds.T @ cache.f * scale

    # projections
    grads["wf"] = cache.x_flat.T @ df
    grads["wg"] = cache.x_flat.T @ dg
    grads["wh"] = cache.x_flat.T @ dh
    if params.bf is not None:
        grads["bf"] = df.sum(axis=0)
    if params.bg is not None:
        grads["bg"] = dg.sum(axis=0)
    if params.bh is not None:
        grads["bh"] = dh.sum(axis=0)
    dx += df @ params.wf.T + dg @ params.wg.T + dh @ params.wh.T

    return unflatten(dx, cache.height, cache.width), grads
