"""Sparse graph storage, adjacency normalizations, propagation and aggregation.

Graphs are undirected, unweighted and self-loop-free, stored in CSR form.
Normalized adjacencies are weighted CSR matrices that are symmetric in both
structure and values; the ``self_loops`` flag distinguishes the GCN-style
normalization (D+I)^{-1/2}(A+I)(D+I)^{-1/2} from the self-loop-free
D^{-1/2}SD^{-1/2} used after graph reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

AGGREGATORS = ("mean", "max", "sum", "weighted_sum")

DEFAULT_EPS_NORM = 1e-12


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class SparseGraph:
    """Undirected self-loop-free graph in CSR layout.

    ``indptr`` has length ``n_nodes + 1``; ``indices[indptr[v]:indptr[v+1]]``
    are the (strictly increasing) neighbors of node ``v``. Structure is
    symmetric: (i, j) present iff (j, i) present.
    """

    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        _freeze(self.indptr, self.indices)

    @property
    def n_edges(self) -> int:
        """Number of undirected edges (each stored twice internally)."""
        return self.indices.size // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def to_scipy(self) -> sp.csr_matrix:
        """Binary adjacency as a scipy CSR matrix (float64 ones)."""
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix(
            (data, self.indices, self.indptr), shape=(self.n_nodes, self.n_nodes)
        )

    def edge_array(self) -> np.ndarray:
        """Unordered edges as an (m, 2) array with u < v, lexicographically sorted."""
        rows = np.repeat(np.arange(self.n_nodes), self.degrees())
        mask = rows < self.indices
        return np.column_stack([rows[mask], self.indices[mask]])

    def validate(self) -> None:
        """Raise ValidationError if any structural invariant is broken."""
        if self.indptr.shape != (self.n_nodes + 1,):
            raise ValidationError("indptr length must be n_nodes + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise ValidationError("indptr endpoints inconsistent with indices")
        if np.any(np.diff(self.indptr) < 0):
            raise ValidationError("indptr must be non-decreasing")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= self.n_nodes:
                raise ValidationError("column index out of range")
        rows = np.repeat(np.arange(self.n_nodes), self.degrees())
        if np.any(rows == self.indices):
            raise ValidationError("self-loop present")
        for v in range(self.n_nodes):
            nb = self.neighbors(v)
            if nb.size > 1 and np.any(np.diff(nb) <= 0):
                raise ValidationError(f"row {v} not strictly increasing")
        a = self.to_scipy()
        if (a != a.T).nnz != 0:
            raise ValidationError("adjacency structure not symmetric")


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric weighted self-loop-free graph (CSR); weights in (0, 1].

    Produced by soft graph reconstruction, where entries are sigmoid scores
    rather than hard 0/1 decisions.
    """

    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        _freeze(self.indptr, self.indices, self.values)

    def degrees(self) -> np.ndarray:
        """Weighted degrees (row sums)."""
        rows = np.repeat(np.arange(self.n_nodes), np.diff(self.indptr))
        out = np.zeros(self.n_nodes, dtype=np.float64)
        np.add.at(out, rows, self.values)
        return out

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.indices, self.indptr),
            shape=(self.n_nodes, self.n_nodes),
        )


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically degree-normalized adjacency in CSR form.

    With ``self_loops`` the matrix is (D+I)^{-1/2}(A+I)(D+I)^{-1/2} and every
    diagonal entry is present; without, it is D^{-1/2}SD^{-1/2} with no
    diagonal entries and all-zero rows for isolated nodes. Either way all
    eigenvalues lie in [-1, 1] (up to roundoff).
    """

    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    self_loops: bool

    def __post_init__(self):
        _freeze(self.indptr, self.indices, self.values)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.indices, self.indptr),
            shape=(self.n_nodes, self.n_nodes),
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def validate(self) -> None:
        a = self.to_scipy()
        if (a != a.T).nnz != 0:
            raise ValidationError("normalized adjacency not symmetric")
        diag = a.diagonal()
        rows = np.repeat(np.arange(self.n_nodes), np.diff(self.indptr))
        has_diag_entry = np.zeros(self.n_nodes, dtype=bool)
        has_diag_entry[rows[rows == self.indices]] = True
        if self.self_loops and not has_diag_entry.all():
            raise ValidationError("self_loops=True but a diagonal entry is missing")
        if not self.self_loops and np.any(diag != 0.0):
            raise ValidationError("self_loops=False but a diagonal entry is present")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("non-finite weight")


def _csr_from_directed_pairs(n_nodes: int, rows: np.ndarray, cols: np.ndarray) -> SparseGraph:
    """Build a SparseGraph from directed pairs that already contain both
    orientations of every edge (no duplicates, no self-loops)."""
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return SparseGraph(n_nodes=n_nodes, indptr=indptr, indices=cols.astype(np.int64))


def graph_from_edges(n_nodes: int, u: np.ndarray, v: np.ndarray) -> SparseGraph:
    """Build a SparseGraph from unordered edge endpoints (deduplicated,
    symmetrized, self-loops dropped). Assumes indices already validated."""
    keep = u != v
    u, v = u[keep], v[keep]
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    pair_ids = rows * np.int64(n_nodes) + cols
    _, first = np.unique(pair_ids, return_index=True)
    return _csr_from_directed_pairs(n_nodes, rows[first], cols[first])


def build_graph(edge_list, n_nodes: int) -> SparseGraph:
    """Assemble a SparseGraph from an iterable of (u, v) index pairs.

    Each input edge is inserted in both directions; duplicates are merged and
    self-loops dropped. Out-of-range indices are rejected with the 1-based
    position of the offending pair.
    """
    if n_nodes < 0:
        raise ValidationError("n_nodes must be non-negative")
    edges = np.asarray(list(edge_list), dtype=np.int64)
    if edges.size == 0:
        edges = edges.reshape(0, 2)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise ValidationError("edge list must be pairs of node indices")
    bad = np.flatnonzero(
        (edges[:, 0] < 0)
        | (edges[:, 0] >= n_nodes)
        | (edges[:, 1] < 0)
        | (edges[:, 1] >= n_nodes)
    )
    if bad.size:
        i = int(bad[0])
        raise ValidationError(
            f"edge {i + 1}: index pair ({edges[i, 0]}, {edges[i, 1]}) "
            f"out of range for {n_nodes} nodes"
        )
    return graph_from_edges(n_nodes, edges[:, 0], edges[:, 1])


def check_features(x: np.ndarray, n_nodes: int | None = None) -> np.ndarray:
    """Validate a dense feature matrix: 2-d, finite, optionally n_nodes rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("feature matrix must be 2-dimensional")
    if not np.all(np.isfinite(x)):
        raise ValidationError("feature matrix contains non-finite entries")
    if n_nodes is not None and x.shape[0] != n_nodes:
        raise ValidationError(
            f"feature matrix has {x.shape[0]} rows, expected {n_nodes}"
        )
    return x


def check_labels(labels: np.ndarray, n_nodes: int | None = None) -> np.ndarray:
    """Validate a label vector: integers >= -1, -1 meaning unlabeled."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValidationError("label vector must be 1-dimensional")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError("labels must be integers")
    labels = labels.astype(np.int64)
    if labels.size and labels.min() < -1:
        raise ValidationError("labels must be >= -1")
    if n_nodes is not None and labels.size != n_nodes:
        raise ValidationError(f"label vector has length {labels.size}, expected {n_nodes}")
    return labels


def normalize_with_self_loops(g: SparseGraph) -> NormalizedAdjacency:
    """GCN-style normalization (D+I)^{-1/2}(A+I)(D+I)^{-1/2}.

    Entry (i, j) is 1/sqrt((d_i+1)(d_j+1)) for every edge and every diagonal
    position; an isolated node gets diagonal entry 1. Values are exactly
    symmetric because each side evaluates the same product.
    """
    deg = g.degrees().astype(np.float64)
    rows = np.concatenate(
        [np.repeat(np.arange(g.n_nodes), g.degrees()), np.arange(g.n_nodes)]
    )
    cols = np.concatenate([g.indices, np.arange(g.n_nodes)])
    vals = 1.0 / np.sqrt((deg[rows] + 1.0) * (deg[cols] + 1.0))
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(g.n_nodes, g.n_nodes))
    csr = coo.tocsr()
    csr.sort_indices()
    return NormalizedAdjacency(
        n_nodes=g.n_nodes,
        indptr=csr.indptr.astype(np.int64),
        indices=csr.indices.astype(np.int64),
        values=csr.data,
        self_loops=True,
    )


def normalize_no_self_loops(g: SparseGraph | WeightedGraph) -> NormalizedAdjacency:
    """Self-loop-free normalization D^{-1/2}SD^{-1/2}.

    Degrees are taken from ``g`` itself (row sums of its weights); rows of
    degree-0 nodes come out all-zero, which downstream code treats as "no
    aggregation" for those nodes.
    """
    if isinstance(g, WeightedGraph):
        vals_in = g.values
    else:
        vals_in = np.ones(g.indices.size, dtype=np.float64)
    counts = np.diff(g.indptr)
    rows = np.repeat(np.arange(g.n_nodes), counts)
    strength = np.zeros(g.n_nodes, dtype=np.float64)
    np.add.at(strength, rows, vals_in)
    inv_sqrt = np.zeros(g.n_nodes, dtype=np.float64)
    nz = strength > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(strength[nz])
    vals = vals_in * (inv_sqrt[rows] * inv_sqrt[g.indices])
    return NormalizedAdjacency(
        n_nodes=g.n_nodes,
        indptr=g.indptr.astype(np.int64),
        indices=g.indices.astype(np.int64),
        values=vals,
        self_loops=False,
    )


def spmm(adj: NormalizedAdjacency, m: np.ndarray) -> np.ndarray:
    """Sparse-dense product adj @ m."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[0] != adj.n_nodes:
        raise ValidationError(
            f"matrix has {m.shape[0]} rows, adjacency expects {adj.n_nodes}"
        )
    return adj.to_scipy() @ m


def propagate(adj: NormalizedAdjacency, x: np.ndarray, k: int) -> np.ndarray:
    """k-hop propagation: compute adj^k @ x by k successive products.

    The matrix power is never materialized. k must be >= 1; the model adds
    the raw (0-hop) term separately.
    """
    if k < 1:
        raise ValidationError("hop count k must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != adj.n_nodes:
        raise ValidationError(
            f"matrix has {x.shape[0]} rows, adjacency expects {adj.n_nodes}"
        )
    a = adj.to_scipy()
    out = x
    for _ in range(k):
        out = a @ out
    return out


def aggregate(
    kind: str,
    g: SparseGraph,
    x: np.ndarray,
    a_tilde: NormalizedAdjacency | None = None,
) -> np.ndarray:
    """Classical neighborhood aggregation over a node's neighbors.

    mean/max/sum reduce over the (self-excluded) neighbor rows and give a
    zero row to isolated nodes; weighted_sum is the GCN-style a_tilde @ x,
    which includes the node itself through the diagonal.
    """
    if kind not in AGGREGATORS:
        raise ValidationError(f"unknown aggregator {kind!r}; expected one of {AGGREGATORS}")
    x = check_features(x, g.n_nodes)
    if kind == "weighted_sum":
        if a_tilde is None:
            raise ValidationError("weighted_sum aggregation requires a_tilde")
        return spmm(a_tilde, x)
    a = g.to_scipy()
    summed = a @ x
    if kind == "sum":
        return summed
    if kind == "mean":
        deg = g.degrees().astype(np.float64)
        out = np.zeros_like(summed)
        nz = deg > 0
        out[nz] = summed[nz] / deg[nz, None]
        return out
    # max: per-node elementwise maximum over neighbor rows
    out = np.zeros_like(x)
    for v in range(g.n_nodes):
        nb = g.neighbors(v)
        if nb.size:
            out[v] = x[nb].max(axis=0)
    return out


def row_normalize(m: np.ndarray, eps_norm: float = DEFAULT_EPS_NORM) -> np.ndarray:
    """Divide each row by its Euclidean norm; rows with norm < eps_norm become zero."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    out = np.zeros_like(m)
    nz = norms >= eps_norm
    out[nz] = m[nz] / norms[nz, None]
    return out


def dirichlet_energy(a_tilde: NormalizedAdjacency, y_hat: np.ndarray) -> float:
    """Adjacency-weighted smoothness sum_{ij} w_ij ||Y_i - Y_j||^2.

    The sum runs over all ordered nonzero pairs of the normalized adjacency
    (each undirected edge counts twice); diagonal terms contribute zero.
    """
    if not a_tilde.self_loops:
        raise ValidationError("dirichlet_energy expects the self-loop normalization")
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y_hat.shape[0] != a_tilde.n_nodes:
        raise ValidationError(
            f"embedding has {y_hat.shape[0]} rows, adjacency expects {a_tilde.n_nodes}"
        )
    a = a_tilde.to_scipy()
    row_sums = np.asarray(a.sum(axis=1)).ravel()
    sq = np.einsum("ij,ij->i", y_hat, y_hat)
    cross = float(np.sum(y_hat * (a @ y_hat)))
    val = 2.0 * float(row_sums @ sq) - 2.0 * cross
    return max(val, 0.0)


def homophily_ratio(g: SparseGraph, labels: np.ndarray) -> float:
    """Node homophily: mean, over labeled nodes of degree >= 1, of the
    fraction of neighbors sharing the node's label. In [0, 1]."""
    labels = check_labels(labels, g.n_nodes)
    deg = g.degrees()
    eligible = (labels >= 0) & (deg > 0)
    if not eligible.any():
        raise ValidationError("no labeled node with degree >= 1")
    rows = np.repeat(np.arange(g.n_nodes), deg)
    same = labels[rows] == labels[g.indices]
    same &= labels[rows] >= 0
    counts = np.bincount(rows[same], minlength=g.n_nodes)
    frac = counts[eligible] / deg[eligible]
    return float(frac.mean())
