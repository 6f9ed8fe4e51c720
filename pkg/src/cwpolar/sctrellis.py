"""Successive-cancellation decoding on a state trellis.

Messages are evidence matrices: for a contiguous block of positions, entry
(s_begin, s_end) is the joint probability of the block's observations, the
transform-bit constraints fixed so far, and the state being s_end after the
block, given it was s_begin before. A leaf is one kernel step; an internal
node covering 2L positions combines its children by ordinary matrix products
over the shared midpoint state:

  * odd local index (minus): the queried bit fixes the xor of the two
    children's next bits, so both sibling hypotheses are summed,
      Q(b) = sum_v  L(b xor v) . R(v)
  * even local index (plus): the minus bit a is already fixed,
      Q(b) = L(a xor b) . R(b)

Each node caches its current query pair and folds decided bits into its
children, so a full pass over all N bits costs O(|S|^3 N log N) multiply
work. Matrices are max-normalized with the log scale carried separately, so
blocks of length 2^12 and beyond stay inside float range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadLength, ShapeMismatch, ZeroEvidence
from .process import BoundarySpec, FimProcess, PhaseStructure, StationaryDistribution

_NEG_INF = float("-inf")

_product_count = 0


def matmul_count() -> int:
    """Running total of evidence-matrix products taken by trellis passes.

    Each product multiplies two |S| x |S| matrices, so the scalar work per
    count is cubic in the state count. Callers measure a pass by differencing
    the counter around it. Diagnostic only; not synchronized across threads.
    """
    return _product_count


@dataclass(frozen=True)
class EvidenceMatrix:
    """Nonnegative |S| x |S| trellis message with a separate log scale.

    The represented matrix is mat * 2**log2_scale; mat is kept with max entry
    1 (or all zero). Entries are nonzero only for phase-consistent
    (s_begin, s_end) pairs.
    """

    mat: np.ndarray
    log2_scale: float = 0.0

    @staticmethod
    def wrap(raw: np.ndarray, log2_scale: float = 0.0) -> "EvidenceMatrix":
        return EvidenceMatrix(*_normalize(np.asarray(raw, dtype=float), log2_scale))

    def is_zero(self) -> bool:
        return self.log2_scale == _NEG_INF

    def dense(self) -> np.ndarray:
        if self.is_zero():
            return np.zeros_like(self.mat)
        return self.mat * (2.0 ** self.log2_scale)


def _normalize(mat: np.ndarray, logs: float) -> tuple[np.ndarray, float]:
    peak = mat.max(initial=0.0)
    if peak <= 0.0:
        return np.zeros_like(mat), _NEG_INF
    return mat / peak, logs + math.log2(peak)


def _mm(a, b):
    """(mat, logs) product with renormalization."""
    global _product_count
    if a[1] == _NEG_INF or b[1] == _NEG_INF:
        return a[0] if a[1] == _NEG_INF else b[0], _NEG_INF
    _product_count += 1
    return _normalize(a[0] @ b[0], a[1] + b[1])


def _add(a, b):
    if a[1] == _NEG_INF:
        return b
    if b[1] == _NEG_INF:
        return a
    high, low = (a, b) if a[1] >= b[1] else (b, a)
    return _normalize(high[0] + low[0] * (2.0 ** (low[1] - high[1])), high[1])


def combine_minus(left_pair, right_pair, bit: int) -> EvidenceMatrix:
    """Evidence for the xor of the children's next bits being ``bit``."""
    _check_pair(left_pair, right_pair)
    l0, l1 = left_pair
    r0, r1 = right_pair
    a = _mm((l0.mat, l0.log2_scale) if bit == 0 else (l1.mat, l1.log2_scale),
            (r0.mat, r0.log2_scale))
    b = _mm((l1.mat, l1.log2_scale) if bit == 0 else (l0.mat, l0.log2_scale),
            (r1.mat, r1.log2_scale))
    return EvidenceMatrix(*_add(a, b))


def combine_plus(left_pair, right_pair, minus_bit: int, bit: int) -> EvidenceMatrix:
    """Evidence for the right child's next bit once the xor bit is fixed."""
    _check_pair(left_pair, right_pair)
    lv = left_pair[minus_bit ^ bit]
    rv = right_pair[bit]
    return EvidenceMatrix(*_mm((lv.mat, lv.log2_scale), (rv.mat, rv.log2_scale)))


def _check_pair(left_pair, right_pair) -> None:
    shapes = {e.mat.shape for e in (*left_pair, *right_pair)}
    if len(shapes) != 1 or any(len(s) != 2 or s[0] != s[1] for s in shapes):
        raise ShapeMismatch(f"evidence shapes differ: {sorted(shapes)}")


def leaf_evidence(proc: FimProcess, y: str | None, x: int | None = None) -> EvidenceMatrix:
    """One-step evidence; y None marginalizes the observation, x None the input."""
    if y is None:
        raw = proc.step_matrix if x is None else proc.input_matrices[x]
    else:
        yi = proc.obs_index[y]
        sl = proc.tensor[:, :, yi, :]
        raw = sl.sum(axis=1) if x is None else sl[:, x, :]
    return EvidenceMatrix.wrap(raw)


# ---------------------------------------------------------------------------
# The successive-cancellation pass
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("length", "left", "right", "n_decided", "pending", "cache", "leaves")

    def __init__(self, length: int):
        self.length = length
        self.left = None
        self.right = None
        self.n_decided = 0
        self.pending = 0
        self.cache: dict[int, tuple] = {}
        self.leaves = None  # (pair for x=0, x=1) at leaf nodes

    def query(self, bit: int):
        got = self.cache.get(bit)
        if got is not None:
            return got
        if self.leaves is not None:
            out = self.leaves[bit]
        else:
            j = self.n_decided
            if j % 2 == 0:
                a = _mm(self.left.query(bit), self.right.query(0))
                b = _mm(self.left.query(bit ^ 1), self.right.query(1))
                out = _add(a, b)
            else:
                out = _mm(self.left.query(self.pending ^ bit), self.right.query(bit))
        self.cache[bit] = out
        return out

    def decide(self, bit: int) -> None:
        if self.leaves is None:
            if self.n_decided % 2 == 0:
                self.pending = bit
            else:
                self.left.decide(self.pending ^ bit)
                self.right.decide(bit)
        self.n_decided += 1
        self.cache = {}


def _build_node(proc: FimProcess, y_idx, t0: int, length: int) -> _Node:
    node = _Node(length)
    if length == 1:
        if y_idx is None:
            pair0 = _normalize(proc.input_matrices[0], 0.0)
            pair1 = _normalize(proc.input_matrices[1], 0.0)
        else:
            sl = proc.tensor[:, :, y_idx[t0], :]
            pair0 = _normalize(np.ascontiguousarray(sl[:, 0, :]), 0.0)
            pair1 = _normalize(np.ascontiguousarray(sl[:, 1, :]), 0.0)
        node.leaves = (pair0, pair1)
    else:
        node.left = _build_node(proc, y_idx, t0, length // 2)
        node.right = _build_node(proc, y_idx, t0 + length // 2, length // 2)
    return node


@dataclass(frozen=True)
class BlockCondition:
    """Start-state prior and end-state mask realizing a conditioning event."""

    start_weights: np.ndarray
    final_mask: np.ndarray

    @staticmethod
    def from_boundary(
        proc: FimProcess, pi: StationaryDistribution, boundary: BoundarySpec,
    ) -> "BlockCondition":
        si = proc.state_index
        w = np.zeros(proc.n_states)
        for s in boundary.psi0:
            w[si[s]] = pi.pi[s]
        w_sum = w.sum()
        if w_sum <= 0:
            raise ZeroEvidence("start set carries no stationary mass")
        mask = np.zeros(proc.n_states)
        for s in boundary.psiN:
            mask[si[s]] = 1.0
        return BlockCondition(w / w_sum, mask)

    @staticmethod
    def from_phase_class(
        proc: FimProcess, ps: PhaseStructure, pi: StationaryDistribution, delta: int,
    ) -> "BlockCondition":
        si = proc.state_index
        w = np.zeros(proc.n_states)
        for s, ph in ps.phase.items():
            if ph % ps.d == delta:
                w[si[s]] = pi.pi[s]
        return BlockCondition(w / w.sum(), np.ones(proc.n_states))

    @staticmethod
    def unconditioned(proc: FimProcess, pi: StationaryDistribution) -> "BlockCondition":
        return BlockCondition(pi.vector(proc), np.ones(proc.n_states))


class ScPass:
    """Sequential bit-by-bit pass over one block.

    Observations may be a sequence of labels (length N), or None to run on the
    bare input process. Bits are 1-indexed in reports; next_index tells which
    bit the next query refers to.
    """

    def __init__(self, proc: FimProcess, n_bits: int, y=None):
        if n_bits < 1 or n_bits & (n_bits - 1):
            raise BadLength(f"block length {n_bits} is not a power of two")
        self.proc = proc
        self.n_bits = n_bits
        if y is not None:
            if len(y) != n_bits:
                raise ShapeMismatch(f"{len(y)} observations for block {n_bits}")
            y = np.asarray([proc.obs_index[str(v)] if not isinstance(v, (int, np.integer))
                            else int(v) for v in y], dtype=np.int64)
        self._root = _build_node(proc, y, 0, n_bits)
        self._decided = 0

    @property
    def next_index(self) -> int:
        return self._decided + 1

    def query_pair(self) -> tuple[EvidenceMatrix, EvidenceMatrix]:
        if self._decided >= self.n_bits:
            raise BadLength("all bits already decided")
        e0 = self._root.query(0)
        e1 = self._root.query(1)
        return EvidenceMatrix(*e0), EvidenceMatrix(*e1)

    def decide(self, bit: int) -> None:
        self._root.decide(int(bit))
        self._decided += 1

    def conditional(self, cond: BlockCondition,
                    s0: int | None = None, sN: int | None = None) -> tuple[float, float]:
        """P(next bit = 0 / 1) under the event, or given exact end states."""
        e0, e1 = self.query_pair()
        return conditional_from_pair(e0, e1, cond, s0, sN)


def conditional_from_pair(
    e0: EvidenceMatrix, e1: EvidenceMatrix, cond: BlockCondition,
    s0: int | None = None, sN: int | None = None,
) -> tuple[float, float]:
    logs = []
    for e in (e0, e1):
        if e.is_zero():
            logs.append(_NEG_INF)
            continue
        if s0 is not None:
            val = e.mat[s0, sN] if sN is not None else float(
                e.mat[s0] @ cond.final_mask)
        else:
            val = float(cond.start_weights @ e.mat @ cond.final_mask)
        logs.append(math.log2(val) + e.log2_scale if val > 0 else _NEG_INF)
    l0, l1 = logs
    if l0 == _NEG_INF and l1 == _NEG_INF:
        raise ZeroEvidence("decided prefix is impossible under the event")
    if l0 == _NEG_INF:
        return 0.0, 1.0
    if l1 == _NEG_INF:
        return 1.0, 0.0
    top = max(l0, l1)
    w0, w1 = 2.0 ** (l0 - top), 2.0 ** (l1 - top)
    return w0 / (w0 + w1), w1 / (w0 + w1)


def sc_conditional(
    proc: FimProcess, boundary: BoundarySpec, y, prefix,
    pi: StationaryDistribution | None = None,
) -> tuple[float, float]:
    """Exact next-bit posterior given decided transform bits and observations."""
    from .process import stationary_distribution

    if pi is None:
        pi = stationary_distribution(proc)
    cond = BlockCondition.from_boundary(proc, pi, boundary)
    sc = ScPass(proc, boundary.block_len, y)
    for b in prefix:
        sc.decide(int(b))
    return sc.conditional(cond)


def sc_decode(
    proc: FimProcess, boundary: BoundarySpec, y, decisions,
    rng: np.random.Generator | None = None,
    pi: StationaryDistribution | None = None,
):
    """Run a full pass, deciding each bit by its policy.

    decisions maps each 1-based index to an int (a frozen bit), "information"
    (argmax, ties to 0), or "shaped" (sample from the posterior; needs rng).
    Returns (u, x) as uint8 arrays.
    """
    from .process import stationary_distribution
    from .transform import polar_transform

    if pi is None:
        pi = stationary_distribution(proc)
    cond = BlockCondition.from_boundary(proc, pi, boundary)
    sc = ScPass(proc, boundary.block_len, y)
    u = np.zeros(boundary.block_len, dtype=np.uint8)
    for i in range(1, boundary.block_len + 1):
        rule = decisions[i]
        if isinstance(rule, (int, np.integer)):
            bit = int(rule)
        else:
            p0, p1 = sc.conditional(cond)
            if rule == "information":
                bit = 0 if p0 >= p1 else 1
            elif rule == "shaped":
                if rng is None:
                    raise ValueError("shaped decisions need an rng")
                bit = int(rng.random() < p1)
            else:
                raise ValueError(f"unknown decision rule {rule!r}")
        u[i - 1] = bit
        sc.decide(bit)
    return u, polar_transform(u)


def sequence_probability(
    proc: FimProcess, boundary: BoundarySpec, x, y=None,
    pi: StationaryDistribution | None = None, log2: bool = False,
):
    """Forward-algorithm joint P(X = x [, Y = y], end in psiN | start prior).

    The start prior is the stationary law restricted and renormalized to psi0.
    O(|S|^2 N) work; with log2=True the natural underflow-free value returns.
    """
    from .process import stationary_distribution

    if pi is None:
        pi = stationary_distribution(proc)
    cond = BlockCondition.from_boundary(proc, pi, boundary)
    if len(x) != boundary.block_len:
        raise ShapeMismatch(f"{len(x)} inputs for block {boundary.block_len}")
    if y is not None and len(y) != boundary.block_len:
        raise ShapeMismatch(f"{len(y)} observations for block {boundary.block_len}")
    vec = cond.start_weights.copy()
    scale = 0.0
    for t in range(boundary.block_len):
        if y is None:
            step = proc.input_matrices[int(x[t])]
        else:
            lab = y[t] if isinstance(y[t], (int, np.integer)) else proc.obs_index[str(y[t])]
            step = proc.tensor[:, int(x[t]), int(lab), :]
        vec = vec @ step
        peak = vec.max(initial=0.0)
        if peak <= 0.0:
            return _NEG_INF if log2 else 0.0
        vec /= peak
        scale += math.log2(peak)
    tail = float(vec @ cond.final_mask)
    if tail <= 0.0:
        return _NEG_INF if log2 else 0.0
    out = math.log2(tail) + scale
    return out if log2 else 2.0 ** out
