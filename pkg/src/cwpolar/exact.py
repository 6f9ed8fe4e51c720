"""Exhaustive small-block enumeration for ground-truth bit statistics.

One depth-first sweep over all (input, observation) paths of a block builds,
for every transform-bit index i, a table keyed by the context the decoder
sees at that index: the decided transform prefix and the full observation
word. Each table entry holds the unnormalized joint mass J[s0, sN, b] of that
context together with bit value b, start state s0, and end state sN (and
optionally the midpoint state). Every conditional quantity of interest, under
any boundary or phase event, with or without state conditioning, is then a
matter of reweighting rows of these tables. None of this shares code with the
trellis decoder, so the two can check each other.
"""

from __future__ import annotations

import numpy as np

from .errors import TooLarge
from .process import FimProcess
from .transform import polar_transform

MAX_PATHS = 1 << 18


class BlockTables:
    """Per-index context tables from one exhaustive block sweep.

    tables[i - 1] maps (prefix, y) -> J, where prefix is the first i - 1
    transform bits, y is the observation word (empty tuple when observations
    are marginalized), and J is an array indexed [s0, sN, b] (with a middle
    axis [s0, sMid, sN, b] when track_middle is set).
    """

    def __init__(self, proc: FimProcess, n_bits: int, use_y: bool = True,
                 track_middle: bool = False, max_paths: int = MAX_PATHS):
        if n_bits < 1 or n_bits & (n_bits - 1):
            raise TooLarge(f"block length {n_bits} is not a power of two")
        if track_middle and n_bits < 2:
            raise TooLarge("midpoint tracking needs a block of at least 2")
        self.proc = proc
        self.n_bits = n_bits
        self.use_y = use_y
        self.track_middle = track_middle
        m = proc.n_states
        shape = (m, m, m, 2) if track_middle else (m, m, 2)
        self.tables: list[dict] = [{} for _ in range(n_bits)]
        self._shape = shape
        self._steps = self._step_matrices()
        self._paths = 0
        self._max_paths = max_paths
        start = np.eye(m)
        self._sweep(start, None, [], [], )

    def _step_matrices(self):
        """List of ((x, y_key), matrix) moves; y_key () when marginalized."""
        proc = self.proc
        moves = []
        if self.use_y:
            for x in (0, 1):
                for yi in range(len(proc.obs)):
                    mat = np.ascontiguousarray(proc.tensor[:, x, yi, :])
                    if mat.any():
                        moves.append(((x, yi), mat))
        else:
            for x in (0, 1):
                mat = proc.input_matrices[x]
                if mat.any():
                    moves.append(((x, None), mat))
        return moves

    def _sweep(self, mat, mid, xs, ys):
        t = len(xs)
        if self.track_middle and t == self.n_bits // 2:
            mid = mat
            mat = np.eye(self.proc.n_states)
        if t == self.n_bits:
            self._paths += 1
            if self._paths > self._max_paths:
                raise TooLarge(
                    f"more than {self._max_paths} nonzero paths at block "
                    f"{self.n_bits}; exhaustive sweep refused")
            self._record(mat, mid, xs, ys)
            return
        for (x, yk), step in self._steps:
            nxt = mat @ step
            if nxt.any():
                self._sweep(nxt, mid, xs + [x], ys if yk is None else ys + [yk])

    def _record(self, mat, mid, xs, ys):
        u = polar_transform(np.asarray(xs, dtype=np.uint8))
        ykey = tuple(ys)
        if self.track_middle:
            joint = np.einsum("ab,bc->abc", mid, mat)
        for i in range(self.n_bits):
            key = (tuple(int(v) for v in u[:i]), ykey)
            entry = self.tables[i].get(key)
            if entry is None:
                entry = np.zeros(self._shape)
                self.tables[i][key] = entry
            if self.track_middle:
                entry[:, :, :, int(u[i])] += joint
            else:
                entry[:, :, int(u[i])] += mat

    def contexts(self, i: int):
        """Items for 1-based index i: (prefix, y) -> J."""
        return self.tables[i - 1].items()

    def total_mass(self, start_weights, final_mask) -> float:
        """Probability of the whole block event, from any single index table."""
        total = 0.0
        for _, entry in self.contexts(1):
            j = entry.sum(axis=1) if self.track_middle else entry
            total += float(start_weights @ j.sum(axis=-1) @ final_mask)
        return total
