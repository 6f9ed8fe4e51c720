"""Reliability parameters of transform bits: entropy H, Bhattacharyya Z,
total variation K.

Every quantity here is a weighted functional of a conditional table: rows
(w, p0, p1) where w is the probability of a context (decided prefix,
observation word, possibly boundary states) and (p0, p1) is the posterior of
the next transform bit in that context. Exact tables come from the
exhaustive block sweep; Monte Carlo profiles evaluate the same integrands on
sampled frames with the trellis decoder and report standard errors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyEvent, Violation
from .exact import BlockTables
from .process import (
    BoundarySpec,
    FimProcess,
    PhaseStructure,
    StationaryDistribution,
    detect_phases,
    phase_class,
    sample_paths,
    stationary_distribution,
)
from .sctrellis import BlockCondition, ScPass, conditional_from_pair
from .transform import polar_transform

_TINY = 1e-300


@dataclass(frozen=True)
class ConditionalTable:
    """Rows (w, p0, p1) with weights summing to 1."""

    rows: np.ndarray
    descriptor: str = ""

    @staticmethod
    def from_rows(weights, p0, p1, descriptor: str = "") -> "ConditionalTable":
        w = np.asarray(weights, dtype=float)
        keep = w > 0
        w, a, b = w[keep], np.asarray(p0, dtype=float)[keep], np.asarray(p1, dtype=float)[keep]
        total = w.sum()
        if total <= 0:
            raise EmptyEvent(f"conditional table has no mass: {descriptor}")
        return ConditionalTable(np.column_stack([w / total, a, b]), descriptor)


def hzk_from_table(table: ConditionalTable) -> tuple[float, float, float]:
    """(entropy, Bhattacharyya, total variation) of a conditional table."""
    w, p0, p1 = table.rows[:, 0], table.rows[:, 1], table.rows[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        plog = np.where(p0 > 0, p0 * np.log2(np.maximum(p0, _TINY)), 0.0)
        plog += np.where(p1 > 0, p1 * np.log2(np.maximum(p1, _TINY)), 0.0)
    h = float(-(w * plog).sum())
    z = float((w * 2.0 * np.sqrt(p0 * p1)).sum())
    k = float((w * np.abs(p0 - p1)).sum())
    return h, z, k


# ---------------------------------------------------------------------------
# Conditioning descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conditioning:
    """What the next-bit posterior is conditioned on.

    use_y: include the observation word. event: "boundary" (start and end
    state sets), "phase" (start state in one phase class, free end), "state"
    (one fixed start state, free end), or "none". with_states: additionally
    condition on the exact boundary state pair, giving the state-resolved
    (hatted) parameter.
    """

    use_y: bool = True
    event: str = "boundary"
    delta: int | None = None
    with_states: bool = False
    state: str | None = None

    def __post_init__(self):
        if self.event not in ("boundary", "phase", "none", "state"):
            raise ValueError(f"unknown event kind {self.event!r}")
        if self.event == "phase" and self.delta is None:
            raise ValueError("phase conditioning needs delta")
        if self.event == "state" and self.state is None:
            raise ValueError("state conditioning needs the start state")

    def notation(self, index: int, block_len: int, letter: str = "") -> str:
        parts = []
        if index > 1:
            parts.append(f"U_1^{index - 1}")
        if self.use_y:
            parts.append(f"Y_1^{block_len}")
        if self.with_states:
            parts.append(f"S_0,S_{block_len}")
        if self.event == "boundary":
            parts.append(f"A_{block_len}")
        elif self.event == "phase":
            parts.append(f"D({self.delta})")
        elif self.event == "state":
            parts.append(f"S_0={self.state}")
        body = f"U_{index}|" + ",".join(parts) if parts else f"U_{index}"
        return f"{letter}({body})" if letter else body


def _event_vectors(proc, pi, ps, conditioning, boundary):
    """Start-weight vector and end mask realizing the conditioning event."""
    si = proc.state_index
    pivec = pi.vector(proc)
    if conditioning.event == "boundary":
        if boundary is None:
            raise ValueError("boundary conditioning needs a BoundarySpec")
        w0 = np.zeros(proc.n_states)
        for s in boundary.psi0:
            w0[si[s]] = pivec[si[s]]
        mask = np.zeros(proc.n_states)
        for s in boundary.psiN:
            mask[si[s]] = 1.0
    elif conditioning.event == "phase":
        w0 = np.zeros(proc.n_states)
        for s in phase_class(ps, conditioning.delta):
            w0[si[s]] = pivec[si[s]]
        mask = np.ones(proc.n_states)
    elif conditioning.event == "state":
        if conditioning.state not in si:
            raise EmptyEvent(f"unknown start state {conditioning.state!r}")
        w0 = np.zeros(proc.n_states)
        w0[si[conditioning.state]] = 1.0
        mask = np.ones(proc.n_states)
    else:
        w0 = pivec.copy()
        mask = np.ones(proc.n_states)
    if w0.sum() <= 0:
        raise EmptyEvent("conditioning event has no stationary mass")
    return w0, mask


# ---------------------------------------------------------------------------
# Exact profiles
# ---------------------------------------------------------------------------

def exact_index_table(
    tables: BlockTables, index: int, conditioning: Conditioning,
    pi: StationaryDistribution, ps: PhaseStructure,
    boundary: BoundarySpec | None = None,
) -> ConditionalTable:
    """Ground-truth conditional table for one transform bit."""
    proc = tables.proc
    if tables.use_y != conditioning.use_y:
        raise ValueError("table sweep and conditioning disagree on observations")
    w0, mask = _event_vectors(proc, pi, ps, conditioning, boundary)
    weights, q0s, q1s = [], [], []
    for _, entry in tables.contexts(index):
        j = entry.sum(axis=1) if tables.track_middle else entry
        if conditioning.with_states:
            wgt = w0[:, None] * j.sum(axis=-1) * mask[None, :]
            keep = wgt > 0
            tot = j.sum(axis=-1)
            with np.errstate(invalid="ignore"):
                frac0 = np.where(tot > 0, j[:, :, 0] / np.where(tot > 0, tot, 1.0), 0.0)
            weights.append(wgt[keep].ravel())
            q0s.append(frac0[keep].ravel())
            q1s.append(1.0 - frac0[keep].ravel())
        else:
            q0 = float(w0 @ j[:, :, 0] @ mask)
            q1 = float(w0 @ j[:, :, 1] @ mask)
            if q0 + q1 > 0:
                weights.append(np.array([q0 + q1]))
                q0s.append(np.array([q0 / (q0 + q1)]))
                q1s.append(np.array([q1 / (q0 + q1)]))
    if not weights:
        raise EmptyEvent("no context carries mass under the event")
    return ConditionalTable.from_rows(
        np.concatenate(weights), np.concatenate(q0s), np.concatenate(q1s),
        conditioning.notation(index, tables.n_bits))


@dataclass
class IndexProfile:
    """Per-index H/Z/K over one block, with notation and provenance."""

    block_len: int
    conditioning: Conditioning
    estimator: str
    h: np.ndarray
    z: np.ndarray
    k: np.ndarray
    stderr_h: np.ndarray
    stderr_z: np.ndarray
    stderr_k: np.ndarray
    seed: int | None = None
    n_frames: int = 0
    notes: dict = field(default_factory=dict)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(1, self.block_len + 1)

    def rows(self):
        for i in self.indices:
            yield {
                "i": int(i),
                "h": float(self.h[i - 1]),
                "z": float(self.z[i - 1]),
                "k": float(self.k[i - 1]),
                "stderr_h": float(self.stderr_h[i - 1]),
                "stderr_z": float(self.stderr_z[i - 1]),
                "stderr_k": float(self.stderr_k[i - 1]),
                "conditioning": self.conditioning.notation(int(i), self.block_len),
                "estimator": self.estimator,
                "seed": "" if self.seed is None else int(self.seed),
            }


PROFILE_COLUMNS = ["i", "h", "z", "k", "stderr_h", "stderr_z", "stderr_k",
                   "conditioning", "estimator", "seed"]


def write_profile_csv(path, profile: IndexProfile) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=PROFILE_COLUMNS)
        writer.writeheader()
        for row in profile.rows():
            writer.writerow({k: f"{v:.12g}" if isinstance(v, float) else v
                             for k, v in row.items()})


def exact_profile(
    proc: FimProcess, n_bits: int, conditioning: Conditioning,
    boundary: BoundarySpec | None = None,
    tables: BlockTables | None = None,
    pi: StationaryDistribution | None = None,
    ps: PhaseStructure | None = None,
) -> IndexProfile:
    """Exhaustive H/Z/K for every index of one block."""
    if pi is None:
        pi = stationary_distribution(proc)
    if ps is None:
        ps = detect_phases(proc)
    if tables is None:
        tables = BlockTables(proc, n_bits, use_y=conditioning.use_y)
    h = np.zeros(n_bits)
    z = np.zeros(n_bits)
    k = np.zeros(n_bits)
    for i in range(1, n_bits + 1):
        table = exact_index_table(tables, i, conditioning, pi, ps, boundary)
        h[i - 1], z[i - 1], k[i - 1] = hzk_from_table(table)
    zero = np.zeros(n_bits)
    return IndexProfile(n_bits, conditioning, "exact", h, z, k,
                        zero, zero.copy(), zero.copy())


# ---------------------------------------------------------------------------
# Monte Carlo profiles
# ---------------------------------------------------------------------------

def mc_profile(
    proc: FimProcess, n_bits: int, conditioning: Conditioning,
    boundary: BoundarySpec | None = None,
    n_frames: int = 1000, seed: int = 0,
    pi: StationaryDistribution | None = None,
    ps: PhaseStructure | None = None,
) -> IndexProfile:
    """Sampled H/Z/K per index, with per-index standard errors.

    Frames are drawn from the conditioning event; per frame the trellis pass
    supplies the exact next-bit posterior along the true prefix, and the
    H/Z/K integrands (-log2 of the realized bit's posterior, 2 sqrt(p0 p1),
    |p0 - p1|) are averaged across frames.
    """
    if pi is None:
        pi = stationary_distribution(proc)
    if ps is None:
        ps = detect_phases(proc)
    rng = np.random.default_rng(seed)
    w0, mask = _event_vectors(proc, pi, ps, conditioning, boundary)
    psi0 = [s for s in proc.states if w0[proc.state_index[s]] > 0]
    psiN = [s for s in proc.states if mask[proc.state_index[s]] > 0]
    xs, ys, states = sample_paths(proc, psi0, psiN, n_bits, rng, n_frames)
    cond = BlockCondition(w0 / w0.sum(), mask)
    sums = np.zeros((3, n_bits))
    sq = np.zeros((3, n_bits))
    for f in range(n_frames):
        u = polar_transform(xs[f].astype(np.uint8))
        ylab = ys[f] if conditioning.use_y else None
        sc = ScPass(proc, n_bits, ylab)
        s0 = int(states[f, 0]) if conditioning.with_states else None
        sN = int(states[f, n_bits]) if conditioning.with_states else None
        for i in range(n_bits):
            e0, e1 = sc.query_pair()
            p0, p1 = conditional_from_pair(e0, e1, cond, s0, sN)
            bit = int(u[i])
            vals = (-np.log2(max((p0, p1)[bit], _TINY)),
                    2.0 * np.sqrt(p0 * p1), abs(p0 - p1))
            for q in range(3):
                sums[q, i] += vals[q]
                sq[q, i] += vals[q] * vals[q]
            sc.decide(bit)
    mean = sums / n_frames
    var = np.maximum(sq / n_frames - mean ** 2, 0.0)
    stderr = np.sqrt(var / n_frames)
    return IndexProfile(n_bits, conditioning, "monte-carlo",
                        mean[0], mean[1], mean[2],
                        stderr[0], stderr[1], stderr[2],
                        seed=seed, n_frames=n_frames)


# ---------------------------------------------------------------------------
# Event decomposition
# ---------------------------------------------------------------------------

def event_decomposition_check(
    proc: FimProcess, n_bits: int, conditioning: Conditioning,
    index: int, boundary: BoundarySpec | None = None,
    tables: BlockTables | None = None,
    tol: float = 1e-12, raise_on_error: bool = True,
) -> dict:
    """Verify an event splits into its boundary-state-pair sub-events.

    The event (boundary, phase, or unconditioned) partitions into the atoms
    (S_0, S_end) = (s0, sN) it contains. Checks, per context, that the
    event-conditioned bit mass equals the pair-weighted mixture of
    state-conditioned masses (an identity), and the three mixture directions
    for the table functionals: the mixture's Bhattacharyya and entropy are at
    least the pair-averaged ones, its total variation at most. Raises
    Violation when any of these breaks beyond tol.
    """
    pi = stationary_distribution(proc)
    ps = detect_phases(proc)
    if conditioning.with_states:
        raise ValueError("pass the plain event; the pair-resolved side is derived")
    if tables is None:
        tables = BlockTables(proc, n_bits, use_y=conditioning.use_y)
    mixed = exact_index_table(tables, index, conditioning, pi, ps, boundary)
    resolved = exact_index_table(
        tables, index,
        Conditioning(conditioning.use_y, conditioning.event, conditioning.delta,
                     with_states=True, state=conditioning.state),
        pi, ps, boundary)
    w0, mask = _event_vectors(proc, pi, ps, conditioning, boundary)
    worst = 0.0
    for _, entry in tables.contexts(index):
        j = entry.sum(axis=1) if tables.track_middle else entry
        lhs0 = float(w0 @ j[:, :, 0] @ mask)
        lhs1 = float(w0 @ j[:, :, 1] @ mask)
        pairs = w0[:, None] * j.sum(axis=-1) * mask[None, :]
        tot = j.sum(axis=-1)
        safe = np.where(tot > 0, tot, 1.0)
        rhs0 = float((pairs * j[:, :, 0] / safe).sum())
        rhs1 = float((pairs * j[:, :, 1] / safe).sum())
        worst = max(worst, abs(lhs0 - rhs0), abs(lhs1 - rhs1))
    h_mix, z_mix, k_mix = hzk_from_table(mixed)
    h_res, z_res, k_res = hzk_from_table(resolved)
    ok = (worst <= tol and k_mix <= k_res + tol
          and z_mix >= z_res - tol and h_mix >= h_res - tol)
    report = {"ok": bool(ok), "event": conditioning.notation(index, n_bits),
              "max_identity_gap": worst,
              "h_mixture": h_mix, "h_pairwise": h_res,
              "z_mixture": z_mix, "z_pairwise": z_res,
              "k_mixture": k_mix, "k_pairwise": k_res}
    if raise_on_error and not ok:
        raise Violation(f"event decomposition failed: {report}")
    return report
