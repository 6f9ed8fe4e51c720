"""Empirical checks of the polarization machinery.

Each check compares quantities computed by the exhaustive block sweep against
the bound or identity claimed for them, and reports per-row slack: slack is
(bound minus value), so any slack below -tol is a violation. Checks whose
hypotheses restrict the block length (a block must cover at least one full
phase-period factor d, triple-state certificates must be positive) annotate
every row with whether the hypothesis holds; rows outside the hypothesis are
reported but never counted as failures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotYetMixed, TooLarge
from .exact import MAX_PATHS, BlockTables
from .params import Conditioning, exact_profile
from .process import (
    BoundarySpec,
    FimProcess,
    detect_phases,
    mixing_certificate,
    mixing_constant,
    phase_class,
    sample_paths,
    stationary_distribution,
)

_TINY = 1e-300


@dataclass
class CheckReport:
    """Uniform result shape: per-row dicts plus an overall verdict.

    ok considers only rows whose hypothesis holds (in_hypothesis absent or
    true); meta carries the constants the check used.
    """

    name: str
    ok: bool
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def worst_slack(self) -> float:
        slacks = [v for r in self.rows if r.get("in_hypothesis", True)
                  for k, v in r.items() if k.endswith("slack")]
        return min(slacks) if slacks else math.inf


class TableCache:
    """Memoizes exhaustive sweeps per (block length, observations, midpoint)."""

    def __init__(self, proc: FimProcess, max_paths: int = MAX_PATHS):
        self.proc = proc
        self.max_paths = max_paths
        self._store: dict = {}

    def get(self, n_bits: int, use_y: bool, track_middle: bool = False) -> BlockTables:
        key = (n_bits, use_y, track_middle)
        if key not in self._store:
            self._store[key] = BlockTables(self.proc, n_bits, use_y=use_y,
                                           track_middle=track_middle,
                                           max_paths=self.max_paths)
        return self._store[key]


def _context(proc, cache):
    pi = stationary_distribution(proc)
    ps = detect_phases(proc)
    return pi, ps, cache if cache is not None else TableCache(proc)


# ---------------------------------------------------------------------------
# Martingale behavior across one transform level
# ---------------------------------------------------------------------------

def martingale_check(
    proc: FimProcess, delta: int, n_max_exact: int,
    use_y: bool = True, tol: float = 1e-9, cache: TableCache | None = None,
) -> CheckReport:
    """State-resolved entropy must not shrink, plain entropy must not grow.

    For each level n (parent block 2^n, children in the doubled block) and
    each parent index i, the children of i sit at indices 2i-1 and 2i. The
    averaged child state-resolved entropy is checked against the parent from
    below (sub-martingale) and the averaged plain entropy from above
    (super-martingale). The hypothesis requires the parent block to span a
    full power-of-two phase factor: 2^n >= d.
    """
    pi, ps, cache = _context(proc, cache)
    rows = []
    ok = True
    for n in range(1, n_max_exact + 1):
        nb = 2 ** n
        in_hyp = nb >= ps.d
        hat_p = exact_profile(proc, nb, Conditioning(use_y, "phase", delta, True),
                              tables=cache.get(nb, use_y), pi=pi, ps=ps)
        plain_p = exact_profile(proc, nb, Conditioning(use_y, "phase", delta, False),
                                tables=cache.get(nb, use_y), pi=pi, ps=ps)
        hat_c = exact_profile(proc, 2 * nb, Conditioning(use_y, "phase", delta, True),
                              tables=cache.get(2 * nb, use_y), pi=pi, ps=ps)
        plain_c = exact_profile(proc, 2 * nb, Conditioning(use_y, "phase", delta, False),
                                tables=cache.get(2 * nb, use_y), pi=pi, ps=ps)
        for i in range(1, nb + 1):
            child_hat = 0.5 * (hat_c.h[2 * i - 2] + hat_c.h[2 * i - 1])
            child_plain = 0.5 * (plain_c.h[2 * i - 2] + plain_c.h[2 * i - 1])
            sub = child_hat - hat_p.h[i - 1]
            sup = plain_p.h[i - 1] - child_plain
            rows.append({"delta": delta, "level": n, "i": i,
                         "parent_resolved": hat_p.h[i - 1], "children_resolved": child_hat,
                         "sub_slack": sub,
                         "parent_plain": plain_p.h[i - 1], "children_plain": child_plain,
                         "super_slack": sup,
                         "in_hypothesis": in_hyp})
            if in_hyp and (sub < -tol or sup < -tol):
                ok = False
    return CheckReport("martingale", ok, rows,
                       {"delta": delta, "d": ps.d, "use_y": use_y, "tol": tol})


# ---------------------------------------------------------------------------
# One-step transform inequalities
# ---------------------------------------------------------------------------

def transform_inequality_check(
    proc: FimProcess, delta: int, n: int,
    use_y: bool = True, tol: float = 1e-9, cache: TableCache | None = None,
) -> CheckReport:
    """Z and state-resolved K across one block doubling.

    With m = M(delta) and parent block N = 2^n, for every parent index i the
    children at 2i-1 / 2i must satisfy z_minus <= 2 m z, z_plus <= m z^2,
    k_minus <= d m k^2, and k_plus <= 2 k, where z is phase-conditioned with
    observations and k additionally conditions on the boundary state pair.
    Hypothesis: N >= d.
    """
    pi, ps, cache = _context(proc, cache)
    nb = 2 ** n
    m = mixing_constant(ps, pi, delta)
    in_hyp = nb >= ps.d
    zc = Conditioning(use_y, "phase", delta, False)
    kc = Conditioning(use_y, "phase", delta, True)
    z_p = exact_profile(proc, nb, zc, tables=cache.get(nb, use_y), pi=pi, ps=ps)
    k_p = exact_profile(proc, nb, kc, tables=cache.get(nb, use_y), pi=pi, ps=ps)
    z_c = exact_profile(proc, 2 * nb, zc, tables=cache.get(2 * nb, use_y), pi=pi, ps=ps)
    k_c = exact_profile(proc, 2 * nb, kc, tables=cache.get(2 * nb, use_y), pi=pi, ps=ps)
    rows = []
    ok = True
    for i in range(1, nb + 1):
        z, zm, zp = z_p.z[i - 1], z_c.z[2 * i - 2], z_c.z[2 * i - 1]
        k, km, kp = k_p.k[i - 1], k_c.k[2 * i - 2], k_c.k[2 * i - 1]
        row = {"delta": delta, "level": n, "i": i,
               "z": z, "z_minus": zm, "z_plus": zp,
               "k": k, "k_minus": km, "k_plus": kp,
               "z_minus_slack": 2 * m * z - zm,
               "z_plus_slack": m * z * z - zp,
               "k_minus_slack": ps.d * m * k * k - km,
               "k_plus_slack": 2 * k - kp,
               "in_hypothesis": in_hyp}
        rows.append(row)
        if in_hyp and min(row["z_minus_slack"], row["z_plus_slack"],
                          row["k_minus_slack"], row["k_plus_slack"]) < -tol:
            ok = False
    return CheckReport("transform-inequalities", ok, rows,
                       {"delta": delta, "m_delta": m, "d": ps.d, "n": n,
                        "use_y": use_y, "tol": tol})


# ---------------------------------------------------------------------------
# Triple-state entropy identities across one doubling
# ---------------------------------------------------------------------------

def _totient(q: int) -> int:
    out = q
    v, p = q, 2
    while p * p <= v:
        if v % p == 0:
            while v % p == 0:
                v //= p
            out -= out // p
        p += 1
    if v > 1:
        out -= out // v
    return out


def _entropy_of(weights, p0) -> float:
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        return 0.0
    w = w / total
    a = np.asarray(p0, dtype=float)
    b = 1.0 - a
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(a > 0, a * np.log2(np.maximum(a, _TINY)), 0.0)
        e += np.where(b > 0, b * np.log2(np.maximum(b, _TINY)), 0.0)
    return float(-(w * e).sum())


def triple_entropy_check(
    proc: FimProcess, delta: int, n: int,
    use_y: bool = True, tol: float = 1e-9, cache: TableCache | None = None,
) -> CheckReport:
    """Per-state-pair and per-state-triple entropies across one doubling.

    For parent block N = 2^n: gamma(s0, sN) is the parent bit entropy given
    the exact state pair; alpha(s0, sN, s2N) is the doubled-block minus-bit
    entropy given the state triple; beta is the average of the two gammas
    along the triple. Checked per parent index i, over phase-consistent
    triples with the start state in class delta:
      * the state-resolved minus entropy is at least d * sum pi3 * alpha,
      * the state-resolved parent entropy equals d * sum pi3 * beta,
      * alpha >= beta for every triple.
    Hypothesis: N >= d and every in-class triple has positive probability.
    Rows carry whether the totient of the odd period factor divides n, the
    hypothesis under which a strict alpha-beta gap is claimed at mid-range
    entropies; the gap itself is only reported, not asserted.
    """
    pi, ps, cache = _context(proc, cache)
    nb = 2 ** n
    si = proc.state_index
    pivec = pi.vector(proc)
    pn = np.linalg.matrix_power(proc.step_matrix, nb)
    in_class = [si[s] for s in phase_class(ps, delta)]
    phase_of = np.array([ps.phase[s] for s in proc.states])
    mid_phase = {a: (phase_of[a] + nb) % ps.period for a in in_class}
    triples = []
    for a in in_class:
        for b in np.flatnonzero(phase_of == mid_phase[a]):
            if pn[a, b] <= 0:
                continue
            for c in np.flatnonzero(phase_of == (phase_of[b] + nb) % ps.period):
                if pn[b, c] <= 0:
                    continue
                triples.append((int(a), int(b), int(c), pivec[a] * pn[a, b] * pn[b, c]))
    try:
        mixing_certificate(proc, ps, pi, delta, nb)
        positive = True
    except NotYetMixed:
        positive = False
    in_hyp = nb >= ps.d and positive and bool(triples)
    tab_n = cache.get(nb, use_y)
    tab_2n = cache.get(2 * nb, use_y, track_middle=True)
    # gamma per (s0, sN) pair and index, from the parent-block tables
    rows = []
    ok = True
    hat = exact_profile(proc, nb, Conditioning(use_y, "phase", delta, True),
                        tables=tab_n, pi=pi, ps=ps)
    minus_hat = exact_profile(proc, 2 * nb, Conditioning(use_y, "phase", delta, True),
                              tables=tab_2n, pi=pi, ps=ps)
    needed_pairs = {(a, b) for a, b, _, _ in triples} | {(b, c) for _, b, c, _ in triples}
    for i in range(1, nb + 1):
        gamma = {}
        entries_n = list(tab_n.contexts(i))
        for a, b in needed_pairs:
            w_ctx = np.array([e[a, b, :].sum() for _, e in entries_n])
            if w_ctx.sum() <= 0:
                gamma[(a, b)] = 0.0
                continue
            p0 = np.array([e[a, b, 0] / e[a, b, :].sum() if e[a, b, :].sum() > 0 else 0.0
                           for _, e in entries_n])
            gamma[(a, b)] = _entropy_of(w_ctx, p0)
        entries_2n = list(tab_2n.contexts(2 * i - 1))
        alpha_bound = 0.0
        beta_sum = 0.0
        worst_gap = math.inf
        for a, b, c, w3 in triples:
            w_ctx = np.array([e[a, b, c, :].sum() for _, e in entries_2n])
            p0 = np.array([e[a, b, c, 0] / e[a, b, c, :].sum()
                           if e[a, b, c, :].sum() > 0 else 0.0 for _, e in entries_2n])
            alpha = _entropy_of(w_ctx, p0)
            beta = 0.5 * (gamma[(a, b)] + gamma[(b, c)])
            alpha_bound += w3 * alpha
            beta_sum += w3 * beta
            worst_gap = min(worst_gap, alpha - beta)
        row = {"delta": delta, "level": n, "i": i,
               "minus_resolved": minus_hat.h[2 * i - 2],
               "alpha_lower_bound": ps.d * alpha_bound,
               "minus_slack": minus_hat.h[2 * i - 2] - ps.d * alpha_bound,
               "parent_resolved": hat.h[i - 1],
               "beta_identity": ps.d * beta_sum,
               "identity_gap": abs(hat.h[i - 1] - ps.d * beta_sum),
               "alpha_beta_slack": worst_gap if triples else 0.0,
               "in_hypothesis": in_hyp,
               "totient_divides_level": n % _totient(ps.q) == 0}
        rows.append(row)
        if in_hyp and (row["minus_slack"] < -tol or row["identity_gap"] > tol
                       or row["alpha_beta_slack"] < -tol):
            ok = False
    return CheckReport("triple-entropy", ok, rows,
                       {"delta": delta, "d": ps.d, "q": ps.q, "n": n,
                        "n_triples": len(triples), "use_y": use_y, "tol": tol})


# ---------------------------------------------------------------------------
# Mixing across adjacent blocks
# ---------------------------------------------------------------------------

def _word_matrices(proc: FimProcess, n_bits: int, use_y: bool, max_paths: int):
    """Path matrices of every positive-probability (input, observation) word."""
    moves = []
    if use_y:
        for x in (0, 1):
            for yi in range(len(proc.obs)):
                mat = np.ascontiguousarray(proc.tensor[:, x, yi, :])
                if mat.any():
                    moves.append(mat)
    else:
        moves = [proc.input_matrices[0], proc.input_matrices[1]]
    out = []

    def walk(mat, depth):
        if depth == n_bits:
            out.append(mat)
            if len(out) > max_paths:
                raise TooLarge(f"more than {max_paths} words at block {n_bits}")
            return
        for step in moves:
            nxt = mat @ step
            if nxt.any():
                walk(nxt, depth + 1)

    walk(np.eye(proc.n_states), 0)
    return out


def mixing_check(
    proc: FimProcess, delta: int, n_bits: int,
    use_y: bool = True, tol: float = 1e-10, max_paths: int = MAX_PATHS,
) -> CheckReport:
    """Adjacent-block dependence is bounded by the phase-class constant.

    Exhaustively enumerates every positive singleton event a on the first
    block and b on the following block, and verifies
    P(a and b | start phase class) <= M(delta) P(a | .) P(b | .).
    Zero-probability singletons hold trivially and are skipped.
    """
    pi = stationary_distribution(proc)
    ps = detect_phases(proc)
    m = mixing_constant(ps, pi, delta)
    si = proc.state_index
    w0 = np.zeros(proc.n_states)
    for s in phase_class(ps, delta):
        w0[si[s]] = pi.pi[s]
    w0 /= w0.sum()
    words = _word_matrices(proc, n_bits, use_y, max_paths)
    ones = np.ones(proc.n_states)
    va = np.stack([w0 @ w for w in words])           # event a, start-conditioned
    wb = np.stack([w @ ones for w in words], axis=1)  # event b, end-summed
    p_a = va @ ones
    p_b = (w0 @ np.linalg.matrix_power(proc.step_matrix, n_bits)) @ wb
    p_ab = va @ wb
    bound = m * np.outer(p_a, p_b)
    worst = float((p_ab - bound).max())
    ok = worst <= tol
    in_hyp = n_bits >= 1 and n_bits & (n_bits - 1) == 0 and n_bits >= ps.d
    return CheckReport("mixing", ok,
                       [{"worst_violation": worst, "in_hypothesis": in_hyp}],
                       {"delta": delta, "m_delta": m, "n_bits": n_bits,
                        "n_words": len(words), "tol": tol})


# ---------------------------------------------------------------------------
# Boundary-event bounds
# ---------------------------------------------------------------------------

def boundary_bound_check(
    proc: FimProcess, boundary: BoundarySpec,
    tol: float = 1e-10, cache: TableCache | None = None,
) -> CheckReport:
    """Boundary-conditioned Z and K against their phase-conditioned bounds.

    With xi = 1 / (mu d), mu the minimum in-class state-triple probability at
    this block length: per index, Z given observations and the boundary event
    is at most xi times Z given the phase class, and K without observations
    given the boundary event is at most xi times the state-resolved K given
    the phase class.
    """
    pi, ps, cache = _context(proc, cache)
    nb = boundary.block_len
    delta = boundary.delta(ps)
    cert = mixing_certificate(proc, ps, pi, delta, nb)
    xi = cert.xi
    z_lhs = exact_profile(proc, nb, Conditioning(True, "boundary"),
                          boundary=boundary, tables=cache.get(nb, True), pi=pi, ps=ps)
    z_rhs = exact_profile(proc, nb, Conditioning(True, "phase", delta),
                          tables=cache.get(nb, True), pi=pi, ps=ps)
    k_lhs = exact_profile(proc, nb, Conditioning(False, "boundary"),
                          boundary=boundary, tables=cache.get(nb, False), pi=pi, ps=ps)
    k_rhs = exact_profile(proc, nb, Conditioning(False, "phase", delta, True),
                          tables=cache.get(nb, False), pi=pi, ps=ps)
    rows = []
    ok = True
    for i in range(1, nb + 1):
        row = {"i": i,
               "z_boundary": z_lhs.z[i - 1], "z_phase": z_rhs.z[i - 1],
               "z_slack": xi * z_rhs.z[i - 1] - z_lhs.z[i - 1],
               "k_boundary": k_lhs.k[i - 1], "k_phase_resolved": k_rhs.k[i - 1],
               "k_slack": xi * k_rhs.k[i - 1] - k_lhs.k[i - 1]}
        rows.append(row)
        if min(row["z_slack"], row["k_slack"]) < -tol:
            ok = False
    return CheckReport("boundary-bounds", ok, rows,
                       {"delta": delta, "xi": xi, "mu": cert.mu, "d": ps.d,
                        "block_len": nb, "tol": tol})


# ---------------------------------------------------------------------------
# Parameter relations
# ---------------------------------------------------------------------------

def parameter_relations_check(h, z, k, tol: float = 1e-12) -> CheckReport:
    """Pointwise laws tying the three parameters of one conditional table.

    k + z >= 1, h <= z, z <= sqrt(h), and h^2 + k^2 <= 1 hold for every
    (entropy, Bhattacharyya, total variation) triple computed from a common
    table. The square-root forms imply the threshold rules used to convert
    between parameter regimes, for example h <= eta^2 forces z <= eta and
    h >= sqrt(1 - eta^2) forces k <= eta.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    k = np.atleast_1d(np.asarray(k, dtype=float))
    rows = []
    ok = True
    for i in range(h.size):
        row = {"i": i + 1,
               "kz_slack": k[i] + z[i] - 1.0,
               "hz_slack": z[i] - h[i],
               "z_sqrth_slack": math.sqrt(max(h[i], 0.0)) - z[i],
               "hk_circle_slack": 1.0 - (h[i] ** 2 + k[i] ** 2)}
        rows.append(row)
        if min(row.values()) < -tol:
            ok = False
    return CheckReport("parameter-relations", ok, rows, {"tol": tol})


# ---------------------------------------------------------------------------
# Polarization fractions
# ---------------------------------------------------------------------------

def polarization_fractions(profile, beta: float = 0.1, sigma: float = 3.0) -> dict:
    """Fractions of indices whose z (or k) clears the 2^(-N^beta) threshold.

    An index counts only when its estimate plus sigma standard errors is
    still below the threshold, so Monte Carlo noise cannot inflate the
    fraction.
    """
    nb = profile.block_len
    thr = 2.0 ** (-(nb ** beta))
    good_z = (profile.z + sigma * profile.stderr_z < thr)
    good_k = (profile.k + sigma * profile.stderr_k < thr)
    return {"block_len": nb, "beta": beta, "threshold": thr, "sigma": sigma,
            "frac_good_z": float(good_z.mean()), "n_good_z": int(good_z.sum()),
            "frac_good_k": float(good_k.mean()), "n_good_k": int(good_k.sum())}


# ---------------------------------------------------------------------------
# Entropy rates
# ---------------------------------------------------------------------------

def entropy_rate_estimate(
    proc: FimProcess, n_bits: int,
    use_y: bool = True, start=("stationary",),
    method: str = "exact", n_frames: int = 1000, seed: int = 0,
    cache: TableCache | None = None,
) -> dict:
    """Per-symbol conditional entropy of one block.

    start selects the initial conditioning: ("stationary",), ("state", s), or
    ("phase", delta). Exact mode sums the exhaustive per-index entropies and
    divides by the block length. Monte Carlo mode averages per-frame exact
    -log2 posteriors of the sampled input word given the observations and the
    start conditioning, which is unbiased for the same total.
    """
    pi = stationary_distribution(proc)
    ps = detect_phases(proc)
    si = proc.state_index
    kind = start[0]
    if kind == "state":
        conditioning = Conditioning(use_y, "state", state=str(start[1]))
    elif kind == "phase":
        conditioning = Conditioning(use_y, "phase", int(start[1]))
    elif kind == "stationary":
        conditioning = Conditioning(use_y, "none")
    else:
        raise ValueError(f"unknown start conditioning {start!r}")
    out = {"block_len": n_bits, "use_y": use_y, "start": "/".join(map(str, start)),
           "method": method}
    if method == "exact":
        cache = cache if cache is not None else TableCache(proc)
        prof = exact_profile(proc, n_bits, conditioning,
                             tables=cache.get(n_bits, use_y), pi=pi, ps=ps)
        total = float(prof.h.sum())
        out.update(total_entropy=total, rate=total / n_bits)
        return out
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    from .params import _event_vectors

    w0, _ = _event_vectors(proc, pi, ps, conditioning, None)
    psi0 = [s for s in proc.states if w0[si[s]] > 0]
    rng = np.random.default_rng(seed)
    xs, ys, _ = sample_paths(proc, psi0, list(proc.states), n_bits, rng, n_frames)
    start_w = w0 / w0.sum()
    vals = np.empty(n_frames)
    for f in range(n_frames):
        joint = _forward_log2(proc, start_w, xs[f], ys[f] if use_y else None)
        if use_y:
            marg = _forward_log2(proc, start_w, None, ys[f])
            vals[f] = -(joint - marg)
        else:
            vals[f] = -joint
    total = float(vals.mean())
    out.update(total_entropy=total, rate=total / n_bits,
               stderr_total=float(vals.std(ddof=1) / math.sqrt(n_frames)),
               n_frames=n_frames, seed=seed)
    return out


def _forward_log2(proc, start_w, xs, ys):
    vec = start_w.copy()
    scale = 0.0
    n = len(xs) if xs is not None else len(ys)
    for t in range(n):
        if xs is None:
            step = proc.tensor[:, :, int(ys[t]), :].sum(axis=1)
        elif ys is None:
            step = proc.input_matrices[int(xs[t])]
        else:
            step = proc.tensor[:, int(xs[t]), int(ys[t]), :]
        vec = vec @ step
        peak = vec.max(initial=0.0)
        if peak <= 0.0:
            return -math.inf
        vec /= peak
        scale += math.log2(peak)
    return math.log2(vec.sum()) + scale
