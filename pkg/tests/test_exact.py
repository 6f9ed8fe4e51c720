from itertools import product

import numpy as np
import pytest

from cwpolar.errors import TooLarge
from cwpolar.exact import MAX_PATHS, BlockTables
from cwpolar.process import stationary_distribution

from oracles import event_vectors, word_mass_by_x


def test_tables_match_hand_enumeration(mod2_bsc11):
    """N = 2 tables must equal explicit sums over (x, y) words."""
    proc = mod2_bsc11
    bt = BlockTables(proc, 2, use_y=True)
    m = proc.n_states
    want = [dict(), dict()]
    for x1, x2, y1, y2 in product(range(2), range(2), range(2), range(2)):
        mat = proc.tensor[:, x1, y1, :] @ proc.tensor[:, x2, y2, :]
        u1, u2 = x1 ^ x2, x2
        for i, prefix in ((0, ()), (1, (u1,))):
            key = (prefix, (y1, y2))
            entry = want[i].setdefault(key, np.zeros((m, m, 2)))
            entry[:, :, (u1, u2)[i]] += mat
    for i in (1, 2):
        got = dict(bt.contexts(i))
        assert got.keys() == want[i - 1].keys()
        for key, entry in got.items():
            np.testing.assert_allclose(entry, want[i - 1][key], atol=1e-15)


def test_marginalized_sweep_drops_observation_key(mod2_bsc11):
    bt = BlockTables(mod2_bsc11, 4, use_y=False)
    for i in (1, 4):
        for (prefix, ykey), entry in bt.contexts(i):
            assert ykey == ()
            assert len(prefix) == i - 1
    by = BlockTables(mod2_bsc11, 4, use_y=True)
    # marginalizing observations after the fact recovers the bare tables
    for i in (1, 4):
        folded: dict = {}
        for (prefix, _), entry in by.contexts(i):
            folded[prefix] = folded.get(prefix, 0) + entry
        for (prefix, _), entry in bt.contexts(i):
            np.testing.assert_allclose(folded[prefix], entry, atol=1e-12)


def test_total_mass_matches_forward_products(prefix42_const):
    proc = prefix42_const
    bt = BlockTables(proc, 4, use_y=True)
    w0, mask = event_vectors(proc, ["ε"], ["ε"])
    brute = word_mass_by_x(proc, w0, mask, 4).sum()
    assert bt.total_mass(w0, mask) == pytest.approx(brute, abs=1e-14)
    pi = stationary_distribution(proc).vector(proc)
    assert bt.total_mass(pi, np.ones(proc.n_states)) == pytest.approx(1.0, abs=1e-12)


def test_midpoint_tables_marginalize_to_plain(mod2_bsc11):
    plain = BlockTables(mod2_bsc11, 4, use_y=True)
    mid = BlockTables(mod2_bsc11, 4, use_y=True, track_middle=True)
    for i in (1, 2, 3, 4):
        got = dict(mid.contexts(i))
        for key, entry in plain.contexts(i):
            np.testing.assert_allclose(got[key].sum(axis=1), entry, atol=1e-12)


def test_midpoint_axis_is_the_half_block_state(mod3_const):
    """With a deterministic midpoint the middle axis is a point mass."""
    proc = mod3_const
    bt = BlockTables(proc, 2, use_y=False, track_middle=True)
    si = proc.state_index
    for (prefix, _), entry in bt.contexts(2):
        # at index 2 the bit is x2, so the first input is prefix[0] xor x2
        # and the state after it is forced
        for s0, b in product(range(proc.n_states), (0, 1)):
            forced = si[str((s0 + (prefix[0] ^ b)) % 3)]
            others = [k for k in range(proc.n_states) if k != forced]
            assert not entry[s0, others, :, b].any()


def test_path_budget_enforced(mod2_bsc11, mod2):
    with pytest.raises(TooLarge):
        BlockTables(mod2_bsc11, 4, use_y=True, max_paths=100)
    BlockTables(mod2, 2, use_y=True, max_paths=4)
    with pytest.raises(TooLarge):
        BlockTables(mod2, 2, use_y=True, max_paths=3)
    assert MAX_PATHS == 1 << 18


def test_block_length_validation(mod2):
    with pytest.raises(TooLarge):
        BlockTables(mod2, 3)
    with pytest.raises(TooLarge):
        BlockTables(mod2, 1, track_middle=True)
