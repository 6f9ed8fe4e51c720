import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cwpolar.analysis import TableCache
from cwpolar.chains import (build_condensed_chain, build_mod_chain,
                            build_prefix_chain, build_window_chain)
from cwpolar.process import (attach_channel, channel_bsc, channel_constant,
                             channel_noiseless)


@pytest.fixture(scope="session")
def prefix42():
    return build_prefix_chain(4, 2)


@pytest.fixture(scope="session")
def prefix42_const(prefix42):
    return attach_channel(prefix42, channel_constant())


@pytest.fixture(scope="session")
def condensed42():
    return build_condensed_chain(4, 2)


@pytest.fixture(scope="session")
def mod2():
    return build_mod_chain(2)


@pytest.fixture(scope="session")
def mod3():
    return build_mod_chain(3, 2)


@pytest.fixture(scope="session")
def mod3_const(mod3):
    return attach_channel(mod3, channel_constant())


@pytest.fixture(scope="session")
def mod2_bsc11(mod2):
    return attach_channel(mod2, channel_bsc("11/100"))


@pytest.fixture(scope="session")
def mod2_noiseless(mod2):
    return attach_channel(mod2, channel_noiseless())


@pytest.fixture(scope="session")
def window414():
    return build_window_chain(4, "1/4", "3/4")


@pytest.fixture(scope="session")
def table_cache():
    """Shared exhaustive-sweep cache, one per process object."""
    store = {}

    def get(proc):
        key = id(proc)
        if key not in store:
            store[key] = TableCache(proc)
        return store[key]

    return get
