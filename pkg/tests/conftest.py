import numpy as np
import pytest

from invcomposite.dataset import StudyData

FOUR_Z = np.array([1.0, 1.0, 0.0, 0.0])
FOUR_Y = np.array([2.0, 4.0, 1.0, 3.0])


def random_study(rng, n, L, K=0, S=1, weights=False, effect=0.5, prognostic=0.7):
    """Random full-rank study with heteroskedastic, correlated outcomes.

    Strata are laid out so every stratum has at least two treated and two
    control units; treatment probability varies by stratum and by x.
    """
    x = rng.standard_normal((n, K)) if K else None
    if S > 1:
        base = np.repeat(np.arange(S), 4)
        strata = np.concatenate([base, rng.integers(0, S, n - base.size)])
        rng.shuffle(strata)
    else:
        strata = np.zeros(n, dtype=int)
    p = rng.uniform(0.3, 0.7, S)[strata]
    if K:
        p = 1 / (1 + np.exp(-(np.log(p / (1 - p)) + 0.4 * x[:, 0])))
    z = (rng.random(n) < p).astype(float)
    # force both arms (two of each) inside every stratum
    for s in range(S):
        idx = np.flatnonzero(strata == s)
        z[idx[:2]] = 1.0
        z[idx[2:4]] = 0.0
    mix = rng.standard_normal((L, L)) + 2 * np.eye(L)
    y = rng.standard_normal((n, L)) @ mix
    y *= (1 + 0.5 * np.abs(rng.standard_normal(n)))[:, None]
    y += effect * z[:, None] * rng.standard_normal(L)
    y += rng.standard_normal((S, L))[strata]
    if K:
        y += prognostic * x @ rng.standard_normal((K, L))
    w = 1 + rng.exponential(size=n) if weights else None
    return StudyData.from_arrays(z, y, x, strata if S > 1 else None, w)


@pytest.fixture
def four_rows():
    return StudyData.from_arrays(FOUR_Z, FOUR_Y)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Remember one acceptance verdict for the end-of-run summary."""
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"[acceptance {criterion:>2}] {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
