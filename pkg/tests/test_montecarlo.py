import numpy as np
import pytest

from invcomposite import montecarlo as mc
from invcomposite.errors import InvalidSpec


def cre_dgp(**kw):
    base = dict(design="cre", n=200, L=2, tau=[0.0, 0.0], outcome_cov=[[1.0, 0.3], [0.3, 1.0]], seed=3)
    base.update(kw)
    return mc.DgpSpec(**base)


def study(**kw):
    base = {"design": "cre", "reps": 100}
    base.update(kw)
    return mc.StudySpec.from_dict(base)


def test_generate_is_deterministic():
    spec = cre_dgp()
    a, b = mc.generate(spec, 7), mc.generate(spec, 7)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.z, b.z)
    assert not np.array_equal(a.y, mc.generate(spec, 8).y)


def test_null_group_differences_are_centered():
    spec = cre_dgp(n=50)
    diffs = []
    for i in range(10_000):
        d = mc.generate(spec, i)
        t = d.z == 1
        diffs.append(d.y[t].mean(axis=0) - d.y[~t].mean(axis=0))
    diffs = np.array(diffs)
    se = diffs.std(axis=0, ddof=1) / np.sqrt(len(diffs))
    assert np.all(np.abs(diffs.mean(axis=0)) <= 3 * se)


def test_sre_counts_and_probabilities():
    spec = mc.DgpSpec(design="sre", n=101, L=1, tau=[0.0], outcome_cov=[[1.0]], S=3,
                      stratum_probs=[0.5, 0.3, 0.2], treatment_probs=[0.2, 0.5, 0.8])
    d = mc.generate(spec, 0)
    assert sum(np.bincount(d.stratum)) == 101
    np.testing.assert_array_equal(np.bincount(d.stratum), [51, 30, 20])


def test_obs_zero_alpha_gives_weight_two():
    spec = mc.DgpSpec(design="obs", n=500, L=1, K=2, tau=[0.0], outcome_cov=[[1.0]],
                      propensity_alpha=[0.0, 0.0, 0.0], seed=2)
    from invcomposite import obs
    means = [obs.fit(mc.generate(spec, i)).weights.mean() for i in range(200)]
    assert np.mean(means) == pytest.approx(2.0, abs=0.02)


@pytest.mark.parametrize("bad", [
    dict(design="xyz"),
    dict(outcome_cov=[[1.0, 2.0], [2.0, 1.0]]),
    dict(treatment_probs=1.0),
    dict(tau=[0.0]),
])
def test_spec_validation(bad):
    with pytest.raises(InvalidSpec):
        cre_dgp(**bad)


def test_run_study_rejects_few_reps():
    with pytest.raises(InvalidSpec):
        mc.run_study(cre_dgp(), study(), reps=50)


def test_study_rejects_intervals_for_logistic_composite():
    with pytest.raises(InvalidSpec):
        study(inverse_logistic=True, ci="normal")
    with pytest.raises(ValueError):
        study(ci="bogus")


def test_run_study_is_reproducible_and_worker_independent():
    s = study(ci=["normal", "chi2"], record_pit=True)
    a = mc.run_study(cre_dgp(), s, reps=120)
    b = mc.run_study(cre_dgp(), s, reps=120)
    c = mc.run_study(cre_dgp(), s, reps=120, workers=2)
    assert a.to_dict() == b.to_dict() == c.to_dict()
    assert a.records == c.records
    assert 0 <= a.rejection_rate <= 1
    assert a.rejection_se == pytest.approx(np.sqrt(a.rejection_rate * (1 - a.rejection_rate) / 120))


def test_power_grows_with_effect():
    s = study()
    weak = mc.run_study(cre_dgp(n=500, tau=[0.1, 0.0]), s, reps=200)
    strong = mc.run_study(cre_dgp(n=500, tau=[0.3, 0.0]), s, reps=200)
    assert strong.rejection_rate >= weak.rejection_rate


def test_true_composite():
    spec = cre_dgp(tau=[1.0, 0.0], outcome_cov=[[1.0, 0.0], [0.0, 1.0]])
    # q = 0.25 * 1 -> 0.2
    assert spec.true_tau_c() == pytest.approx(0.2)


def test_ks_uniform():
    assert mc.ks_uniform(np.array([0.5])) == pytest.approx(0.5)
    u = (np.arange(1000) + 0.5) / 1000
    assert mc.ks_uniform(u) == pytest.approx(0.0005)


def test_load_config(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('[dgp]\ndesign="cre"\nn=100\nL=1\ntau=[0.0]\noutcome_cov=[[1.0]]\n'
                 '[study]\ndesign="cre"\nreps=100\nci="chi2"\n')
    dgp, st = mc.load_config(p)
    assert dgp.n == 100 and st.ci_methods == ("chi2",)
    p.write_text("[dgp]\n")
    with pytest.raises(InvalidSpec):
        mc.load_config(p)
