import numpy as np
import pytest

from invcomposite.dataset import DesignSpec, StudyData, load_csv, to_csv
from invcomposite.errors import (
    ConstantOutcome,
    DegenerateStratum,
    DesignMismatch,
    InvalidSpec,
    MissingColumn,
    NonBinaryTreatment,
    NonFiniteValue,
    NonPositiveWeight,
    TooFewRows,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_four_row_file(tmp_path):
    p = write(tmp_path, "z,y1\n1,2\n1,4\n0,1\n0,3\n")
    d = load_csv(p, {"treatment": "z", "outcomes": ["y1"]})
    assert (d.n, d.L, d.K, d.S) == (4, 1, 0, 1)
    np.testing.assert_array_equal(d.y[:, 0], [2, 4, 1, 3])


def test_all_treated_rejected(tmp_path):
    p = write(tmp_path, "z,y1\n1,2\n1,4\n1,1\n1,3\n")
    with pytest.raises(NonBinaryTreatment, match="no control units"):
        load_csv(p, {"treatment": "z", "outcomes": ["y1"]})


def test_degenerate_stratum_names_label(tmp_path):
    rows = "z,y1,s\n1,2,1\n0,4,1\n1,1,2\n1,3,2\n0,5,1\n"
    p = write(tmp_path, rows)
    with pytest.raises(DegenerateStratum) as exc:
        load_csv(p, {"treatment": "z", "outcomes": ["y1"], "stratum": "s"})
    assert exc.value.detail["stratum"] == 2


def test_missing_column(tmp_path):
    p = write(tmp_path, "z,y1\n1,2\n1,4\n0,1\n0,3\n")
    with pytest.raises(MissingColumn):
        load_csv(p, {"treatment": "z", "outcomes": ["y2"]})


def test_non_finite_cell(tmp_path):
    p = write(tmp_path, "z,y1\n1,2\n1,nan\n0,1\n0,3\n")
    with pytest.raises(NonFiniteValue) as exc:
        load_csv(p, {"treatment": "z", "outcomes": ["y1"]})
    assert exc.value.detail["row"] == 2


@pytest.mark.parametrize("z,y,err", [
    ([1, 2, 0, 0], [1, 2, 3, 4], NonBinaryTreatment),
    ([1, 0], [1, 2], TooFewRows),
    ([1, 1, 0, 0], [5, 5, 5, 5], ConstantOutcome),
])
def test_invariant_violations(z, y, err):
    with pytest.raises(err):
        StudyData.from_arrays(z, y)


def test_nonpositive_weight():
    with pytest.raises(NonPositiveWeight):
        StudyData.from_arrays([1, 1, 0, 0], [2, 4, 1, 3], user_weights=[1, 0, 1, 1])


def test_stratum_codes_follow_first_appearance():
    z = [1, 0, 1, 0, 1, 0]
    d = StudyData.from_arrays(z, [1, 2, 3, 4, 5, 7], stratum=["b", "b", "a", "a", "b", "a"])
    assert d.stratum_labels == ("b", "a")
    np.testing.assert_array_equal(d.stratum, [0, 0, 1, 1, 0, 1])


def test_arrays_are_read_only(four_rows):
    with pytest.raises(ValueError):
        four_rows.y[0, 0] = 1.0


def test_csv_round_trip_is_bit_exact(tmp_path, rng):
    from conftest import random_study
    d = random_study(rng, 40, 2, K=1, S=2, weights=True)
    p = tmp_path / "rt.csv"
    to_csv(d, p)
    back = load_csv(p, {"treatment": "z", "outcomes": list(d.outcome_names),
                        "covariates": list(d.covariate_names), "stratum": "stratum",
                        "weights": "w"})
    for a, b in [(d.z, back.z), (d.y, back.y), (d.x, back.x), (d.user_weights, back.user_weights)]:
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(d.stratum, back.stratum)


def test_design_spec_checks(four_rows):
    with pytest.raises(DesignMismatch, match="obs requires covariates or weights"):
        DesignSpec("obs").check(four_rows)
    with pytest.raises(DesignMismatch):
        DesignSpec("sre-reg").check(four_rows)
    with pytest.raises(InvalidSpec):
        DesignSpec("cre", alpha=1.5)
    with pytest.raises(InvalidSpec):
        DesignSpec("cre", alpha=0.05, eta=0.1)
    assert DesignSpec("cre").pretest_level == 0.025
