import warnings

import numpy as np
import pandas as pd
import pytest

from mlta.data import (CovariateSpec, Dataset, DichotomizationRule, RawSurveyTable,
                       complete_cases, covariate_distribution, dichotomize,
                       encode_covariates, ingest, load_rules, tie_density)
from mlta.errors import ConfigError, DataError, DataWarning

FREQ = ["never", "occasionally", "a few times a week", "most days", "every day"]
FAMILIAR = ["not at all", "a little", "somewhat", "mostly", "completely"]


def raw_table(**cols):
    n = len(next(iter(cols.values())))
    frame = pd.DataFrame({"id": [f"r{i}" for i in range(n)], **cols})
    return RawSurveyTable(frame)


def test_every_day_is_a_tie():
    raw = raw_table(internet=["every day"])
    inc = dichotomize(raw, [DichotomizationRule("internet", FREQ, "a few times a week")])
    assert inc.values.tolist() == [[1]]


def test_threshold_is_inclusive_and_lowest_level_is_zero():
    raw = raw_table(internet=["never", "occasionally", "a few times a week", "most days"])
    inc = dichotomize(raw, [DichotomizationRule("internet", FREQ, "a few times a week")])
    assert inc.values[:, 0].tolist() == [0, 0, 1, 1]


def test_multi_alter_item_is_or_of_alters():
    raw = raw_table(a1=["never"], a2=["never"], a3=["most days"], a4=["never"])
    rule = DichotomizationRule("calls", FREQ, "a few times a week", alters=("a1", "a2", "a3", "a4"))
    inc = dichotomize(raw, [rule])
    assert inc.values.tolist() == [[1]]
    assert inc.skills == ["calls"]


def test_unknown_level_names_item_id_and_label():
    raw = raw_table(internet=["every day", "sometimes"])
    with pytest.raises(DataError) as err:
        dichotomize(raw, [DichotomizationRule("internet", FREQ, "most days")])
    msg = str(err.value)
    assert "internet" in msg and "r1" in msg and "sometimes" in msg


def test_rule_on_absent_column_is_rejected():
    raw = raw_table(internet=["never"])
    with pytest.raises(DataError, match="pdfs"):
        dichotomize(raw, [DichotomizationRule("pdfs", FAMILIAR, "somewhat")])


def test_rule_validation():
    with pytest.raises(ConfigError):
        DichotomizationRule("x", ["only"], "only")
    with pytest.raises(ConfigError):
        DichotomizationRule("x", FREQ, "daily")


def test_missing_response_flags_row_instead_of_imputing():
    raw = raw_table(internet=["every day", ""], pdfs=["somewhat", "mostly"])
    rules = [DichotomizationRule("internet", FREQ, "most days"),
             DichotomizationRule("pdfs", FAMILIAR, "somewhat")]
    inc = dichotomize(raw, rules)
    assert inc.row_missing.tolist() == [False, True]


def test_education_reference_high_gives_two_dummies():
    raw = raw_table(Education=["low", "medium", "high", "low"])
    design = encode_covariates(raw, [CovariateSpec("Education", ["low", "medium", "high"], "high")])
    assert design.columns == ["(Intercept)", "Education=low", "Education=medium"]
    np.testing.assert_array_equal(design.values, [[1, 1, 0], [1, 0, 1], [1, 0, 0], [1, 1, 0]])
    assert np.all(design.values[:, 1:].sum(axis=1) <= 1)


def test_binary_variable_gives_single_column():
    raw = raw_table(Gender=["male", "female", "female"])
    design = encode_covariates(raw, [CovariateSpec("Gender", ["male", "female"], "male")])
    assert design.columns == ["(Intercept)", "Gender=female"]
    assert design.values[:, 1].tolist() == [0, 1, 1]


def test_all_reference_gives_zero_column_and_warning():
    raw = raw_table(Gender=["male", "male"])
    with pytest.warns(DataWarning, match="constant"):
        design = encode_covariates(raw, [CovariateSpec("Gender", ["male", "female"], "male")])
    assert design.values[:, 1].tolist() == [0, 0]
    assert design.diagnostics


def test_unseen_category_is_rejected():
    raw = raw_table(Gender=["male", "other"])
    with pytest.raises(DataError, match="other"):
        encode_covariates(raw, [CovariateSpec("Gender", ["male", "female"], "male")])


def test_reference_must_be_a_level():
    with pytest.raises(ConfigError):
        CovariateSpec("Gender", ["male", "female"], "x")


def test_complete_cases_drops_flagged_rows():
    raw = raw_table(internet=["every day", "", "never", "most days", "never"],
                    Gender=["male", "female", "female", "male", "female"])
    rules = [DichotomizationRule("internet", FREQ, "most days")]
    covs = [CovariateSpec("Gender", ["male", "female"], "male")]
    data = ingest(raw, rules, covs)
    assert (data.N, data.dropped) == (4, 1)
    assert data.ids == ["r0", "r2", "r3", "r4"]
    assert data.incidence.ids == data.design.ids


def test_complete_cases_identity_without_missing():
    raw = raw_table(internet=["every day", "never"], Gender=["male", "female"])
    data = ingest(raw, [DichotomizationRule("internet", FREQ, "most days")],
                  [CovariateSpec("Gender", ["male", "female"], "male")])
    assert (data.N, data.dropped) == (2, 0)


@pytest.mark.filterwarnings("ignore::mlta.errors.DataWarning")
def test_missing_covariate_also_drops_row():
    raw = raw_table(internet=["every day", "never"], Gender=["", "female"])
    data = ingest(raw, [DichotomizationRule("internet", FREQ, "most days")],
                  [CovariateSpec("Gender", ["male", "female"], "male")])
    assert (data.N, data.dropped) == (1, 1)


def test_no_complete_rows_is_rejected():
    raw = raw_table(internet=["", ""])
    inc = dichotomize(raw, [DichotomizationRule("internet", FREQ, "most days")])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        design = encode_covariates(raw, [])
    with pytest.raises(DataError, match="no complete"):
        complete_cases(inc, design)


def test_tie_density():
    np.testing.assert_array_equal(tie_density(np.array([[1, 0], [1, 1]])), [1.0, 0.5])
    np.testing.assert_array_equal(tie_density(np.zeros((3, 4))), np.zeros(4))


def test_duplicate_ids_rejected():
    with pytest.raises(DataError, match="duplicate"):
        RawSurveyTable(pd.DataFrame({"id": ["a", "a"], "x": ["1", "2"]}))


def test_covariate_distribution_shares_sum_to_one():
    raw = raw_table(Education=["low", "medium", "high", "low"])
    design = encode_covariates(raw, [CovariateSpec("Education", ["low", "medium", "high"], "high")])
    rows = covariate_distribution(design)
    assert sum(share for _, _, share in rows) == pytest.approx(1.0)
    assert dict((lv, s) for _, lv, s in rows)["low"] == 0.5


def test_load_rules_roundtrip(tmp_path):
    doc = {"missing": "NA",
           "items": {"Internet use": {"levels": FREQ, "threshold": "a few times a week"}},
           "covariates": {"Gender": {"levels": ["male", "female"], "reference": "male"}}}
    rules, covs, missing = load_rules(doc)
    assert rules[0].threshold == "a few times a week"
    assert covs[0].dummies == ("female",)
    assert missing == "NA"
    with pytest.raises(ConfigError):
        load_rules({"items": {}})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_rules(bad)


def test_dataset_from_arrays_and_take():
    data = Dataset.from_arrays(np.array([[1, 0], [0, 1], [1, 1]]))
    sub = data.take([2, 0])
    assert sub.Y.tolist() == [[1, 1], [1, 0]]
    assert sub.ids == [data.ids[2], data.ids[0]]
    assert np.all(sub.X[:, 0] == 1)
