import math

import pytest

from defaultable import ConfigError, CsvValueError, Table, emit_csv
from defaultable.config import ExperimentConfig, parse_config_text
from defaultable.tables import format_value


def test_twelve_significant_digits():
    assert format_value(1.0 / 3.0) == "0.333333333333"
    assert format_value(11.541470170672397) == "11.5414701707"
    assert format_value(0.07001200113340667) == "0.0700120011334"
    assert format_value(2.0) == "2"


def test_int_and_bool_formatting():
    assert format_value(1024) == "1024"
    assert format_value(True) == "true"
    assert format_value(False) == "false"


def test_empty_table_is_header_only(tmp_path):
    out = tmp_path / "empty.csv"
    emit_csv(Table(["a", "b"]), out)
    assert out.read_text() == "a,b\n"


def test_final_row_newline_terminated(tmp_path):
    tab = Table(["x"])
    tab.append(1.5)
    out = tmp_path / "one.csv"
    emit_csv(tab, out)
    assert out.read_text() == "x\n1.5\n"


def test_nan_refused_naming_column(tmp_path):
    tab = Table(["good", "bad"])
    tab.append(1.0, math.nan)
    with pytest.raises(CsvValueError) as err:
        emit_csv(tab, tmp_path / "nan.csv")
    assert err.value.column == "bad"
    tab2 = Table(["v"])
    tab2.append(math.inf)
    with pytest.raises(CsvValueError):
        emit_csv(tab2, tmp_path / "inf.csv")


def test_row_width_checked():
    tab = Table(["a", "b"])
    with pytest.raises(ValueError):
        tab.append(1.0)


# -- config ----------------------------------------------------------

GOOD = """
# experiment
study = price-discrete
seed = 7
model.family = constant
model.sigma = 0.2   # inline comment
payoff.kind = call
payoff.strike = 100
"""


def test_parse_and_typed_access():
    cfg = ExperimentConfig(parse_config_text(GOOD))
    assert cfg.study() == "price-discrete"
    assert cfg.seed() == 7
    assert cfg.get_float("model.sigma") == 0.2
    assert cfg.get_int("run.n", 100) == 100          # default recorded
    assert "run.n" in cfg.effective


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigError) as err:
        parse_config_text("a = 1\nnot a pair\n")
    assert err.value.line == 2
    with pytest.raises(ConfigError) as err:
        parse_config_text("a = 1\na = 2\n")
    assert err.value.line == 2 and err.value.key == "a"


def test_missing_seed_is_an_error():
    cfg = ExperimentConfig(parse_config_text("study = converge\n"))
    with pytest.raises(ConfigError) as err:
        cfg.seed()
    assert err.value.key == "seed"


def test_overrides_beat_file_values():
    cfg = ExperimentConfig(parse_config_text(GOOD))
    cfg.apply_overrides(["model.sigma=0.3", "run.n=64"])
    assert cfg.get_float("model.sigma") == 0.3
    assert cfg.get_int("run.n", 100) == 64
    with pytest.raises(ConfigError):
        cfg.apply_overrides(["no-equals-sign"])


def test_study_tag_validation():
    cfg = ExperimentConfig(parse_config_text("study = bogus\nseed = 1\n"))
    with pytest.raises(ConfigError):
        cfg.study()
    cfg2 = ExperimentConfig(parse_config_text("study = converge\nseed = 1\n"))
    with pytest.raises(ConfigError):
        cfg2.study("simulate")       # subcommand conflicts with the file
    assert cfg2.study("converge") == "converge"
    cfg3 = ExperimentConfig(parse_config_text("seed = 1\n"))
    assert cfg3.study("simulate") == "simulate"


def test_effective_echo_reproduces_defaults():
    cfg = ExperimentConfig(parse_config_text(GOOD))
    cfg.get_float("run.horizon", 1.0)
    cfg.get_bool("converge.fdd", False)
    lines = cfg.echo_lines()
    assert "run.horizon = 1.0" in lines
    assert "converge.fdd = False" in lines


def test_bad_typed_values():
    cfg = ExperimentConfig(parse_config_text("seed = soon\nrun.n_values = 1,x\n"))
    with pytest.raises(ConfigError):
        cfg.get_int("seed")
    with pytest.raises(ConfigError):
        cfg.get_int_list("run.n_values")
    with pytest.raises(ConfigError):
        cfg.get_bool("seed")


def test_build_payoff_and_model(tmp_path):
    cfg = ExperimentConfig(parse_config_text(GOOD))
    payoff = cfg.build_payoff()
    assert payoff.kind == "call" and payoff.strike == 100.0
    coeffs = cfg.build_coefficients()
    assert coeffs.family == "constant"
    assert float(coeffs.vol_sigma(90.0, 0.0)) == 0.2
