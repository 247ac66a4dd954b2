import pytest
from hypothesis import given, settings, strategies as st

from vortexmoduli.config import ExperimentConfig, dump_config, load_config, parse_config
from vortexmoduli.errors import ConfigError


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    assert parse_config(dump_config(cfg)) == cfg


@settings(max_examples=30)
@given(n=st.sampled_from([8, 16, 32, 64]), alpha=st.floats(-5, 5, allow_nan=False),
       delta=st.floats(1e-6, 1e-1), seed=st.integers(0, 2**32 - 1),
       phi=st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=1,
                    max_size=3))
def test_round_trip(n, alpha, delta, seed, phi):
    cfg = (ExperimentConfig().replace("base", n_grid=n).replace("triple", alpha=alpha, phi=tuple(phi),
                                                               eps=tuple(0j for _ in phi))
           .replace("family", delta=delta).replace("run", seed=seed))
    assert parse_config(dump_config(cfg)) == cfg


def test_partial_file_uses_defaults():
    cfg = parse_config("[base]\nn_grid = 16\n[triple]\nphi = 1+1j, 0.5\neps = 0.1, 0.1\n")
    assert cfg.base.n_grid == 16 and cfg.triple.phi == (1 + 1j, 0.5)
    assert cfg.solver == ExperimentConfig().solver


@pytest.mark.parametrize("text,needle", [
    ("[base]\nn_grid = 32\nbogus = 1\n", "<string>:3: [base] bogus: unknown key"),
    ("[nosuch]\nx = 1\n", "<string>:1: [nosuch]: unknown section"),
    ("[base]\n\ntau = abc\n", "<string>:3: [base] tau: cannot parse"),
    ("[base]\nn_grid = 12.5\n", "<string>:2: [base] n_grid"),
    ("[base]\nn_grid = 31\n", "even integer"),
    ("[family]\ndelta = -1\n", "[family] delta: must be positive"),
    ("[triple]\nphi = 1, 2\n", "[triple] eps"),
    ("no section header\n", "<string>"),
])
def test_errors_carry_location(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert needle in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
