import math

import pytest
from hypothesis import given, strategies as st

from kgres.config import DEFAULTS, SECTIONS, parse_bumps, parse_config, spec_from_values
from kgres.errors import ConfigError
from kgres.evolution import stability_bound
from kgres.spectral import SpectralGrid

MINIMAL = """
[scenario]
d = 1
p = 3
alpha = 0.1
"""


def test_minimal_document_fills_defaults():
    spec = parse_config(MINIMAL)
    assert (spec.d, spec.p, spec.alpha) == (1, 3.0, 0.1)
    for k, v in DEFAULTS.items():
        assert spec.values[k] == v
    echo = spec.echo()
    for sec, keys in SECTIONS.items():
        assert set(echo[sec]) == set(keys)
    assert echo["derived"]["stability_bound"] == pytest.approx(stability_bound(spec.grid))
    assert echo["derived"]["tail_cutoff"] == pytest.approx(spec.grid.nyquist / 4)


def test_inadmissible_power_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config("[scenario]\nd = 3\np = 6\nn = 32\nL = 10\ndt = 0.01\nT = 1\n")
    assert err.value.key == "p"
    assert "1 < p < 5" in str(err.value)
    with pytest.raises(ConfigError):
        spec_from_values(p=1.0)


def test_unstable_dt_rejected_with_bound():
    g = SpectralGrid(1, 512, 40.0)
    bound = 0.5 / math.sqrt(1 + g.nyquist ** 2)
    with pytest.raises(ConfigError) as err:
        spec_from_values(dt=0.05, T=1.0)
    assert err.value.key == "dt"
    assert f"{bound:.6g}" in str(err.value)
    spec_from_values(dt=0.02, T=1.0)


def test_unknown_keys_and_sections():
    with pytest.raises(ConfigError) as err:
        parse_config("[scenario]\nspeed = 1\n")
    assert err.value.key == "speed"
    with pytest.raises(ConfigError) as err:
        parse_config("[initial]\nalpha = 0.2\n")
    assert "[scenario]" in str(err.value)
    with pytest.raises(ConfigError):
        parse_config("[physics]\nalpha = 0.2\n")
    with pytest.raises(ConfigError):
        parse_config("", env={"KGR_SPEED": "1"})


def test_bad_values_name_their_key():
    for text, key in (("[scenario]\nn = many\n", "n"), ("[initial]\nkind = cube\n", "kind"),
                      ("[initial]\nmode = wobble\n", "mode"), ("[scenario]\nT = 0.015\n", "T"),
                      ("[diagnostics]\nmu1 = 0.5\n", "mu0"), ("[initial]\nkind = from-checkpoint\n", "path"),
                      ("[scenario]\nseed = -3\n", "seed"), ("[initial]\ncenter = 1,2\n", "center")):
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert err.value.key == key, text


def test_precedence_defaults_document_env_override():
    doc = "[scenario]\nalpha = 0.2\nT = 4\n"
    assert parse_config(doc).alpha == 0.2
    env = {"KGR_ALPHA": "0.3", "PATH": "/bin", "KGR_T": "5"}
    spec = parse_config(doc, env=env)
    assert (spec.alpha, spec.T) == (0.3, 5.0)
    assert parse_config(doc, env=env, alpha=0.4).alpha == 0.4


def test_inline_comments_and_optional_values():
    spec = parse_config("[diagnostics]\ntail_cutoff = 2.5  # inverse length\ndetect_cutoff = none\n")
    assert spec.tail_cutoff == 2.5 and spec.detect_cutoff is None
    assert spec.tail_cutoff_value() == 2.5


def test_sweep_section():
    spec = parse_config("[sweep]\namplitude = 0.5, 1.0, 2.0\nalpha = 0.1,0.2\n")
    assert spec.sweep == {"amplitude": (0.5, 1.0, 2.0), "alpha": (0.1, 0.2)}
    assert spec.echo()["sweep"]["alpha"] == [0.1, 0.2]
    with pytest.raises(ConfigError):
        parse_config("[sweep]\nbogus = 1\n")


def test_to_text_round_trip():
    spec = parse_config("[scenario]\nalpha = 0.25\n[initial]\nkind = multi-bump\n"
                        "bumps = ground@-20:+1; ground@20:-1\n[sweep]\neps = 0.01, 0.02\n")
    again = parse_config(spec.to_text())
    assert again.values == spec.values and again.sweep == spec.sweep


def test_bump_list():
    bumps = parse_bumps("ground@-20:+1; ground@20", 1)
    assert [(b.profile, float(b.center[0]), b.sign) for b in bumps] == [("ground", -20.0, 1), ("ground", 20.0, 1)]
    two = parse_bumps("nodal1@1,2:-1", 2)
    assert two[0].nodes == 1 and list(two[0].center) == [1.0, 2.0] and two[0].sign == -1
    with pytest.raises(ConfigError):
        parse_bumps("blob@3", 1)
    with pytest.raises(ConfigError):
        parse_bumps("ground@1,2", 1)


def test_with_overrides_revalidates():
    spec = spec_from_values()
    assert spec.with_overrides(alpha=0.5).alpha == 0.5
    with pytest.raises(ConfigError):
        spec.with_overrides(p=9.0, d=3, n=32, L=10.0)
    with pytest.raises(ConfigError):
        spec.with_overrides(nonsense=1)


@given(st.sampled_from([1, 2, 3]), st.floats(1.01, 8.0))
def test_admissibility_matches_critical_power(d, p):
    ok = p < 5.0 if d == 3 else True
    kw = dict(d=d, p=p, n=32, L=10.0, dt=0.01, T=1.0)
    if ok:
        assert spec_from_values(**kw).p == p
    else:
        with pytest.raises(ConfigError):
            spec_from_values(**kw)
