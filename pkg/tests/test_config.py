import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketedge.config import KEY_DOCS, Config, parse_config
from marketedge.errors import ConfigError


class TestParse:
    def test_grammar(self):
        cfg = parse_config(
            "# leading comment\n"
            "mode = betting\n"
            "corr_tm = 0.85   # trailing comment\n"
            "\n"
            "[experiment]\n"
            "corr_tr = 0.85, 0.9,0.95\n"
            "rounds=200\n"
        )
        assert cfg.get_str("market.mode") == "betting"
        assert cfg.get_float("market.corr_tm") == 0.85
        assert cfg.get_list("experiment.corr_tr") == [0.85, 0.9, 0.95]
        assert cfg.get_int("experiment.rounds") == 200
        assert cfg.lines["experiment.rounds"] == 7

    @pytest.mark.parametrize(
        "text,line,fragment",
        [
            ("mode = betting\ncorr_xy = 1\n", 2, "unknown key"),
            ("[market]\nmode = betting\nmode = stock\n", 3, "duplicate"),
            ("[market]\njust words\n", 2, "key = value"),
            ("[nowhere]\n", 1, "unknown section"),
            ("[market]\nmode =\n", 2, "missing value"),
        ],
    )
    def test_errors_have_line_numbers(self, text, line, fragment):
        with pytest.raises(ConfigError, match=f"line {line}:.*{fragment}"):
            parse_config(text)

    def test_type_errors_point_at_line(self):
        cfg = parse_config("\n\ncorr_tm = high\n")
        with pytest.raises(ConfigError, match="line 3:"):
            cfg.get_float("market.corr_tm")
        cfg = parse_config("[learner]\nintercept = maybe\n")
        with pytest.raises(ConfigError, match="line 2:"):
            cfg.get_bool("learner.intercept", True)

    def test_choices(self):
        cfg = parse_config("mode = futures\n")
        with pytest.raises(ConfigError, match="expected one of"):
            cfg.get_str("market.mode", "betting", ("betting", "stock"))

    def test_undocumented_read_is_a_bug(self):
        with pytest.raises(KeyError):
            Config().get_float("market.secret")

    def test_defaults_and_overrides(self):
        cfg = Config()
        assert cfg.get_int("sample.n", 7) == 7
        cfg.set("experiment.corr_tm", [0.8, 0.9])
        assert cfg.get_list("experiment.corr_tm") == [0.8, 0.9]
        with pytest.raises(KeyError):
            cfg.set("market.nope", 1)

    def test_snapshot_sorted(self):
        cfg = parse_config("[sample]\nn = 5\n[market]\nmode = stock\n")
        assert cfg.snapshot() == "market.mode = stock\nsample.n = 5\n"

    @settings(max_examples=100)
    @given(st.dictionaries(st.sampled_from(sorted(KEY_DOCS)), st.from_regex(r"[A-Za-z0-9_.,]{1,12}", fullmatch=True)))
    def test_snapshot_roundtrip(self, values):
        by_section = {}
        for key, v in values.items():
            section, name = key.split(".")
            by_section.setdefault(section, []).append(f"{name} = {v}")
        text = "".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in by_section.items())
        cfg = parse_config(text)
        assert cfg.values == values


class TestBundled:
    @pytest.mark.parametrize("name", ["grid.cfg", "synthetic.cfg"])
    def test_bundled_configs_parse(self, name):
        from marketedge.cli import _bundled

        cfg = parse_config(_bundled(name))
        assert cfg.values
