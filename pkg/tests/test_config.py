import math

import pytest

from osr.config import ConfigError, RunConfig, format_config, load_config, parse_config

from conftest import CONFIGS


class TestParse:
    def test_empty_gives_defaults(self):
        assert parse_config("") == RunConfig()

    def test_values_and_comments(self):
        run = parse_config("# header\n\nepochs_stage1 = 3   # short run\nlr=0.01\n"
                           "blur_sigma = 2.0\nresidual = yes\nmode = p2x\n")
        assert run.train.epochs_stage1 == 3 and run.train.lr == 0.01
        assert run.blur_sigma == 2.0 and run.train.residual is True
        assert run.train.mode == "p2x"

    def test_sqrt(self):
        assert parse_config("noise_sigma = sqrt(2)").noise_sigma == math.sqrt(2)

    @pytest.mark.parametrize("text,lineno,needle", [
        ("lr = 1e-3\nbogus = 1\n", 2, "unknown key"),
        ("lr = 1e-3\n\nlr = 1e-4\n", 3, "duplicate"),
        ("epochs_stage1 = many\n", 1, "epochs_stage1"),
        ("residual = maybe\n", 1, "boolean"),
        ("just words\n", 1, "key = value"),
    ])
    def test_errors_name_the_line(self, text, lineno, needle):
        with pytest.raises(ConfigError) as exc:
            parse_config(text, "run.cfg")
        assert f"run.cfg:{lineno}:" in str(exc.value)
        assert needle in str(exc.value)

    def test_semantic_error(self):
        with pytest.raises(ConfigError):
            parse_config("loss = l3\n")

    def test_round_trip(self):
        run = parse_config("epochs_stage1 = 7\nnoise_sigma = 0.5\nmode = p2x\n")
        assert parse_config(format_config(run)) == run


class TestShipped:
    @pytest.mark.parametrize("name", ["deblur.cfg", "sr3.cfg"])
    def test_loads(self, name):
        run = load_config(CONFIGS / name)
        assert run.train.n_n == 256 and (run.train.L_t, run.train.N_x) == (9, 9)
        assert run.train.epochs_stage1 <= 45
        assert run.blur_sigma == 1.6 and run.noise_sigma == math.sqrt(2)
        assert run.kernel_size == 25

    def test_sr_factor(self):
        assert load_config(CONFIGS / "sr3.cfg").decimation == 3
