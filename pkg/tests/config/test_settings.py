import pytest

from src.config.settings import (
    AppSettings,
    AsgConfig,
    MsimConfig,
    NmsGrid,
    NmsParams,
    PipelineConfig,
    ProposalConfig,
    Settings,
)
from src.utils.exceptions import ConfigurationError, FileFormatError


def test_defaults_without_file():
    settings = Settings.load()
    assert settings == AppSettings()
    assert settings.nms is None
    assert settings.pipeline.queue_capacity >= 1
    assert settings.tracking.relaxed_mu_f == pytest.approx(1.5 * settings.tracking.mu_f)


def test_toml_sections(tmp_path):
    path = tmp_path / "posepipe.toml"
    path.write_text(
        "\n".join([
            "[decode]",
            "a_grad = 2.5",
            "[nms]",
            "sigma1 = 0.5",
            "sigma2 = 2.0",
            "lambda = 0.5",
            "eta = 4.0",
            "[proposal]",
            "components = 2",
            "percentiles = [10.0, 90.0]",
            "[tracking]",
            "mu_emb = 0.6",
            "[tracking.pose_params]",
            "sigma1 = 2.0",
            "sigma2 = 5.0",
            "lambda = 1.0",
            "eta = 0.0",
            "[kalman]",
            "process_noise = 0.0",
            "measurement_noise = 0.0",
            "[pipeline]",
            "queue_capacity = 8",
            "track = true",
        ]),
        encoding="utf-8",
    )
    settings = Settings.load(path)
    assert settings.decode.resolve(48) == 2.5
    assert settings.nms == NmsParams(0.5, 2.0, 0.5, 4.0)
    assert settings.proposal.percentiles == (10.0, 90.0)
    assert settings.tracking.mu_emb == 0.6
    assert settings.tracking.pose_params.sigma2 == 5.0
    assert settings.tracking.kalman.process_noise == 0.0
    assert settings.pipeline.queue_capacity == 8 and settings.pipeline.track


def test_unknown_field(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[decode]\nwidth = 3\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        Settings.load(path)


def test_out_of_range_value(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[pipeline]\nscore_floor = 2.0\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        Settings.load(path)


@pytest.mark.parametrize("content", [None, "[decode\n"])
def test_unreadable_file(tmp_path, content):
    path = tmp_path / "posepipe.toml"
    if content is not None:
        path.write_text(content, encoding="utf-8")
    with pytest.raises(FileFormatError):
        Settings.load(path)


def test_asg_amplitude_default():
    assert AsgConfig().resolve(48) == pytest.approx(6.0)
    with pytest.raises(ConfigurationError):
        AsgConfig(a_grad=0.0)


class TestNmsParams:
    def test_save_and_load(self, tmp_path):
        params = NmsParams(0.3, 1.0, 2.0, 12.0)
        path = tmp_path / "params.json"
        Settings.save_nms_params(params, path)
        assert Settings.load_nms_params(path) == params
        assert '"lambda"' in path.read_text(encoding="utf-8")

    def test_invalid_values(self):
        with pytest.raises(ConfigurationError):
            NmsParams(0.0, 1.0, 1.0, 1.0)
        with pytest.raises(ConfigurationError):
            NmsParams(1.0, 1.0, -1.0, 1.0)
        with pytest.raises(ConfigurationError):
            NmsParams(1.0, 1.0, 1.0, float("inf"))

    def test_missing_key(self):
        with pytest.raises(ConfigurationError):
            NmsParams.from_dict({"sigma1": 1.0})

    def test_not_json(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text("sigma1=1", encoding="utf-8")
        with pytest.raises(FileFormatError):
            Settings.load_nms_params(path)

    def test_default_grid_scales_with_joints(self):
        grid = NmsGrid.default(136)
        assert grid.eta[0] == pytest.approx(13.6)
        assert grid.eta[-1] == pytest.approx(272.0)
        assert grid.sigma1[0] == pytest.approx(0.01)
        assert grid.lambda_[0] == 0.0 and grid.lambda_[-1] == 5.0
        assert NmsParams.default(136).eta == pytest.approx(68.0)


@pytest.mark.parametrize("factory", [
    lambda: ProposalConfig(components=0),
    lambda: ProposalConfig(percentiles=(90.0, 10.0)),
    lambda: MsimConfig(mu_emb=0.0),
    lambda: MsimConfig(relax_factor=1.5),
    lambda: MsimConfig(emb_margin=-0.1),
    lambda: PipelineConfig(queue_capacity=0),
])
def test_section_validation(factory):
    with pytest.raises(ConfigurationError):
        factory()
