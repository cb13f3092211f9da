import json

import pytest

from cli.handlers import COMMANDS, CommandContext
from cli.utils.exceptions import CommandError
from cli.utils.formatters import format_duration, format_manifest, format_norm, format_status, format_table
from cli.utils.validators import InputValidator, parse_epsilons
from main import ControlLab, build_parser, main
from services.config import LabConfig
from services.strategy import RunManifest, StepReport


def zero_config(tmp_path, **sections):
    data = {
        "grid": {"nx": 24, "ny": 16},
        "solver": {"dt": 0.02, "t_end": 0.04, "output_every": 1},
        "hum": {"time_steps": 4, "max_iter": 20},
        "carleman": {"quotient_samples": 1},
        "strategy": {"horizon": 0.4, "initial": "zero", "target": "zero", "workers": 1},
        "logging": {"file": str(tmp_path / "logs" / "lab.log")},
    }
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


class TestValidators:
    def test_seed(self):
        assert InputValidator.validate_seed("42") == 42
        assert InputValidator.validate_seed(None) is None
        assert InputValidator.validate_seed(2 ** 64 - 1) == 2 ** 64 - 1
        for bad in ("-1", str(2 ** 64), "seven"):
            with pytest.raises(CommandError):
                InputValidator.validate_seed(bad)

    def test_epsilons(self):
        assert parse_epsilons("0.025, 0.1 0.05") == [0.1, 0.05, 0.025]
        assert parse_epsilons([0.2]) == [0.2]
        assert parse_epsilons(None) is None
        for bad in ("", "0.1,0.1", "0.1,1.0", "0,0.1", "a,b"):
            with pytest.raises(CommandError):
                parse_epsilons(bad)

    def test_output_dir(self, tmp_path):
        taken = tmp_path / "file.txt"
        taken.write_text("x", encoding="utf-8")
        with pytest.raises(CommandError):
            InputValidator.validate_output_dir(taken)
        assert InputValidator.validate_output_dir(tmp_path / "new") == tmp_path / "new"


class TestFormatters:
    def test_scalars(self):
        assert format_norm(None) == "-"
        assert format_norm(0.00125) == "1.250e-03"
        assert format_duration(42.0) == "42.0s"
        assert format_duration(125.0) == "2m 5s"
        assert format_duration(7300.0) == "2h 1m"
        assert format_status(None) == "➖"

    def test_table(self):
        table = format_table([{"eps": 0.1, "note": None}, {"eps": 0.05, "note": "ok"}])
        lines = table.splitlines()
        assert lines[0].split() == ["eps", "note"]
        assert lines[2].split() == ["1.000e-01", "-"]
        assert format_table([]) == "(empty)"

    def test_manifest_summary(self):
        manifest = RunManifest(command="strategy", times={"T": 1.0}, terminal_error=0.0, relative_error=0.0)
        manifest.add_step(StepReport(name="local", start=0.5, end=0.75, passed=False, message="fixed point"))
        text = format_manifest(manifest)
        assert text.startswith("❌ strategy")
        assert "Failed step: local" in text
        assert "fixed point" in text


class TestParser:
    def test_flags_follow_the_command(self):
        args = build_parser().parse_args(["sweep", "--eps", "0.1,0.05", "--seed", "3", "--out", "runs"])
        assert args.command == "sweep"
        assert args.eps == "0.1,0.05"
        assert args.config == "config.json"

    def test_every_command_has_a_handler(self):
        assert set(COMMANDS) == {"simulate", "extend", "flush", "layer", "hum", "strategy", "sweep"}

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["plot"])


class TestControlLab:
    def test_flags_override_the_file(self, tmp_path):
        lab = ControlLab(zero_config(tmp_path), out_dir=str(tmp_path / "runs"), seed=9, epsilons=[0.1, 0.05])
        lab.initialize()
        assert lab.config.strategy.seed == 9
        assert lab.config.expansion.epsilons == [0.1, 0.05]
        assert lab.config.strategy.epsilon == 0.05
        assert lab.context.storage.data_dir == tmp_path / "runs"
        lab.stop()

    def test_context_manifest_records_sections(self, tmp_path):
        ctx = CommandContext.create(LabConfig.default(), str(tmp_path), seed=4)
        manifest = ctx.manifest("simulate", "grid", "solver")
        assert manifest.seed == 4
        assert set(manifest.config) == {"grid", "solver"}
        assert manifest.config["grid"]["nx"] == 32

    @pytest.mark.asyncio
    async def test_unknown_command_exit_code(self, tmp_path):
        assert await ControlLab(zero_config(tmp_path)).run("plot") == 2


class TestCommands:
    @pytest.mark.asyncio
    async def test_strategy_on_zero_data(self, tmp_path):
        out = tmp_path / "out"
        code = await main(["strategy", "--config", zero_config(tmp_path), "--out", str(out), "--seed", "5"])
        assert code == 0
        manifest = RunManifest.read(out / "manifest.json")
        assert manifest.success
        assert manifest.seed == 5
        assert manifest.terminal_error == 0.0
        assert "strategy_traces.csv" in manifest.files
        assert all((out / name).exists() for name in manifest.files)
        header = (out / "strategy_traces.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "t,face,y,u,v,theta,navier,robin"

    @pytest.mark.asyncio
    async def test_simulate_on_zero_data(self, tmp_path):
        out = tmp_path / "out"
        code = await main(["simulate", "--config", zero_config(tmp_path), "--out", str(out)])
        assert code == 0
        manifest = RunManifest.read(out / "manifest.json")
        step = manifest.step("simulate")
        assert step.terminal_error == 0.0
        assert step.end == pytest.approx(0.04)
        assert {"simulate_norms.csv", "simulate_u.csv", "simulate_theta.csv", "simulate_mass.csv"} <= set(manifest.files)

    @pytest.mark.asyncio
    async def test_extend_on_zero_data(self, tmp_path):
        out = tmp_path / "out"
        assert await main(["extend", "--config", zero_config(tmp_path), "--out", str(out)]) == 0
        manifest = RunManifest.read(out / "manifest.json")
        assert manifest.terminal_error == 0.0
        assert "extend_sigma.csv" in manifest.files

    @pytest.mark.asyncio
    async def test_manifests_are_reproducible(self, tmp_path):
        config = zero_config(tmp_path)
        await main(["strategy", "--config", config, "--out", str(tmp_path / "a")])
        await main(["strategy", "--config", config, "--out", str(tmp_path / "b")])
        first = (tmp_path / "a" / "manifest.json").read_text(encoding="utf-8")
        second = (tmp_path / "b" / "manifest.json").read_text(encoding="utf-8")
        assert first == second

    @pytest.mark.asyncio
    async def test_invalid_configuration_exits_nonzero(self, tmp_path):
        config = zero_config(tmp_path, grid={"nx": 4})
        assert await main(["simulate", "--config", config, "--out", str(tmp_path / "out")]) == 1

    @pytest.mark.asyncio
    async def test_invalid_seed_exits_nonzero(self, tmp_path):
        assert await main(["simulate", "--config", zero_config(tmp_path), "--seed", "-3"]) == 2

    @pytest.mark.slow
    @pytest.mark.asyncio
    async def test_hum_on_random_data(self, tmp_path):
        config = zero_config(tmp_path, strategy={"initial": "random", "amplitude": 1e-3})
        out = tmp_path / "out"
        await main(["hum", "--config", config, "--out", str(out)])
        manifest = RunManifest.read(out / "manifest.json")
        assert manifest.step("hum") is not None
        assert "hum_iterations.csv" in manifest.files

    @pytest.mark.slow
    @pytest.mark.asyncio
    async def test_flush_default_grid(self, tmp_path):
        out = tmp_path / "out"
        config = zero_config(tmp_path, grid={"nx": 64, "ny": 64}, strategy={"initial": "random"})
        assert await main(["flush", "--config", config, "--out", str(out)]) == 0
        manifest = RunManifest.read(out / "manifest.json")
        assert manifest.step("flushing").passed
        transport = manifest.step("transport")
        assert transport.norms["theta_ratio"] <= 1e-2
        assert transport.norms["velocity_ratio"] <= 2e-2
