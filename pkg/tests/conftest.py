import json
import sys
from pathlib import Path

import pytest

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def small_cli_cases(tmp: Path) -> dict:
    """One fast invocation per CLI command: name -> argv without ``--out``."""
    tmp.mkdir(parents=True, exist_ok=True)

    def cfg(name, doc):
        path = tmp / f"{name}.json"
        path.write_text(json.dumps({"schema_version": 1, **doc}))
        return str(path)

    base = {"plant": "demo", "noise_std": 0.2, "structure": [2, 2, 3], "u_bound": 2.0, "steps": 15}
    ckpt = tmp / "ckpt.json"
    ckpt.write_text(json.dumps({"alphas": [0.37] * 23}))
    return {
        "simulate": ["simulate", "--config", cfg("sim", base), "--seed", "3",
                     "--checkpoint", str(ckpt)],
        "drops": ["drops", "--config", cfg("drops", {"drops": {"n": 200, "x": [-0.5, 0.0, 0.5]}}),
                  "--seed", "3"],
        "tune-offline": ["tune-offline", "--config", cfg("off", {**base, "max_evals": 400}),
                         "--seed", "3"],
        "tune-hybrid": ["tune-hybrid", "--config",
                        cfg("hyb", {**base, "max_evals": 600,
                                    "hybrid": {"chaos": {"max_evals": 200}, "cg": {"max_evals": 200}}}),
                        "--seed", "3"],
        "tune-online": ["tune-online", "--config",
                        cfg("onl", {**base, "online": {"window": 5, "cg": {"max_iter": 2}}}),
                        "--seed", "3", "--checkpoint", str(ckpt)],
        "compare": ["compare", "--config",
                    cfg("cmp", {**base, "j_stop": 5.0, "max_evals": 300, "n_seeds": 2}), "--seed", "3"],
        "hinf": ["hinf", "--plant", str(CONFIGS / "scalar_plant.json"), "--seed", "3"],
    }


def read_tree(path: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


@pytest.fixture
def cli_cases(tmp_path):
    return small_cli_cases(tmp_path / "configs")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
