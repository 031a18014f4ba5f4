import importlib.util
import json
from pathlib import Path

import pytest

from dfcdit import _kernels as K

_PATH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")
def test_benchmark_runs_and_paths_agree(tmp_path, capsys):
    spec = importlib.util.spec_from_file_location("bench_kernels", _PATH)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    prev = K.USE_NUMBA
    mod.main(["--repeat", "1", "--json", str(tmp_path / "b.json")])
    assert K.USE_NUMBA == prev
    rows = json.loads((tmp_path / "b.json").read_text())
    assert len(rows) == 6 and all(r["agree"] for r in rows)
    assert "speedup" in capsys.readouterr().out
