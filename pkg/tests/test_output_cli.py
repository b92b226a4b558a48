import math
from pathlib import Path

import numpy as np
import pytest

from poreflow.commands import main
from poreflow.config import SimConfig
from poreflow.diagnostics import EnergyParts
from poreflow.errors import OutputError
from poreflow.output import (
    SNAPSHOT_COLUMNS,
    Provenance,
    read_header,
    read_snapshot,
    snapshot_name,
    snapshot_table,
    write_series,
    write_snapshot,
    write_table,
)
from poreflow.solver import SeriesRow, SimParams, initial_state

PROVENANCE = Provenance(config_hash="0123456789abcdef", version="test", quadrature="gauss_points=4")


def build_row(t: float = 0.0, step: int = 0) -> SeriesRow:
    return SeriesRow(
        t=t,
        step=step,
        energy=EnergyParts(bending=0.0, gaussian=0.0, line=6 * math.pi),
        area=3 * math.pi,
        hole_radii={"start": 1.0, "end": 2.0},
    )


def test_snapshot_rows_follow_dofs(tmp_path: Path, annulus_curve) -> None:
    state = initial_state(annulus_curve, SimParams(gamma_l=1.0, bending=False))
    table = snapshot_table(state)

    assert SNAPSHOT_COLUMNS == ("alpha", "X_r", "X_z", "U_r", "U_z", "P", "H", "g", "xi_r", "xi_z")
    assert table.shape == (65, 10)
    assert table[0, 0] == 0.0
    assert table[0, 1] == 1.0
    assert table[-1, 1] == 2.0

    path = write_snapshot(state, tmp_path / snapshot_name(0), PROVENANCE)
    loaded = read_snapshot(path)
    assert path.name == "snapshot_000000.tsv"
    assert loaded.columns == SNAPSHOT_COLUMNS
    assert loaded.t == 0.0
    assert loaded.header["config_hash"] == "0123456789abcdef"
    assert loaded.header["step"] == "0"
    np.testing.assert_array_equal(loaded.data, table)


def test_series_file_is_byte_identical_on_rewrite(tmp_path: Path) -> None:
    series = [build_row(), build_row(t=0.01, step=1)]
    first = write_series(series, tmp_path / "a.tsv", PROVENANCE).read_bytes()
    second = write_series(series, tmp_path / "b.tsv", PROVENANCE).read_bytes()

    assert first == second
    loaded = read_snapshot(tmp_path / "a.tsv")
    assert loaded.columns == ("t", "E", "E_bend", "E_gauss", "E_line", "A", "r_end", "r_start")
    assert loaded.column("t")[0] == 0.0
    assert loaded.column("A")[0] == 3 * math.pi
    assert loaded.column("r_start")[1] == 1.0


def test_provenance_ignores_output_dir() -> None:
    base = Provenance.from_config(SimConfig())

    assert base == Provenance.from_config(SimConfig(output_dir="elsewhere"))
    assert base.config_hash != Provenance.from_config(SimConfig(N=16)).config_hash
    assert "alpert_order=8" in base.quadrature


def test_study_table_keeps_failure_text(tmp_path: Path) -> None:
    path = write_table(
        tmp_path / "study.tsv",
        ["N", "error", "status"],
        [[4, 0.5, "ok"], [8, math.nan, "SolverError: singular"]],
        PROVENANCE,
        title="study convergence",
    )
    lines = path.read_text(encoding="utf-8").splitlines()

    assert read_header(path)["columns"] == "N\terror\tstatus"
    assert lines[-2] == "4\t0.5\tok"
    assert lines[-1] == "8\tnan\tSolverError: singular"


def test_unwritable_path_is_an_output_error(tmp_path: Path) -> None:
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")

    with pytest.raises(OutputError):
        write_series([build_row()], blocker / "series.tsv", PROVENANCE)


def test_plain_text_is_not_a_table(tmp_path: Path) -> None:
    path = tmp_path / "notes.txt"
    path.write_text("hello\n", encoding="utf-8")

    with pytest.raises(OutputError):
        read_snapshot(path)


def test_run_writes_snapshots_and_series(tmp_path: Path, capsys) -> None:
    out = tmp_path / "run"
    code = main(
        [
            "run",
            "--output-dir",
            str(out),
            "--set",
            "scenario=flat_disk",
            "--set",
            "N=8",
            "--set",
            "max_steps=2",
            "--quiet",
        ]
    )

    assert code == 0
    assert (out / "config.json").exists()
    assert (out / "series.tsv").exists()
    assert (out / "snapshot_000000.tsv").exists()
    assert "stopped: energy_converged" in capsys.readouterr().out

    assert main(["info", str(out / "snapshot_000000.tsv")]) == 0
    assert "columns: alpha" in capsys.readouterr().out


def test_bad_config_exits_with_one(tmp_path: Path, capsys) -> None:
    path = tmp_path / "bad.json"
    path.write_text('{\n  "dt": -1.0\n}\n', encoding="utf-8")

    assert main(["run", str(path), "--output-dir", str(tmp_path / "out")]) == 1
    assert "key 'dt'" in capsys.readouterr().err


def test_bad_arguments_exit_with_two() -> None:
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["run", "--snapshot-every", "often"])
    assert info.value.code == 2


def test_study_verb_writes_table(tmp_path: Path) -> None:
    code = main(
        [
            "study",
            "--kind",
            "convergence",
            "--grid",
            "4,8",
            "--output-dir",
            str(tmp_path),
            "--set",
            "gamma_l=1",
            "--set",
            "bending=false",
            "--quiet",
        ]
    )
    rows = [line for line in (tmp_path / "study_convergence.tsv").read_text(encoding="utf-8").splitlines() if not line.startswith("#")]

    assert code == 0
    assert [row.split("\t")[0] for row in rows] == ["4", "8"]
