from __future__ import annotations

import io
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import __version__
from .errors import OutputError
from .quadrature import QuadratureSettings
from .utils import config_digest

if TYPE_CHECKING:
    from .config import SimConfig
    from .solver import SeriesRow, SystemState

logger = logging.getLogger("poreflow.output")

NUMBER_FORMAT = "%.17g"
SNAPSHOT_COLUMNS = ("alpha", "X_r", "X_z", "U_r", "U_z", "P", "H", "g", "xi_r", "xi_z")
SERIES_COLUMNS = ("t", "E", "E_bend", "E_gauss", "E_line", "A")


@dataclass(frozen=True)
class Provenance:
    config_hash: str
    version: str
    quadrature: str

    @classmethod
    def from_config(cls, config: "SimConfig") -> "Provenance":
        settings = config.quadrature()
        return cls(
            config_hash=config_digest({key: value for key, value in config.to_dict().items() if key != "output_dir"}),
            version=__version__,
            quadrature=describe_quadrature(settings),
        )

    def lines(self) -> list[str]:
        return [
            f"config_hash: {self.config_hash}",
            f"version: {self.version}",
            f"quadrature: {self.quadrature}",
        ]


def describe_quadrature(settings: QuadratureSettings) -> str:
    return " ".join(f"{key}={value}" for key, value in asdict(settings).items())


@dataclass(frozen=True)
class SnapshotFile:
    header: dict[str, str]
    columns: tuple[str, ...]
    data: np.ndarray

    @property
    def t(self) -> float:
        return float(self.header["t"])

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def _write_table(path: Path, header: list[str], data: np.ndarray) -> None:
    buffer = io.StringIO()
    np.savetxt(buffer, data, fmt=NUMBER_FORMAT, delimiter="\t", header="\n".join(header), comments="# ")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buffer.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write output ({exc.strerror})", path=str(path)) from exc
    logger.debug("wrote %s (%d rows)", path, len(data))


def snapshot_table(state: "SystemState") -> np.ndarray:
    """One row per P2 dof in the column order of SNAPSHOT_COLUMNS."""
    curve = state.curve
    alpha = curve.dof_alpha
    pressure = state.P.evaluate(alpha)[0]
    return np.column_stack(
        [
            alpha,
            curve.xr,
            curve.xz,
            state.U.component(0),
            state.U.component(1),
            pressure,
            state.H.component(0),
            state.g.component(0),
            state.xi.component(0),
            state.xi.component(1),
        ]
    )


def write_snapshot(state: "SystemState", path: str | Path, provenance: Provenance) -> Path:
    path = Path(path)
    header = [
        "poreflow snapshot",
        *provenance.lines(),
        f"t: {NUMBER_FORMAT % state.t}",
        f"step: {state.step}",
        f"axis_ends: {','.join(state.curve.axis_ends) or '-'}",
        "columns: " + "\t".join(SNAPSHOT_COLUMNS),
    ]
    _write_table(path, header, snapshot_table(state))
    return path


def write_series(series: Sequence["SeriesRow"], path: str | Path, provenance: Provenance) -> Path:
    path = Path(path)
    ends = sorted({end for row in series for end in row.hole_radii})
    columns = SERIES_COLUMNS + tuple(f"r_{end}" for end in ends)
    rows = [
        [
            row.t,
            row.energy.total,
            row.energy.bending,
            row.energy.gaussian,
            row.energy.line,
            row.area,
            *(row.hole_radii.get(end, np.nan) for end in ends),
        ]
        for row in series
    ]
    header = ["poreflow series", *provenance.lines(), "columns: " + "\t".join(columns)]
    _write_table(path, header, np.array(rows, dtype=float).reshape(len(rows), len(columns)))
    return path


def write_table(
    path: str | Path,
    columns: Sequence[str],
    rows: Sequence[Sequence[object]],
    provenance: Provenance,
    title: str,
) -> Path:
    """Mixed text/number table used by studies; failed runs keep their reason in a text column."""
    path = Path(path)
    lines = [f"# poreflow {title}", *(f"# {line}" for line in provenance.lines()), "# columns: " + "\t".join(columns)]
    for row in rows:
        cells = [NUMBER_FORMAT % value if isinstance(value, float) else str(value) for value in row]
        lines.append("\t".join(cells))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write output ({exc.strerror})", path=str(path)) from exc
    return path


def read_header(path: str | Path) -> dict[str, str]:
    header: dict[str, str] = {}
    try:
        with Path(path).open(encoding="utf-8") as handle:
            for line in handle:
                if not line.startswith("#"):
                    break
                key, sep, value = line[1:].strip().partition(": ")
                if sep:
                    header[key] = value
                else:
                    header.setdefault("kind", key)
    except OSError as exc:
        raise OutputError(f"cannot read output ({exc.strerror})", path=str(path)) from exc
    return header


def read_snapshot(path: str | Path) -> SnapshotFile:
    header = read_header(path)
    if "columns" not in header:
        raise OutputError("not a poreflow table (no columns header)", path=str(path))
    columns = tuple(header["columns"].split("\t"))
    data = np.loadtxt(path, comments="#", delimiter="\t", ndmin=2)
    return SnapshotFile(header=header, columns=columns, data=data)


def snapshot_name(step: int) -> str:
    return f"snapshot_{step:06d}.tsv"
