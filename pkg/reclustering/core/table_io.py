"""CSV input and report output

Input tables hold one row per unit with named outcome, target, control and cluster-id
columns. Every file the tool writes starts with ``#`` audit lines carrying the version,
the seed and the resolved configuration; readers skip them.
"""

import json
import logging
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Any, TextIO

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .cluster_model import ClusterStructure
from .exceptions import DataError, ErrorContext, ResourceError
from .regression import Dataset

logger = logging.getLogger(__name__)

AUDIT_PREFIX = "#"


class ColumnMapping(BaseModel):
    """Which input columns play which role"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    y: str = "y"
    x: str = "x"
    controls: tuple[str, ...] = Field(default=())
    fine: str = "fine"
    gross: str = "gross"
    intercept: bool | None = None  # None: only when fine fixed effects are not absorbed

    @property
    def used_columns(self) -> list[str]:
        return [self.y, self.x, *self.controls, self.fine, self.gross]


@dataclass(frozen=True)
class AuditHeader:
    """Provenance lines at the top of every written file"""

    version: str
    seed: int | None = None
    config: dict[str, Any] | None = None
    extra: tuple[tuple[str, str], ...] = ()

    def lines(self) -> list[str]:
        lines = [f"{AUDIT_PREFIX} reclustering {self.version}"]
        if self.seed is not None:
            lines.append(f"{AUDIT_PREFIX} seed: {self.seed}")
        if self.config is not None:
            lines.append(f"{AUDIT_PREFIX} config: {json.dumps(self.config, sort_keys=True)}")
        lines.extend(f"{AUDIT_PREFIX} {key}: {value}" for key, value in self.extra)
        return lines

    def write(self, stream: TextIO) -> None:
        stream.write("\n".join(self.lines()) + "\n")


def _header_length(path: Path) -> int:
    count = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith(AUDIT_PREFIX):
                break
            count += 1
    return count


def read_audit_header(path: Path) -> dict[str, str]:
    """``key: value`` pairs of a file's audit lines"""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith(AUDIT_PREFIX):
                break
            body = line[len(AUDIT_PREFIX) :].strip()
            key, sep, value = body.partition(": ")
            if sep:
                values[key] = value
    return values


def read_frame(path: Path) -> pd.DataFrame:
    """Read a UTF-8 CSV with a header row, skipping audit lines

    Raises:
        ResourceError: missing or unreadable file
        DataError: malformed CSV
    """
    if not path.exists():
        raise ResourceError(f"Input file not found: {path}", resource_path=str(path))
    try:
        return pd.read_csv(
            path,
            skiprows=_header_length(path),
            encoding="utf-8",
            float_precision="round_trip",
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(
            f"Cannot parse {path} as CSV: {e}",
            context=ErrorContext(file_path=str(path)),
            original_error=e,
        ) from e
    except OSError as e:
        raise ResourceError(f"Cannot read {path}: {e}", resource_path=str(path)) from e


def _cluster_labels(column: pd.Series) -> list[Any]:
    """Integer ids when every label is an integer, so they sort numerically; strings otherwise"""
    numeric = pd.to_numeric(column, errors="coerce")
    if numeric.notna().all() and np.all(np.mod(numeric, 1) == 0):
        return [int(v) for v in numeric]
    return [str(v) for v in column]


def frame_to_dataset(
    frame: pd.DataFrame,
    mapping: ColumnMapping,
    absorb_fine_fe: bool = True,
    source: str | None = None,
) -> Dataset:
    """Build a Dataset from mapped columns

    Raises:
        DataError: unmapped columns, missing values, or non-numeric regressors
        ClusterStructureError: fine clusters split across gross clusters
    """
    missing = [column for column in mapping.used_columns if column not in frame.columns]
    if missing:
        raise DataError(
            f"Column(s) not found: {', '.join(missing)}",
            context=ErrorContext(file_path=source, column=missing[0]),
            suggestions=[f"Available columns: {', '.join(map(str, frame.columns))}"],
        )

    for column in mapping.used_columns:
        holes = frame[column].isna()
        if holes.any():
            raise DataError(
                f"Column '{column}' has {int(holes.sum())} missing value(s), "
                f"first in data row {int(np.flatnonzero(holes)[0]) + 1}",
                context=ErrorContext(file_path=source, column=column),
            )

    numeric_columns = [mapping.y, mapping.x, *mapping.controls]
    values = {}
    for column in numeric_columns:
        converted = pd.to_numeric(frame[column], errors="coerce")
        if converted.isna().any():
            raise DataError(
                f"Column '{column}' has non-numeric values",
                context=ErrorContext(file_path=source, column=column),
            )
        values[column] = converted.to_numpy(dtype=np.float64)

    regressors = [values[mapping.x], *(values[c] for c in mapping.controls)]
    names = [mapping.x, *mapping.controls]
    if mapping.intercept or (mapping.intercept is None and not absorb_fine_fe):
        regressors.append(np.ones(len(frame)))
        names.append("intercept")

    structure = ClusterStructure.from_labels(
        _cluster_labels(frame[mapping.fine]), _cluster_labels(frame[mapping.gross])
    )
    logger.info(
        f"Read {len(frame)} rows: {structure.n_fine} fine and {structure.n_gross} gross clusters"
    )
    return Dataset(
        y=values[mapping.y],
        X=np.column_stack(regressors),
        structure=structure,
        target=0,
        absorb_fine_fe=absorb_fine_fe,
        column_names=tuple(names),
    )


def read_dataset(path: Path, mapping: ColumnMapping, absorb_fine_fe: bool = True) -> Dataset:
    return frame_to_dataset(read_frame(path), mapping, absorb_fine_fe, source=str(path))


def dataset_frame(data: Dataset) -> pd.DataFrame:
    """Columns y, x, fine, gross with the structure's labels"""
    structure = data.structure
    fine_labels = np.asarray(structure.fine_labels, dtype=object)
    gross_labels = np.asarray(structure.gross_labels, dtype=object)
    return pd.DataFrame(
        {
            "y": data.y,
            data.target_name: data.X[:, data.target],
            "fine": fine_labels[structure.unit_to_fine],
            "gross": gross_labels[structure.unit_to_gross],
        }
    )


def write_frame(frame: pd.DataFrame, stream: TextIO, header: AuditHeader | None = None) -> None:
    if header is not None:
        header.write(stream)
    frame.to_csv(stream, index=False, lineterminator="\n")


def write_frame_to(
    frame: pd.DataFrame, path: Path | None, stream: TextIO, header: AuditHeader | None = None
) -> None:
    """Write to ``path`` when given, else to ``stream``"""
    if path is None:
        write_frame(frame, stream, header)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            write_frame(frame, f, header)
    except OSError as e:
        raise ResourceError(f"Cannot write {path}: {e}", resource_path=str(path)) from e
    logger.info(f"Wrote {len(frame)} rows to {path}")


def draws_frame(draws: Iterable[float], observed: float) -> pd.DataFrame:
    """Resampled statistics, one per row, with the observed value alongside"""
    values = np.fromiter(draws, dtype=np.float64)
    return pd.DataFrame(
        {"draw": np.arange(1, values.shape[0] + 1), "tau": values, "tau_obs": observed}
    )
