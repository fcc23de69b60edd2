"""Core containers and file ingestion.

Matrices are column-standardized on load: zero mean, unit sample standard
deviation (n-1 convention). Original means/scales are retained so values can
be mapped back to input units. All containers are immutable by convention and
safe to share read-only across workers.

File formats
------------
* Design TSV: header ``id <cov1> ... <covp> y``, one row per sample.
* Summary-stats TSV: header ``snp z``; the sample size is supplied separately.
* Annotation TSV: header ``snp <anno1> ... <annoL>``.
* LD text: p x p TSV of correlations, no header.
* LD binary: magic ``LDMX``, little-endian u32 p, then p*p f64 row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateSnpId,
    NonFiniteInput,
    NotPositiveDefinite,
    ParseError,
    ZeroVarianceColumn,
)

LD_MAGIC = b"LDMX"

MEAN_TOL = 1e-10
SD_TOL = 1e-8


@dataclass(frozen=True)
class StandardizedMatrix:
    """Column-standardized matrix with the inverse-transform metadata.

    ``values`` has columns of mean 0 and sample sd 1; ``col_means`` and
    ``col_scales`` are in the original units, with ``col_scales > 0``.
    """

    values: np.ndarray
    col_means: np.ndarray
    col_scales: np.ndarray
    col_names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def original(self) -> np.ndarray:
        """Map the standardized values back to input units."""
        return self.values * self.col_scales + self.col_means


@dataclass(frozen=True)
class AnnotationMatrix:
    """Standardized p x L annotation matrix.

    Columns sum to zero (within 1e-8) and have unit sample sd; constant
    columns are rejected at load. ``names`` labels the L annotations.
    """

    values: np.ndarray
    names: tuple[str, ...]
    snp_ids: tuple[str, ...] | None = None

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n_annotations(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SummaryStats:
    """Marginal Z-scores for p SNPs plus the study sample size."""

    snp_ids: tuple[str, ...]
    z: np.ndarray
    n: int

    @property
    def p(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True)
class LdMatrix:
    """Shrunk, unit-diagonal, positive-definite correlation matrix.

    ``regularization`` records the shrinkage epsilon that was applied:
    sigma' = (1 - eps) * sigma + eps * I, diagonal renormalized to 1.
    """

    sigma: np.ndarray
    regularization: float = 0.0

    @property
    def p(self) -> int:
        return self.sigma.shape[0]


def standardize(raw: np.ndarray, names=None) -> StandardizedMatrix:
    """Column-standardize a matrix to mean 0 / sample sd 1 (n-1 convention).

    Raises
    ------
    NonFiniteInput
        If any entry is NaN or infinite.
    ZeroVarianceColumn
        If a column is constant.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[:, None]
    if raw.shape[0] < 2:
        raise ValueError("need at least 2 rows to standardize")
    if not np.all(np.isfinite(raw)):
        raise NonFiniteInput("matrix contains non-finite entries")
    means = raw.mean(axis=0)
    scales = raw.std(axis=0, ddof=1)
    for j in np.flatnonzero(scales <= 0.0):
        raise ZeroVarianceColumn(int(j), names[j] if names is not None else None)
    values = (raw - means) / scales
    return StandardizedMatrix(
        values=values,
        col_means=means,
        col_scales=scales,
        col_names=tuple(names) if names is not None else None,
    )


def standardize_vector(raw: np.ndarray) -> np.ndarray:
    """Standardize a response vector (treated as a one-column matrix)."""
    return standardize(np.asarray(raw, dtype=np.float64)[:, None]).values[:, 0]


def _read_tsv_table(path, min_columns=2):
    """Read a header + data TSV, returning (header, rows of str cells)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        raise ParseError("no data rows")
    header = lines[0].split("\t")
    if len(header) < min_columns:
        raise ParseError(f"header has {len(header)} columns, need >= {min_columns}", line=1)
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        cells = ln.split("\t")
        if len(cells) != len(header):
            raise ParseError(
                f"row has {len(cells)} cells, header has {len(header)}", line=i
            )
        rows.append((i, cells))
    if not rows:
        raise ParseError("no data rows")
    return header, rows


def _parse_float(cell, line):
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell '{cell}'", line=line) from None


def load_design(path, format="tsv"):
    """Load a design TSV and return ``(StandardizedMatrix, response)``.

    The response column ``y`` is standardized as its own one-column matrix
    and returned as a vector.
    """
    if format != "tsv":
        raise ParseError(f"unknown design format '{format}'")
    header, rows = _read_tsv_table(path, min_columns=3)
    if header[-1] != "y":
        raise ParseError("last header column must be 'y'", line=1)
    cov_names = header[1:-1]
    data = np.array(
        [[_parse_float(c, line) for c in cells[1:]] for line, cells in rows]
    )
    design = standardize(data[:, :-1], names=cov_names)
    response = standardize_vector(data[:, -1])
    return design, response


def write_design(path, design: StandardizedMatrix, response, ids=None):
    """Write a design TSV (standardized values as stored)."""
    n, p = design.values.shape
    names = design.col_names or tuple(f"cov{j + 1}" for j in range(p))
    ids = ids or [f"s{i + 1}" for i in range(n)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\t" + "\t".join(names) + "\ty\n")
        for i in range(n):
            cells = [ids[i]] + [repr(float(v)) for v in design.values[i]] + [repr(float(response[i]))]
            fh.write("\t".join(cells) + "\n")


def load_summary_stats(path, n):
    """Load a ``snp z`` TSV; ``n`` is the study sample size."""
    if n < 2:
        raise ParseError(f"sample size must be >= 2, got {n}")
    header, rows = _read_tsv_table(path, min_columns=2)
    if header[:2] != ["snp", "z"]:
        raise ParseError("header must be 'snp\\tz'", line=1)
    ids, z = [], []
    for line, cells in rows:
        ids.append(cells[0])
        z.append(_parse_float(cells[1], line))
    if len(set(ids)) != len(ids):
        seen = set()
        dup = next(s for s in ids if s in seen or seen.add(s))
        raise DuplicateSnpId(f"duplicate snp id '{dup}'")
    z = np.array(z)
    if not np.all(np.isfinite(z)):
        raise NonFiniteInput("z-scores contain non-finite entries")
    return SummaryStats(snp_ids=tuple(ids), z=z, n=int(n))


def write_summary_stats(path, stats: SummaryStats):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("snp\tz\n")
        for s, v in zip(stats.snp_ids, stats.z):
            fh.write(f"{s}\t{float(v)!r}\n")


def ld_from_array(sigma, shrinkage=0.0):
    """Build an LdMatrix from a raw correlation array.

    Applies sigma' = (1 - eps) * sigma + eps * I, renormalizes the diagonal
    to exactly 1, and requires the result to be positive definite.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionMismatch("LD matrix shape", "square", str(sigma.shape))
    if not np.all(np.isfinite(sigma)):
        raise NonFiniteInput("LD matrix contains non-finite entries")
    if not (0.0 <= shrinkage < 1.0):
        raise ParseError(f"shrinkage must be in [0, 1), got {shrinkage}")
    if np.max(np.abs(sigma - sigma.T)) > 1e-10:
        raise ParseError("LD matrix is not symmetric within 1e-10")
    p = sigma.shape[0]
    shrunk = (1.0 - shrinkage) * sigma + shrinkage * np.eye(p)
    d = np.sqrt(np.diag(shrunk))
    if np.any(d <= 0):
        raise NotPositiveDefinite("LD matrix has a non-positive diagonal entry")
    shrunk = shrunk / np.outer(d, d)
    shrunk = 0.5 * (shrunk + shrunk.T)
    np.fill_diagonal(shrunk, 1.0)
    try:
        np.linalg.cholesky(shrunk)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            "LD matrix is not positive definite after shrinkage "
            f"{shrinkage}; increase --shrinkage"
        ) from None
    return LdMatrix(sigma=shrunk, regularization=float(shrinkage))


def load_ld(path, shrinkage=0.0):
    """Load an LD matrix (binary if it starts with the LDMX magic, else TSV)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == LD_MAGIC:
        sigma = _read_ld_binary(path)
    else:
        sigma = _read_ld_text(path)
    return ld_from_array(sigma, shrinkage=shrinkage)


def _read_ld_binary(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ParseError("truncated LD binary header")
    (p,) = struct.unpack("<I", blob[4:8])
    expected = 8 + 8 * p * p
    if len(blob) != expected:
        raise ParseError(f"LD binary has {len(blob)} bytes, expected {expected}")
    sigma = np.frombuffer(blob, dtype="<f8", offset=8, count=p * p).reshape(p, p)
    return sigma.copy()


def _read_ld_text(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() != ""]
    if not lines:
        raise ParseError("no data rows")
    rows = []
    for i, ln in enumerate(lines, start=1):
        rows.append([_parse_float(c, i) for c in ln.split("\t")])
    p = len(rows)
    if any(len(r) != p for r in rows):
        raise ParseError(f"LD text matrix is not square ({p} rows)")
    return np.array(rows)


def write_ld(path, ld: LdMatrix, binary=False):
    if binary:
        p = ld.p
        with open(path, "wb") as fh:
            fh.write(LD_MAGIC)
            fh.write(struct.pack("<I", p))
            fh.write(np.ascontiguousarray(ld.sigma, dtype="<f8").tobytes())
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for row in ld.sigma:
                fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def annotations_from_array(raw, names, snp_ids=None):
    """Standardize raw annotation columns into an AnnotationMatrix."""
    sm = standardize(raw, names=names)
    values = sm.values
    # Column sums must vanish for the weight-update reduction to be exact.
    values = values - values.mean(axis=0)
    return AnnotationMatrix(
        values=values,
        names=tuple(names),
        snp_ids=tuple(snp_ids) if snp_ids is not None else None,
    )


def load_annotations(path):
    """Load a ``snp <anno...>`` TSV into a standardized AnnotationMatrix."""
    header, rows = _read_tsv_table(path, min_columns=2)
    if header[0] != "snp":
        raise ParseError("first header column must be 'snp'", line=1)
    names = header[1:]
    ids, data = [], []
    for line, cells in rows:
        ids.append(cells[0])
        data.append([_parse_float(c, line) for c in cells[1:]])
    if len(set(ids)) != len(ids):
        raise DuplicateSnpId("duplicate snp id in annotation file")
    return annotations_from_array(np.array(data), names=names, snp_ids=ids)


def write_annotations(path, anno: AnnotationMatrix):
    ids = anno.snp_ids or tuple(f"snp{j + 1}" for j in range(anno.p))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("snp\t" + "\t".join(anno.names) + "\n")
        for s, row in zip(ids, anno.values):
            fh.write(s + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def empty_annotations(p) -> AnnotationMatrix:
    """A p x 0 annotation matrix: the no-prior-information case."""
    return AnnotationMatrix(values=np.zeros((p, 0)), names=())
