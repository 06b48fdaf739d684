"""Sparse read-sampling matrix and frequency-vector conversions.

The matrix has one column per species and one compact row per k-mer that
actually occurs; each column is the probability distribution of a uniformly
sampled error-free read from that species. Sequences shorter than the read
length follow the uniform-tail convention: the read starts with the whole
sequence and the remaining positions are uniform over ACGT.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sequence_db import MAX_CODE_LENGTH, SequenceDatabase, lex_encode, window_codes

COLUMN_SUM_TOL = 1e-12
SIMPLEX_TOL = 1e-12

#: Columns with n_j < L expand into 4^(L - n_j) tail reads; refuse to blow up.
MAX_TAIL_LENGTH = 12

TAIL_CONVENTION = "uniform-tail"

_MATRIX_FORMAT = "readprofiler-matrix-v1"


@dataclass
class FrequencyVector:
    """Nonnegative length-N vector, either species frequencies ("species")
    or DNA-weighted sampling frequencies ("dna")."""

    values: np.ndarray
    kind: str = "species"
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("frequency vector must be 1-D")
        if np.any(self.values < 0):
            raise ValueError("frequency vector must be nonnegative")
        if self.kind not in ("species", "dna"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.normalized and abs(self.values.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"vector flagged normalized but sums to {self.values.sum()!r}")

    def __len__(self) -> int:
        return len(self.values)

    def normalize(self) -> "FrequencyVector":
        total = self.values.sum()
        if total <= 0:
            raise ValueError("cannot normalize an all-zero vector")
        v = self.values / total
        # guard against accumulated rounding in long vectors
        v = v / v.sum()
        return FrequencyVector(v, self.kind, normalized=True)


class ReadSamplingMatrix:
    """Compacted K x N read-sampling matrix with its row-code index."""

    def __init__(
        self,
        read_length: int,
        matrix: sp.csc_matrix,
        row_codes: list[int],
        col_lengths: np.ndarray,
        tail_convention: str = TAIL_CONVENTION,
    ):
        if matrix.shape[0] != len(row_codes):
            raise ValueError("row_codes length disagrees with matrix rows")
        if matrix.shape[1] != len(col_lengths):
            raise ValueError("col_lengths length disagrees with matrix columns")
        self.read_length = read_length
        self.matrix = matrix.tocsc()
        self.matrix.sort_indices()
        self.row_codes = list(row_codes)
        self.col_lengths = np.asarray(col_lengths, dtype=np.int64)
        self.tail_convention = tail_convention
        self.code_to_row = {code: i for i, code in enumerate(self.row_codes)}

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_species(self) -> int:
        return self.matrix.shape[1]

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def expected_read_distribution(self, x: FrequencyVector) -> np.ndarray:
        """A @ x' over the stored rows; sums to 1 for normalized dna input."""
        if x.kind != "dna":
            raise ValueError("expected a dna-weighted frequency vector")
        if not x.normalized:
            raise ValueError("expected a normalized frequency vector")
        if len(x) != self.n_species:
            raise ValueError(f"dimension mismatch: {len(x)} vs {self.n_species} species")
        return self.matrix @ x.values

    # -- serialization -----------------------------------------------------

    def save(self, path) -> None:
        """Canonical binary file: one JSON header line, then triplets sorted
        by (row, col), column lengths, and the row-code table."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        rows = coo.row[order].astype(np.int64)
        cols = coo.col[order].astype(np.int64)
        vals = coo.data[order].astype(np.float64)
        codes_blob = "\n".join(str(c) for c in self.row_codes).encode()
        payload = (
            rows.tobytes() + cols.tobytes() + vals.tobytes()
            + self.col_lengths.astype(np.int64).tobytes() + codes_blob
        )
        header = {
            "format": _MATRIX_FORMAT,
            "read_length": self.read_length,
            "n_rows": self.n_rows,
            "n_species": self.n_species,
            "nnz": int(len(vals)),
            "tail_convention": self.tail_convention,
            "codes_bytes": len(codes_blob),
            "checksum": hashlib.sha256(payload).hexdigest(),
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(payload)

    @classmethod
    def load(cls, path) -> "ReadSamplingMatrix":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            payload = fh.read()
        if header.get("format") != _MATRIX_FORMAT:
            raise ValueError(f"{path}: not a read-sampling matrix file")
        if hashlib.sha256(payload).hexdigest() != header["checksum"]:
            raise ValueError(f"{path}: checksum mismatch")
        nnz = header["nnz"]
        n = header["n_species"]
        off = 0
        rows = np.frombuffer(payload, dtype=np.int64, count=nnz, offset=off); off += 8 * nnz
        cols = np.frombuffer(payload, dtype=np.int64, count=nnz, offset=off); off += 8 * nnz
        vals = np.frombuffer(payload, dtype=np.float64, count=nnz, offset=off); off += 8 * nnz
        col_lengths = np.frombuffer(payload, dtype=np.int64, count=n, offset=off); off += 8 * n
        codes_blob = payload[off:]
        row_codes = [int(tok) for tok in codes_blob.decode().split("\n")] if codes_blob else []
        matrix = sp.csc_matrix(
            (vals, (rows, cols)), shape=(header["n_rows"], n)
        )
        return cls(header["read_length"], matrix, row_codes, col_lengths,
                   header["tail_convention"])


def build_matrix(db: SequenceDatabase, read_length: int) -> ReadSamplingMatrix:
    """Construct the read-sampling matrix for a database at a given read length.

    Deterministic: identical (db, read_length) always yields the same compact
    row order (first-seen, scanning columns left to right).
    """
    if read_length < 1:
        raise ValueError("read length must be >= 1")
    if read_length > MAX_CODE_LENGTH:
        raise ValueError(f"read length {read_length} exceeds cap {MAX_CODE_LENGTH}")
    if len(db) == 0:
        raise ValueError("cannot build a matrix from an empty database")

    code_to_row: dict[int, int] = {}
    row_codes: list[int] = []
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    def row_id(code: int) -> int:
        rid = code_to_row.get(code)
        if rid is None:
            rid = len(row_codes)
            code_to_row[code] = rid
            row_codes.append(code)
        return rid

    for j, rec in enumerate(db.records):
        n = rec.length
        if n >= read_length:
            denom = n - read_length + 1
            counts: dict[int, int] = {}
            for code in window_codes(rec.sequence, read_length):
                counts[code] = counts.get(code, 0) + 1
            for code, c in counts.items():
                rows.append(row_id(code))
                cols.append(j)
                vals.append(c / denom)
        else:
            tail_len = read_length - n
            if tail_len > MAX_TAIL_LENGTH:
                raise ValueError(
                    f"species {rec.id} ({rec.label!r}): read length exceeds sequence "
                    f"length by {tail_len} > {MAX_TAIL_LENGTH}; tail expansion refused"
                )
            prob = 4.0 ** (-tail_len)
            base = (lex_encode(rec.sequence) - 1) * (4 ** tail_len)
            for t in range(4 ** tail_len):
                rows.append(row_id(base + t + 1))
                cols.append(j)
                vals.append(prob)

    matrix = sp.csc_matrix(
        (np.array(vals), (np.array(rows), np.array(cols))),
        shape=(len(row_codes), len(db)),
    )
    out = ReadSamplingMatrix(read_length, matrix, row_codes, np.array(db.lengths))
    bad = np.abs(out.column_sums() - 1.0) > COLUMN_SUM_TOL
    if np.any(bad):
        raise AssertionError(f"column sums off by more than {COLUMN_SUM_TOL}: {np.where(bad)[0]}")
    return out


def reweight_to_dna(x: FrequencyVector, col_lengths) -> FrequencyVector:
    """Species frequencies -> DNA-weighted sampling frequencies,
    x'_j = x_j n_j / sum_i x_i n_i."""
    if x.kind != "species":
        raise ValueError("input must be a species frequency vector")
    lengths = np.asarray(col_lengths, dtype=float)
    if np.any(lengths <= 0):
        raise ValueError("sequence lengths must be positive")
    if len(lengths) != len(x):
        raise ValueError("dimension mismatch")
    w = x.values * lengths
    total = w.sum()
    if total <= 0:
        raise ValueError("all-zero frequency vector")
    w = w / total
    return FrequencyVector(w / w.sum(), "dna", normalized=True)


def unweight_from_dna(x_prime: FrequencyVector, col_lengths) -> FrequencyVector:
    """Inverse of :func:`reweight_to_dna`: x_j proportional to x'_j / n_j."""
    if x_prime.kind != "dna":
        raise ValueError("input must be a dna-weighted frequency vector")
    lengths = np.asarray(col_lengths, dtype=float)
    if np.any(lengths <= 0):
        raise ValueError("sequence lengths must be positive")
    if len(lengths) != len(x_prime):
        raise ValueError("dimension mismatch")
    w = x_prime.values / lengths
    total = w.sum()
    if total <= 0:
        raise ValueError("all-zero frequency vector")
    w = w / total
    return FrequencyVector(w / w.sum(), "species", normalized=True)
