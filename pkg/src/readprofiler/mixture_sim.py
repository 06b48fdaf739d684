"""Synthetic mixtures and i.i.d. short-read simulation.

Reads are drawn by the two-step generative model: pick a species according to
the DNA-weighted frequencies, then pick a read from that species' column of
the read-sampling matrix. All randomness flows through a seeded generator.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .read_matrix import FrequencyVector, ReadSamplingMatrix, reweight_to_dna
from .sequence_db import SequenceDatabase, lex_decode, lex_encode

logger = logging.getLogger(__name__)


@dataclass
class MixtureSpec:
    """Ground-truth mixture: which species are present and at what frequency."""

    support: np.ndarray          # 1-based species ids
    frequencies: np.ndarray      # aligned with support, sums to 1
    seed: int
    generator_tag: str = "manual"

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        if len(self.support) != len(np.unique(self.support)):
            raise ValueError("support ids must be distinct")
        if len(self.support) != len(self.frequencies):
            raise ValueError("support and frequencies differ in length")
        if np.any(self.frequencies < 0) or abs(self.frequencies.sum() - 1.0) > 1e-12:
            raise ValueError("frequencies must be nonnegative and sum to 1")

    def full_vector(self, n_species: int) -> FrequencyVector:
        if np.any(self.support < 1) or np.any(self.support > n_species):
            raise ValueError("support ids outside 1..N")
        x = np.zeros(n_species)
        x[self.support - 1] = self.frequencies
        return FrequencyVector(x, "species", normalized=True)

    def to_dict(self) -> dict:
        return {
            "support": self.support.tolist(),
            "frequencies": self.frequencies.tolist(),
            "seed": int(self.seed),
            "generator_tag": self.generator_tag,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "MixtureSpec":
        d = json.loads(Path(path).read_text())
        return cls(np.array(d["support"]), np.array(d["frequencies"]),
                   d.get("seed", 0), d.get("generator_tag", "manual"))


def sample_power_law_mixture(db, k: int, alpha: float, seed: int) -> MixtureSpec:
    """Pick k distinct species uniformly at random and give the i-th chosen
    species unnormalized weight i^(-alpha), then normalize."""
    n = db if isinstance(db, (int, np.integer)) else len(db)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    rng = np.random.default_rng(seed)
    support = rng.choice(n, size=k, replace=False) + 1
    # rank-based weights in chosen order: i-th chosen species gets i^(-alpha)
    weights = np.arange(1, k + 1, dtype=float) ** (-alpha)
    freqs = weights / weights.sum()
    return MixtureSpec(support, freqs, seed, generator_tag=f"power-law(alpha={alpha})")


@dataclass
class ReadCounts:
    """Multiset of observed reads, keyed by k-mer code."""

    counts: dict[int, int]
    read_length: int
    total: int
    seed: int | None = None
    skipped_short: int = 0

    def __post_init__(self):
        if self.total < 1:
            raise ValueError("total read count must be >= 1")
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts do not sum to total")
        if any(c <= 0 for c in self.counts.values()):
            raise ValueError("all stored counts must be positive")

    @property
    def n_distinct(self) -> int:
        return len(self.counts)

    def save(self, path) -> None:
        """Text format: '#' + JSON header, then 'kmer<TAB>count' lines."""
        header = {"read_length": self.read_length, "total": self.total, "seed": self.seed}
        lines = ["#" + json.dumps(header, sort_keys=True)]
        for code in sorted(self.counts):
            lines.append(f"{lex_decode(code, self.read_length)}\t{self.counts[code]}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ReadCounts":
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(lines[0][1:])
        counts: dict[int, int] = {}
        for line in lines[1:]:
            if not line.strip():
                continue
            kmer, cnt = line.split("\t")
            counts[lex_encode(kmer)] = int(cnt)
        return cls(counts, header["read_length"], header["total"], header.get("seed"))


def read_counts_from_reads(path, read_length: int) -> ReadCounts:
    """Encode raw reads (plain one-per-line or FASTQ) by their first L bases.

    Reads shorter than L are skipped and counted in ``skipped_short``.
    """
    lines = Path(path).read_text().splitlines()
    if lines and lines[0].startswith("@"):
        reads = lines[1::4]  # FASTQ: header, sequence, '+', quality
    else:
        reads = [ln for ln in lines if ln.strip()]
    counts: dict[int, int] = {}
    skipped = 0
    for read in reads:
        read = read.strip().upper()
        if len(read) < read_length:
            skipped += 1
            continue
        code = lex_encode(read[:read_length])
        counts[code] = counts.get(code, 0) + 1
    if skipped:
        logger.warning("skipped %d reads shorter than %d", skipped, read_length)
    total = sum(counts.values())
    if total == 0:
        raise ValueError(f"{path}: no usable reads of length >= {read_length}")
    return ReadCounts(counts, read_length, total, skipped_short=skipped)


def simulate_reads(A: ReadSamplingMatrix, x: FrequencyVector, n_reads: int,
                   seed: int) -> ReadCounts:
    """Draw ``n_reads`` i.i.d. reads from the mixture model.

    Species are drawn by inversion against the cumulative DNA-weighted
    frequencies, reads by inversion against the species' column cumulative.
    Deterministic given the seed.
    """
    if n_reads < 1:
        raise ValueError("need at least one read")
    if len(x) != A.n_species:
        raise ValueError("dimension mismatch between x and matrix")
    x_dna = x if x.kind == "dna" else reweight_to_dna(x, A.col_lengths)
    rng = np.random.default_rng(seed)
    u = rng.random(n_reads)
    v = rng.random(n_reads)

    cum = np.cumsum(x_dna.values)
    cum[-1] = 1.0
    species = np.searchsorted(cum, u, side="right")

    m = A.matrix
    chosen_rows = np.empty(n_reads, dtype=np.int64)
    for b in np.unique(species):
        sel = species == b
        start, end = m.indptr[b], m.indptr[b + 1]
        if start == end:
            raise ValueError(f"species column {b} is empty")
        col_cum = np.cumsum(m.data[start:end])
        col_cum[-1] = 1.0
        idx = np.searchsorted(col_cum, v[sel], side="right")
        chosen_rows[sel] = m.indices[start + idx]

    rows, cnts = np.unique(chosen_rows, return_counts=True)
    counts = {A.row_codes[int(r)]: int(c) for r, c in zip(rows, cnts)}
    return ReadCounts(counts, A.read_length, n_reads, seed=seed)


@dataclass
class EmpiricalFrequencies:
    """Observed read frequencies aligned to a matrix's compact rows."""

    y: np.ndarray                # length K, counts / total for mapped rows
    unmapped_fraction: float
    mapped_reads: int
    unmapped_reads: int
    total: int


def empirical_frequencies(rc: ReadCounts, A: ReadSamplingMatrix) -> EmpiricalFrequencies:
    """y = counts / R on the matrix's rows; reads whose k-mer is absent from
    the row index are excluded (not renormalized) and reported separately."""
    if rc.read_length != A.read_length:
        raise ValueError(
            f"read length mismatch: counts at L={rc.read_length}, matrix at L={A.read_length}"
        )
    y = np.zeros(A.n_rows)
    unmapped = 0
    for code, c in rc.counts.items():
        rid = A.code_to_row.get(code)
        if rid is None:
            unmapped += c
        else:
            y[rid] = c / rc.total
    mapped = rc.total - unmapped
    return EmpiricalFrequencies(y, unmapped / rc.total, mapped, unmapped, rc.total)
