"""Byte-sequence feature layer: k-gram spectrum kernel and kernel PCA.

Embeds byte sequences as sparse k-gram count spectra, provides the normalized
spectrum kernel (optionally composed with an RBF kernel), kernel PCA for
explicit low-dimensional coordinates and intrinsic-dimension analysis, a
synthetic request-corpus generator, sequence approximation by basis
concatenation, and the corpus file format.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from centroid_sec.core import RandomSource

__all__ = [
    "KernelConfig",
    "PcaEmbedding",
    "SparseSpectrum",
    "approximate_sequence",
    "extract_spectrum",
    "kernel_matrix",
    "kernel_pca",
    "normalize_dot",
    "rbf_from_dots",
    "read_corpus",
    "spectrum_dot",
    "synth_corpus",
    "write_corpus",
]

_EIGENVALUE_RANK_CUTOFF = 1e-10  # eigenvalues below cutoff * lambda_max count as zero rank


@dataclass(frozen=True)
class SparseSpectrum:
    """Sparse k-gram count vector of a byte sequence.

    Attributes:
        kgrams: Tuple of distinct k-grams, sorted lexicographically.
        counts: Matching occurrence counts, all >= 1.
        k: Gram length.
    """

    kgrams: tuple[bytes, ...]
    counts: tuple[int, ...]
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if len(self.kgrams) != len(self.counts):
            raise ValueError("kgrams and counts length mismatch")
        if any(c < 1 for c in self.counts):
            raise ValueError("all counts must be >= 1")
        if any(self.kgrams[i] >= self.kgrams[i + 1] for i in range(len(self.kgrams) - 1)):
            raise ValueError("kgrams must be sorted and duplicate-free")

    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class KernelConfig:
    """Spectrum-kernel configuration.

    Attributes:
        k: Gram length.
        sigma: Optional RBF bandwidth applied on top of the (normalized)
            spectrum kernel; ``None`` keeps the plain inner product.
        normalize: Whether to normalize to unit self-similarity.
    """

    k: int = 3
    sigma: float | None = None
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


def extract_spectrum(data: bytes, k: int) -> SparseSpectrum:
    """Count every contiguous k-gram of ``data``.

    The counts sum to ``len(data) - k + 1``.

    Raises:
        ValueError: If the sequence is shorter than ``k``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(data) < k:
        raise ValueError(f"sequence of length {len(data)} shorter than k={k}")
    counts: dict[bytes, int] = {}
    for i in range(len(data) - k + 1):
        gram = data[i : i + k]
        counts[gram] = counts.get(gram, 0) + 1
    grams = sorted(counts)
    return SparseSpectrum(
        kgrams=tuple(grams), counts=tuple(counts[g] for g in grams), k=k
    )


def spectrum_dot(s1: SparseSpectrum, s2: SparseSpectrum) -> float:
    """Inner product of two spectra via a linear merge over the sorted entries."""
    if s1.k != s2.k:
        raise ValueError(f"mismatched gram lengths {s1.k} != {s2.k}")
    i = j = 0
    acc = 0
    g1, c1, g2, c2 = s1.kgrams, s1.counts, s2.kgrams, s2.counts
    while i < len(g1) and j < len(g2):
        if g1[i] == g2[j]:
            acc += c1[i] * c2[j]
            i += 1
            j += 1
        elif g1[i] < g2[j]:
            i += 1
        else:
            j += 1
    return float(acc)


def normalize_dot(kxy: float, kxx: float, kyy: float) -> float:
    """Normalized kernel value ``kxy / sqrt(kxx * kyy)``."""
    if not (kxx > 0 and kyy > 0):
        raise ValueError("self-kernels must be positive (empty spectra are rejected upstream)")
    return kxy / math.sqrt(kxx * kyy)


def rbf_from_dots(kxy: float, kxx: float, kyy: float, sigma: float) -> float:
    """RBF composition ``exp(-(kxx - 2 kxy + kyy) / (2 sigma^2))``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return math.exp(-(kxx - 2.0 * kxy + kyy) / (2.0 * sigma * sigma))


def kernel_matrix(spectra: list[SparseSpectrum], config: KernelConfig) -> np.ndarray:
    """Dense kernel matrix over ``spectra`` under ``config``.

    Normalization (unit diagonal) is applied before the optional RBF
    composition, matching the processing order of the feature pipeline.
    """
    n = len(spectra)
    if n == 0:
        raise ValueError("need at least one spectrum")
    K = np.empty((n, n))
    for i in range(n):
        K[i, i] = spectrum_dot(spectra[i], spectra[i])
        for j in range(i + 1, n):
            K[i, j] = K[j, i] = spectrum_dot(spectra[i], spectra[j])
    if config.normalize:
        diag = np.sqrt(np.diag(K))
        K = K / np.outer(diag, diag)
        np.fill_diagonal(K, 1.0)
    if config.sigma is not None:
        d = np.diag(K)
        sq_dist = d[:, None] - 2.0 * K + d[None, :]
        K = np.exp(-sq_dist / (2.0 * config.sigma**2))
    return K


@dataclass(frozen=True)
class PcaEmbedding:
    """Kernel PCA decomposition of a (centered) kernel matrix.

    Attributes:
        eigenvalues: Nonincreasing, nonnegative (clipped) eigenvalues.
        variance_fraction: Cumulative explained-variance curve, ending at 1
            over the full rank.
        components: Minimal number of components reaching the requested
            variance fraction.
        basis: Eigenvectors scaled by inverse root eigenvalues, shape
            (n, components); maps centered kernel rows to coordinates.
        coordinates: Explicit training-point coordinates, shape
            (n, components).
    """

    eigenvalues: np.ndarray
    variance_fraction: np.ndarray
    components: int
    basis: np.ndarray
    coordinates: np.ndarray


def center_kernel(K: np.ndarray) -> np.ndarray:
    """Double-center a kernel matrix (zero-mean feature-space embedding)."""
    row = K.mean(axis=0, keepdims=True)
    return K - row - row.T + row.mean()


def kernel_pca(
    K: np.ndarray, target_variance: float, center: bool = True
) -> PcaEmbedding:
    """Eigendecompose a kernel matrix and pick the minimal component count
    whose cumulative eigenvalue mass reaches ``target_variance``.

    Centering is on by default (standard kernel-PCA practice) and switchable.
    """
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"kernel matrix must be square, got {K.shape}")
    if not np.allclose(K, K.T, atol=1e-10):
        raise ValueError("kernel matrix must be symmetric within 1e-10")
    if not 0.0 < target_variance <= 1.0:
        raise ValueError(f"target_variance must be in (0, 1], got {target_variance}")
    Kc = center_kernel(K) if center else K
    eigvals, eigvecs = np.linalg.eigh(Kc)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    if eigvals[0] <= 0:
        raise ValueError("kernel matrix has no positive eigenvalue (all-zero input?)")
    if eigvals.min() < -1e-8 * eigvals[0]:
        raise ValueError("kernel matrix is not PSD within tolerance")
    eigvals = np.where(eigvals < _EIGENVALUE_RANK_CUTOFF * eigvals[0], 0.0, eigvals)
    total = eigvals.sum()
    variance_fraction = np.cumsum(eigvals) / total
    m = int(np.searchsorted(variance_fraction, target_variance - 1e-12) + 1)
    m = min(m, int(np.count_nonzero(eigvals)))
    inv_root = 1.0 / np.sqrt(eigvals[:m])
    basis = eigvecs[:, :m] * inv_root[None, :]
    coordinates = eigvecs[:, :m] * np.sqrt(eigvals[:m])[None, :]
    return PcaEmbedding(
        eigenvalues=eigvals,
        variance_fraction=variance_fraction,
        components=m,
        basis=basis,
        coordinates=coordinates,
    )


_METHODS = [b"GET", b"POST", b"HEAD", b"PUT"]
_WORDS = [
    b"index", b"images", b"static", b"login", b"search", b"admin", b"api",
    b"data", b"report", b"view", b"edit", b"list", b"item", b"user", b"cart",
    b"checkout", b"help", b"docs", b"news", b"feed", b"media", b"files",
    b"archive", b"photo", b"video", b"tag", b"home", b"about", b"contact",
    b"status", b"health", b"assets",
]
_EXTENSIONS = [b".html", b".php", b".jsp", b".png", b".css", b".js", b""]
_PARAM_KEYS = [b"id", b"q", b"page", b"sort", b"lang", b"ref", b"sid", b"cat"]


def synth_corpus(
    rng: RandomSource | np.random.Generator,
    size: int,
    diversity: int = 16,
    max_depth: int = 3,
    max_params: int = 3,
) -> list[bytes]:
    """Generate a deterministic pool of HTTP-request-like byte sequences.

    Args:
        rng: Randomness handle; identical sources yield identical corpora.
        size: Number of sequences (>= 1).
        diversity: How many distinct path words are drawn on (capped by the
            word pool); higher diversity raises the corpus's intrinsic
            dimension.
        max_depth: Maximum number of path segments.
        max_params: Maximum number of query parameters.
    """
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    if diversity < 1:
        raise ValueError(f"diversity must be >= 1, got {diversity}")
    gen = rng.generator() if isinstance(rng, RandomSource) else rng
    words = _WORDS[: min(diversity, len(_WORDS))]
    out: list[bytes] = []
    for _ in range(size):
        method = _METHODS[gen.integers(len(_METHODS))]
        depth = int(gen.integers(1, max_depth + 1))
        segments = [words[gen.integers(len(words))] for _ in range(depth)]
        path = b"/" + b"/".join(segments) + _EXTENSIONS[gen.integers(len(_EXTENSIONS))]
        n_params = int(gen.integers(0, max_params + 1))
        if n_params:
            params = []
            for _ in range(n_params):
                key = _PARAM_KEYS[gen.integers(len(_PARAM_KEYS))]
                value = str(gen.integers(10_000)).encode()
                params.append(key + b"=" + value)
            path += b"?" + b"&".join(params)
        request = (
            method + b" " + path + b" HTTP/1.1\r\n"
            b"Host: server" + str(gen.integers(diversity)).encode() + b".example\r\n"
            b"Connection: keep-alive\r\n\r\n"
        )
        out.append(request)
    return out


def approximate_sequence(
    coefficients: np.ndarray | list[float],
    basis: list[bytes],
    max_denominator: int = 16,
) -> bytes:
    """Concatenate basis sequences with repetition counts proportional to the
    rationalized coefficients, approximating the target spectrum direction.

    The rationalization denominator is capped by ``max_denominator`` to limit
    the length blow-up of the produced sequence.
    """
    coeffs = np.asarray(coefficients, dtype=np.float64)
    if coeffs.ndim != 1 or len(coeffs) != len(basis):
        raise ValueError("coefficients and basis must have matching lengths")
    if np.any(coeffs < 0):
        raise ValueError("coefficients must be nonnegative")
    if not np.any(coeffs > 0):
        raise ValueError("at least one coefficient must be positive")
    scale = coeffs.max()
    fracs = [
        Fraction(float(c / scale)).limit_denominator(max_denominator) for c in coeffs
    ]
    denom_lcm = math.lcm(*(f.denominator for f in fracs))
    repeats = [int(f * denom_lcm) for f in fracs]
    gcd = math.gcd(*repeats)
    parts: list[bytes] = []
    for seq, rep in zip(basis, repeats):
        parts.append(seq * (rep // gcd))
    return b"".join(parts)


_CORPUS_MAGIC = "#corpus v1 k="


def write_corpus(path: str | Path, sequences: list[bytes], k: int) -> None:
    """Write a corpus file: header line then one base64-encoded record per line."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    for seq in sequences:
        if len(seq) < k:
            raise ValueError("corpus contains a sequence shorter than k")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{_CORPUS_MAGIC}{k}\n")
        for seq in sequences:
            fh.write(base64.b64encode(seq).decode("ascii") + "\n")


def read_corpus(path: str | Path) -> tuple[list[bytes], int]:
    """Read a corpus file written by :func:`write_corpus`.

    Returns:
        ``(sequences, k)``.
    """
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(_CORPUS_MAGIC):
            raise ValueError(f"not a corpus file: bad header {header!r}")
        k = int(header[len(_CORPUS_MAGIC):])
        sequences = [base64.b64decode(line.strip()) for line in fh if line.strip()]
    return sequences, k
