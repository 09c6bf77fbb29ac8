"""Exact cosine nearest-neighbour search over the QA bank.

The bank is ~1k items, so a brute-force scan is cheap, deterministic, and
easy to verify; there is no approximate structure. Vectors are unit-
normalized at build time, so cosine similarity is a plain dot product.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BackendError,
    DuplicateIdError,
    EmbeddingFailedError,
    IndexFormatError,
    ZeroVectorError,
)
from .types import LETTERS, McqExample, RetrievalCandidate

MAGIC = b"MASVIDX1"
_EMBED_BATCH = 64


def embedded_text(mcq: McqExample) -> str:
    """Text used as the retrieval key: question plus the four option texts.

    Gold answer and explanation are deliberately excluded so answers cannot
    leak into retrieval keys.
    """
    return "\n".join([mcq.question, *(mcq.options[l] for l in LETTERS)])


@dataclass(frozen=True)
class VectorIndex:
    """Immutable id list + row-normalized embedding matrix."""

    dim: int
    ids: tuple[str, ...]
    matrix: np.ndarray  # shape (len(ids), dim), float64, unit rows
    read_only: bool = True

    def __len__(self) -> int:
        return len(self.ids)


def build_index(bank: Sequence[McqExample], embedder) -> VectorIndex:
    """Embed every bank example and assemble the normalized index."""
    if not bank:
        raise ValueError("bank must be non-empty")
    seen: set[str] = set()
    for ex in bank:
        if ex.id in seen:
            raise DuplicateIdError(ex.id)
        seen.add(ex.id)

    vectors: list[list[float]] = []
    for start in range(0, len(bank), _EMBED_BATCH):
        chunk = bank[start : start + _EMBED_BATCH]
        try:
            vectors.extend(embedder.embed([embedded_text(ex) for ex in chunk]))
        except BackendError as err:
            raise EmbeddingFailedError(chunk[0].id, err) from err

    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise EmbeddingFailedError(bank[0].id, ValueError(f"ragged dimensions {sorted(dims)}"))
    matrix = np.asarray(vectors, dtype=np.float64)
    return VectorIndex(
        dim=matrix.shape[1],
        ids=tuple(ex.id for ex in bank),
        matrix=_normalize_rows(matrix, [ex.id for ex in bank]),
    )


def _normalize_rows(matrix: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    for i, norm in enumerate(norms):
        if norm == 0.0:
            raise ZeroVectorError(ids[i])
    out = matrix / norms[:, None]
    out.setflags(write=False)
    return out


def query_top_n(
    index: VectorIndex, query_text: str, n: int, embedder
) -> list[RetrievalCandidate]:
    """Top-n entries by cosine similarity; ties broken by id ascending."""
    if n < 1:
        raise ValueError("n must be >= 1")
    try:
        (qvec,) = embedder.embed([query_text])
    except BackendError as err:
        raise EmbeddingFailedError("<query>", err) from err
    q = np.asarray(qvec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise EmbeddingFailedError(
            "<query>", ValueError(f"query dim {q.shape} != index dim {index.dim}")
        )
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise ZeroVectorError("<query>")
    scores = index.matrix @ (q / norm)

    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.ids[i]))[:n]
    return [
        RetrievalCandidate(
            example_id=index.ids[i], similarity=float(scores[i]), rank=rank
        )
        for rank, i in enumerate(order, start=1)
    ]


def save_index(index: VectorIndex, path: str | Path) -> None:
    """Persist as: magic, dim u32 LE, count u64 LE, then per entry
    (id length u16 LE, UTF-8 id, dim little-endian float32)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", index.dim))
        fh.write(struct.pack("<Q", len(index)))
        for example_id, row in zip(index.ids, index.matrix):
            encoded = example_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"id too long to persist: {example_id[:40]!r}...")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(row.astype("<f4").tobytes())


def load_index(path: str | Path) -> VectorIndex:
    """Load a persisted index, rejecting wrong magic or dimension."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12:
        raise IndexFormatError(f"{path}: file too short")
    if raw[: len(MAGIC)] != MAGIC:
        raise IndexFormatError(f"{path}: bad magic {raw[:8]!r}")
    offset = len(MAGIC)
    (dim,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    (count,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if dim < 1:
        raise IndexFormatError(f"{path}: invalid dimension {dim}")

    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float64)
    row_bytes = dim * 4
    for i in range(count):
        if offset + 2 > len(raw):
            raise IndexFormatError(f"{path}: truncated at entry {i}")
        (id_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + id_len + row_bytes > len(raw):
            raise IndexFormatError(f"{path}: truncated at entry {i}")
        ids.append(raw[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        rows[i] = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset)
        offset += row_bytes
    if offset != len(raw):
        raise IndexFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    # float32 storage loses a little precision; restore exact unit norms.
    return VectorIndex(dim=dim, ids=tuple(ids), matrix=_normalize_rows(rows, ids))
