"""Readers and writers for the on-disk interchange formats.

Graphs arrive either as whitespace-delimited edge lists (``i j w`` per line,
1-based, ``#`` comments, optional ``# n=<int>`` vertex-count override) or as
Matrix Market coordinate real/pattern symmetric files.  Matrix-completion
observations arrive as CSV with a leading ``# n1=<int> n2=<int>`` line and an
``i,j,value`` header.  Factorized solutions are written as two plain-text
column-major files with one-line ``rows cols`` headers.
"""

from __future__ import annotations

import csv
import re

import numpy as np
import scipy.io
import scipy.sparse as sp

from .problems import FormatError


def load_graph(path):
    """Return (edges, n_vertices or None) from an edge-list or MM file."""
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline()
    if head.startswith("%%MatrixMarket"):
        return _load_matrix_market(path)
    return _load_edge_list(path)


def _load_matrix_market(path):
    M = scipy.io.mmread(path)
    M = sp.coo_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise FormatError("graph matrix must be square")
    n = M.shape[0]
    if np.any((M.row == M.col) & (M.data != 0)):
        raise FormatError("self-loop present in graph matrix")
    edges = []
    for i, j, w in zip(M.row, M.col, M.data):
        if i < j and w != 0:
            edges.append((int(i) + 1, int(j) + 1, float(w)))
    return edges, n


def _load_edge_list(path):
    edges = []
    n_override = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.search(r"\bn\s*=\s*(\d+)", line)
                if m:
                    n_override = int(m.group(1))
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise FormatError(f"{path}:{lineno}: expected 'i j [w]'")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            edges.append((i, j, w))
    return edges, n_override


def load_observations(path):
    """Return (n1, n2, [(i, j, value), ...]) from an observation CSV."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        m = re.match(r"#\s*n1\s*=\s*(\d+)\s+n2\s*=\s*(\d+)", first)
        if not m:
            raise FormatError("observation CSV must start with '# n1=<int> n2=<int>'")
        n1, n2 = int(m.group(1)), int(m.group(2))
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["i", "j", "value"]:
            raise FormatError("observation CSV needs an 'i,j,value' header")
        obs = []
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise FormatError(f"observation row {row!r} has wrong arity")
            obs.append((int(row[0]), int(row[1]), float(row[2])))
    return n1, n2, obs


def write_observations(path, n1, n2, observations):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# n1={n1} n2={n2}\n")
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "value"])
        for i, j, v in observations:
            writer.writerow([i, j, repr(float(v))])


def write_dense_matrix(path, M):
    """Plain-text column-major dump with a one-line 'rows cols' header."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rows, cols = M.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{rows} {cols}\n")
        for j in range(cols):
            for i in range(rows):
                fh.write(repr(float(M[i, j])) + "\n")


def read_dense_matrix(path):
    with open(path, "r", encoding="utf-8") as fh:
        rows, cols = (int(t) for t in fh.readline().split())
        vals = np.array([float(line) for line in fh if line.strip()])
    if vals.size != rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} values, got {vals.size}")
    return vals.reshape((cols, rows)).T


def write_factors(v_path, s_path, V, S):
    """Write a recovered factorization X = V S V' as two dense text files."""
    write_dense_matrix(v_path, V)
    write_dense_matrix(s_path, S)


def read_factors(v_path, s_path):
    return read_dense_matrix(v_path), read_dense_matrix(s_path)
