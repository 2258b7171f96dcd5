"""Plain-text file formats.

Graph snapshot (1-based node indices)::

    # optional comment lines
    n d directed
    i j a_star omega
    ...

One row per pair of the universe (``i < j`` when undirected). ``a_star`` may
be ``NA`` on rows with ``omega = 0`` when the hidden truth is unknown; on
observed rows it is the observed edge status. Covariates live in a companion
file of ``n`` rows and ``d`` whitespace-separated columns.

Every writer prefixes its output with ``#`` comment lines carrying the
effective configuration and seed.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .conformal import PValueFamily
from .errors import FormatError
from .graph import CompleteGraphData, Observation, pair_universe

MISSING = ("NA", "na", "?", "-")
# rejection convention recorded in every rejection and bound file
REJECTION_RULE = "# rejection rule: p <= t"


def header_lines(kind, config=None, seed=None, extra=None) -> list:
    lines = [f"# conflink {kind}"]
    if seed is not None:
        lines.append(f"# seed: {seed}")
    if config is not None:
        lines.append("# config: " + json.dumps(config, sort_keys=True))
    for key, value in (extra or {}).items():
        lines.append(f"# {key}: {value}")
    return lines


def _write(path, lines):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def covariate_path(graph_path) -> Path:
    graph_path = Path(graph_path)
    return graph_path.with_name(graph_path.name + ".cov")


# ------------------------------------------------------------------ graphs

def write_graph(path, a_star, omega, x, directed=False, header=(), truth_known=True):
    """Write a snapshot; unobserved rows get ``NA`` unless ``truth_known``."""
    omega = np.asarray(omega)
    n = omega.shape[0]
    x = np.asarray(x, dtype=float).reshape(n, -1)
    lines = list(header) + [f"{n} {x.shape[1]} {int(bool(directed))}"]
    for i, j in pair_universe(n, directed):
        o = int(omega[i, j])
        truth = str(int(a_star[i, j])) if truth_known or o == 1 else "NA"
        lines.append(f"{i + 1} {j + 1} {truth} {o}")
    path = _write(path, lines)
    if x.shape[1] > 0:
        write_matrix(covariate_path(path), x)
    return path


def write_observation(path, obs: Observation, header=()):
    return write_graph(path, obs.a, obs.omega, obs.x, obs.directed, header, truth_known=False)


def _data_rows(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if stripped and not stripped.startswith("#"):
                yield lineno, stripped.split()


def read_matrix(path, n_rows=None, n_cols=None) -> np.ndarray:
    rows = []
    for lineno, parts in _data_rows(path):
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise FormatError("non-numeric entry", path, lineno) from None
        if n_cols is not None and len(parts) != n_cols:
            raise FormatError(f"expected {n_cols} columns, got {len(parts)}", path, lineno)
    mat = np.array(rows, dtype=float).reshape(len(rows), -1 if rows else (n_cols or 0))
    if n_rows is not None and len(rows) != n_rows:
        raise FormatError(f"expected {n_rows} rows, got {len(rows)}", path)
    return mat


def write_matrix(path, mat, header=()):
    mat = np.asarray(mat, dtype=float)
    return _write(path, list(header) + [" ".join(repr(float(v)) for v in row) for row in mat])


def read_graph(path, covariates=None):
    """Parse a snapshot into ``(observation, ground_truth_or_None)``."""
    rows = _data_rows(path)
    try:
        lineno, head = next(rows)
    except StopIteration:
        raise FormatError("empty file", path) from None
    if len(head) != 3:
        raise FormatError("header must be 'n d directed'", path, lineno)
    try:
        n, d, directed = int(head[0]), int(head[1]), bool(int(head[2]))
    except ValueError:
        raise FormatError("header must be 'n d directed'", path, lineno) from None
    if n < 1 or d < 0:
        raise FormatError("header values out of range", path, lineno)

    a_star = np.zeros((n, n), dtype=np.int8)
    omega = np.zeros((n, n), dtype=np.int8)
    seen = np.zeros((n, n), dtype=bool)
    complete = True
    for lineno, parts in rows:
        if len(parts) != 4:
            raise FormatError(f"expected 4 columns 'i j a_star omega', got {len(parts)}",
                              path, lineno)
        try:
            i, j, o = int(parts[0]) - 1, int(parts[1]) - 1, int(parts[3])
        except ValueError:
            raise FormatError("non-integer index or omega", path, lineno) from None
        if not (0 <= i < n and 0 <= j < n) or i == j or (not directed and i > j):
            raise FormatError(f"pair ({i + 1}, {j + 1}) outside the pair universe", path, lineno)
        if o not in (0, 1):
            raise FormatError("omega must be 0 or 1", path, lineno)
        if seen[i, j]:
            raise FormatError(f"duplicate pair ({i + 1}, {j + 1})", path, lineno)
        seen[i, j] = True
        if parts[2] in MISSING:
            if o == 1:
                raise FormatError("a_star is required on observed rows", path, lineno)
            complete = False
            truth = 0
        else:
            try:
                truth = int(parts[2])
            except ValueError:
                raise FormatError("a_star must be 0, 1 or NA", path, lineno) from None
            if truth not in (0, 1):
                raise FormatError("a_star must be 0, 1 or NA", path, lineno)
        a_star[i, j] = truth
        omega[i, j] = o
        if not directed:
            a_star[j, i] = truth
            omega[j, i] = o
            seen[j, i] = True
    expected = pair_universe(n, directed)
    if not seen[expected[:, 0], expected[:, 1]].all():
        i, j = expected[np.argmin(seen[expected[:, 0], expected[:, 1]])]
        raise FormatError(f"pair ({i + 1}, {j + 1}) is missing", path)

    if d > 0:
        cov = covariates if covariates is not None else covariate_path(path)
        if not Path(cov).exists():
            raise FormatError(f"covariate file {cov} not found", path)
        x = read_matrix(cov, n_rows=n, n_cols=d)
    else:
        x = np.zeros((n, 0))
    obs = Observation(a=omega * a_star, x=x, omega=omega, directed=directed)
    truth = CompleteGraphData(a_star=a_star, x=x, directed=directed) if complete else None
    return obs, truth


# ------------------------------------------------------------------ results

def write_scores(path, table, header=()):
    lines = list(header) + ["# i j score tiebreak"]
    for (i, j), s, t in zip(table.pairs, table.scores, table.tiebreak):
        lines.append(f"{i + 1} {j + 1} {float(s)!r} {float(t)!r}")
    return _write(path, lines)


def write_pvalues(path, p, header=()):
    lines = list(header) + ["# i j numerator ell"]
    for (i, j), k in zip(p.pairs, p.numerators):
        lines.append(f"{i + 1} {j + 1} {int(k)} {p.ell}")
    return _write(path, lines)


def read_pvalues(path):
    pairs, nums, ells = [], [], set()
    for lineno, parts in _data_rows(path):
        if len(parts) != 4:
            raise FormatError("expected 'i j numerator ell'", path, lineno)
        try:
            i, j, k, ell = (int(v) for v in parts)
        except ValueError:
            raise FormatError("non-integer entry", path, lineno) from None
        if not (1 <= k <= ell + 1):
            raise FormatError(f"numerator {k} outside [1, ell + 1]", path, lineno)
        pairs.append((i - 1, j - 1))
        nums.append(k)
        ells.add(ell)
    if len(ells) != 1:
        raise FormatError("all rows must share one ell", path)
    return PValueFamily(pairs=np.array(pairs, dtype=np.int64).reshape(-1, 2),
                        numerators=np.array(nums, dtype=np.int64), ell=ells.pop())


def write_rejections(path, r, header=()):
    lines = list(header) + [REJECTION_RULE,
                            f"# threshold: {r.threshold} ({float(r.threshold)!r})",
                            f"# rejections: {len(r)}", "# i j"]
    lines += [f"{i + 1} {j + 1}" for i, j in r.pairs]
    return _write(path, lines)


def read_rejections(path) -> set:
    return {(int(p[0]) - 1, int(p[1]) - 1) for _, p in _data_rows(path)}


BOUND_COLUMNS = ["t", "num_rejections", "fdp_bound_raw", "fdp_bound_clipped",
                 "form", "lambda", "method", "delta"]


def dump_bound_curve(fh, curve, header=()):
    for line in list(header) + [REJECTION_RULE]:
        fh.write(line + "\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(BOUND_COLUMNS)
    for t, r, raw, clip in zip(curve.thresholds, curve.rejections, curve.raw, curve.clipped):
        writer.writerow([repr(float(t)), int(r), repr(float(raw)), repr(float(clip)),
                         curve.form, repr(curve.lam.value), curve.lam.method, curve.lam.delta])


def write_bound_curve(path, curve, header=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        dump_bound_curve(fh, curve, header)
    return path


def read_csv_rows(path) -> list:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))
