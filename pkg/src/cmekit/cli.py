"""Batch front door: config-driven experiments with deterministic outputs.

Commands: ``estimate``, ``edmd``, ``mmd``, ``oracle-verify``, ``convergence``.
Each reads a flat key-value config file with ``[section]`` headers (schema in
``docs/config.md``), plus ``--seed`` / ``--out`` overrides.  Identical config
and seed give byte-identical file and stdout output; wall-clock timings go to
stderr so they never perturb the deterministic streams.

Exit codes: 0 success (and, for oracle-verify, all checks passed),
1 runtime failure, 2 validation failure (config, file parse, range checks).

All file payloads are UTF-8 text with LF line endings, '.' decimal separator,
and floats printed with 17 significant digits so that read(write(x)) restores
every IEEE double bit-exactly.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import models as md
from .embeddings import mmd_sq_biased, mmd_sq_unbiased
from .estimators import (
    CmeEstimator,
    Cutoff,
    Landweber,
    PairedSample,
    SpectralFilter,
    Tikhonov,
    empirical_risk,
    fit_cme,
    fit_tikhonov_closed_form,
    hs_norm_sq,
    regularized_empirical_risk,
)
from .kernels import GaussianKernel, Kernel, LaplacianKernel, Point, gram
from .spectral import edmd_eigen, eigen_residuals

_FLOAT_FMT = "{:.17g}"


class ConfigError(Exception):
    """Configuration or input-file validation problem (exit code 2)."""


def _fmt(v: float) -> str:
    return _FLOAT_FMT.format(float(v))


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


@dataclass
class Config:
    """Parsed config: section -> key -> (raw value, line number)."""

    sections: dict[str, dict[str, tuple[str, int]]]
    path: str

    def get(self, section: str, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.sections.get(section, {}).get(key, (default, -1))[0]

    def require(self, section: str, key: str) -> str:
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"{self.path}: missing required key '{key}' in section [{section}]")
        return value

    def _typed(self, section: str, key: str, conv, kind: str, default=None):
        raw = self.get(section, key)
        if raw is None:
            if default is not None:
                return default
            raise ConfigError(f"{self.path}: missing required key '{key}' in section [{section}]")
        line = self.sections[section][key][1]
        try:
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(
                f"{self.path}:{line}: key '{key}' must be {kind}, got '{raw}'"
            ) from exc

    def get_float(self, section: str, key: str, default: Optional[float] = None) -> float:
        return self._typed(section, key, float, "a number", default)

    def get_int(self, section: str, key: str, default: Optional[int] = None) -> int:
        return self._typed(section, key, int, "an integer", default)


def parse_config(path: str) -> Config:
    """Parse the flat sectioned key-value format with line diagnostics."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"{path}:{lineno}: empty section header")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        if current is None:
            raise ConfigError(f"{path}:{lineno}: key-value pair before any [section] header")
        key, _, value = line.partition("=")
        sections[current][key.strip()] = (value.strip(), lineno)
    return Config(sections=sections, path=path)


def build_kernel(cfg: Config) -> Kernel:
    variant = cfg.require("kernel", "variant").lower()
    if variant == "gaussian":
        return GaussianKernel(bandwidth=cfg.get_float("kernel", "bandwidth"))
    if variant == "laplacian":
        return LaplacianKernel(scale=cfg.get_float("kernel", "scale"))
    raise ConfigError(f"{cfg.path}: unknown kernel variant '{variant}'")


def build_filter(cfg: Config) -> SpectralFilter:
    variant = cfg.require("filter", "variant").lower()
    if variant == "tikhonov":
        return Tikhonov()
    if variant == "cutoff":
        return Cutoff()
    if variant == "landweber":
        return Landweber(
            steps=cfg.get_int("filter", "steps"),
            step_size=cfg.get_float("filter", "step_size"),
        )
    raise ConfigError(f"{cfg.path}: unknown filter variant '{variant}'")


def _kernel_json(kernel: Kernel) -> dict:
    if isinstance(kernel, GaussianKernel):
        return {"variant": "gaussian", "bandwidth": kernel.bandwidth}
    if isinstance(kernel, LaplacianKernel):
        return {"variant": "laplacian", "scale": kernel.scale}
    raise ValueError("only gaussian/laplacian kernels are serializable")


def _filter_tokens(filt: SpectralFilter) -> list[str]:
    if isinstance(filt, Tikhonov):
        return ["tikhonov"]
    if isinstance(filt, Cutoff):
        return ["cutoff"]
    return ["landweber", str(filt.steps), _fmt(filt.step_size)]


# ---------------------------------------------------------------------------
# data files: matrix blocks of 17-significant-digit decimals
# ---------------------------------------------------------------------------


class _Reader:
    def __init__(self, path: str):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read file {path}: {exc}") from exc
        self.path = path
        self.lines = text.splitlines()
        self.pos = 0

    def next_line(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise ConfigError(f"{self.path}: unexpected end of file at line {self.pos}")

    def peek(self) -> Optional[str]:
        pos = self.pos
        while pos < len(self.lines):
            line = self.lines[pos].strip()
            if line:
                return line
            pos += 1
        return None

    def expect_header(self, name: str, n_dims: int) -> tuple[int, ...]:
        line = self.next_line()
        parts = line.split()
        if parts[0] != name or len(parts) != 1 + n_dims:
            raise ConfigError(
                f"{self.path}:{self.pos}: expected header '{name}' with "
                f"{n_dims} dimension(s), got '{line}'"
            )
        try:
            return tuple(int(p) for p in parts[1:])
        except ValueError as exc:
            raise ConfigError(f"{self.path}:{self.pos}: bad dimensions in '{line}'") from exc

    def read_matrix(self, name: str) -> np.ndarray:
        rows, cols = self.expect_header(name, 2)
        data = np.empty((rows, cols))
        for i in range(rows):
            parts = self.next_line().split()
            if len(parts) != cols:
                raise ConfigError(
                    f"{self.path}:{self.pos}: expected {cols} values in row {i} of '{name}'"
                )
            try:
                data[i] = [float(p) for p in parts]
            except ValueError as exc:
                raise ConfigError(f"{self.path}:{self.pos}: bad number in '{name}' row {i}") from exc
        return data

    def read_vector(self, name: str) -> np.ndarray:
        (length,) = self.expect_header(name, 1)
        parts = self.next_line().split()
        if len(parts) != length:
            raise ConfigError(f"{self.path}:{self.pos}: expected {length} values for '{name}'")
        try:
            return np.array([float(p) for p in parts])
        except ValueError as exc:
            raise ConfigError(f"{self.path}:{self.pos}: bad number in '{name}'") from exc


def _matrix_lines(name: str, arr: np.ndarray) -> list[str]:
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    lines = [f"{name} {arr.shape[0]} {arr.shape[1]}"]
    lines.extend(" ".join(_fmt(v) for v in row) for row in arr)
    return lines


def _vector_lines(name: str, arr: np.ndarray) -> list[str]:
    arr = np.asarray(arr, dtype=float).reshape(-1)
    return [f"{name} {arr.shape[0]}", " ".join(_fmt(v) for v in arr)]


def _points_matrix(points: Sequence[Point]) -> np.ndarray:
    return np.array([p.coords for p in points], dtype=float)


def write_model_file(path: str, model: md.FiniteMarkovModel) -> None:
    lines = ["finite-model v1"]
    lines += _matrix_lines("states", _points_matrix(model.states))
    lines += _vector_lines("pi", model.marginal)
    lines += _matrix_lines("transition", model.transition)
    if model.transition_alt is not None:
        lines += _matrix_lines("transition-alt", model.transition_alt)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model_file(path: str) -> md.FiniteMarkovModel:
    r = _Reader(path)
    if r.next_line() != "finite-model v1":
        raise ConfigError(f"{path}: not a finite-model v1 file")
    states = r.read_matrix("states")
    pi = r.read_vector("pi")
    P = r.read_matrix("transition")
    P_alt = None
    if r.peek() is not None:
        P_alt = r.read_matrix("transition-alt")
    try:
        return md.finite_model(
            [Point(tuple(row)) for row in states], pi, P, P_alt
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid model: {exc}") from exc


def write_paired_sample(path: str, sample: PairedSample) -> None:
    lines = ["paired-sample v1"]
    lines += _matrix_lines("x", _points_matrix(sample.X))
    lines += _matrix_lines("y", _points_matrix(sample.Y))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_paired_sample(path: str) -> PairedSample:
    r = _Reader(path)
    if r.next_line() != "paired-sample v1":
        raise ConfigError(f"{path}: not a paired-sample v1 file")
    X = r.read_matrix("x")
    Y = r.read_matrix("y")
    try:
        return PairedSample(
            X=tuple(Point(tuple(row)) for row in X),
            Y=tuple(Point(tuple(row)) for row in Y),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid sample: {exc}") from exc


def write_point_sample(path: str, points: Sequence[Point]) -> None:
    lines = ["sample v1"]
    lines += _matrix_lines("points", _points_matrix(points))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_point_sample(path: str) -> list[Point]:
    r = _Reader(path)
    if r.next_line() != "sample v1":
        raise ConfigError(f"{path}: not a sample v1 file")
    pts = r.read_matrix("points")
    if pts.shape[0] == 0:
        raise ConfigError(f"{path}: empty sample")
    return [Point(tuple(row)) for row in pts]


def write_estimator(path: str, est: CmeEstimator) -> None:
    """Serialize an estimator; read(write(e)) reproduces predictions bit-exactly."""
    kernel = est.kernel
    if isinstance(kernel, GaussianKernel):
        kernel_line = f"kernel gaussian {_fmt(kernel.bandwidth)}"
    elif isinstance(kernel, LaplacianKernel):
        kernel_line = f"kernel laplacian {_fmt(kernel.scale)}"
    else:
        raise ValueError("only gaussian/laplacian kernels are serializable")
    lines = [
        "cme-estimator v1",
        kernel_line,
        f"lambda {_fmt(est.lam)}",
        "filter " + " ".join(_filter_tokens(est.filt)),
    ]
    lines += _matrix_lines("x", _points_matrix(est.X))
    lines += _matrix_lines("y", _points_matrix(est.Y))
    lines += _matrix_lines("w", est.W)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_estimator(path: str) -> CmeEstimator:
    r = _Reader(path)
    if r.next_line() != "cme-estimator v1":
        raise ConfigError(f"{path}: not a cme-estimator v1 file")
    kparts = r.next_line().split()
    if len(kparts) == 3 and kparts[:2] == ["kernel", "gaussian"]:
        kernel: Kernel = GaussianKernel(bandwidth=float(kparts[2]))
    elif len(kparts) == 3 and kparts[:2] == ["kernel", "laplacian"]:
        kernel = LaplacianKernel(scale=float(kparts[2]))
    else:
        raise ConfigError(f"{path}: bad kernel line")
    lparts = r.next_line().split()
    if len(lparts) != 2 or lparts[0] != "lambda":
        raise ConfigError(f"{path}: bad lambda line")
    lam = float(lparts[1])
    fparts = r.next_line().split()
    if fparts[:1] != ["filter"]:
        raise ConfigError(f"{path}: bad filter line")
    if fparts[1:] == ["tikhonov"]:
        filt: SpectralFilter = Tikhonov()
    elif fparts[1:] == ["cutoff"]:
        filt = Cutoff()
    elif len(fparts) == 4 and fparts[1] == "landweber":
        filt = Landweber(steps=int(fparts[2]), step_size=float(fparts[3]))
    else:
        raise ConfigError(f"{path}: bad filter line")
    X = r.read_matrix("x")
    Y = r.read_matrix("y")
    W = r.read_matrix("w")
    try:
        return CmeEstimator(
            kernel=kernel,
            lam=lam,
            filt=filt,
            X=tuple(Point(tuple(row)) for row in X),
            Y=tuple(Point(tuple(row)) for row in Y),
            W=W,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid estimator: {exc}") from exc


# ---------------------------------------------------------------------------
# data sources
# ---------------------------------------------------------------------------


def _load_sample(cfg: Config, seed: int, n: Optional[int] = None) -> PairedSample:
    source = cfg.require("data", "source").lower()
    if n is None:
        n = cfg.get_int("run", "n", default=0)
    if source == "finite-model":
        model = read_model_file(cfg.require("data", "model_file"))
        _require_n(cfg, n)
        return md.sample_pairs(model, n, seed)
    if source == "ou":
        _require_n(cfg, n)
        return md.ou_sample_pairs(
            theta=cfg.get_float("data", "theta"),
            tau=cfg.get_float("data", "tau"),
            n=n,
            seed=seed,
        )
    if source == "double-well":
        _require_n(cfg, n)
        return md.double_well_pairs(
            beta=cfg.get_float("data", "beta"),
            dt=cfg.get_float("data", "dt"),
            steps_per_pair=cfg.get_int("data", "steps_per_pair"),
            n=n,
            seed=seed,
        )
    if source == "paired-sample":
        return read_paired_sample(cfg.require("data", "sample_file"))
    raise ConfigError(f"{cfg.path}: unknown data source '{source}'")


def _require_n(cfg: Config, n: int) -> None:
    if n < 1:
        raise ConfigError(f"{cfg.path}: sampled data sources need n >= 1 in [run]")


def _resolve_seed(cfg: Config, override: Optional[int]) -> int:
    if override is not None:
        return override
    return cfg.get_int("run", "seed", default=0)


def _resolve_out(cfg: Config, override: Optional[str], required: bool = True) -> Optional[str]:
    out = override if override is not None else cfg.get("run", "out")
    if out is None and required:
        raise ConfigError(f"{cfg.path}: no output path: set [run] out or pass --out")
    return out


def _emit(text: str, out_path: Optional[str]) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text, encoding="utf-8")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_estimate(cfg: Config, seed: Optional[int], out: Optional[str]) -> int:
    t0 = time.perf_counter()
    kernel = build_kernel(cfg)
    filt = build_filter(cfg)
    lam = cfg.get_float("run", "lambda")
    if lam <= 0:
        raise ConfigError(f"{cfg.path}: lambda must be > 0, got {lam}")
    sample = _load_sample(cfg, _resolve_seed(cfg, seed))
    out_path = _resolve_out(cfg, out)
    if isinstance(filt, Tikhonov):
        est = fit_tikhonov_closed_form(sample, kernel, lam)
    else:
        est = fit_cme(sample, kernel, filt, lam)
    write_estimator(out_path, est)
    metrics = {
        "command": "estimate",
        "n": sample.n,
        "lambda": lam,
        "empirical_risk": empirical_risk(est, sample),
        "regularized_empirical_risk": regularized_empirical_risk(est, sample),
        "hs_norm_sq": hs_norm_sq(est),
        "estimator_file": out_path,
    }
    sys.stdout.write(json.dumps(metrics, indent=2) + "\n")
    _log(f"wall_time_ms={1000.0 * (time.perf_counter() - t0):.1f}")
    return 0


def cmd_edmd(cfg: Config, seed: Optional[int], out: Optional[str]) -> int:
    t0 = time.perf_counter()
    kernel = build_kernel(cfg)
    lam = cfg.get_float("run", "lambda")
    if lam <= 0:
        raise ConfigError(f"{cfg.path}: lambda must be > 0, got {lam}")
    r = cfg.get_int("run", "r")
    if r < 1:
        raise ConfigError(f"{cfg.path}: r out of range: need r >= 1, got {r}")
    sample = _load_sample(cfg, _resolve_seed(cfg, seed))
    if r > sample.n:
        raise ConfigError(f"{cfg.path}: r out of range: need r <= n = {sample.n}, got {r}")
    out_path = _resolve_out(cfg, out)
    result = edmd_eigen(sample, kernel, lam, r)
    residuals = eigen_residuals(result, sample)
    rows = ["index,re,im,modulus,residual"]
    for j, (mu, res) in enumerate(zip(result.eigenvalues, residuals)):
        rows.append(
            f"{j},{_fmt(mu.real)},{_fmt(mu.imag)},{_fmt(abs(mu))},{_fmt(res)}"
        )
    _emit("\n".join(rows) + "\n", out_path)
    _log(f"wall_time_ms={1000.0 * (time.perf_counter() - t0):.1f}")
    return 0


def cmd_mmd(cfg: Config, seed: Optional[int], out: Optional[str]) -> int:
    del seed  # sample files fix the data; nothing random here
    t0 = time.perf_counter()
    kernel = build_kernel(cfg)
    P = read_point_sample(cfg.require("data", "sample_file"))
    Q = read_point_sample(cfg.require("data", "sample_file_2"))
    # the biased estimate exists for any nonempty samples; the unbiased one
    # needs two points per side, and its absence is a validation failure
    small = len(P) < 2 or len(Q) < 2
    report = {
        "command": "mmd",
        "n": len(P),
        "m": len(Q),
        "kernel": _kernel_json(kernel),
        "biased": mmd_sq_biased(kernel, P, Q),
        "unbiased": None if small else mmd_sq_unbiased(kernel, P, Q),
    }
    _emit(json.dumps(report, indent=2) + "\n", _resolve_out(cfg, out, required=False))
    _log(f"wall_time_ms={1000.0 * (time.perf_counter() - t0):.1f}")
    if small:
        _log("error: the unbiased estimator needs n, m >= 2; reported as null")
        return 2
    return 0


def _verify_rows(model: md.FiniteMarkovModel, kernel: Kernel, seed: int) -> list[tuple]:
    """One row per oracle identity/inequality: (name, lhs, rhs, tol, verdict)."""
    rng = np.random.Generator(np.random.Philox(seed))
    rows: list[tuple] = []

    def leq(name, lhs, rhs, tol):
        rows.append((name, lhs, rhs, tol, "PASS" if lhs <= rhs + tol else "FAIL"))

    def close(name, lhs, rhs, tol):
        rows.append((name, lhs, rhs, tol, "PASS" if abs(lhs - rhs) <= tol else "FAIL"))

    # operator-norm bound on randomized fitted estimators (worst instance shown)
    worst = None
    exact_vals = md.exact_operator_values(model, kernel)
    for _ in range(20):
        n = int(rng.integers(40, 200))
        sample = md.sample_pairs(model, n, int(rng.integers(0, 2**63)))
        lam = float(10.0 ** rng.uniform(-6, 0))
        filt = [Tikhonov(), Cutoff(), Landweber(steps=int(rng.integers(1, 40)), step_size=0.9)][
            int(rng.integers(0, 3))
        ]
        est = fit_cme(sample, kernel, filt, lam)
        lhs = md.op_norm_diff(md.estimator_values(est, model, kernel), exact_vals, model, kernel) ** 2
        rhs = md.exact_excess_risk(est, model, kernel)
        if worst is None or lhs - rhs > worst[0] - worst[1]:
            worst = (lhs, rhs)
    leq("operator-norm-bound", worst[0], worst[1], 1e-9)

    # sharpness: constant-difference witness attains equality
    shift = rng.standard_normal(model.m) * 0.3
    witness = md.constant_shift_estimator(model, kernel, shift)
    lhs = md.op_norm_diff(md.estimator_values(witness, model, kernel), exact_vals, model, kernel) ** 2
    rhs = md.exact_excess_risk(witness, model, kernel)
    close("bound-sharpness", lhs, rhs, 1e-9)

    # MMD relation for a pair of Markov kernels
    if model.transition_alt is not None:
        pair = model
    else:
        pair = md.with_alt(model, md.random_model(rng, model.m).transition)
    vals_p = md.exact_operator_values(pair, kernel)
    vals_q = md.exact_operator_values(
        md.finite_model(pair.states, pair.marginal, pair.transition_alt), kernel
    )
    lhs = md.op_norm_diff(vals_p, vals_q, pair, kernel) ** 2
    rhs = md.exact_mmd_integral(pair, kernel)
    leq("mmd-relation-inequality", lhs, rhs, 1e-10)
    if rhs - lhs > 1e-10:
        rows.append(("mmd-relation-strict-gap", lhs, rhs, 1e-10, "INFO"))

    # equality on the constant-direction family
    if model.m >= 2:
        aligned = md.constant_direction_alt(model, rng)
        vals_p = md.exact_operator_values(aligned, kernel)
        vals_q = md.exact_operator_values(
            md.finite_model(aligned.states, aligned.marginal, aligned.transition_alt), kernel
        )
        lhs = md.op_norm_diff(vals_p, vals_q, aligned, kernel) ** 2
        rhs = md.exact_mmd_integral(aligned, kernel)
        close("mmd-relation-equality-aligned", lhs, rhs, 1e-10)

    # well-specified deterministic map is recovered exactly
    perm = rng.permutation(model.m)
    exact_est = md.well_specified_estimator(model, kernel, perm)
    det_model = md.finite_model(model.states, model.marginal, np.eye(model.m)[perm])
    lhs = md.op_norm_diff(
        md.estimator_values(exact_est, det_model, kernel),
        md.exact_operator_values(det_model, kernel),
        det_model,
        kernel,
    )
    leq("well-specified-recovery", lhs, 0.0, 1e-10)

    # risk decomposition, worst of 20 random embedding-valued functions
    f_star = md.cme_function(model)
    irreducible = md.exact_risk(f_star, model, kernel)
    K_E = gram(kernel, model.states).entries
    worst_dev = (0.0, 0.0)
    for _ in range(20):
        C = rng.standard_normal((model.m, model.m))
        lhs = md.exact_risk(md.RegressionFunctionRep(C=C), model, kernel)
        delta = C - model.transition
        rhs = float(model.marginal @ np.einsum("ij,jk,ik->i", delta, K_E, delta)) + irreducible
        if abs(lhs - rhs) > abs(worst_dev[0] - worst_dev[1]):
            worst_dev = (lhs, rhs)
    close("risk-decomposition", worst_dev[0], worst_dev[1], 1e-10)

    # noncompact generalized covariance: <T F_i, T F_j> = M * delta_ij
    r = min(model.m, 3)
    check = md.generalized_cov_ons_check(model, kernel, model.states[0], r)
    M = float(np.mean(np.diag(check)))
    off = float(np.max(np.abs(check - np.diag(np.diag(check))))) if r > 1 else 0.0
    spread = float(np.max(np.abs(np.diag(check) - M)))
    close("noncompact-ons-identity", max(off, spread), 0.0, 1e-9 * max(M, 1e-300))
    return rows


def cmd_oracle_verify(cfg: Config, seed: Optional[int], out: Optional[str]) -> int:
    t0 = time.perf_counter()
    kernel = build_kernel(cfg)
    model = read_model_file(cfg.require("data", "model_file"))
    rows = _verify_rows(model, kernel, _resolve_seed(cfg, seed))
    width = max(len(r[0]) for r in rows)
    lines = [f"{'check'.ljust(width)}  {'lhs':>24} {'rhs':>24} {'tolerance':>10} verdict"]
    for name, lhs, rhs, tol, verdict in rows:
        lines.append(
            f"{name.ljust(width)}  {lhs:>24.16e} {rhs:>24.16e} {tol:>10.1e} {verdict}"
        )
    _emit("\n".join(lines) + "\n", _resolve_out(cfg, out, required=False))
    _log(f"wall_time_ms={1000.0 * (time.perf_counter() - t0):.1f}")
    return 0 if all(r[4] != "FAIL" for r in rows) else 1


def _parse_schedule(cfg: Config) -> tuple[float, float]:
    """Parse 'c*n^-p' (or 'n^-p'), requiring p in (0, 1)."""
    raw = cfg.require("run", "lambda_schedule").replace(" ", "")
    match = re.fullmatch(r"(?:([0-9.eE+-]+)\*)?n\^(-[0-9.eE+]+)", raw)
    if match is None:
        raise ConfigError(
            f"{cfg.path}: lambda_schedule must look like 'c*n^-p' with p in (0,1), got '{raw}'"
        )
    c = float(match.group(1)) if match.group(1) else 1.0
    p = -float(match.group(2))
    if not (0.0 < p < 1.0) or c <= 0:
        raise ConfigError(
            f"{cfg.path}: lambda_schedule needs c > 0 and p in (0,1), got c={c}, p={p}"
        )
    return c, p


def cmd_convergence(cfg: Config, seed: Optional[int], out: Optional[str]) -> int:
    t0 = time.perf_counter()
    kernel = build_kernel(cfg)
    grid_raw = cfg.require("run", "n_grid").split()
    try:
        grid = [int(g) for g in grid_raw]
    except ValueError as exc:
        raise ConfigError(f"{cfg.path}: n_grid must be integers, got '{cfg.get('run','n_grid')}'") from exc
    if len(grid) == 0 or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise ConfigError(f"{cfg.path}: n_grid must be strictly ascending positive integers")
    c, p = _parse_schedule(cfg)
    the_seed = _resolve_seed(cfg, seed)
    source = cfg.require("data", "source").lower()
    out_path = _resolve_out(cfg, out)

    rows = ["n,lambda,op_norm_diff,exact_excess_risk,eig_errors"]
    if source == "finite-model":
        model = read_model_file(cfg.require("data", "model_file"))
        exact_vals = md.exact_operator_values(model, kernel)
        for n in grid:
            lam = c * n ** (-p)
            sample = md.sample_pairs(model, n, the_seed)
            est = fit_tikhonov_closed_form(sample, kernel, lam)
            diff = md.op_norm_diff(
                md.estimator_values(est, model, kernel), exact_vals, model, kernel
            )
            excess = md.exact_excess_risk(est, model, kernel)
            rows.append(f"{n},{_fmt(lam)},{_fmt(diff)},{_fmt(excess)},")
    elif source == "ou":
        theta = cfg.get_float("data", "theta")
        tau = cfg.get_float("data", "tau")
        r = cfg.get_int("run", "r", default=3)
        for n in grid:
            if not (1 <= r <= n):
                raise ConfigError(f"{cfg.path}: r out of range: need 1 <= r <= {n}, got {r}")
            lam = c * n ** (-p)
            sample = md.ou_sample_pairs(theta, tau, n, the_seed)
            result = edmd_eigen(sample, kernel, lam, r)
            targets = np.exp(-np.arange(r) * theta * tau)
            errors = np.abs(np.abs(result.eigenvalues) - targets)
            err_text = ";".join(_fmt(e) for e in errors)
            rows.append(f"{n},{_fmt(lam)},,,{err_text}")
    else:
        raise ConfigError(f"{cfg.path}: convergence supports finite-model or ou sources")
    _emit("\n".join(rows) + "\n", out_path)
    _log(f"wall_time_ms={1000.0 * (time.perf_counter() - t0):.1f}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "estimate": cmd_estimate,
    "edmd": cmd_edmd,
    "mmd": cmd_mmd,
    "oracle-verify": cmd_oracle_verify,
    "convergence": cmd_convergence,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmekit",
        description="Conditional expectation operator estimation, kernel EDMD, "
        "MMD, and exact finite-state oracle verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="experiment config file")
        cmd.add_argument("--seed", type=int, default=None, help="override [run] seed")
        cmd.add_argument("--out", default=None, help="override [run] out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        return _COMMANDS[args.command](cfg, args.seed, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
